#include "scex/dependence.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "scex/csv.hpp"
#include "scex/errors.hpp"
#include "scex/specfun.hpp"

namespace scex {

using nlohmann::json;

std::string to_string(DependenceVariant v) {
  return v == DependenceVariant::AI ? "ai" : "ad";
}

DependenceVariant variant_from_string(const std::string& s) {
  if (s == "ai" || s == "AI") return DependenceVariant::AI;
  if (s == "ad" || s == "AD") return DependenceVariant::AD;
  throw config_error("unknown dependence variant '" + s + "' (expected ai|ad)");
}

void DependenceParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw config_error(std::string("dependence: ") + name + " must be > 0");
  };
  positive(kappa_alpha1, "kappa_alpha1");
  positive(kappa_alpha2, "kappa_alpha2");
  if (!(delta_ad_range >= 0.0)) throw config_error("dependence: Delta must be >= 0");
  positive(kappa_beta1, "kappa_beta1");
  positive(kappa_beta2, "kappa_beta2");
  if (!(kappa_beta3 >= 0.0 && kappa_beta3 <= 1.0))
    throw config_error("dependence: kappa_beta3 must lie in [0,1]");
  if (!std::isfinite(kappa_mu1)) throw config_error("dependence: kappa_mu1 not finite");
  positive(kappa_mu2, "kappa_mu2");
  positive(kappa_mu3, "kappa_mu3");
  positive(kappa_sigma1, "kappa_sigma1");
  positive(kappa_sigma2, "kappa_sigma2");
  if (variant == DependenceVariant::AD) positive(kappa_sigma3, "kappa_sigma3");
  if (!(kappa_delta1 >= 0.0)) throw config_error("dependence: kappa_delta1 must be >= 0");
  positive(kappa_delta2, "kappa_delta2");
  positive(kappa_delta3, "kappa_delta3");
  if (!(kappa_delta4 <= 1.0)) throw config_error("dependence: kappa_delta4 must be <= 1");
  positive(kappa_rho1, "kappa_rho1");
  positive(kappa_rho2, "kappa_rho2");
  aniso.validate();
}

double DependenceParams::alpha(double h) const {
  if (variant == DependenceVariant::AD) return 1.0;
  if (h <= delta_ad_range) return 1.0;
  return std::exp(-std::pow((h - delta_ad_range) / kappa_alpha1, kappa_alpha2));
}

double DependenceParams::beta(double h) const {
  if (variant == DependenceVariant::AD) return 0.0;
  return kappa_beta3 * std::exp(-std::pow(h / kappa_beta1, kappa_beta2));
}

double DependenceParams::mu(double h) const {
  if (h == 0.0) return 0.0;
  return kappa_mu1 * std::pow(h, kappa_mu2) * std::exp(-h / kappa_mu3);
}

double DependenceParams::sigma(double h) const {
  const double ceiling =
      variant == DependenceVariant::AD ? kappa_sigma3 : std::sqrt(2.0);
  return ceiling * (1.0 - std::exp(-std::pow(h / kappa_sigma1, kappa_sigma2)));
}

double DependenceParams::delta(double h) const {
  const double lobe = (h == 0.0 ? 0.0 : kappa_delta1 * std::pow(h, kappa_delta2));
  return std::max(1.0, 1.0 + (lobe - kappa_delta4) * std::exp(-h / kappa_delta3));
}

double DependenceParams::rho(double h) const { return matern(h, kappa_rho1, kappa_rho2); }

Norming norming_functions(double x, double h, const DependenceParams& psi) {
  if (!(x > 0.0))
    throw input_error("norming_functions: conditioning value must be > 0");
  if (h < 0.0) throw input_error("norming_functions: negative distance");
  Norming n;
  n.a = x * psi.alpha(h);
  n.b = std::pow(x, psi.beta(h));
  return n;
}

ResidualParams residual_param_functions(double h, const DependenceParams& psi) {
  if (h < 0.0) throw input_error("residual_param_functions: negative distance");
  return {psi.mu(h), psi.sigma(h), psi.delta(h)};
}

namespace {
json params_to_json(const DependenceParams& p) {
  json j;
  j["variant"] = to_string(p.variant);
  j["kappa_alpha1"] = p.kappa_alpha1;
  j["kappa_alpha2"] = p.kappa_alpha2;
  j["Delta"] = p.delta_ad_range;
  j["kappa_beta1"] = p.kappa_beta1;
  j["kappa_beta2"] = p.kappa_beta2;
  j["kappa_beta3"] = p.kappa_beta3;
  j["kappa_mu1"] = p.kappa_mu1;
  j["kappa_mu2"] = p.kappa_mu2;
  j["kappa_mu3"] = p.kappa_mu3;
  j["kappa_sigma1"] = p.kappa_sigma1;
  j["kappa_sigma2"] = p.kappa_sigma2;
  if (p.variant == DependenceVariant::AD) j["kappa_sigma3"] = p.kappa_sigma3;
  j["kappa_delta1"] = p.kappa_delta1;
  j["kappa_delta2"] = p.kappa_delta2;
  j["kappa_delta3"] = p.kappa_delta3;
  j["kappa_delta4"] = p.kappa_delta4;
  j["kappa_rho1"] = p.kappa_rho1;
  j["kappa_rho2"] = p.kappa_rho2;
  j["theta"] = p.aniso.theta;
  j["L"] = p.aniso.stretch;
  return j;
}
}  // namespace

std::string DependenceParams::to_json() const {
  return params_to_json(*this).dump(2) + "\n";
}

DependenceParams DependenceParams::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw input_error(std::string("dependence params: invalid JSON: ") + e.what());
  }
  DependenceParams p;
  p.variant = variant_from_string(j.value("variant", std::string("ai")));
  auto get = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  get("kappa_alpha1", p.kappa_alpha1);
  get("kappa_alpha2", p.kappa_alpha2);
  get("Delta", p.delta_ad_range);
  get("kappa_beta1", p.kappa_beta1);
  get("kappa_beta2", p.kappa_beta2);
  get("kappa_beta3", p.kappa_beta3);
  get("kappa_mu1", p.kappa_mu1);
  get("kappa_mu2", p.kappa_mu2);
  get("kappa_mu3", p.kappa_mu3);
  get("kappa_sigma1", p.kappa_sigma1);
  get("kappa_sigma2", p.kappa_sigma2);
  get("kappa_sigma3", p.kappa_sigma3);
  get("kappa_delta1", p.kappa_delta1);
  get("kappa_delta2", p.kappa_delta2);
  get("kappa_delta3", p.kappa_delta3);
  get("kappa_delta4", p.kappa_delta4);
  get("kappa_rho1", p.kappa_rho1);
  get("kappa_rho2", p.kappa_rho2);
  get("theta", p.aniso.theta);
  get("L", p.aniso.stretch);
  p.validate();
  return p;
}

DependenceParams DependenceParams::load(const std::string& path) {
  return from_json(read_text_file(path));
}

void DependenceParams::save(const std::string& path) const {
  write_text_file(path, to_json());
}

DeltaLaplace::DeltaLaplace(double mu, double sigma, double delta)
    : mu_(mu), sigma_(sigma), delta_(delta) {
  if (!(sigma > 0.0)) throw input_error("delta-laplace: sigma must be > 0");
  if (!(delta > 0.0)) throw input_error("delta-laplace: delta must be > 0");
  const double k =
      std::sqrt(std::exp(std::lgamma(1.0 / delta) - std::lgamma(3.0 / delta)));
  kscale_ = k * sigma;
  inv_delta_ = 1.0 / delta;
  log_norm_ = std::log(delta) - std::log(2.0 * kscale_) - std::lgamma(inv_delta_);
}

double DeltaLaplace::log_pdf(double z) const {
  const double t = std::fabs(z - mu_) / kscale_;
  return log_norm_ - std::pow(t, delta_);
}

double DeltaLaplace::pdf(double z) const { return std::exp(log_pdf(z)); }

double DeltaLaplace::cdf(double z) const {
  const double t = (z - mu_) / kscale_;
  const double at = std::fabs(t);
  // delta = 1 and 2 reduce to Laplace and Gaussian closed forms.
  if (delta_ == 1.0) {
    return (t < 0.0) ? 0.5 * std::exp(t) : 1.0 - 0.5 * std::exp(-at);
  }
  if (delta_ == 2.0) {
    const double e = 0.5 * std::erf(at);
    return (t < 0.0) ? 0.5 - e : 0.5 + e;
  }
  // Upper-tail form keeps relative precision in the left tail.
  const double q = gammainc_q(inv_delta_, std::pow(at, delta_));
  return (t < 0.0) ? 0.5 * q : 1.0 - 0.5 * q;
}

double DeltaLaplace::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw input_error("delta-laplace quantile: u outside (0,1)");
  if (u == 0.5) return mu_;
  // Work with the smaller tail mass 2*min(u,1-u); this keeps the inversion
  // well conditioned deep in either tail.
  const double tail = 2.0 * std::min(u, 1.0 - u);
  double at;
  if (delta_ == 1.0) {
    at = -std::log(tail);
  } else if (delta_ == 2.0) {
    at = -norm_quantile(0.5 * tail) / std::sqrt(2.0);
  } else {
    at = std::pow(gammainc_q_inv(inv_delta_, tail), inv_delta_);
  }
  return mu_ + (u > 0.5 ? kscale_ * at : -kscale_ * at);
}

double matern(double h, double kappa_rho1, double kappa_rho2) {
  if (!(kappa_rho1 > 0.0 && kappa_rho2 > 0.0))
    throw input_error("matern: parameters must be > 0");
  if (h < 0.0) throw input_error("matern: negative distance");
  if (h == 0.0) return 1.0;
  const double arg = 2.0 * h * std::sqrt(kappa_rho2) / kappa_rho1;
  const double lognorm = (1.0 - kappa_rho2) * std::log(2.0) - std::lgamma(kappa_rho2);
  const double k = bessel_k(kappa_rho2, arg);
  if (k <= 0.0) return 0.0;
  const double val = std::exp(lognorm + kappa_rho2 * std::log(arg)) * k;
  return std::min(1.0, val);
}

Eigen::MatrixXd conditional_correlation(const Eigen::MatrixXd& sigma_star,
                                        std::size_t o) {
  const std::size_t d = static_cast<std::size_t>(sigma_star.rows());
  if (sigma_star.cols() != sigma_star.rows() || o >= d)
    throw input_error("conditional_correlation: bad dimensions");
  std::vector<std::size_t> keep;
  keep.reserve(d - 1);
  for (std::size_t i = 0; i < d; ++i)
    if (i != o) keep.push_back(i);

  Eigen::VectorXd r(d - 1);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    r[i] = sigma_star(keep[i], o);
    if (std::fabs(r[i]) >= 1.0)
      throw numeric_error(
          "conditional_correlation: |corr| = 1 with the conditioning site");
  }
  Eigen::MatrixXd out(d - 1, d - 1);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (std::size_t j = i; j < keep.size(); ++j) {
      const double num = sigma_star(keep[i], keep[j]) - r[i] * r[j];
      const double den = std::sqrt((1.0 - r[i] * r[i]) * (1.0 - r[j] * r[j]));
      const double v = (i == j) ? 1.0 : num / den;
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double jitter = 1e-10; jitter <= 1e-6; jitter *= 100.0) {
    Eigen::MatrixXd j = m;
    j.diagonal().array() += jitter;
    llt.compute(j);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw numeric_error("cholesky failed after jitter escalation to 1e-6");
}

ResidualFieldSimulator::ResidualFieldSimulator(const DependenceParams& psi,
                                               const SpatialGrid& grid,
                                               std::size_t cond_site)
    : cond_site_(cond_site) {
  psi.validate();
  const std::size_t d = grid.size();
  if (cond_site >= d) throw input_error("residual simulator: bad conditioning site");
  h_.resize(d);
  others_.reserve(d - 1);
  for (std::size_t i = 0; i < d; ++i) {
    h_[i] = grid.distance(cond_site, i, psi.aniso);
    if (i != cond_site) others_.push_back(i);
  }
  margins_.reserve(others_.size());
  for (const std::size_t i : others_)
    margins_.emplace_back(residual_param_functions(h_[i], psi));

  Eigen::MatrixXd sigma_star(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    sigma_star(i, i) = 1.0;
    for (std::size_t j = i + 1; j < d; ++j) {
      const double r = psi.rho(grid.distance(i, j, psi.aniso));
      sigma_star(i, j) = r;
      sigma_star(j, i) = r;
    }
  }
  chol_ = robust_cholesky(conditional_correlation(sigma_star, cond_site));
}

Eigen::VectorXd ResidualFieldSimulator::simulate(Rng& rng) const {
  const std::size_t m = others_.size();
  Eigen::VectorXd eps(m);
  for (std::size_t i = 0; i < m; ++i) eps[i] = rng.normal();
  Eigen::VectorXd w = chol_ * eps;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = clamp_prob(norm_cdf(w[i]));
    z[others_[i]] = margins_[i].quantile(u);
  }
  z[cond_site_] = 0.0;
  return z;
}

Eigen::VectorXd residual_field_simulate(const DependenceParams& psi,
                                        const SpatialGrid& grid,
                                        std::size_t cond_site, Rng& rng) {
  return ResidualFieldSimulator(psi, grid, cond_site).simulate(rng);
}

}  // namespace scex
