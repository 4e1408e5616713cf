#include "scex/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "scex/csv.hpp"
#include "scex/errors.hpp"
#include "scex/gpd.hpp"
#include "scex/optim.hpp"
#include "scex/specfun.hpp"

namespace scex {

using nlohmann::json;

double plotting_position_cdf(const std::vector<double>& sorted, double y) {
  const std::size_t n = sorted.size();
  if (n == 0) throw input_error("empirical cdf: empty sample");
  if (y <= 0.0) return 0.0;
  const double top = (static_cast<double>(n) - 0.5) / static_cast<double>(n);
  if (y >= sorted.back()) return top;
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), y);
  const std::size_t idx = static_cast<std::size_t>(it - sorted.begin());
  const double dn = static_cast<double>(n);
  if (idx == 0) {
    // Linear from (0, 0) up to the first order statistic.
    return (y / sorted.front()) * (0.5 / dn);
  }
  const double u_lo = (static_cast<double>(idx) - 0.5) / dn;
  const double u_hi = (static_cast<double>(idx) + 0.5) / dn;
  const double x_lo = sorted[idx - 1];
  const double x_hi = sorted[idx];
  return u_lo + (y - x_lo) / (x_hi - x_lo) * (u_hi - u_lo);
}

double plotting_position_quantile(const std::vector<double>& sorted, double u) {
  const std::size_t n = sorted.size();
  if (n == 0) throw input_error("empirical quantile: empty sample");
  const double dn = static_cast<double>(n);
  const double top = (dn - 0.5) / dn;
  if (u <= 0.0) return 0.0;
  if (u >= top) return sorted.back();
  if (u < 0.5 / dn) return sorted.front() * (u / (0.5 / dn));
  const double pos = u * dn - 0.5;
  const std::size_t k = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(k);
  if (k + 1 >= n) return sorted.back();
  return sorted[k] + frac * (sorted[k + 1] - sorted[k]);
}

MarginalModel::MarginalModel(double lambda, std::vector<SiteMarginal> sites,
                             std::vector<std::string> site_ids)
    : lambda_(lambda), sites_(std::move(sites)), site_ids_(std::move(site_ids)) {
  if (!(lambda_ > 0.0 && lambda_ < 1.0))
    throw config_error("marginal model: lambda must lie in (0,1)");
  if (sites_.empty()) throw config_error("marginal model: no sites");
  if (site_ids_.size() != sites_.size())
    throw config_error("marginal model: site id count mismatch");
  for (const auto& s : sites_) {
    if (!(s.p >= 0.0 && s.p < 1.0))
      throw config_error("marginal model: p(s) must lie in [0,1)");
    if (!(s.p + lambda_ < 1.0))
      throw config_error("marginal model: requires p(s) + lambda < 1");
    if (!(s.q > 0.0)) throw config_error("marginal model: threshold q(s) must be > 0");
    if (!(s.upsilon > 0.0))
      throw config_error("marginal model: GPD scale must be > 0");
    if (s.body.empty() || !std::is_sorted(s.body.begin(), s.body.end()) ||
        s.body.front() <= 0.0)
      throw config_error("marginal model: body must be a sorted positive sample");
  }
}

double MarginalModel::cdf(double y, std::size_t s) const {
  if (y < 0.0) throw input_error("marginal cdf: y must be >= 0");
  const auto& m = sites_[s];
  if (y == 0.0) return m.p;
  if (y > m.q)
    return 1.0 - lambda_ * gpd_survival(y - m.q, {m.upsilon, m.xi});
  const double fq = plotting_position_cdf(m.body, m.q);
  if (!(fq > 0.0))
    throw numeric_error("marginal cdf: empty body below the threshold");
  const double v = plotting_position_cdf(m.body, y);
  return (1.0 - lambda_ - m.p) / fq * v + m.p;
}

double MarginalModel::quantile(double u, std::size_t s) const {
  if (!(u > 0.0 && u < 1.0)) throw input_error("marginal quantile: u outside (0,1)");
  const auto& m = sites_[s];
  if (u <= m.p) return 0.0;
  if (u > 1.0 - lambda_) {
    const double tail_u = 1.0 - (1.0 - u) / lambda_;
    return m.q + gpd_quantile(tail_u, {m.upsilon, m.xi});
  }
  const double fq = plotting_position_cdf(m.body, m.q);
  const double v = (u - m.p) * fq / (1.0 - lambda_ - m.p);
  return plotting_position_quantile(m.body, v);
}

double MarginalModel::censor_threshold(std::size_t s) const {
  const double p = sites_[s].p;
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  return laplace_quantile(p);
}

double MarginalModel::to_laplace_value(double y, std::size_t s) const {
  return laplace_quantile(clamp_prob(cdf(y, s)));
}

double MarginalModel::from_laplace_value(double x, std::size_t s) const {
  if (x <= censor_threshold(s)) return 0.0;
  return quantile(clamp_prob(laplace_cdf(x)), s);
}

LaplaceField MarginalModel::to_laplace(const Eigen::MatrixXd& y) const {
  if (y.cols() != static_cast<Eigen::Index>(sites_.size()))
    throw input_error("to_laplace: column count does not match model sites");
  LaplaceField out;
  out.x.resize(y.rows(), y.cols());
  out.censored.resize(y.rows(), y.cols());
  out.censor_threshold.resize(y.cols());
  for (Eigen::Index s = 0; s < y.cols(); ++s) {
    const double c = censor_threshold(static_cast<std::size_t>(s));
    out.censor_threshold[s] = c;
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
      const double v = y(t, s);
      if (v < 0.0) throw input_error("to_laplace: negative rainfall value");
      if (v == 0.0) {
        out.censored(t, s) = 1;
        out.x(t, s) = c;
      } else {
        out.censored(t, s) = 0;
        out.x(t, s) = to_laplace_value(v, static_cast<std::size_t>(s));
      }
    }
  }
  return out;
}

Eigen::MatrixXd MarginalModel::from_laplace(const Eigen::MatrixXd& x) const {
  if (x.cols() != static_cast<Eigen::Index>(sites_.size()))
    throw input_error("from_laplace: column count does not match model sites");
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index s = 0; s < x.cols(); ++s)
    for (Eigen::Index t = 0; t < x.rows(); ++t)
      y(t, s) = from_laplace_value(x(t, s), static_cast<std::size_t>(s));
  return y;
}

std::string MarginalModel::to_json() const {
  json j;
  j["lambda"] = lambda_;
  json sites = json::array();
  for (std::size_t s = 0; s < sites_.size(); ++s) {
    json item;
    item["id"] = site_ids_[s];
    item["p"] = sites_[s].p;
    item["q"] = sites_[s].q;
    item["upsilon"] = sites_[s].upsilon;
    item["xi"] = sites_[s].xi;
    item["body"] = sites_[s].body;
    sites.push_back(std::move(item));
  }
  j["sites"] = std::move(sites);
  return j.dump() + "\n";
}

MarginalModel MarginalModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw input_error(std::string("marginal model: invalid JSON: ") + e.what());
  }
  const double lambda = j.at("lambda").get<double>();
  std::vector<SiteMarginal> sites;
  std::vector<std::string> ids;
  for (const auto& item : j.at("sites")) {
    SiteMarginal m;
    m.p = item.at("p").get<double>();
    m.q = item.at("q").get<double>();
    m.upsilon = item.at("upsilon").get<double>();
    m.xi = item.at("xi").get<double>();
    m.body = item.at("body").get<std::vector<double>>();
    sites.push_back(std::move(m));
    ids.push_back(item.at("id").get<std::string>());
  }
  return MarginalModel(lambda, std::move(sites), std::move(ids));
}

MarginalModel MarginalModel::load(const std::string& path) {
  return from_json(read_text_file(path));
}

void MarginalModel::save(const std::string& path) const {
  write_text_file(path, to_json());
}

ThinPlateSurface fit_zero_probability(const Eigen::MatrixXd& y,
                                      const SpatialGrid& grid, int knots,
                                      int cv_folds) {
  if (static_cast<std::size_t>(y.cols()) != grid.size())
    throw input_error("fit_zero_probability: data/grid mismatch");
  if (grid.size() < 3) throw fit_error("fit_zero_probability: need >= 3 sites");
  std::vector<Coord> pts;
  std::vector<double> dry, tot;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    pts.push_back(grid.site(s).pos);
    double d = 0.0;
    for (Eigen::Index t = 0; t < y.rows(); ++t)
      if (y(t, static_cast<Eigen::Index>(s)) == 0.0) d += 1.0;
    dry.push_back(d);
    tot.push_back(static_cast<double>(y.rows()));
  }
  return fit_logistic_surface(pts, dry, tot, knots, cv_folds);
}

ThinPlateSurface fit_threshold_surface(const Eigen::MatrixXd& y, double lambda,
                                       const SpatialGrid& grid, int knots,
                                       int cv_folds) {
  if (static_cast<std::size_t>(y.cols()) != grid.size())
    throw input_error("fit_threshold_surface: data/grid mismatch");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw config_error("fit_threshold_surface: lambda outside (0,1)");
  std::vector<Coord> pts;
  std::vector<double> qhat;
  double max_dry = 0.0;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    std::vector<double> col(y.rows());
    for (Eigen::Index t = 0; t < y.rows(); ++t)
      col[static_cast<std::size_t>(t)] = y(t, static_cast<Eigen::Index>(s));
    std::sort(col.begin(), col.end());
    const double dry_frac =
        static_cast<double>(std::upper_bound(col.begin(), col.end(), 0.0) -
                            col.begin()) /
        static_cast<double>(col.size());
    max_dry = std::max(max_dry, dry_frac);
    pts.push_back(grid.site(s).pos);
    qhat.push_back(plotting_position_quantile(col, 1.0 - lambda));
  }
  if (lambda >= 1.0 - max_dry)
    throw config_error(
        "fit_threshold_surface: lambda >= 1 - max p(s); threshold would sit in "
        "the zero atom");
  return fit_ridge_surface(pts, qhat, knots, cv_folds);
}

GpdSurfaces fit_gpd_surface(const Eigen::MatrixXd& y,
                            const std::vector<double>& thresholds,
                            const SpatialGrid& grid, int knots, int cv_folds) {
  const std::size_t d = grid.size();
  if (static_cast<std::size_t>(y.cols()) != d || thresholds.size() != d)
    throw input_error("fit_gpd_surface: data/grid mismatch");

  std::vector<std::vector<double>> exceed(d);
  std::size_t total = 0;
  for (std::size_t s = 0; s < d; ++s) {
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
      const double e = y(t, static_cast<Eigen::Index>(s)) - thresholds[s];
      if (e > 0.0) exceed[s].push_back(e);
    }
    total += exceed[s].size();
  }
  if (total < 30)
    throw fit_error("fit_gpd_surface: fewer than 30 exceedances in total (" +
                    std::to_string(total) + ")");

  std::vector<Coord> pts;
  for (std::size_t s = 0; s < d; ++s) pts.push_back(grid.site(s).pos);
  const auto knot_pts = select_knots(pts, knots);
  const Eigen::MatrixXd basis = ThinPlateSurface::design(pts, knot_pts);
  const Eigen::Index nb = basis.cols();

  // Penalized negative log likelihood over (log upsilon, xi) coefficients;
  // ridge on the radial coefficients of both surfaces.
  auto fg = [&](const std::vector<int>& site_rows, double lam) {
    return [&, site_rows, lam](const std::vector<double>& c,
                               std::vector<double>& g) -> double {
      const Eigen::Map<const Eigen::VectorXd> cu(c.data(), nb);
      const Eigen::Map<const Eigen::VectorXd> cx(c.data() + nb, nb);
      double f = 0.0;
      Eigen::VectorXd gu = Eigen::VectorXd::Zero(nb);
      Eigen::VectorXd gx = Eigen::VectorXd::Zero(nb);
      for (const int s : site_rows) {
        if (exceed[s].empty()) continue;
        const double logups = basis.row(s).dot(cu);
        const double xi = basis.row(s).dot(cx);
        if (!(xi > -0.5 && xi < 1.0) || logups > 50.0)
          return std::numeric_limits<double>::infinity();
        const double ups = std::exp(logups);
        double dfu = 0.0, dfx = 0.0;
        for (const double e : exceed[s]) {
          const double w = e / ups;
          if (std::fabs(xi) < 1e-8) {
            f += logups + w - xi * (w - 0.5 * w * w);
            dfu += 1.0 - w;
            dfx += -(w - 0.5 * w * w);
          } else {
            const double a = 1.0 + xi * w;
            if (a <= 0.0) return std::numeric_limits<double>::infinity();
            const double la = std::log(a);
            f += logups + (1.0 + 1.0 / xi) * la;
            dfu += 1.0 - (1.0 + xi) * w / a;
            dfx += -la / (xi * xi) + (1.0 + 1.0 / xi) * w / a;
          }
        }
        gu.noalias() += dfu * basis.row(s).transpose();
        gx.noalias() += dfx * basis.row(s).transpose();
      }
      // Ridge on the radial part (columns 3..).
      for (Eigen::Index k = 3; k < nb; ++k) {
        f += 0.5 * lam * (cu[k] * cu[k] + cx[k] * cx[k]);
        gu[k] += lam * cu[k];
        gx[k] += lam * cx[k];
      }
      for (Eigen::Index k = 0; k < nb; ++k) {
        g[static_cast<std::size_t>(k)] = gu[k];
        g[static_cast<std::size_t>(k + nb)] = gx[k];
      }
      return f;
    };
  };

  // Pooled start: scalar fit over all exceedances.
  std::vector<double> pooled;
  pooled.reserve(total);
  for (const auto& v : exceed) pooled.insert(pooled.end(), v.begin(), v.end());
  const GpdFit pooled_fit = gpd_fit(pooled);

  auto solve = [&](const std::vector<int>& rows, double lam) {
    std::vector<double> c0(2 * nb, 0.0);
    c0[0] = std::log(pooled_fit.params.scale);
    c0[static_cast<std::size_t>(nb)] = pooled_fit.params.shape;
    LbfgsOptions lopts;
    lopts.max_iterations = 400;
    lopts.g_tol = 1e-6;
    return lbfgs(fg(rows, lam), c0, lopts);
  };

  std::vector<int> all(d);
  for (std::size_t s = 0; s < d; ++s) all[s] = static_cast<int>(s);

  const std::vector<double> lam_grid = {1e-6, 1e-4, 1e-2, 1.0, 1e2};
  double best_lam = lam_grid.front();
  double best_score = std::numeric_limits<double>::infinity();
  const int folds = std::min<int>(cv_folds, static_cast<int>(d));
  for (const double lam : lam_grid) {
    double score = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train, test;
      for (int s = 0; s < static_cast<int>(d); ++s)
        (s % folds == f ? test : train).push_back(s);
      const auto res = solve(train, lam);
      // Held-out negative log likelihood.
      const Eigen::Map<const Eigen::VectorXd> cu(res.x.data(), nb);
      const Eigen::Map<const Eigen::VectorXd> cx(res.x.data() + nb, nb);
      for (const int s : test) {
        const double ups = std::exp(basis.row(s).dot(cu));
        const double xi = basis.row(s).dot(cx);
        for (const double e : exceed[s]) {
          const double lp = gpd_logpdf(e, {ups, std::clamp(xi, -0.49, 0.99)});
          score -= std::isfinite(lp) ? lp : -1e6;
        }
      }
    }
    if (score < best_score) {
      best_score = score;
      best_lam = lam;
    }
  }

  auto final_res = solve(all, best_lam);
  if (!std::isfinite(final_res.f)) {
    throw fit_error("fit_gpd_surface: optimization failed (non-finite NLL)");
  }
  const Eigen::Map<const Eigen::VectorXd> cu(final_res.x.data(), nb);
  const Eigen::Map<const Eigen::VectorXd> cx(final_res.x.data() + nb, nb);
  GpdSurfaces out;
  out.log_scale = ThinPlateSurface(knot_pts, cu);
  out.log_scale.set_penalty_weight(best_lam);
  out.shape = ThinPlateSurface(knot_pts, cx);
  out.shape.set_penalty_weight(best_lam);
  return out;
}

MarginalModel fit_marginal(const Eigen::MatrixXd& y_raw, const SpatialGrid& grid,
                           const MarginalFitConfig& cfg) {
  if (static_cast<std::size_t>(y_raw.cols()) != grid.size())
    throw input_error("fit_marginal: data/grid mismatch");
  if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0))
    throw config_error("fit_marginal: lambda outside (0,1)");
  if (!(cfg.dry_threshold >= 0.0))
    throw config_error("fit_marginal: negative dry threshold");

  Eigen::MatrixXd y = y_raw;
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index s = 0; s < y.cols(); ++s) {
      if (y(t, s) < 0.0) throw input_error("fit_marginal: negative rainfall value");
      if (y(t, s) < cfg.dry_threshold) y(t, s) = 0.0;
    }

  const int knots = std::min<int>(cfg.knots, static_cast<int>(grid.size()));
  const auto p_surface = fit_zero_probability(y, grid, knots, cfg.cv_folds);
  const auto q_surface = fit_threshold_surface(y, cfg.lambda, grid, knots, cfg.cv_folds);

  std::vector<double> thresholds(grid.size());
  for (std::size_t s = 0; s < grid.size(); ++s) {
    thresholds[s] = q_surface.evaluate(grid.site(s).pos);
    if (!(thresholds[s] > 0.0))
      throw fit_error("fit_marginal: smoothed threshold non-positive at site '" +
                      grid.site(s).id + "'");
  }
  const auto gpd = fit_gpd_surface(y, thresholds, grid, knots, cfg.cv_folds);

  std::vector<SiteMarginal> sites(grid.size());
  std::vector<std::string> ids(grid.size());
  for (std::size_t s = 0; s < grid.size(); ++s) {
    auto& m = sites[s];
    const Coord pos = grid.site(s).pos;
    const double logit = p_surface.evaluate(pos);
    m.p = 1.0 / (1.0 + std::exp(-logit));
    if (m.p + cfg.lambda >= 1.0)
      throw fit_error("fit_marginal: p(s) + lambda >= 1 at site '" +
                      grid.site(s).id + "'");
    m.q = thresholds[s];
    m.upsilon = std::exp(gpd.log_scale.evaluate(pos));
    m.xi = gpd.shape.evaluate(pos);
    for (Eigen::Index t = 0; t < y.rows(); ++t)
      if (y(t, static_cast<Eigen::Index>(s)) > 0.0)
        m.body.push_back(y(t, static_cast<Eigen::Index>(s)));
    std::sort(m.body.begin(), m.body.end());
    if (m.body.empty())
      throw fit_error("fit_marginal: site '" + grid.site(s).id +
                      "' has no positive values");
    ids[s] = grid.site(s).id;
  }
  return MarginalModel(cfg.lambda, std::move(sites), std::move(ids));
}

}  // namespace scex
