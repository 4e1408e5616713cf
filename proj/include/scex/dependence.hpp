#pragma once

// Parametric ingredients of the conditional dependence model: norming
// functions a and b, delta-Laplace residual margins with distance-indexed
// parameter functions, Matern correlation, and the Gaussian copula
// correlation matrix conditioned on the site being conditioned upon.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "scex/grid.hpp"
#include "scex/rng.hpp"

namespace scex {

enum class DependenceVariant { AI, AD };

std::string to_string(DependenceVariant v);
DependenceVariant variant_from_string(const std::string& s);

struct DependenceParams {
  double kappa_alpha1 = 2.0;
  double kappa_alpha2 = 1.0;
  double delta_ad_range = 0.0;  // Delta: asymptotic dependence up to this distance

  double kappa_beta1 = 20.0;
  double kappa_beta2 = 1.0;
  double kappa_beta3 = 1.0;  // in [0,1]

  double kappa_mu1 = 0.5;
  double kappa_mu2 = 0.5;
  double kappa_mu3 = 50.0;

  double kappa_sigma1 = 20.0;
  double kappa_sigma2 = 1.0;
  double kappa_sigma3 = 1.0;  // AD variant scale ceiling; unused for AI

  double kappa_delta1 = 0.5;
  double kappa_delta2 = 0.5;
  double kappa_delta3 = 50.0;
  double kappa_delta4 = 1.0;  // <= 1

  double kappa_rho1 = 30.0;
  double kappa_rho2 = 0.5;

  AnisotropyParams aniso;
  DependenceVariant variant = DependenceVariant::AI;

  void validate() const;

  // Eq-level parameter functions of distance h (km, anisotropic metric).
  double alpha(double h) const;  // 1 for h <= Delta, stretched-exponential decay after
  double beta(double h) const;
  double mu(double h) const;
  double sigma(double h) const;
  double delta(double h) const;
  double rho(double h) const;  // Matern correlation

  // JSON round-trip keyed by the parameter names above.
  std::string to_json() const;
  static DependenceParams from_json(const std::string& text);
  static DependenceParams load(const std::string& path);
  void save(const std::string& path) const;
};

// Norming functions a(x,h) = x*alpha(h), b(x,h) = x^beta(h); requires x > 0.
struct Norming {
  double a = 0.0;
  double b = 1.0;
};
Norming norming_functions(double x, double h, const DependenceParams& psi);

struct ResidualParams {
  double mu = 0.0;
  double sigma = 0.0;
  double delta = 1.0;
};
ResidualParams residual_param_functions(double h, const DependenceParams& psi);

// Delta-Laplace (generalized Gaussian) with mean mu and variance sigma^2 for
// every shape delta; delta=1 is Laplace, delta=2 Gaussian.
class DeltaLaplace {
 public:
  DeltaLaplace(double mu, double sigma, double delta);
  explicit DeltaLaplace(const ResidualParams& p)
      : DeltaLaplace(p.mu, p.sigma, p.delta) {}

  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  double shape() const { return delta_; }
  double scale() const { return kscale_; }  // k*sigma

  double pdf(double z) const;
  double log_pdf(double z) const;
  double cdf(double z) const;
  double quantile(double u) const;  // u in (0,1)

 private:
  double mu_, sigma_, delta_;
  double kscale_;    // k * sigma with k^2 = Gamma(1/delta)/Gamma(3/delta)
  double inv_delta_;
  double log_norm_;  // log of the density normalising constant
};

double matern(double h, double kappa_rho1, double kappa_rho2);

// Correlation of the Gaussian copula after conditioning on W(s_o) = 0:
// removes row/column `o` and renormalises the Schur complement to unit
// diagonal. Requires |corr(i,o)| < 1 for all i != o.
Eigen::MatrixXd conditional_correlation(const Eigen::MatrixXd& sigma_star,
                                        std::size_t o);

// Cholesky with escalating diagonal jitter (1e-10 .. 1e-6) on failure.
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& m);

// Draws of the residual field {Z(s|s_O)} on a fixed grid; caches the
// conditioned Cholesky factor and per-site delta-Laplace margins.
class ResidualFieldSimulator {
 public:
  ResidualFieldSimulator(const DependenceParams& psi, const SpatialGrid& grid,
                         std::size_t cond_site);

  std::size_t cond_site() const { return cond_site_; }
  const std::vector<double>& distances() const { return h_; }

  // Z over all grid sites; Z[cond_site] = 0 exactly.
  Eigen::VectorXd simulate(Rng& rng) const;

 private:
  std::size_t cond_site_;
  std::vector<std::size_t> others_;  // grid indices excluding cond_site
  std::vector<double> h_;            // distance to cond_site per grid index
  std::vector<DeltaLaplace> margins_;  // aligned with others_
  Eigen::MatrixXd chol_;             // lower factor of conditioned correlation
};

// Single draw without the cached simulator (convenience for small uses).
Eigen::VectorXd residual_field_simulate(const DependenceParams& psi,
                                        const SpatialGrid& grid,
                                        std::size_t cond_site, Rng& rng);

}  // namespace scex
