#pragma once

// Three-part site-wise marginal model: an atom at zero, an empirical body up
// to a high threshold, and a GPD tail, with smooth spatial parameter
// surfaces. Transforms fields between the data scale and standard-Laplace
// scale, carrying censoring thresholds for the zeros.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "scex/field.hpp"
#include "scex/grid.hpp"
#include "scex/surface.hpp"

namespace scex {

struct SiteMarginal {
  double p = 0.0;        // probability of an exact zero
  double q = 1.0;        // GPD threshold
  double upsilon = 1.0;  // GPD scale
  double xi = 0.1;       // GPD shape
  std::vector<double> body;  // sorted strictly positive sample below the tail
};

// Laplace-scale field with censoring marks: censored cells carry the site's
// censoring threshold as their value.
struct LaplaceField {
  Eigen::MatrixXd x;  // n_time x d
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> censored;
  Eigen::VectorXd censor_threshold;  // c(s) per site
};

class MarginalModel {
 public:
  MarginalModel(double lambda, std::vector<SiteMarginal> sites,
                std::vector<std::string> site_ids);

  double lambda() const { return lambda_; }
  std::size_t n_sites() const { return sites_.size(); }
  const SiteMarginal& site(std::size_t s) const { return sites_[s]; }
  const std::vector<std::string>& site_ids() const { return site_ids_; }

  double cdf(double y, std::size_t s) const;
  double quantile(double u, std::size_t s) const;
  // F_L^{-1}(p(s)); -infinity when p(s) = 0 (no censoring possible).
  double censor_threshold(std::size_t s) const;

  double to_laplace_value(double y, std::size_t s) const;  // y > 0
  double from_laplace_value(double x, std::size_t s) const;

  LaplaceField to_laplace(const Eigen::MatrixXd& y) const;
  Eigen::MatrixXd from_laplace(const Eigen::MatrixXd& x) const;

  std::string to_json() const;
  static MarginalModel from_json(const std::string& text);
  static MarginalModel load(const std::string& path);
  void save(const std::string& path) const;

 private:
  double lambda_;
  std::vector<SiteMarginal> sites_;
  std::vector<std::string> site_ids_;
};

struct MarginalFitConfig {
  double lambda = 0.005;
  double dry_threshold = 1e-5;  // mm/hr; values below are set to zero
  int knots = 300;              // capped at the number of sites
  int cv_folds = 5;
};

// Individual smooth fits (exposed for diagnostics and tests). `y` is the
// already-dry-thresholded data matrix aligned with the grid.
ThinPlateSurface fit_zero_probability(const Eigen::MatrixXd& y,
                                      const SpatialGrid& grid, int knots,
                                      int cv_folds = 5);
ThinPlateSurface fit_threshold_surface(const Eigen::MatrixXd& y, double lambda,
                                       const SpatialGrid& grid, int knots,
                                       int cv_folds = 5);
struct GpdSurfaces {
  ThinPlateSurface log_scale;
  ThinPlateSurface shape;
};
GpdSurfaces fit_gpd_surface(const Eigen::MatrixXd& y,
                            const std::vector<double>& thresholds,
                            const SpatialGrid& grid, int knots,
                            int cv_folds = 5);

// Full marginal fit per the configuration; applies the dry threshold first.
MarginalModel fit_marginal(const Eigen::MatrixXd& y_raw, const SpatialGrid& grid,
                           const MarginalFitConfig& cfg);

// Empirical quantile with the (r-0.5)/n plotting-position convention and
// linear interpolation; `sorted` must be ascending.
double plotting_position_quantile(const std::vector<double>& sorted, double u);
double plotting_position_cdf(const std::vector<double>& sorted, double y);

}  // namespace scex
