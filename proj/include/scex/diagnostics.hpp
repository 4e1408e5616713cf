#pragma once

// Extremal-dependence diagnostics: the conditional exceedance index chi_q,
// the no-rain-under-extremes index chi0, and tables comparing free pairwise
// estimates against fitted parametric dependence functions.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "scex/dependence.hpp"
#include "scex/grid.hpp"
#include "scex/inference.hpp"

namespace scex {

struct ChiEstimate {
  std::vector<double> bin_left;  // km
  std::vector<double> chi;
  std::vector<double> std_error;  // binomial Monte-Carlo standard errors
  std::vector<int> n_cond;        // conditioning exceedances per bin
  std::vector<std::uint8_t> defined;
  double q = 0.0;
  std::string source;  // model | empirical
};

// Pairwise empirical chi_q pooled into distance bins: the conditional
// frequency of joint exceedances of the per-site empirical q-quantiles.
ChiEstimate chi_q_binned(const Eigen::MatrixXd& fields, const SpatialGrid& grid,
                         const AnisotropyParams& aniso, double q,
                         double bin_km = 1.0);

// Single-pair version.
double chi_q_pair(const Eigen::MatrixXd& fields, Eigen::Index site_a,
                  Eigen::Index site_b, double q);

// chi0: P(Y(s) = 0 | Y(s_O) above its q-quantile), binned by distance from
// the conditioning site.
ChiEstimate chi_zero(const Eigen::MatrixXd& fields, const SpatialGrid& grid,
                     const AnisotropyParams& aniso, std::size_t cond_site,
                     double q, double bin_km = 1.0);

struct DependenceCurveRow {
  double h = 0.0;
  double alpha = 0.0, beta = 0.0, mu = 0.0, sigma = 0.0, delta = 0.0, rho = 0.0;
};

struct DependenceFitReport {
  std::vector<double> h_grid;
  std::vector<DependenceCurveRow> ai;  // empty when no AI fit supplied
  std::vector<DependenceCurveRow> ad;
  std::vector<FreeFitRow> free_fits;   // may be empty
  std::optional<ChiEstimate> model_chi;  // chi_q(s, s_O) curve when events given
};

DependenceFitReport dependence_fit_report(
    const std::optional<DependenceParams>& psi_ai,
    const std::optional<DependenceParams>& psi_ad,
    const std::vector<FreeFitRow>& free_fits, const std::vector<double>& h_grid,
    const std::optional<ChiEstimate>& model_chi = std::nullopt);

}  // namespace scex
