#pragma once

// Multivariate Gaussian orthant probabilities via Genz's separation-of-
// variables transform with a randomized Korobov lattice rule.

#include <Eigen/Dense>

namespace scex {

struct MvnResult {
  double value = 0.0;
  double std_error = 0.0;
};

// P(X_i <= upper_i for all i) for X ~ N(mean, cov). Dimension 1 and 2 are
// computed exactly; higher dimensions use randomized QMC with the returned
// standard error estimate.
MvnResult mvn_cdf(const Eigen::VectorXd& upper, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov, int n_samples = 4096,
                  int n_shifts = 12, std::uint64_t seed = 0x5eedULL);

}  // namespace scex
