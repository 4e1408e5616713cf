#pragma once

// Synthetic-data generation for tests and demonstration pipelines: a
// constant-parameter marginal model with an analytic body, and mixture
// datasets combining conditional-model extreme fields with independent body
// fields.

#include <Eigen/Dense>
#include <cstdint>

#include "scex/dependence.hpp"
#include "scex/grid.hpp"
#include "scex/marginal.hpp"

namespace scex {

struct SyntheticMarginalSpec {
  double p_zero = 0.837;       // probability of a dry hour
  double lambda = 0.005;
  double threshold = 4.0;      // q, mm/hr
  double gpd_scale = 1.5;
  double gpd_shape = 0.2;
  int body_points = 2000;      // deterministic exponential-quantile body
};

// Marginal model with the same parameters at every site; the body is laid
// out on exponential quantiles so that F(threshold) = 1 - lambda holds.
MarginalModel make_synthetic_marginal(const SpatialGrid& grid,
                                      const SyntheticMarginalSpec& spec);

struct SyntheticDataConfig {
  int n_time = 2000;
  double p_exc = 0.1;        // probability a field is a model extreme event
  double v_quantile = 0.98;  // conditioning level for extreme fields
  double body_quantile = 0.9;  // body values capped at this marginal level;
                               // kept below v so marginal refits cannot flip
                               // body fields across the conditioning level
  double oversample = 5.0;   // importance-sampling factor for extreme fields
  std::uint64_t seed = 1;
};

// Mixture dataset: with probability p_exc a conditional-model extreme field
// (importance-resampled, max above v), otherwise an independent body field
// with exact zero probability p(s) and values below v everywhere.
Eigen::MatrixXd generate_synthetic(const SpatialGrid& grid,
                                   const DependenceParams& psi,
                                   const MarginalModel& marginal,
                                   const SyntheticDataConfig& cfg);

// The published East-Anglia dependence parameter estimates (the values also
// shipped as data/table_s1.json).
DependenceParams reference_dependence_params();

}  // namespace scex
