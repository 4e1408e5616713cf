#pragma once

// Simulation of extreme fields conditioned on an exceedance somewhere in the
// domain: single-site conditional draws, importance resampling over uniform
// conditioning sites, the empirical exceedance probability, and the mixture
// with observed non-extreme fields.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scex/dependence.hpp"
#include "scex/grid.hpp"
#include "scex/marginal.hpp"

namespace scex {

enum class FieldScale { Laplace, Data };

struct EventMeta {
  std::uint32_t cond_site = 0;
  double exceedance = 0.0;   // x(s_O) - v
  double weight = 0.0;       // importance weight 1 / #{x(s) > v}
  std::uint64_t seed = 0;    // per-field stream seed
};

struct EventArchive {
  FieldScale scale = FieldScale::Data;
  double v = 0.0;  // Laplace-scale conditioning level
  Eigen::MatrixXd fields;  // n_fields x d
  std::vector<EventMeta> meta;

  Eigen::Index n_fields() const { return fields.rows(); }
};

// Caches per-conditioning-site residual simulators for one (psi, grid) pair.
class ConditionalSimulator {
 public:
  ConditionalSimulator(const DependenceParams& psi, const SpatialGrid& grid);

  // Laplace-scale field given x(cond) = v + Exp(1). The conditioning site's
  // value is exact; other sites follow a + b Z.
  Eigen::VectorXd simulate(std::size_t cond_site, double v, Rng& rng,
                           double* exceedance_out = nullptr) const;

  const SpatialGrid& grid() const { return *grid_; }
  const DependenceParams& params() const { return psi_; }

 private:
  DependenceParams psi_;
  const SpatialGrid* grid_;
  mutable std::vector<std::unique_ptr<ResidualFieldSimulator>> cache_;
};

Eigen::VectorXd simulate_conditional_field(const DependenceParams& psi,
                                           const SpatialGrid& grid,
                                           std::size_t cond_site, double v,
                                           Rng& rng);

struct SimulateConfig {
  std::size_t n = 1000;       // archived fields after resampling
  double v_quantile = 0.98;   // Laplace quantile of the conditioning level
  double oversample = 5.0;    // N' = ceil(oversample * n) candidates
  std::uint64_t seed = 1;
  FieldScale scale = FieldScale::Data;  // archive scale
};

// Importance-sampled events: N' candidates with uniform conditioning sites,
// weight 1/#{cells above v}, resampled down to n without replacement, then
// transformed to the data scale (zeros below the censoring threshold) unless
// a Laplace-scale archive is requested.
EventArchive simulate_events(const DependenceParams& psi,
                             const MarginalModel& marginal,
                             const SpatialGrid& grid, const SimulateConfig& cfg);

// Streaming variant: per-field callback instead of an in-memory archive
// (used for aggregate-only runs); callback receives the data-scale field.
void simulate_events_streaming(
    const DependenceParams& psi, const MarginalModel& marginal,
    const SpatialGrid& grid, const SimulateConfig& cfg,
    const std::function<void(const Eigen::VectorXd&, const EventMeta&)>& sink);

struct ExceedanceEstimate {
  double estimate = 0.0;
  double lo = 0.0;  // 95% stationary-bootstrap interval
  double hi = 0.0;
  int n_exceed = 0;
};

// Empirical probability that max_s x_t(s) > v, with a stationary-bootstrap
// confidence interval (geometric blocks of the given expected length).
ExceedanceEstimate exceedance_probability(const LaplaceField& data, double v,
                                          double expected_block_hours = 48.0,
                                          int bootstrap_reps = 1000,
                                          std::uint64_t seed = 1);

// Mixture sample per the unconditional decomposition: model field with
// probability p_exc, otherwise a uniformly resampled observed field whose
// maximum lies below v.
struct MixedSample {
  Eigen::MatrixXd fields;  // data scale
  std::vector<std::uint8_t> from_model;
};
MixedSample simulate_unconditional_mix(const EventArchive& archive,
                                       const Eigen::MatrixXd& observed_data,
                                       const Eigen::MatrixXd& observed_laplace_x,
                                       double v, double p_exc,
                                       std::size_t n_total, Rng& rng);

// Archive directory I/O: chunked binary matrix plus a JSON manifest with
// shape, scale, seeds and weights.
void save_archive(const EventArchive& archive, const std::string& dir,
                  Eigen::Index chunk_rows = 4096);
EventArchive load_archive(const std::string& dir);

}  // namespace scex
