#pragma once

// End-to-end pipeline: configuration loading with total validation, staged
// execution (marginal fit, dependence fit, buffer, simulation, aggregation,
// diagnostics) with hash-based caching, and a run manifest recording seeds
// and artifact hashes.

#include <cstdint>
#include <string>
#include <vector>

namespace scex {

struct PipelineConfig {
  // Paths.
  std::string data_path;
  std::string grid_path;
  std::string regions_path;
  std::string output_dir;
  double cell_size_km = 5.0;

  // Marginal block.
  double lambda = 0.005;
  double dry_threshold = 1e-5;
  int knots = 300;

  // Dependence block.
  double q_u = 0.98;
  std::size_t d_s = 5000;
  double h_max = 28.0;
  std::string variant = "ai";
  double fix_delta_range = 0.0;
  double fix_kappa_beta3 = 1.0;
  double fix_kappa_delta4 = 1.0;
  int multi_starts = 3;

  // Simulation block.
  std::size_t n_sim_fields = 100000;
  double oversample = 5.0;
  double v_quantile = 0.98;

  // Aggregate block.
  double gamma = 0.1;
  double buffer_q_years = 1.0;
  int buffer_n_sim = 50000;
  double tail_q = 0.999;
  double obs_per_year = 2160.0;
  int bootstrap_reps = 200;
  double expected_block_hours = 48.0;
  bool allow_edge = false;

  std::uint64_t seed = 1;
  int threads = 0;  // 0 = library default

  static PipelineConfig load(const std::string& path);
  void validate() const;  // throws config_error; checks file existence too
};

struct StageStatus {
  std::string name;
  bool cached = false;
  double seconds = 0.0;
};

struct PipelineResult {
  std::vector<StageStatus> stages;
  std::string manifest_path;
};

// Executes all stages in order; stages whose inputs hash-match a previous
// completed run are skipped. A stage failure throws with the stage name in
// the message.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace scex
