#include "scex/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scex/errors.hpp"
#include "scex/specfun.hpp"

namespace scex {

std::string to_string(ReturnLevelMethod m) {
  return m == ReturnLevelMethod::SimulationSplice ? "i" : "ii";
}

ReturnLevelMethod return_level_method_from_string(const std::string& s) {
  if (s == "i") return ReturnLevelMethod::SimulationSplice;
  if (s == "ii") return ReturnLevelMethod::DirectGpd;
  throw config_error("unknown return-level method '" + s + "' (expected i|ii)");
}

AggregateValue aggregate_field(const Eigen::VectorXd& field, const Region& region,
                               double cell_area) {
  if (region.members.empty()) throw input_error("aggregate_field: empty region");
  double sum = 0.0;
  for (const std::size_t s : region.members) {
    if (s >= static_cast<std::size_t>(field.size()))
      throw input_error("aggregate_field: field does not cover region member");
    const double v = field[static_cast<Eigen::Index>(s)];
    if (!std::isfinite(v))
      throw input_error("aggregate_field: missing value for region member");
    sum += v;
  }
  AggregateValue out;
  out.total = cell_area * sum;
  out.mean = out.total / region.area;
  return out;
}

AggregateSample aggregate_fields(const Eigen::MatrixXd& fields, const Region& region,
                                 double cell_area, const std::string& source) {
  AggregateSample out;
  out.region = region.name;
  out.area = region.area;
  out.source = source;
  out.totals.reserve(fields.rows());
  out.means.reserve(fields.rows());
  for (Eigen::Index r = 0; r < fields.rows(); ++r) {
    const auto v = aggregate_field(fields.row(r).transpose(), region, cell_area);
    out.totals.push_back(v.total);
    out.means.push_back(v.mean);
  }
  return out;
}

JointAggregateSample joint_aggregates(const Eigen::MatrixXd& fields,
                                      const Region& region_a, const Region& region_b,
                                      double cell_area) {
  JointAggregateSample out;
  out.region_a = region_a.name;
  out.region_b = region_b.name;
  for (Eigen::Index r = 0; r < fields.rows(); ++r) {
    out.a_means.push_back(
        aggregate_field(fields.row(r).transpose(), region_a, cell_area).mean);
    out.b_means.push_back(
        aggregate_field(fields.row(r).transpose(), region_b, cell_area).mean);
  }
  return out;
}

std::vector<int> stationary_bootstrap_indices(int n, double expected_block, Rng& rng) {
  if (n < 1) throw input_error("stationary bootstrap: empty series");
  if (!(expected_block >= 1.0))
    throw config_error("stationary bootstrap: expected block must be >= 1");
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(n) + 64);
  const double p = 1.0 / expected_block;
  while (static_cast<int>(idx.size()) < n) {
    const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    int k = 1;
    if (p < 1.0)
      k = 1 + static_cast<int>(std::floor(std::log(rng.uniform_open()) /
                                          std::log(1.0 - p)));
    // Wrap rule: blocks overshooting the end continue from the start.
    for (int j = 0; j < k; ++j) idx.push_back((start + j) % n);
  }
  idx.resize(static_cast<std::size_t>(n));
  return idx;
}

namespace {

double sample_quantile(std::vector<double> sorted_values, double u) {
  // plotting-position convention shared with the marginal body
  return plotting_position_quantile(sorted_values, u);
}

}  // namespace

ReturnLevelCurve return_level_curve(const AggregateSample& sample,
                                    const ReturnLevelConfig& cfg) {
  if (sample.totals.empty()) throw input_error("return_level_curve: empty sample");
  if (!(cfg.tail_q > 0.0 && cfg.tail_q < 1.0))
    throw config_error("return_level_curve: tail_q outside (0,1)");
  if (!(cfg.event_prob > 0.0 && cfg.event_prob <= 1.0))
    throw config_error("return_level_curve: event_prob outside (0,1]");

  std::vector<double> sorted = sample.totals;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sample_quantile(sorted, cfg.tail_q);
  std::vector<double> exceedances;
  for (const double v : sorted)
    if (v > threshold) exceedances.push_back(v - threshold);
  if (static_cast<int>(exceedances.size()) < cfg.min_exceedances) {
    const auto needed = static_cast<std::size_t>(
        std::ceil(cfg.min_exceedances / (1.0 - cfg.tail_q)));
    throw fit_error("return_level_curve: only " +
                    std::to_string(exceedances.size()) +
                    " exceedances above the tail threshold; need a sample of at "
                    "least " + std::to_string(needed));
  }
  const GpdFit tail_fit = gpd_fit(exceedances, static_cast<unsigned>(cfg.seed));

  std::vector<double> periods = cfg.return_periods;
  if (periods.empty()) {
    for (double t = 0.5; t <= 500.0 * 1.0001; t *= 1.25) periods.push_back(t);
  }

  // Per-field exceedance probability of the splice threshold.
  const double splice_rate = cfg.event_prob * (1.0 - cfg.tail_q);

  auto level_for = [&](const std::vector<double>& sorted_vals,
                       const GpdParams& tail, double thr, double period) {
    const double p_target = 1.0 / (period * cfg.obs_per_year);
    if (p_target >= cfg.event_prob * (1.0 - cfg.tail_q)) {
      // Within the empirical resolution of the sample.
      const double survival = p_target / cfg.event_prob;
      if (survival >= 1.0) return sorted_vals.front();
      return sample_quantile(sorted_vals, 1.0 - survival);
    }
    const double tail_u = 1.0 - p_target / splice_rate;
    return thr + gpd_quantile(tail_u, tail);
  };

  ReturnLevelCurve out;
  out.region = sample.region;
  out.method = cfg.method;
  out.return_periods = periods;
  out.tail = tail_fit.params;
  out.splice_threshold = threshold;
  out.splice_rate = splice_rate;
  for (const double t : periods)
    out.levels.push_back(level_for(sorted, tail_fit.params, threshold, t));

  // Bootstrap band: iid field resampling for model samples, block bootstrap
  // preserving temporal dependence for data samples (iid variant optional).
  Rng rng(derive_seed(cfg.seed, "return-level-boot"));
  std::vector<std::vector<double>> boot_levels(
      periods.size(), std::vector<double>());
  const int n = static_cast<int>(sample.totals.size());
  for (int rep = 0; rep < cfg.bootstrap_reps; ++rep) {
    std::vector<double> res(n);
    if (cfg.method == ReturnLevelMethod::SimulationSplice || cfg.iid_bootstrap) {
      for (int i = 0; i < n; ++i)
        res[i] = sample.totals[rng.uniform_int(static_cast<std::uint64_t>(n))];
    } else {
      const auto idx = stationary_bootstrap_indices(n, cfg.expected_block, rng);
      for (int i = 0; i < n; ++i) res[i] = sample.totals[idx[i]];
    }
    std::sort(res.begin(), res.end());
    const double thr = sample_quantile(res, cfg.tail_q);
    std::vector<double> exc;
    for (const double v : res)
      if (v > thr) exc.push_back(v - thr);
    if (static_cast<int>(exc.size()) < 5) continue;
    GpdParams tp;
    try {
      tp = gpd_fit(exc, static_cast<unsigned>(cfg.seed + rep + 1)).params;
    } catch (const fit_error&) {
      continue;
    }
    for (std::size_t i = 0; i < periods.size(); ++i)
      boot_levels[i].push_back(level_for(res, tp, thr, periods[i]));
  }
  out.lo.resize(periods.size());
  out.hi.resize(periods.size());
  for (std::size_t i = 0; i < periods.size(); ++i) {
    auto& b = boot_levels[i];
    if (b.size() < 20) {
      out.lo[i] = out.levels[i];
      out.hi[i] = out.levels[i];
      continue;
    }
    std::sort(b.begin(), b.end());
    out.lo[i] = b[static_cast<std::size_t>(0.025 * (b.size() - 1))];
    out.hi[i] = b[static_cast<std::size_t>(std::ceil(0.975 * (b.size() - 1)))];
    out.lo[i] = std::min(out.lo[i], out.levels[i]);
    out.hi[i] = std::max(out.hi[i], out.levels[i]);
  }
  return out;
}

ReturnLevelCurve return_level_band(const std::vector<ReturnLevelCurve>& curves) {
  if (curves.empty()) throw input_error("return_level_band: no curves");
  for (const auto& c : curves)
    if (c.return_periods != curves.front().return_periods)
      throw input_error("return_level_band: mismatched return-period grids");
  ReturnLevelCurve out = curves.front();
  for (std::size_t i = 0; i < out.return_periods.size(); ++i) {
    std::vector<double> vals;
    for (const auto& c : curves) vals.push_back(c.levels[i]);
    std::sort(vals.begin(), vals.end());
    out.levels[i] = vals[vals.size() / 2];
    out.lo[i] = vals[static_cast<std::size_t>(0.025 * (vals.size() - 1))];
    out.hi[i] = vals[static_cast<std::size_t>(std::ceil(0.975 * (vals.size() - 1)))];
  }
  return out;
}

double region_boundary_clearance(const Region& region, const SpatialGrid& grid) {
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const auto& s : grid.sites()) {
    min_x = std::min(min_x, s.pos.x);
    max_x = std::max(max_x, s.pos.x);
    min_y = std::min(min_y, s.pos.y);
    max_y = std::max(max_y, s.pos.y);
  }
  const double half = 0.5 * grid.cell_size();
  double clearance = std::numeric_limits<double>::infinity();
  for (const std::size_t m : region.members) {
    const auto& p = grid.site(m).pos;
    clearance = std::min({clearance, p.x - (min_x - half), (max_x + half) - p.x,
                          p.y - (min_y - half), (max_y + half) - p.y});
  }
  return clearance;
}

namespace {

// Pool-adjacent-violators for a non-increasing fit weighted by counts.
std::vector<double> isotonic_decreasing(const std::vector<double>& y,
                                        const std::vector<double>& w) {
  struct Block {
    double value, weight;
    int count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < y.size(); ++i) {
    blocks.push_back({y[i], std::max(w[i], 1e-12), 1});
    while (blocks.size() > 1 &&
           blocks[blocks.size() - 2].value < blocks.back().value) {
      const Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      const double tw = a.weight + b.weight;
      a.value = (a.value * a.weight + b.value * b.weight) / tw;
      a.weight = tw;
      a.count += b.count;
    }
  }
  std::vector<double> out;
  for (const auto& b : blocks)
    for (int i = 0; i < b.count; ++i) out.push_back(b.value);
  return out;
}

}  // namespace

BufferResult select_buffer(const DependenceParams& psi, const MarginalModel& marginal,
                           const SpatialGrid& grid, const BufferConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0))
    throw config_error("select_buffer: gamma outside (0,1)");
  double q = cfg.q;
  if (q <= 0.0) q = 1.0 - 1.0 / (cfg.q_years * cfg.obs_per_year);
  if (!(q > 0.0 && q < 1.0))
    throw config_error("select_buffer: conditioning quantile outside (0,1)");
  if (marginal.n_sites() != grid.size())
    throw input_error("select_buffer: marginal/grid mismatch");

  // Conditioning site: closest to the domain centroid.
  double cx = 0.0, cy = 0.0;
  for (const auto& s : grid.sites()) {
    cx += s.pos.x;
    cy += s.pos.y;
  }
  cx /= static_cast<double>(grid.size());
  cy /= static_cast<double>(grid.size());
  std::size_t cond = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const double dd = std::hypot(grid.site(s).pos.x - cx, grid.site(s).pos.y - cy);
    if (dd < best) {
      best = dd;
      cond = s;
    }
  }

  const double v = laplace_quantile(q);
  const ConditionalSimulator sim(psi, grid);
  Rng rng(derive_seed(cfg.seed, "buffer"));
  std::vector<double> hits(grid.size(), 0.0);
  for (int i = 0; i < cfg.n_sim; ++i) {
    const Eigen::VectorXd x = sim.simulate(cond, v, rng);
    for (std::size_t s = 0; s < grid.size(); ++s)
      if (x[static_cast<Eigen::Index>(s)] > v) hits[s] += 1.0;
  }

  // Planar distance bins of width bin_km (tau is a planar buffer width).
  const AnisotropyParams iso;
  double h_max_domain = 0.0;
  std::vector<double> h(grid.size());
  for (std::size_t s = 0; s < grid.size(); ++s) {
    h[s] = grid.distance(cond, s, iso);
    h_max_domain = std::max(h_max_domain, h[s]);
  }
  const int n_bins = static_cast<int>(std::ceil(h_max_domain / cfg.bin_km)) + 1;
  std::vector<double> chi_sum(n_bins, 0.0);
  std::vector<int> count(n_bins, 0);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    if (s == cond) continue;
    const int b = static_cast<int>(h[s] / cfg.bin_km);
    chi_sum[b] += hits[s] / static_cast<double>(cfg.n_sim);
    count[b] += 1;
  }

  BufferResult out;
  out.q = q;
  std::vector<double> raw, weights;
  for (int b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    out.bin_left.push_back(b * cfg.bin_km);
    raw.push_back(chi_sum[b] / count[b]);
    weights.push_back(static_cast<double>(count[b]));
    out.bin_count.push_back(count[b]);
  }
  out.chi_raw = raw;
  out.chi_fit = isotonic_decreasing(raw, weights);

  double tau = -1.0;
  for (std::size_t b = 0; b < out.chi_fit.size(); ++b) {
    if (out.chi_fit[b] < cfg.gamma) {
      tau = out.bin_left[b];
      break;
    }
  }
  if (tau < 0.0)
    throw fit_error(
        "select_buffer: chi never drops below gamma within the domain; a larger "
        "simulation domain is required");
  out.tau = tau;
  return out;
}

std::vector<QqRow> aggregate_qq(const std::vector<double>& model_sample,
                                const std::vector<double>& data_sample,
                                const QqConfig& cfg) {
  if (model_sample.empty() || data_sample.empty())
    throw input_error("aggregate_qq: empty sample");
  std::vector<double> probs = cfg.probs;
  if (probs.empty()) {
    // 0.7 up to the horizon-year probability, geometric in the survival.
    const double s_hi = 0.3;
    const double s_lo = 1.0 / (cfg.horizon_years * cfg.obs_per_year);
    const int n_pts = 25;
    for (int i = 0; i < n_pts; ++i) {
      const double f = static_cast<double>(i) / (n_pts - 1);
      probs.push_back(1.0 - s_hi * std::pow(s_lo / s_hi, f));
    }
  }
  for (const double p : probs)
    if (!(p > 0.0 && p < 1.0)) throw input_error("aggregate_qq: prob outside (0,1)");

  std::vector<double> model_sorted = model_sample;
  std::sort(model_sorted.begin(), model_sorted.end());
  std::vector<double> data_sorted = data_sample;
  std::sort(data_sorted.begin(), data_sorted.end());

  std::vector<QqRow> rows(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    rows[i].prob = probs[i];
    rows[i].model_q = plotting_position_quantile(model_sorted, probs[i]);
    rows[i].data_q = plotting_position_quantile(data_sorted, probs[i]);
  }

  // Stationary-bootstrap band for the data quantiles.
  Rng rng(derive_seed(cfg.seed, "qq-boot"));
  std::vector<std::vector<double>> reps(probs.size());
  const int n = static_cast<int>(data_sample.size());
  for (int rep = 0; rep < cfg.bootstrap_reps; ++rep) {
    const auto idx = stationary_bootstrap_indices(n, cfg.expected_block, rng);
    std::vector<double> res(n);
    for (int i = 0; i < n; ++i) res[i] = data_sample[idx[i]];
    std::sort(res.begin(), res.end());
    for (std::size_t i = 0; i < probs.size(); ++i)
      reps[i].push_back(plotting_position_quantile(res, probs[i]));
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    auto& b = reps[i];
    std::sort(b.begin(), b.end());
    rows[i].lo = b[static_cast<std::size_t>(0.025 * (b.size() - 1))];
    rows[i].hi = b[static_cast<std::size_t>(std::ceil(0.975 * (b.size() - 1)))];
  }
  return rows;
}

}  // namespace scex
