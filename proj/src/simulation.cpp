#include "scex/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "scex/aggregate.hpp"
#include "scex/csv.hpp"
#include "scex/errors.hpp"
#include "scex/specfun.hpp"

namespace scex {

using nlohmann::json;
namespace fs = std::filesystem;

ConditionalSimulator::ConditionalSimulator(const DependenceParams& psi,
                                           const SpatialGrid& grid)
    : psi_(psi), grid_(&grid), cache_(grid.size()) {
  psi_.validate();
}

Eigen::VectorXd ConditionalSimulator::simulate(std::size_t cond_site, double v,
                                               Rng& rng,
                                               double* exceedance_out) const {
  if (cond_site >= grid_->size())
    throw input_error("conditional simulator: conditioning site out of range");
  if (!cache_[cond_site])
    cache_[cond_site] =
        std::make_unique<ResidualFieldSimulator>(psi_, *grid_, cond_site);
  const auto& sim = *cache_[cond_site];

  const double e = rng.exponential();
  const double x_o = v + e;
  if (exceedance_out) *exceedance_out = e;
  const Eigen::VectorXd z = sim.simulate(rng);
  Eigen::VectorXd x(grid_->size());
  for (std::size_t s = 0; s < grid_->size(); ++s) {
    if (s == cond_site) {
      x[static_cast<Eigen::Index>(s)] = x_o;
    } else {
      const Norming nm = norming_functions(x_o, sim.distances()[s], psi_);
      x[static_cast<Eigen::Index>(s)] =
          nm.a + nm.b * z[static_cast<Eigen::Index>(s)];
    }
  }
  return x;
}

Eigen::VectorXd simulate_conditional_field(const DependenceParams& psi,
                                           const SpatialGrid& grid,
                                           std::size_t cond_site, double v,
                                           Rng& rng) {
  return ConditionalSimulator(psi, grid).simulate(cond_site, v, rng);
}

namespace {

struct Candidate {
  std::uint32_t cond = 0;
  double exceedance = 0.0;
  double weight = 0.0;
  std::uint64_t seed = 0;
};

// First pass: generate candidate metadata (field values discarded).
std::vector<Candidate> generate_candidates(const ConditionalSimulator& sim,
                                           double v, std::size_t n_cand,
                                           std::uint64_t seed) {
  const std::size_t d = sim.grid().size();
  std::vector<Candidate> cands(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) {
    Candidate& c = cands[i];
    c.seed = derive_seed(seed, "sim-field", i);
    Rng rng(c.seed);
    c.cond = static_cast<std::uint32_t>(rng.uniform_int(d));
    const Eigen::VectorXd x = sim.simulate(c.cond, v, rng, &c.exceedance);
    int count = 0;
    for (Eigen::Index s = 0; s < x.size(); ++s)
      if (x[s] > v) ++count;
    // The conditioning site always exceeds; guard against the impossible.
    if (count < 1) count = 1;
    c.weight = 1.0 / static_cast<double>(count);
  }
  return cands;
}

// Weighted sampling without replacement (exponential-key reservoir rule);
// returns selected candidate indices in their original order.
std::vector<std::size_t> weighted_subsample(const std::vector<Candidate>& cands,
                                            std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "sim-resample"));
  std::vector<std::pair<double, std::size_t>> keyed(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double u = rng.uniform_open();
    keyed[i] = {std::log(u) / cands[i].weight, i};
  }
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<long>(n), keyed.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = keyed[i].second;
  std::sort(idx.begin(), idx.end());
  return idx;
}

Eigen::VectorXd regenerate_field(const ConditionalSimulator& sim, double v,
                                 const Candidate& c) {
  // Replaying the candidate's stream reproduces the field bit for bit.
  Rng rng(c.seed);
  (void)rng.uniform_int(sim.grid().size());  // the conditioning-site draw
  return sim.simulate(c.cond, v, rng);
}

}  // namespace

EventArchive simulate_events(const DependenceParams& psi,
                             const MarginalModel& marginal,
                             const SpatialGrid& grid, const SimulateConfig& cfg) {
  if (cfg.n < 1) throw config_error("simulate_events: n must be >= 1");
  if (!(cfg.oversample >= 1.0))
    throw config_error("simulate_events: oversample must be >= 1");
  if (marginal.n_sites() != grid.size())
    throw input_error("simulate_events: marginal/grid mismatch");
  const double v = laplace_quantile(cfg.v_quantile);

  const ConditionalSimulator sim(psi, grid);
  const std::size_t n_cand =
      static_cast<std::size_t>(std::ceil(cfg.oversample * static_cast<double>(cfg.n)));
  const auto cands = generate_candidates(sim, v, n_cand, cfg.seed);
  const auto selected = weighted_subsample(cands, cfg.n, cfg.seed);

  EventArchive out;
  out.scale = cfg.scale;
  out.v = v;
  out.fields.resize(static_cast<Eigen::Index>(cfg.n),
                    static_cast<Eigen::Index>(grid.size()));
  out.meta.reserve(cfg.n);
  for (std::size_t r = 0; r < selected.size(); ++r) {
    const Candidate& c = cands[selected[r]];
    Eigen::VectorXd x = regenerate_field(sim, v, c);
    if (cfg.scale == FieldScale::Data) {
      for (Eigen::Index s = 0; s < x.size(); ++s)
        x[s] = marginal.from_laplace_value(x[s], static_cast<std::size_t>(s));
    }
    out.fields.row(static_cast<Eigen::Index>(r)) = x.transpose();
    out.meta.push_back({c.cond, c.exceedance, c.weight, c.seed});
  }
  return out;
}

void simulate_events_streaming(
    const DependenceParams& psi, const MarginalModel& marginal,
    const SpatialGrid& grid, const SimulateConfig& cfg,
    const std::function<void(const Eigen::VectorXd&, const EventMeta&)>& sink) {
  if (cfg.n < 1) throw config_error("simulate_events: n must be >= 1");
  if (!(cfg.oversample >= 1.0))
    throw config_error("simulate_events: oversample must be >= 1");
  const double v = laplace_quantile(cfg.v_quantile);
  const ConditionalSimulator sim(psi, grid);
  const std::size_t n_cand =
      static_cast<std::size_t>(std::ceil(cfg.oversample * static_cast<double>(cfg.n)));
  const auto cands = generate_candidates(sim, v, n_cand, cfg.seed);
  const auto selected = weighted_subsample(cands, cfg.n, cfg.seed);
  for (const std::size_t i : selected) {
    const Candidate& c = cands[i];
    Eigen::VectorXd x = regenerate_field(sim, v, c);
    if (cfg.scale == FieldScale::Data) {
      for (Eigen::Index s = 0; s < x.size(); ++s)
        x[s] = marginal.from_laplace_value(x[s], static_cast<std::size_t>(s));
    }
    sink(x, {c.cond, c.exceedance, c.weight, c.seed});
  }
}

ExceedanceEstimate exceedance_probability(const LaplaceField& data, double v,
                                          double expected_block_hours,
                                          int bootstrap_reps, std::uint64_t seed) {
  const Eigen::Index n = data.x.rows();
  if (n < 2) throw input_error("exceedance_probability: need at least 2 fields");
  std::vector<std::uint8_t> exceed(static_cast<std::size_t>(n), 0);
  int count = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    bool hit = false;
    for (Eigen::Index s = 0; s < data.x.cols() && !hit; ++s)
      if (!data.censored(t, s) && data.x(t, s) > v) hit = true;
    exceed[static_cast<std::size_t>(t)] = hit ? 1 : 0;
    count += hit ? 1 : 0;
  }
  ExceedanceEstimate out;
  out.n_exceed = count;
  out.estimate = static_cast<double>(count) / static_cast<double>(n);
  if (count == 0) {
    out.lo = 0.0;
    out.hi = 0.0;
    return out;  // degenerate interval; caller can detect via n_exceed
  }
  std::vector<double> reps;
  reps.reserve(bootstrap_reps);
  Rng rng(derive_seed(seed, "exceedance-boot"));
  for (int r = 0; r < bootstrap_reps; ++r) {
    const auto idx =
        stationary_bootstrap_indices(static_cast<int>(n), expected_block_hours, rng);
    int c = 0;
    for (const int t : idx) c += exceed[static_cast<std::size_t>(t)];
    reps.push_back(static_cast<double>(c) / static_cast<double>(n));
  }
  std::sort(reps.begin(), reps.end());
  out.lo = reps[static_cast<std::size_t>(0.025 * (reps.size() - 1))];
  out.hi = reps[static_cast<std::size_t>(std::ceil(0.975 * (reps.size() - 1)))];
  return out;
}

MixedSample simulate_unconditional_mix(const EventArchive& archive,
                                       const Eigen::MatrixXd& observed_data,
                                       const Eigen::MatrixXd& observed_laplace_x,
                                       double v, double p_exc,
                                       std::size_t n_total, Rng& rng) {
  if (archive.scale != FieldScale::Data)
    throw input_error("simulate_unconditional_mix: archive must be on the data scale");
  if (!(p_exc >= 0.0 && p_exc <= 1.0))
    throw config_error("simulate_unconditional_mix: p_exc outside [0,1]");
  if (observed_data.rows() != observed_laplace_x.rows())
    throw input_error("simulate_unconditional_mix: data/laplace row mismatch");

  // Observed fields whose Laplace-scale maximum stays below v.
  std::vector<Eigen::Index> body_pool;
  for (Eigen::Index t = 0; t < observed_laplace_x.rows(); ++t) {
    if (observed_laplace_x.row(t).maxCoeff() < v) body_pool.push_back(t);
  }
  if (body_pool.empty() && p_exc < 1.0)
    throw input_error(
        "simulate_unconditional_mix: no observed non-exceedance fields");
  if (archive.n_fields() == 0 && p_exc > 0.0)
    throw input_error("simulate_unconditional_mix: empty model archive");

  MixedSample out;
  out.fields.resize(static_cast<Eigen::Index>(n_total), observed_data.cols());
  out.from_model.resize(n_total);
  for (std::size_t i = 0; i < n_total; ++i) {
    const bool model = rng.uniform() < p_exc;
    out.from_model[i] = model ? 1 : 0;
    if (model) {
      const auto r = static_cast<Eigen::Index>(rng.uniform_int(
          static_cast<std::uint64_t>(archive.n_fields())));
      out.fields.row(static_cast<Eigen::Index>(i)) = archive.fields.row(r);
    } else {
      const auto r = body_pool[static_cast<std::size_t>(
          rng.uniform_int(body_pool.size()))];
      out.fields.row(static_cast<Eigen::Index>(i)) = observed_data.row(r);
    }
  }
  return out;
}

void save_archive(const EventArchive& archive, const std::string& dir,
                  Eigen::Index chunk_rows) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "scex-events-v1";
  manifest["scale"] = archive.scale == FieldScale::Data ? "data" : "laplace";
  manifest["v"] = archive.v;
  manifest["n_fields"] = archive.fields.rows();
  manifest["n_sites"] = archive.fields.cols();
  manifest["chunk_rows"] = chunk_rows;

  json chunks = json::array();
  int chunk_id = 0;
  for (Eigen::Index start = 0; start < archive.fields.rows(); start += chunk_rows) {
    const Eigen::Index rows = std::min(chunk_rows, archive.fields.rows() - start);
    char name[32];
    std::snprintf(name, sizeof name, "chunk_%04d.bin", chunk_id++);
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw input_error("save_archive: cannot write " + std::string(name));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < archive.fields.cols(); ++c) {
        const double val = archive.fields(start + r, c);
        out.write(reinterpret_cast<const char*>(&val), sizeof val);
      }
    json ch;
    ch["file"] = name;
    ch["rows"] = rows;
    chunks.push_back(std::move(ch));
  }
  manifest["chunks"] = std::move(chunks);

  json meta = json::object();
  json cond = json::array(), exc = json::array(), wt = json::array(), sd = json::array();
  for (const auto& m : archive.meta) {
    cond.push_back(m.cond_site);
    exc.push_back(m.exceedance);
    wt.push_back(m.weight);
    sd.push_back(m.seed);
  }
  meta["cond_site"] = std::move(cond);
  meta["exceedance"] = std::move(exc);
  meta["weight"] = std::move(wt);
  meta["seed"] = std::move(sd);
  manifest["meta"] = std::move(meta);
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

EventArchive load_archive(const std::string& dir) {
  const json manifest =
      json::parse(read_text_file((fs::path(dir) / "manifest.json").string()));
  if (manifest.value("format", "") != "scex-events-v1")
    throw input_error("load_archive: unrecognized manifest format");
  EventArchive out;
  out.scale = manifest.at("scale").get<std::string>() == "data" ? FieldScale::Data
                                                                : FieldScale::Laplace;
  out.v = manifest.at("v").get<double>();
  const Eigen::Index n = manifest.at("n_fields").get<Eigen::Index>();
  const Eigen::Index d = manifest.at("n_sites").get<Eigen::Index>();
  out.fields.resize(n, d);
  Eigen::Index row = 0;
  for (const auto& ch : manifest.at("chunks")) {
    const std::string file = ch.at("file").get<std::string>();
    const Eigen::Index rows = ch.at("rows").get<Eigen::Index>();
    std::ifstream in(fs::path(dir) / file, std::ios::binary);
    if (!in) throw input_error("load_archive: missing chunk " + file);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < d; ++c) {
        double val;
        in.read(reinterpret_cast<char*>(&val), sizeof val);
        if (!in) throw input_error("load_archive: truncated chunk " + file);
        out.fields(row + r, c) = val;
      }
    row += rows;
  }
  if (row != n) throw input_error("load_archive: row count mismatch");
  const auto& meta = manifest.at("meta");
  const auto& cond = meta.at("cond_site");
  const auto& exc = meta.at("exceedance");
  const auto& wt = meta.at("weight");
  const auto& sd = meta.at("seed");
  for (std::size_t i = 0; i < cond.size(); ++i)
    out.meta.push_back({cond[i].get<std::uint32_t>(), exc[i].get<double>(),
                        wt[i].get<double>(), sd[i].get<std::uint64_t>()});
  return out;
}

}  // namespace scex
