#include "scex/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <functional>

#include <nlohmann/json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "scex/aggregate.hpp"
#include "scex/csv.hpp"
#include "scex/dependence.hpp"
#include "scex/diagnostics.hpp"
#include "scex/errors.hpp"
#include "scex/field.hpp"
#include "scex/grid.hpp"
#include "scex/inference.hpp"
#include "scex/marginal.hpp"
#include "scex/simulation.hpp"
#include "scex/specfun.hpp"

namespace scex {

using nlohmann::json;
namespace fs = std::filesystem;

PipelineConfig PipelineConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw config_error(path + ": invalid JSON: " + e.what());
  }
  PipelineConfig c;
  const auto& paths = j.at("paths");
  c.data_path = paths.at("data").get<std::string>();
  c.grid_path = paths.at("grid").get<std::string>();
  c.regions_path = paths.at("regions").get<std::string>();
  c.output_dir = paths.at("output").get<std::string>();
  c.cell_size_km = j.value("cell_size_km", c.cell_size_km);

  if (j.contains("marginal")) {
    const auto& m = j.at("marginal");
    c.lambda = m.value("lambda", c.lambda);
    c.dry_threshold = m.value("dry_threshold", c.dry_threshold);
    c.knots = m.value("knots", c.knots);
  }
  if (j.contains("dependence")) {
    const auto& d = j.at("dependence");
    c.q_u = d.value("q_u", c.q_u);
    c.d_s = d.value("d_s", c.d_s);
    c.h_max = d.value("h_max", c.h_max);
    c.variant = d.value("variant", c.variant);
    c.multi_starts = d.value("multi_starts", c.multi_starts);
    if (d.contains("fix")) {
      const auto& f = d.at("fix");
      c.fix_delta_range = f.value("Delta", c.fix_delta_range);
      c.fix_kappa_beta3 = f.value("kappa_beta3", c.fix_kappa_beta3);
      c.fix_kappa_delta4 = f.value("kappa_delta4", c.fix_kappa_delta4);
    }
  }
  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    c.n_sim_fields = s.value("n", c.n_sim_fields);
    c.oversample = s.value("oversample", c.oversample);
    c.v_quantile = s.value("v_quantile", c.v_quantile);
  }
  if (j.contains("aggregate")) {
    const auto& a = j.at("aggregate");
    c.gamma = a.value("gamma", c.gamma);
    c.buffer_q_years = a.value("buffer_q_years", c.buffer_q_years);
    c.buffer_n_sim = a.value("buffer_n_sim", c.buffer_n_sim);
    c.tail_q = a.value("tail_q", c.tail_q);
    c.obs_per_year = a.value("obs_per_year", c.obs_per_year);
    c.bootstrap_reps = a.value("bootstrap_reps", c.bootstrap_reps);
    c.expected_block_hours = a.value("block_hours", c.expected_block_hours);
    c.allow_edge = a.value("allow_edge", c.allow_edge);
  }
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  for (const auto& [label, p] :
       {std::pair<const char*, const std::string&>{"data", data_path},
        {"grid", grid_path},
        {"regions", regions_path}}) {
    if (!fs::exists(p))
      throw config_error(std::string("pipeline config: ") + label +
                         " file does not exist: " + p);
  }
  if (output_dir.empty()) throw config_error("pipeline config: empty output dir");
  if (!(cell_size_km > 0.0)) throw config_error("pipeline config: cell_size_km <= 0");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw config_error("pipeline config: lambda outside (0,1)");
  if (!(dry_threshold >= 0.0))
    throw config_error("pipeline config: negative dry threshold");
  if (knots < 4) throw config_error("pipeline config: knots must be >= 4");
  if (!(q_u > 0.5 && q_u < 1.0))
    throw config_error("pipeline config: q_u outside (0.5,1)");
  if (d_s < 1) throw config_error("pipeline config: d_s must be >= 1");
  if (!(h_max > 0.0)) throw config_error("pipeline config: h_max <= 0");
  variant_from_string(variant);
  if (!(fix_delta_range >= 0.0))
    throw config_error("pipeline config: Delta must be >= 0");
  if (!(fix_kappa_beta3 >= 0.0 && fix_kappa_beta3 <= 1.0))
    throw config_error("pipeline config: kappa_beta3 outside [0,1]");
  if (!(fix_kappa_delta4 <= 1.0))
    throw config_error("pipeline config: kappa_delta4 must be <= 1");
  if (multi_starts < 1) throw config_error("pipeline config: multi_starts < 1");
  if (n_sim_fields < 1) throw config_error("pipeline config: simulation n < 1");
  if (!(oversample >= 1.0)) throw config_error("pipeline config: oversample < 1");
  if (!(v_quantile > 0.5 && v_quantile < 1.0))
    throw config_error("pipeline config: v_quantile outside (0.5,1)");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw config_error("pipeline config: gamma outside (0,1)");
  if (!(buffer_q_years > 0.0)) throw config_error("pipeline config: buffer_q_years <= 0");
  if (buffer_n_sim < 100) throw config_error("pipeline config: buffer_n_sim < 100");
  if (!(tail_q > 0.0 && tail_q < 1.0))
    throw config_error("pipeline config: tail_q outside (0,1)");
  if (!(obs_per_year > 0.0)) throw config_error("pipeline config: obs_per_year <= 0");
  if (bootstrap_reps < 10) throw config_error("pipeline config: bootstrap_reps < 10");
  if (!(expected_block_hours >= 1.0))
    throw config_error("pipeline config: block_hours < 1");
  if (threads < 0) throw config_error("pipeline config: negative threads");
}

namespace {

std::string hash_of_string(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(s.data(), s.size())));
  return buf;
}

class Manifest {
 public:
  explicit Manifest(const std::string& path) : path_(path) {
    if (fs::exists(path)) {
      try {
        doc_ = json::parse(read_text_file(path));
      } catch (...) {
        doc_ = json::object();
      }
    } else {
      doc_ = json::object();
    }
    if (!doc_.contains("stages")) doc_["stages"] = json::object();
  }

  bool stage_is_current(const std::string& name, const std::string& inputs_hash,
                        const std::vector<std::string>& outputs) const {
    const auto& stages = doc_.at("stages");
    if (!stages.contains(name)) return false;
    const auto& st = stages.at(name);
    if (st.value("inputs_hash", "") != inputs_hash) return false;
    if (!st.value("completed", false)) return false;
    for (const auto& out : outputs) {
      if (!fs::exists(out)) return false;
      const auto& recorded = st.at("outputs");
      if (!recorded.contains(out)) return false;
      if (fs::is_directory(out)) continue;  // directories tracked by marker file
      if (recorded.at(out).get<std::string>() != file_hash(out)) return false;
    }
    return true;
  }

  void record_stage(const std::string& name, const std::string& inputs_hash,
                    const std::vector<std::string>& outputs, std::uint64_t seed) {
    json st;
    st["inputs_hash"] = inputs_hash;
    st["seed"] = seed;
    st["completed"] = true;
    json outs = json::object();
    for (const auto& out : outputs)
      outs[out] = fs::is_directory(out) ? std::string("dir") : file_hash(out);
    st["outputs"] = std::move(outs);
    doc_["stages"][name] = std::move(st);
    write_text_file(path_, doc_.dump(2) + "\n");
  }

 private:
  std::string path_;
  json doc_;
};

void write_chi_csv(const ChiEstimate& chi, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t b = 0; b < chi.bin_left.size(); ++b)
    rows.push_back({format_double(chi.bin_left[b]), format_double(chi.chi[b]),
                    format_double(chi.std_error[b]), std::to_string(chi.n_cond[b]),
                    chi.defined[b] ? "1" : "0"});
  write_csv(path, {"h_km", "chi", "se", "n_cond", "defined"}, rows);
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
#ifdef _OPENMP
  if (config.threads > 0) omp_set_num_threads(config.threads);
#endif
  fs::create_directories(config.output_dir);
  const auto out = [&](const std::string& name) {
    return (fs::path(config.output_dir) / name).string();
  };
  Manifest manifest(out("manifest.json"));
  PipelineResult result;
  result.manifest_path = out("manifest.json");

  const std::string data_hash = file_hash(config.data_path);
  const std::string grid_hash = file_hash(config.grid_path);
  const std::string regions_hash = file_hash(config.regions_path);

  auto run_stage = [&](const std::string& name, const std::string& inputs_hash,
                       const std::vector<std::string>& outputs, std::uint64_t seed,
                       const std::function<void()>& body) {
    StageStatus status;
    status.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    if (manifest.stage_is_current(name, inputs_hash, outputs)) {
      status.cached = true;
    } else {
      try {
        body();
      } catch (const std::exception& e) {
        throw fit_error("pipeline stage '" + name + "' failed: " + e.what());
      }
      manifest.record_stage(name, inputs_hash, outputs, seed);
    }
    status.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.stages.push_back(status);
  };

  // Shared state loaded lazily between stages.
  const SpatialGrid grid = load_grid_csv(config.grid_path, config.cell_size_km);
  const FieldData raw = load_field_csv(config.data_path).aligned_to(grid);
  const auto regions = load_regions_json(config.regions_path, grid);

  // Stage 1: marginal fit.
  const std::string marginal_out = out("marginal.json");
  {
    json key{{"data", data_hash},
             {"grid", grid_hash},
             {"lambda", config.lambda},
             {"dry_threshold", config.dry_threshold},
             {"knots", config.knots}};
    run_stage("fit-marginal", hash_of_string(key.dump()), {marginal_out},
              config.seed, [&] {
                MarginalFitConfig mc;
                mc.lambda = config.lambda;
                mc.dry_threshold = config.dry_threshold;
                mc.knots = config.knots;
                fit_marginal(raw.values, grid, mc).save(marginal_out);
              });
  }
  const MarginalModel marginal = MarginalModel::load(marginal_out);

  // Stage 2: dependence fit.
  const std::string psi_out = out("psi.json");
  const std::uint64_t dep_seed = derive_seed(config.seed, "stage-fit-dep");
  {
    json key{{"marginal", file_hash(marginal_out)},
             {"data", data_hash},
             {"q_u", config.q_u},
             {"d_s", config.d_s},
             {"h_max", config.h_max},
             {"variant", config.variant},
             {"fix",
              {config.fix_delta_range, config.fix_kappa_beta3,
               config.fix_kappa_delta4}},
             {"multi_starts", config.multi_starts},
             {"seed", dep_seed}};
    run_stage("fit-dep", hash_of_string(key.dump()), {psi_out}, dep_seed, [&] {
      const LaplaceField lap = marginal.to_laplace(raw.values);
      DependenceFitConfig dc;
      dc.q_u = config.q_u;
      dc.d_s = config.d_s;
      dc.h_max = config.h_max;
      dc.variant = variant_from_string(config.variant);
      dc.delta_range_value = config.fix_delta_range;
      dc.kappa_beta3_value = config.fix_kappa_beta3;
      dc.kappa_delta4_value = config.fix_kappa_delta4;
      dc.multi_starts = config.multi_starts;
      dc.seed = dep_seed;
      const FitResult fit = fit_dependence(lap, grid, dc);
      fit.psi.save(psi_out);
    });
  }
  const DependenceParams psi = DependenceParams::load(psi_out);

  // Stage 3: buffer selection.
  const std::string buffer_out = out("buffer.json");
  const std::uint64_t buffer_seed = derive_seed(config.seed, "stage-buffer");
  {
    json key{{"psi", file_hash(psi_out)},
             {"marginal", file_hash(marginal_out)},
             {"gamma", config.gamma},
             {"q_years", config.buffer_q_years},
             {"n_sim", config.buffer_n_sim},
             {"obs_per_year", config.obs_per_year},
             {"seed", buffer_seed}};
    run_stage("buffer", hash_of_string(key.dump()), {buffer_out}, buffer_seed, [&] {
      BufferConfig bc;
      bc.gamma = config.gamma;
      bc.q_years = config.buffer_q_years;
      bc.obs_per_year = config.obs_per_year;
      bc.n_sim = config.buffer_n_sim;
      bc.seed = buffer_seed;
      const BufferResult br = select_buffer(psi, marginal, grid, bc);
      json j{{"tau", br.tau}, {"q", br.q}, {"gamma", config.gamma}};
      json bins = json::array();
      for (std::size_t b = 0; b < br.bin_left.size(); ++b)
        bins.push_back({{"h", br.bin_left[b]},
                        {"chi", br.chi_raw[b]},
                        {"chi_fit", br.chi_fit[b]},
                        {"n", br.bin_count[b]}});
      j["bins"] = std::move(bins);
      write_text_file(buffer_out, j.dump(2) + "\n");
    });
  }
  const double tau = json::parse(read_text_file(buffer_out)).at("tau").get<double>();

  // Buffer enforcement happens before simulation so a violating region
  // aborts the run while it is still cheap.
  if (!config.allow_edge) {
    for (const auto& region : regions) {
      const double clearance = region_boundary_clearance(region, grid);
      if (clearance < tau)
        throw config_error("pipeline: region '" + region.name +
                           "' lies within the buffer zone (clearance " +
                           format_double(clearance) + " km < tau " +
                           format_double(tau) + " km); pass allow_edge to override");
    }
  }

  // Stage 4: event simulation.
  const std::string events_dir = out("events");
  const std::uint64_t sim_seed = derive_seed(config.seed, "stage-simulate");
  {
    json key{{"psi", file_hash(psi_out)},
             {"marginal", file_hash(marginal_out)},
             {"n", config.n_sim_fields},
             {"oversample", config.oversample},
             {"v_quantile", config.v_quantile},
             {"seed", sim_seed}};
    run_stage("simulate", hash_of_string(key.dump()),
              {(fs::path(events_dir) / "manifest.json").string()}, sim_seed, [&] {
                SimulateConfig sc;
                sc.n = config.n_sim_fields;
                sc.oversample = config.oversample;
                sc.v_quantile = config.v_quantile;
                sc.seed = sim_seed;
                sc.scale = FieldScale::Data;
                const EventArchive archive =
                    simulate_events(psi, marginal, grid, sc);
                save_archive(archive, events_dir);
              });
  }

  // Stage 5: aggregation and return levels.
  const std::string curves_out = out("curves.csv");
  const std::string qq_out = out("qq.csv");
  const std::uint64_t agg_seed = derive_seed(config.seed, "stage-aggregate");
  {
    json key{{"events", file_hash((fs::path(events_dir) / "manifest.json").string())},
             {"regions", regions_hash},
             {"tail_q", config.tail_q},
             {"obs_per_year", config.obs_per_year},
             {"reps", config.bootstrap_reps},
             {"block", config.expected_block_hours},
             {"v_quantile", config.v_quantile},
             {"seed", agg_seed}};
    run_stage("aggregate", hash_of_string(key.dump()), {curves_out, qq_out},
              agg_seed, [&] {
        const EventArchive archive = load_archive(events_dir);
        const LaplaceField lap = marginal.to_laplace(raw.values);
        const double v = laplace_quantile(config.v_quantile);
        const ExceedanceEstimate p_exc = exceedance_probability(
            lap, v, config.expected_block_hours, 1000,
            derive_seed(agg_seed, "p-exc"));

        Rng mix_rng(derive_seed(agg_seed, "mixture"));
        const MixedSample mixed = simulate_unconditional_mix(
            archive, raw.values, lap.x, v, p_exc.estimate,
            static_cast<std::size_t>(archive.n_fields()), mix_rng);

        std::vector<std::vector<std::string>> curve_rows;
        std::vector<std::vector<std::string>> qq_rows;
        for (const auto& region : regions) {
          const AggregateSample model_sample =
              aggregate_fields(mixed.fields, region, grid.cell_area(), "model");
          const AggregateSample data_sample =
              aggregate_fields(raw.values, region, grid.cell_area(), "data");

          ReturnLevelConfig rc;
          rc.method = ReturnLevelMethod::SimulationSplice;
          rc.tail_q = config.tail_q;
          rc.obs_per_year = config.obs_per_year;
          rc.bootstrap_reps = config.bootstrap_reps;
          rc.seed = derive_seed(agg_seed, "curve-" + region.name);
          const ReturnLevelCurve curve = return_level_curve(model_sample, rc);
          for (std::size_t i = 0; i < curve.return_periods.size(); ++i)
            curve_rows.push_back({region.name, "i",
                                  format_double(curve.return_periods[i]),
                                  format_double(curve.levels[i]),
                                  format_double(curve.lo[i]),
                                  format_double(curve.hi[i])});

          QqConfig qc;
          qc.obs_per_year = config.obs_per_year;
          qc.bootstrap_reps = config.bootstrap_reps;
          qc.expected_block = config.expected_block_hours;
          qc.seed = derive_seed(agg_seed, "qq-" + region.name);
          const auto qq = aggregate_qq(model_sample.means, data_sample.means, qc);
          for (const auto& row : qq)
            qq_rows.push_back({region.name, format_double(row.prob),
                               format_double(row.model_q), format_double(row.data_q),
                               format_double(row.lo), format_double(row.hi)});
        }
        write_csv(curves_out, {"region", "method", "T_years", "level", "lo", "hi"},
                  curve_rows);
        write_csv(qq_out, {"region", "prob", "model_q", "data_q", "lo", "hi"},
                  qq_rows);
      });
  }

  // Stage 6: dependence diagnostics.
  const std::string chi_out = out("chi.csv");
  const std::string chi0_out = out("chi0.csv");
  const std::string depfit_out = out("depfit.csv");
  {
    json key{{"events", file_hash((fs::path(events_dir) / "manifest.json").string())},
             {"data", data_hash},
             {"psi", file_hash(psi_out)}};
    run_stage("diagnose", hash_of_string(key.dump()),
              {chi_out, chi0_out, depfit_out}, config.seed, [&] {
        const EventArchive archive = load_archive(events_dir);
        const ChiEstimate chi_model =
            chi_q_binned(archive.fields, grid, psi.aniso, 0.99, 1.0);
        write_chi_csv(chi_model, chi_out);

        // Central conditioning site for chi0.
        double cx = 0.0, cy = 0.0;
        for (const auto& s : grid.sites()) {
          cx += s.pos.x;
          cy += s.pos.y;
        }
        cx /= static_cast<double>(grid.size());
        cy /= static_cast<double>(grid.size());
        std::size_t centre = 0;
        double best = 1e300;
        for (std::size_t s = 0; s < grid.size(); ++s) {
          const double dd =
              std::hypot(grid.site(s).pos.x - cx, grid.site(s).pos.y - cy);
          if (dd < best) {
            best = dd;
            centre = s;
          }
        }
        std::vector<std::vector<std::string>> chi0_rows;
        for (const double q : {0.9, 0.95, 0.99}) {
          const ChiEstimate c0 =
              chi_zero(archive.fields, grid, psi.aniso, centre, q, 1.0);
          for (std::size_t b = 0; b < c0.bin_left.size(); ++b)
            chi0_rows.push_back({format_double(q), format_double(c0.bin_left[b]),
                                 format_double(c0.chi[b]),
                                 format_double(c0.std_error[b]),
                                 std::to_string(c0.n_cond[b])});
        }
        write_csv(chi0_out, {"q", "h_km", "chi0", "se", "n_cond"}, chi0_rows);

        std::vector<double> h_grid;
        for (double h = 0.0; h <= 60.0; h += 1.0) h_grid.push_back(h);
        const auto report =
            dependence_fit_report(psi, std::nullopt, {}, h_grid);
        std::vector<std::vector<std::string>> dep_rows;
        for (const auto& r : report.ai)
          dep_rows.push_back({format_double(r.h), format_double(r.alpha),
                              format_double(r.beta), format_double(r.mu),
                              format_double(r.sigma), format_double(r.delta),
                              format_double(r.rho)});
        write_csv(depfit_out, {"h_km", "alpha", "beta", "mu", "sigma", "delta", "rho"},
                  dep_rows);
      });
  }

  return result;
}

}  // namespace scex
