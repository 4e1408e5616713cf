// scex: spatial conditional extremes for precipitation aggregates.
//
// Subcommands cover the pipeline stages (fit-marginal, fit-dep, simulate,
// aggregate, buffer, diagnose), supporting tools (free-fit, bootstrap,
// synth), and the orchestrated `run`.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "scex/aggregate.hpp"
#include "scex/csv.hpp"
#include "scex/dependence.hpp"
#include "scex/diagnostics.hpp"
#include "scex/errors.hpp"
#include "scex/field.hpp"
#include "scex/grid.hpp"
#include "scex/inference.hpp"
#include "scex/marginal.hpp"
#include "scex/pipeline.hpp"
#include "scex/simulation.hpp"
#include "scex/specfun.hpp"
#include "scex/synthetic.hpp"

namespace {

using namespace scex;
using nlohmann::json;

std::size_t central_site(const SpatialGrid& grid) {
  double cx = 0.0, cy = 0.0;
  for (const auto& s : grid.sites()) {
    cx += s.pos.x;
    cy += s.pos.y;
  }
  cx /= static_cast<double>(grid.size());
  cy /= static_cast<double>(grid.size());
  std::size_t best_site = 0;
  double best = 1e300;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const double dd = std::hypot(grid.site(s).pos.x - cx, grid.site(s).pos.y - cy);
    if (dd < best) {
      best = dd;
      best_site = s;
    }
  }
  return best_site;
}

void parse_fix(const std::string& spec, DependenceFitConfig& cfg) {
  // "Delta=0,kappa_beta3=1,kappa_delta4=1"
  std::size_t pos = 0;
  while (pos < spec.size()) {
    const std::size_t comma = spec.find(',', pos);
    const std::string item = spec.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw config_error("--fix: expected name=value, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const double value = std::stod(item.substr(eq + 1));
    if (name == "Delta") {
      cfg.fix_delta_range = true;
      cfg.delta_range_value = value;
    } else if (name == "kappa_beta3") {
      cfg.fix_kappa_beta3 = true;
      cfg.kappa_beta3_value = value;
    } else if (name == "kappa_delta4") {
      cfg.fix_kappa_delta4 = true;
      cfg.kappa_delta4_value = value;
    } else {
      throw config_error("--fix: unknown parameter '" + name + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
}

std::vector<double> parse_doubles(const std::string& spec) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    const auto comma = spec.find(',', pos);
    out.push_back(std::stod(spec.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void write_chi_rows(const ChiEstimate& chi, const std::string& source,
                    std::vector<std::vector<std::string>>& rows) {
  for (std::size_t b = 0; b < chi.bin_left.size(); ++b)
    rows.push_back({source, format_double(chi.q), format_double(chi.bin_left[b]),
                    format_double(chi.chi[b]), format_double(chi.std_error[b]),
                    std::to_string(chi.n_cond[b]), chi.defined[b] ? "1" : "0"});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial conditional extremes for precipitation aggregates"};
  app.require_subcommand(1);

  // ----- fit-marginal -----
  auto* fit_marg =
      app.add_subcommand("fit-marginal", "fit the three-part marginal model");
  std::string fm_data, fm_grid, fm_out = "marginal.json";
  double fm_cell = 5.0;
  MarginalFitConfig fm_cfg;
  fit_marg->add_option("--data", fm_data, "site-by-time CSV")->required();
  fit_marg->add_option("--grid", fm_grid, "grid CSV")->required();
  fit_marg->add_option("--cell-size", fm_cell, "grid cell size, km");
  fit_marg->add_option("--lambda", fm_cfg.lambda, "tail fraction");
  fit_marg->add_option("--dry-threshold", fm_cfg.dry_threshold,
                       "zeroing threshold, mm/hr");
  fit_marg->add_option("--knots", fm_cfg.knots, "spline knots");
  fit_marg->add_option("--out", fm_out, "output model JSON");
  fit_marg->callback([&] {
    const auto grid = load_grid_csv(fm_grid, fm_cell);
    const auto data = load_field_csv(fm_data).aligned_to(grid);
    fit_marginal(data.values, grid, fm_cfg).save(fm_out);
    std::printf("wrote %s (%zu sites)\n", fm_out.c_str(), grid.size());
  });

  // ----- fit-dep -----
  auto* fit_dep = app.add_subcommand(
      "fit-dep", "fit the censored triplewise dependence model");
  std::string fd_data, fd_grid, fd_marginal, fd_out = "psi.json";
  std::string fd_fix = "Delta=0,kappa_beta3=1,kappa_delta4=1";
  std::string fd_variant = "ai";
  double fd_cell = 5.0;
  DependenceFitConfig fd_cfg;
  fit_dep->add_option("--data", fd_data)->required();
  fit_dep->add_option("--grid", fd_grid)->required();
  fit_dep->add_option("--marginal", fd_marginal)->required();
  fit_dep->add_option("--cell-size", fd_cell);
  fit_dep->add_option("--u-quantile", fd_cfg.q_u, "Laplace threshold quantile");
  fit_dep->add_option("--hmax", fd_cfg.h_max, "triple distance cap, km");
  fit_dep->add_option("--triples", fd_cfg.d_s, "number of sampled triples");
  fit_dep->add_option("--variant", fd_variant, "ai|ad");
  fit_dep->add_option("--fix", fd_fix, "fixed components, name=value list");
  fit_dep->add_option("--seed", fd_cfg.seed);
  fit_dep->add_option("--multi-starts", fd_cfg.multi_starts);
  fit_dep->add_option("--out", fd_out);
  fit_dep->callback([&] {
    const auto grid = load_grid_csv(fd_grid, fd_cell);
    const auto data = load_field_csv(fd_data).aligned_to(grid);
    const auto marginal = MarginalModel::load(fd_marginal);
    fd_cfg.variant = variant_from_string(fd_variant);
    parse_fix(fd_fix, fd_cfg);
    const auto lap = marginal.to_laplace(data.values);
    const FitResult fit = fit_dependence(lap, grid, fd_cfg);
    fit.psi.save(fd_out);
    std::printf("wrote %s  nll=%.4f evals=%d elapsed=%.1fs converged=%d\n",
                fd_out.c_str(), fit.nll, fit.evaluations, fit.elapsed_seconds,
                fit.converged ? 1 : 0);
  });

  // ----- free-fit -----
  auto* free_fit = app.add_subcommand(
      "free-fit", "free pairwise estimates at a conditioning site");
  std::string ff_data, ff_grid, ff_marginal, ff_site, ff_out = "free.csv";
  std::string ff_variant = "ai", ff_psi;
  double ff_cell = 5.0;
  FreePairwiseConfig ff_cfg;
  free_fit->add_option("--data", ff_data)->required();
  free_fit->add_option("--grid", ff_grid)->required();
  free_fit->add_option("--marginal", ff_marginal)->required();
  free_fit->add_option("--cell-size", ff_cell);
  free_fit->add_option("--cond-site", ff_site, "conditioning site id")->required();
  free_fit->add_option("--u-quantile", ff_cfg.q_u);
  free_fit->add_option("--min-exceedances", ff_cfg.min_exceedances);
  free_fit->add_option("--variant", ff_variant, "ai|ad");
  free_fit->add_option("--psi", ff_psi, "use this fit's anisotropy for distances");
  free_fit->add_option("--out", ff_out);
  free_fit->callback([&] {
    const auto grid = load_grid_csv(ff_grid, ff_cell);
    const auto data = load_field_csv(ff_data).aligned_to(grid);
    const auto marginal = MarginalModel::load(ff_marginal);
    ff_cfg.variant = variant_from_string(ff_variant);
    AnisotropyParams aniso;
    if (!ff_psi.empty()) aniso = DependenceParams::load(ff_psi).aniso;
    const auto lap = marginal.to_laplace(data.values);
    const auto rows =
        fit_free_pairwise(lap, grid, grid.index_of(ff_site), aniso, ff_cfg);
    std::vector<std::vector<std::string>> csv;
    for (const auto& r : rows)
      csv.push_back({r.site_id, format_double(r.h), format_double(r.alpha),
                     format_double(r.beta), format_double(r.mu),
                     format_double(r.sigma), format_double(r.delta)});
    write_csv(ff_out, {"site", "h", "alpha", "beta", "mu", "sigma", "delta"}, csv);
    std::printf("wrote %s (%zu sites)\n", ff_out.c_str(), rows.size());
  });

  // ----- bootstrap -----
  auto* boot =
      app.add_subcommand("bootstrap", "parametric-bootstrap recovery study");
  std::string bs_psi, bs_grid, bs_marginal, bs_out = "bootstrap.csv", bs_site;
  double bs_cell = 5.0;
  BootstrapConfig bs_cfg;
  boot->add_option("--psi", bs_psi, "generating parameters JSON")->required();
  boot->add_option("--grid", bs_grid)->required();
  boot->add_option("--marginal", bs_marginal)->required();
  boot->add_option("--cell-size", bs_cell);
  boot->add_option("--cond-site", bs_site, "conditioning site id (default: centre)");
  boot->add_option("--reps", bs_cfg.reps);
  boot->add_option("--n-fields", bs_cfg.n_fields);
  boot->add_option("--triples", bs_cfg.d_s);
  boot->add_option("--hmax", bs_cfg.h_max);
  boot->add_option("--seed", bs_cfg.seed);
  boot->add_option("--checkpoint-dir", bs_cfg.checkpoint_dir);
  boot->add_option("--out", bs_out);
  boot->callback([&] {
    const auto grid = load_grid_csv(bs_grid, bs_cell);
    const auto marginal = MarginalModel::load(bs_marginal);
    const auto psi = DependenceParams::load(bs_psi);
    const std::size_t cond =
        bs_site.empty() ? central_site(grid) : grid.index_of(bs_site);
    const auto summary = parametric_bootstrap(psi, marginal, grid, cond, bs_cfg);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < summary.names.size(); ++c)
      rows.push_back({summary.names[c], format_double(summary.truth[c]),
                      format_double(summary.median_rel_error[c]),
                      format_double(summary.lo_rel_error[c]),
                      format_double(summary.hi_rel_error[c])});
    write_csv(bs_out,
              {"param", "truth", "median_rel_err", "lo_rel_err", "hi_rel_err"},
              rows);
    std::printf("wrote %s (%zu reps ok, %d failed)\n", bs_out.c_str(),
                summary.rel_errors.size(), summary.failed_reps);
  });

  // ----- simulate -----
  auto* sim = app.add_subcommand("simulate", "simulate extreme event fields");
  std::string sm_psi, sm_grid, sm_marginal, sm_out = "events", sm_agg_regions;
  double sm_cell = 5.0;
  SimulateConfig sm_cfg;
  sim->add_option("--psi", sm_psi)->required();
  sim->add_option("--marginal", sm_marginal)->required();
  sim->add_option("--grid", sm_grid)->required();
  sim->add_option("--cell-size", sm_cell);
  sim->add_option("--n", sm_cfg.n);
  sim->add_option("--v-quantile", sm_cfg.v_quantile);
  sim->add_option("--oversample", sm_cfg.oversample);
  sim->add_option("--seed", sm_cfg.seed);
  sim->add_option("--out", sm_out, "events directory");
  sim->add_option("--aggregate-only", sm_agg_regions,
                  "regions JSON: stream aggregates, do not archive fields");
  sim->callback([&] {
    const auto grid = load_grid_csv(sm_grid, sm_cell);
    const auto marginal = MarginalModel::load(sm_marginal);
    const auto psi = DependenceParams::load(sm_psi);
    if (sm_agg_regions.empty()) {
      const auto archive = simulate_events(psi, marginal, grid, sm_cfg);
      save_archive(archive, sm_out);
      std::printf("wrote %s (%lld fields)\n", sm_out.c_str(),
                  static_cast<long long>(archive.n_fields()));
    } else {
      const auto regions = load_regions_json(sm_agg_regions, grid);
      std::vector<std::vector<std::string>> rows;
      std::size_t i = 0;
      simulate_events_streaming(
          psi, marginal, grid, sm_cfg,
          [&](const Eigen::VectorXd& field, const EventMeta& meta) {
            for (const auto& region : regions) {
              const auto v = aggregate_field(field, region, grid.cell_area());
              rows.push_back({std::to_string(i), region.name,
                              format_double(v.total), format_double(v.mean),
                              std::to_string(meta.cond_site)});
            }
            ++i;
          });
      std::filesystem::create_directories(sm_out);
      write_csv((std::filesystem::path(sm_out) / "aggregates.csv").string(),
                {"field", "region", "R", "R_bar", "cond_site"}, rows);
      std::printf("wrote %s/aggregates.csv (%zu fields)\n", sm_out.c_str(), i);
    }
  });

  // ----- aggregate -----
  auto* agg = app.add_subcommand(
      "aggregate", "aggregate events and estimate return levels");
  std::string ag_events, ag_regions, ag_out = "curves.csv", ag_grid, ag_data,
              ag_marginal, ag_method = "i";
  double ag_cell = 5.0, ag_tau = 0.0;
  bool ag_allow_edge = false;
  ReturnLevelConfig ag_cfg;
  agg->add_option("--events", ag_events, "events directory (method i)");
  agg->add_option("--regions", ag_regions)->required();
  agg->add_option("--grid", ag_grid)->required();
  agg->add_option("--cell-size", ag_cell);
  agg->add_option("--data", ag_data, "observed data CSV (mixture and method ii)");
  agg->add_option("--marginal", ag_marginal, "marginal JSON (for the mixture)");
  agg->add_option("--method", ag_method, "i|ii");
  agg->add_option("--tail-q", ag_cfg.tail_q);
  agg->add_option("--obs-per-year", ag_cfg.obs_per_year);
  agg->add_option("--reps", ag_cfg.bootstrap_reps);
  agg->add_option("--seed", ag_cfg.seed);
  agg->add_option("--tau", ag_tau, "buffer width for region checks, km");
  agg->add_flag("--allow-edge", ag_allow_edge, "skip buffer-zone enforcement");
  agg->add_option("--out", ag_out);
  agg->callback([&] {
    const auto grid = load_grid_csv(ag_grid, ag_cell);
    const auto regions = load_regions_json(ag_regions, grid);
    if (!ag_allow_edge && ag_tau > 0.0) {
      for (const auto& r : regions)
        if (region_boundary_clearance(r, grid) < ag_tau)
          throw config_error("region '" + r.name +
                             "' violates the buffer zone; use --allow-edge");
    }
    const ReturnLevelMethod method = return_level_method_from_string(ag_method);
    std::vector<std::vector<std::string>> rows;
    auto emit_curve = [&](const AggregateSample& sample) {
      ReturnLevelConfig rc = ag_cfg;
      rc.method = method;
      const auto curve = return_level_curve(sample, rc);
      for (std::size_t i = 0; i < curve.return_periods.size(); ++i)
        rows.push_back({sample.region, ag_method,
                        format_double(curve.return_periods[i]),
                        format_double(curve.levels[i]), format_double(curve.lo[i]),
                        format_double(curve.hi[i])});
    };
    if (method == ReturnLevelMethod::DirectGpd) {
      if (ag_data.empty())
        throw config_error("aggregate --method ii requires --data");
      const auto data = load_field_csv(ag_data).aligned_to(grid);
      for (const auto& region : regions)
        emit_curve(aggregate_fields(data.values, region, grid.cell_area(), "data"));
    } else {
      if (ag_events.empty())
        throw config_error("aggregate --method i requires --events");
      const auto archive = load_archive(ag_events);
      Eigen::MatrixXd fields = archive.fields;
      if (!ag_data.empty() && !ag_marginal.empty()) {
        const auto data = load_field_csv(ag_data).aligned_to(grid);
        const auto marginal = MarginalModel::load(ag_marginal);
        const auto lap = marginal.to_laplace(data.values);
        const auto p_exc = exceedance_probability(lap, archive.v);
        Rng rng(derive_seed(ag_cfg.seed, "cli-mixture"));
        fields = simulate_unconditional_mix(
                     archive, data.values, lap.x, archive.v, p_exc.estimate,
                     static_cast<std::size_t>(archive.n_fields()), rng)
                     .fields;
      }
      for (const auto& region : regions)
        emit_curve(aggregate_fields(fields, region, grid.cell_area(), "model"));
    }
    write_csv(ag_out, {"region", "method", "T_years", "level", "lo", "hi"}, rows);
    std::printf("wrote %s\n", ag_out.c_str());
  });

  // ----- buffer -----
  auto* buf = app.add_subcommand("buffer", "select the edge-effect buffer width");
  std::string bf_psi, bf_marginal, bf_grid, bf_out = "buffer.json";
  double bf_cell = 5.0;
  BufferConfig bf_cfg;
  buf->add_option("--psi", bf_psi)->required();
  buf->add_option("--marginal", bf_marginal)->required();
  buf->add_option("--grid", bf_grid)->required();
  buf->add_option("--cell-size", bf_cell);
  buf->add_option("--gamma", bf_cfg.gamma);
  buf->add_option("--q", bf_cfg.q, "conditioning quantile (overrides --q-years)");
  buf->add_option("--q-years", bf_cfg.q_years);
  buf->add_option("--obs-per-year", bf_cfg.obs_per_year);
  buf->add_option("--n-sim", bf_cfg.n_sim);
  buf->add_option("--seed", bf_cfg.seed);
  buf->add_option("--out", bf_out);
  buf->callback([&] {
    const auto grid = load_grid_csv(bf_grid, bf_cell);
    const auto marginal = MarginalModel::load(bf_marginal);
    const auto psi = DependenceParams::load(bf_psi);
    const auto res = select_buffer(psi, marginal, grid, bf_cfg);
    json j{{"tau", res.tau}, {"q", res.q}, {"gamma", bf_cfg.gamma}};
    json bins = json::array();
    for (std::size_t b = 0; b < res.bin_left.size(); ++b)
      bins.push_back({{"h", res.bin_left[b]},
                      {"chi", res.chi_raw[b]},
                      {"chi_fit", res.chi_fit[b]},
                      {"n", res.bin_count[b]}});
    j["bins"] = std::move(bins);
    write_text_file(bf_out, j.dump(2) + "\n");
    std::printf("tau = %.1f km (q = %.6f)\n", res.tau, res.q);
  });

  // ----- diagnose -----
  auto* diag = app.add_subcommand("diagnose", "extremal dependence diagnostics");
  diag->require_subcommand(1);

  auto* dchi = diag->add_subcommand("chi", "distance-binned chi_q");
  std::string dc_events, dc_grid, dc_out = "chi.csv", dc_psi;
  double dc_cell = 5.0, dc_q = 0.99;
  dchi->add_option("--events", dc_events)->required();
  dchi->add_option("--grid", dc_grid)->required();
  dchi->add_option("--cell-size", dc_cell);
  dchi->add_option("--q", dc_q);
  dchi->add_option("--psi", dc_psi, "anisotropy for distance bins");
  dchi->add_option("--out", dc_out);
  dchi->callback([&] {
    const auto grid = load_grid_csv(dc_grid, dc_cell);
    const auto archive = load_archive(dc_events);
    AnisotropyParams aniso;
    if (!dc_psi.empty()) aniso = DependenceParams::load(dc_psi).aniso;
    const auto chi = chi_q_binned(archive.fields, grid, aniso, dc_q);
    std::vector<std::vector<std::string>> rows;
    write_chi_rows(chi, "model", rows);
    write_csv(dc_out, {"source", "q", "h_km", "chi", "se", "n_cond", "defined"},
              rows);
    std::printf("wrote %s\n", dc_out.c_str());
  });

  auto* dchi0 =
      diag->add_subcommand("chi0", "probability of no rain under extremes");
  std::string d0_events, d0_data, d0_grid, d0_out = "chi0.csv",
              d0_qs = "0.9,0.95,0.99", d0_site;
  double d0_cell = 5.0;
  dchi0->add_option("--events", d0_events, "model archive (optional)");
  dchi0->add_option("--data", d0_data, "observed data CSV (optional)");
  dchi0->add_option("--grid", d0_grid)->required();
  dchi0->add_option("--cell-size", d0_cell);
  dchi0->add_option("--q", d0_qs, "comma-separated quantiles");
  dchi0->add_option("--cond-site", d0_site, "conditioning site id (default: centre)");
  dchi0->add_option("--out", d0_out);
  dchi0->callback([&] {
    const auto grid = load_grid_csv(d0_grid, d0_cell);
    if (d0_events.empty() && d0_data.empty())
      throw config_error("diagnose chi0: need --events and/or --data");
    const std::size_t cond =
        d0_site.empty() ? central_site(grid) : grid.index_of(d0_site);
    std::vector<std::vector<std::string>> rows;
    auto emit = [&](const Eigen::MatrixXd& fields, const std::string& source) {
      for (const double q : parse_doubles(d0_qs)) {
        const auto c0 =
            chi_zero(fields, grid, AnisotropyParams::isotropic(), cond, q);
        write_chi_rows(c0, source, rows);
      }
    };
    if (!d0_events.empty()) emit(load_archive(d0_events).fields, "model");
    if (!d0_data.empty())
      emit(load_field_csv(d0_data).aligned_to(grid).values, "empirical");
    write_csv(d0_out, {"source", "q", "h_km", "chi0", "se", "n_cond", "defined"},
              rows);
    std::printf("wrote %s\n", d0_out.c_str());
  });

  auto* dfit =
      diag->add_subcommand("depfit", "fitted dependence functions vs free fits");
  std::string df_psi_ai, df_psi_ad, df_free, df_out = "depfit.csv";
  double df_hmax = 60.0;
  dfit->add_option("--psi", df_psi_ai, "AI-model parameters JSON");
  dfit->add_option("--psi-ad", df_psi_ad, "AD-model parameters JSON");
  dfit->add_option("--free", df_free, "free-fit CSV from free-fit");
  dfit->add_option("--hmax", df_hmax, "largest distance in the table");
  dfit->add_option("--out", df_out);
  dfit->callback([&] {
    std::optional<DependenceParams> ai, ad;
    if (!df_psi_ai.empty()) ai = DependenceParams::load(df_psi_ai);
    if (!df_psi_ad.empty()) ad = DependenceParams::load(df_psi_ad);
    std::vector<FreeFitRow> free_rows;
    if (!df_free.empty()) {
      const auto t = read_csv(df_free);
      for (const auto& row : t.rows) {
        FreeFitRow r;
        r.site_id = row[t.require_column("site")];
        r.h = std::stod(row[t.require_column("h")]);
        r.alpha = std::stod(row[t.require_column("alpha")]);
        r.beta = std::stod(row[t.require_column("beta")]);
        r.mu = std::stod(row[t.require_column("mu")]);
        r.sigma = std::stod(row[t.require_column("sigma")]);
        r.delta = std::stod(row[t.require_column("delta")]);
        free_rows.push_back(r);
      }
    }
    std::vector<double> h_grid;
    for (double h = 0.0; h <= df_hmax; h += 1.0) h_grid.push_back(h);
    const auto report = dependence_fit_report(ai, ad, free_rows, h_grid);
    std::vector<std::vector<std::string>> rows;
    auto emit = [&](const std::vector<DependenceCurveRow>& curve,
                    const std::string& tag) {
      for (const auto& r : curve)
        rows.push_back({tag, format_double(r.h), format_double(r.alpha),
                        format_double(r.beta), format_double(r.mu),
                        format_double(r.sigma), format_double(r.delta),
                        format_double(r.rho)});
    };
    if (!report.ai.empty()) emit(report.ai, "ai");
    if (!report.ad.empty()) emit(report.ad, "ad");
    for (const auto& r : report.free_fits)
      rows.push_back({"free", format_double(r.h), format_double(r.alpha),
                      format_double(r.beta), format_double(r.mu),
                      format_double(r.sigma), format_double(r.delta), ""});
    write_csv(df_out,
              {"source", "h_km", "alpha", "beta", "mu", "sigma", "delta", "rho"},
              rows);
    std::printf("wrote %s\n", df_out.c_str());
  });

  // ----- synth -----
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string sy_out_data = "data.csv", sy_out_grid = "grid.csv", sy_psi,
              sy_out_marginal;
  int sy_nx = 15, sy_ny = 15;
  double sy_cell = 5.0;
  SyntheticMarginalSpec sy_marg;
  SyntheticDataConfig sy_cfg;
  synth->add_option("--nx", sy_nx);
  synth->add_option("--ny", sy_ny);
  synth->add_option("--cell-size", sy_cell);
  synth->add_option("--n-time", sy_cfg.n_time);
  synth->add_option("--p-exc", sy_cfg.p_exc);
  synth->add_option("--p-zero", sy_marg.p_zero);
  synth->add_option("--psi", sy_psi, "dependence JSON (default: reference values)");
  synth->add_option("--seed", sy_cfg.seed);
  synth->add_option("--out-data", sy_out_data);
  synth->add_option("--out-grid", sy_out_grid);
  synth->add_option("--out-marginal", sy_out_marginal, "write the true marginal too");
  synth->callback([&] {
    const auto grid = make_regular_grid(sy_nx, sy_ny, sy_cell);
    const auto psi = sy_psi.empty() ? reference_dependence_params()
                                    : DependenceParams::load(sy_psi);
    const auto marginal = make_synthetic_marginal(grid, sy_marg);
    const auto data = generate_synthetic(grid, psi, marginal, sy_cfg);
    save_grid_csv(grid, sy_out_grid);
    FieldData fd;
    fd.site_ids.reserve(grid.size());
    for (const auto& s : grid.sites()) fd.site_ids.push_back(s.id);
    fd.values = data;
    save_field_csv(fd, sy_out_data);
    if (!sy_out_marginal.empty()) marginal.save(sy_out_marginal);
    std::printf("wrote %s, %s (%dx%d grid, %d fields)\n", sy_out_data.c_str(),
                sy_out_grid.c_str(), sy_nx, sy_ny, sy_cfg.n_time);
  });

  // ----- run -----
  auto* run = app.add_subcommand("run", "run the full pipeline from a config file");
  std::string run_config;
  run->add_option("--config", run_config, "pipeline JSON config")->required();
  run->callback([&] {
    const auto cfg = PipelineConfig::load(run_config);
    const auto res = run_pipeline(cfg);
    for (const auto& st : res.stages)
      std::printf("%-14s %s (%.1fs)\n", st.name.c_str(),
                  st.cached ? "cached" : "ran", st.seconds);
    std::printf("manifest: %s\n", res.manifest_path.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const scex::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const scex::input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const scex::fit_error& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 3;
  } catch (const scex::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
