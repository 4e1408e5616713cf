#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "scex/csv.hpp"
#include "scex/errors.hpp"
#include "scex/field.hpp"
#include "scex/pipeline.hpp"
#include "scex/simulation.hpp"
#include "scex/specfun.hpp"
#include "scex/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace scex;
namespace fs = std::filesystem;

TEST_CASE("reference parameters equal the independent test transcription") {
  const auto lib = reference_dependence_params();
  const auto fixture = scex_test::table_s1();
  CHECK(lib.kappa_alpha1 == fixture.kappa_alpha1);
  CHECK(lib.kappa_beta1 == fixture.kappa_beta1);
  CHECK(lib.kappa_mu3 == fixture.kappa_mu3);
  CHECK(lib.kappa_sigma1 == fixture.kappa_sigma1);
  CHECK(lib.kappa_delta3 == fixture.kappa_delta3);
  CHECK(lib.kappa_rho1 == fixture.kappa_rho1);
  CHECK(lib.aniso.theta == fixture.aniso.theta);
  CHECK(lib.aniso.stretch == fixture.aniso.stretch);
}

TEST_CASE("synthetic marginal satisfies the model constraints") {
  auto grid = make_regular_grid(3, 3, 5.0);
  SyntheticMarginalSpec spec;
  const auto m = make_synthetic_marginal(grid, spec);
  CHECK(m.n_sites() == 9);
  // Continuity at the threshold by construction.
  CHECK(m.cdf(spec.threshold, 0) == doctest::Approx(1.0 - spec.lambda).epsilon(1e-9));
  CHECK(m.cdf(0.0, 0) == doctest::Approx(spec.p_zero));
  SyntheticMarginalSpec bad;
  bad.p_zero = 0.999;
  CHECK_THROWS_AS(make_synthetic_marginal(grid, bad), config_error);
}

TEST_CASE("generate_synthetic: p_exc = 0 never exceeds the conditioning level") {
  auto grid = make_regular_grid(5, 5, 5.0);
  const auto psi = reference_dependence_params();
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.6;
  const auto marginal = make_synthetic_marginal(grid, mspec);
  SyntheticDataConfig cfg;
  cfg.n_time = 500;
  cfg.p_exc = 0.0;
  cfg.seed = 21;
  const auto y = generate_synthetic(grid, psi, marginal, cfg);
  const auto lap = marginal.to_laplace(y);
  const double v = laplace_quantile(cfg.v_quantile);
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    CHECK(lap.x.row(t).maxCoeff() < v);
}

TEST_CASE("generate_synthetic: dry fraction matches the marginal's zero mass") {
  auto grid = make_regular_grid(5, 5, 5.0);
  const auto psi = reference_dependence_params();
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.7;
  const auto marginal = make_synthetic_marginal(grid, mspec);
  SyntheticDataConfig cfg;
  cfg.n_time = 1200;
  cfg.p_exc = 0.0;  // body-only, where the zero mass is exact
  cfg.seed = 22;
  const auto y = generate_synthetic(grid, psi, marginal, cfg);
  long dry = 0;
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index s = 0; s < y.cols(); ++s) dry += y(t, s) == 0.0 ? 1 : 0;
  const double n = static_cast<double>(y.size());
  const double frac = static_cast<double>(dry) / n;
  const double se = std::sqrt(0.7 * 0.3 / n);
  CHECK(std::fabs(frac - 0.7) < 3.0 * se);
}

TEST_CASE("generate_synthetic is deterministic and mixes events in") {
  auto grid = make_regular_grid(4, 4, 5.0);
  const auto psi = reference_dependence_params();
  const auto marginal = make_synthetic_marginal(grid, {});
  SyntheticDataConfig cfg;
  cfg.n_time = 300;
  cfg.p_exc = 0.25;
  cfg.seed = 23;
  const auto a = generate_synthetic(grid, psi, marginal, cfg);
  const auto b = generate_synthetic(grid, psi, marginal, cfg);
  CHECK(a == b);

  const auto lap = marginal.to_laplace(a);
  const double v = laplace_quantile(cfg.v_quantile);
  int exceed = 0;
  for (Eigen::Index t = 0; t < a.rows(); ++t)
    if (lap.x.row(t).maxCoeff() > v) ++exceed;
  const double se = std::sqrt(0.25 * 0.75 * cfg.n_time);
  CHECK(std::fabs(exceed - 0.25 * cfg.n_time) < 3.5 * se);
}

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Writes a complete desk-scale input set and pipeline config.
std::string write_fixture(const TempDir& dir, int nx = 8, int ny = 8,
                          int n_time = 700) {
  auto grid = make_regular_grid(nx, ny, 5.0);
  const auto psi = reference_dependence_params();
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.6;
  const auto marginal = make_synthetic_marginal(grid, mspec);
  SyntheticDataConfig cfg;
  cfg.n_time = n_time;
  cfg.p_exc = 0.15;
  cfg.v_quantile = 0.96;  // matches the pipeline's conditioning level
  cfg.seed = 77;
  const auto y = generate_synthetic(grid, psi, marginal, cfg);

  save_grid_csv(grid, (dir.path / "grid.csv").string());
  FieldData fd;
  for (const auto& s : grid.sites()) fd.site_ids.push_back(s.id);
  fd.values = y;
  save_field_csv(fd, (dir.path / "data.csv").string());

  // A small central region well inside the domain.
  const std::string mid_r = "r" + std::to_string(ny / 2);
  std::vector<std::string> ids{mid_r + "c" + std::to_string(nx / 2),
                               mid_r + "c" + std::to_string(nx / 2 - 1)};
  const std::vector<Region> regions{Region::from_site_ids("centre", ids, grid)};
  save_regions_json(regions, grid, (dir.path / "regions.json").string());

  nlohmann::json cfg_json{
      {"paths",
       {{"data", (dir.path / "data.csv").string()},
        {"grid", (dir.path / "grid.csv").string()},
        {"regions", (dir.path / "regions.json").string()},
        {"output", (dir.path / "out").string()}}},
      {"cell_size_km", 5.0},
      {"marginal", {{"lambda", 0.01}, {"knots", 24}}},
      {"dependence",
       {{"q_u", 0.96}, {"d_s", 120}, {"h_max", 16.0}, {"multi_starts", 1}}},
      {"simulation", {{"n", 900}, {"oversample", 3.0}, {"v_quantile", 0.96}}},
      {"aggregate",
       {{"gamma", 0.25},
        {"buffer_n_sim", 3000},
        {"tail_q", 0.9},
        {"obs_per_year", 720.0},
        {"bootstrap_reps", 40},
        {"allow_edge", false}}},
      {"seed", 5}};
  const std::string cfg_path = (dir.path / "pipeline.json").string();
  write_text_file(cfg_path, cfg_json.dump(2));
  return cfg_path;
}

}  // namespace

TEST_CASE("pipeline config: rejection is total at load") {
  TempDir dir("scex_cfg_test");
  const auto cfg_path = write_fixture(dir);

  // Valid config loads.
  const auto cfg = PipelineConfig::load(cfg_path);
  CHECK(cfg.d_s == 120);

  // Missing file.
  auto j = nlohmann::json::parse(read_text_file(cfg_path));
  j["paths"]["data"] = (dir.path / "nope.csv").string();
  const std::string bad1 = (dir.path / "bad1.json").string();
  write_text_file(bad1, j.dump());
  CHECK_THROWS_AS(PipelineConfig::load(bad1), config_error);

  // Constraint violations reported at load.
  j = nlohmann::json::parse(read_text_file(cfg_path));
  j["marginal"]["lambda"] = 1.5;
  const std::string bad2 = (dir.path / "bad2.json").string();
  write_text_file(bad2, j.dump());
  CHECK_THROWS_AS(PipelineConfig::load(bad2), config_error);

  j = nlohmann::json::parse(read_text_file(cfg_path));
  j["aggregate"]["gamma"] = 0.0;
  const std::string bad3 = (dir.path / "bad3.json").string();
  write_text_file(bad3, j.dump());
  CHECK_THROWS_AS(PipelineConfig::load(bad3), config_error);

  CHECK_THROWS_AS(PipelineConfig::load((dir.path / "absent.json").string()),
                  std::exception);
}

TEST_CASE("pipeline end to end: runs, records seeds, caches re-runs") {
  TempDir dir("scex_pipeline_test");
  const auto cfg_path = write_fixture(dir);
  const auto cfg = PipelineConfig::load(cfg_path);

  const auto first = run_pipeline(cfg);
  REQUIRE(first.stages.size() == 6);
  for (const auto& st : first.stages) CHECK_FALSE(st.cached);

  // Outputs exist.
  for (const char* f : {"marginal.json", "psi.json", "buffer.json", "curves.csv",
                        "qq.csv", "chi.csv", "chi0.csv", "depfit.csv"})
    CHECK(fs::exists(dir.path / "out" / f));

  // Manifest records seeds for every stage.
  const auto manifest =
      nlohmann::json::parse(read_text_file(first.manifest_path));
  for (const char* st : {"fit-marginal", "fit-dep", "buffer", "simulate",
                         "aggregate", "diagnose"}) {
    REQUIRE(manifest.at("stages").contains(st));
    CHECK(manifest.at("stages").at(st).contains("seed"));
  }

  // Second run: zero recomputation.
  const auto second = run_pipeline(cfg);
  for (const auto& st : second.stages) CHECK(st.cached);

  // Touching an input invalidates downstream stages.
  auto j = nlohmann::json::parse(read_text_file(cfg_path));
  j["simulation"]["n"] = 500;
  write_text_file(cfg_path, j.dump());
  const auto changed = PipelineConfig::load(cfg_path);
  const auto third = run_pipeline(changed);
  CHECK(third.stages[0].cached);   // marginal unchanged
  CHECK(third.stages[1].cached);   // dependence unchanged
  CHECK_FALSE(third.stages[3].cached);  // simulate re-runs
}
