#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "scex/errors.hpp"
#include "scex/simulation.hpp"
#include "scex/specfun.hpp"
#include "scex/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace scex;

namespace {
MarginalModel grid_marginal(const SpatialGrid& grid, double p_zero = 0.7) {
  SyntheticMarginalSpec spec;
  spec.p_zero = p_zero;
  return make_synthetic_marginal(grid, spec);
}
}  // namespace

TEST_CASE("conditional field: exact value at the conditioning site") {
  auto grid = make_regular_grid(4, 4, 5.0);
  DependenceParams psi = scex_test::table_s1();
  ConditionalSimulator sim(psi, grid);
  Rng rng(derive_seed(5, "cond-field"));
  const double v = laplace_quantile(0.98);
  for (int i = 0; i < 20; ++i) {
    double exc = 0.0;
    const auto x = sim.simulate(5, v, rng, &exc);
    CHECK(x[5] == doctest::Approx(v + exc).epsilon(1e-15));
    CHECK(x[5] > v);
  }
}

TEST_CASE("conditioning-site excess is Exp(1)") {
  auto grid = make_regular_grid(3, 3, 5.0);
  DependenceParams psi = scex_test::table_s1();
  ConditionalSimulator sim(psi, grid);
  Rng rng(derive_seed(6, "cond-exp"));
  const double v = laplace_quantile(0.98);
  std::vector<double> excess(10000);
  for (auto& e : excess) {
    const auto x = sim.simulate(4, v, rng);
    e = x[4] - v;
  }
  const double p = scex_test::ks_test_pvalue(
      excess, [](double e) { return e <= 0.0 ? 0.0 : 1.0 - std::exp(-e); });
  CHECK(p > 0.01);
}

TEST_CASE("far sites have near-standard-Laplace margins") {
  // Distant pair: a + b Z with alpha ~ 0, b ~ 1 and Z standard Laplace.
  DependenceParams psi = scex_test::table_s1();
  SpatialGrid grid({{"o", {0.0, 0.0}, {}, {}}, {"far", {3000.0, 0.0}, {}, {}}}, 5.0);
  ConditionalSimulator sim(psi, grid);
  Rng rng(derive_seed(7, "far"));
  const double v = laplace_quantile(0.98);
  const int n = 10000;
  std::vector<double> vals(n);
  for (auto& x : vals) x = sim.simulate(0, v, rng)[1];
  CHECK(std::fabs(scex_test::mean(vals)) < 3.0 * std::sqrt(2.0 / n));
  const double se_var = std::sqrt(20.0 / n);  // Var of sample variance, Laplace
  CHECK(std::fabs(scex_test::variance(vals) - 2.0) < 3.0 * se_var);
}

TEST_CASE("importance weights: reciprocal exceedance counts") {
  auto grid = make_regular_grid(5, 5, 5.0);
  DependenceParams psi = scex_test::table_s1();
  const auto marginal = grid_marginal(grid);
  SimulateConfig cfg;
  cfg.n = 200;
  cfg.oversample = 5.0;
  cfg.seed = 99;
  cfg.scale = FieldScale::Laplace;
  const auto archive = simulate_events(psi, marginal, grid, cfg);
  REQUIRE(archive.n_fields() == 200);
  const double v = archive.v;
  for (Eigen::Index r = 0; r < archive.n_fields(); ++r) {
    int count = 0;
    for (Eigen::Index s = 0; s < archive.fields.cols(); ++s)
      if (archive.fields(r, s) > v) ++count;
    CHECK(count >= 1);
    CHECK(archive.meta[static_cast<std::size_t>(r)].weight ==
          doctest::Approx(1.0 / count).epsilon(1e-12));
  }
}

TEST_CASE("data-scale archives: zeros exactly below the censoring threshold") {
  auto grid = make_regular_grid(5, 5, 5.0);
  DependenceParams psi = scex_test::table_s1();
  const auto marginal = grid_marginal(grid, 0.8);
  SimulateConfig cfg;
  cfg.n = 150;
  cfg.seed = 100;
  cfg.scale = FieldScale::Data;
  const auto archive = simulate_events(psi, marginal, grid, cfg);

  // Regenerate the Laplace fields through the recorded seeds and check the
  // zero pattern matches x <= c(s) exactly.
  SimulateConfig lap_cfg = cfg;
  lap_cfg.scale = FieldScale::Laplace;
  const auto lap = simulate_events(psi, marginal, grid, lap_cfg);
  REQUIRE(lap.n_fields() == archive.n_fields());
  int zeros = 0;
  for (Eigen::Index r = 0; r < archive.n_fields(); ++r)
    for (Eigen::Index s = 0; s < archive.fields.cols(); ++s) {
      const bool below =
          lap.fields(r, s) <= marginal.censor_threshold(static_cast<std::size_t>(s));
      CHECK((archive.fields(r, s) == 0.0) == below);
      CHECK(archive.fields(r, s) >= 0.0);
      zeros += archive.fields(r, s) == 0.0 ? 1 : 0;
    }
  CHECK(zeros > 0);

  // Every archived field has some value above its v-quantile on data scale.
  for (Eigen::Index r = 0; r < archive.n_fields(); ++r) {
    bool any = false;
    for (Eigen::Index s = 0; s < archive.fields.cols(); ++s) {
      const double y_v = marginal.quantile(cfg.v_quantile, static_cast<std::size_t>(s));
      if (archive.fields(r, s) > y_v) any = true;
    }
    CHECK(any);
  }
}

TEST_CASE("seed determinism: identical archives") {
  auto grid = make_regular_grid(4, 4, 5.0);
  DependenceParams psi = scex_test::table_s1();
  const auto marginal = grid_marginal(grid);
  SimulateConfig cfg;
  cfg.n = 60;
  cfg.seed = 4242;
  const auto a = simulate_events(psi, marginal, grid, cfg);
  const auto b = simulate_events(psi, marginal, grid, cfg);
  CHECK(a.fields == b.fields);
  for (std::size_t i = 0; i < a.meta.size(); ++i) {
    CHECK(a.meta[i].cond_site == b.meta[i].cond_site);
    CHECK(a.meta[i].seed == b.meta[i].seed);
  }
  // Streaming emits the same fields in the same order.
  Eigen::MatrixXd streamed(a.fields.rows(), a.fields.cols());
  Eigen::Index row = 0;
  simulate_events_streaming(psi, marginal, grid, cfg,
                            [&](const Eigen::VectorXd& f, const EventMeta&) {
                              streamed.row(row++) = f.transpose();
                            });
  CHECK(row == a.fields.rows());
  CHECK(streamed == a.fields);
}

TEST_CASE("resampling matches brute-force enumeration on a two-cell domain") {
  // Two sites far apart: the partner site rarely exceeds, so candidate
  // fields have one or two exceedance cells and weights 1 or 1/2. The
  // post-resampling share of weight-1 fields must match the weighted law.
  DependenceParams psi = scex_test::table_s1();
  SpatialGrid grid({{"a", {0.0, 0.0}, {}, {}}, {"b", {40.0, 0.0}, {}, {}}}, 5.0);
  const auto marginal = grid_marginal(grid, 0.5);

  SimulateConfig cfg;
  cfg.n = 4000;
  cfg.oversample = 5.0;
  cfg.scale = FieldScale::Laplace;
  cfg.seed = 777;
  const auto archive = simulate_events(psi, marginal, grid, cfg);

  // Brute force: regenerate the full candidate set and enumerate the
  // weighted without-replacement expectation via the candidate pool shares.
  const std::size_t n_cand = static_cast<std::size_t>(
      std::ceil(cfg.oversample * static_cast<double>(cfg.n)));
  ConditionalSimulator sim(psi, grid);
  const double v = archive.v;
  std::size_t singles = 0;
  for (std::size_t i = 0; i < n_cand; ++i) {
    Rng rng(derive_seed(cfg.seed, "sim-field", i));
    const auto cond = rng.uniform_int(2);
    const auto x = sim.simulate(cond, v, rng);
    int count = 0;
    for (Eigen::Index s = 0; s < 2; ++s)
      if (x[s] > v) ++count;
    singles += count == 1 ? 1 : 0;
  }
  // Oracle: independent replays of the weighted without-replacement rule.
  std::vector<double> weights(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) weights[i] = i < singles ? 1.0 : 0.5;
  Rng oracle_rng(derive_seed(4242, "wor-oracle"));
  std::vector<double> shares;
  for (int rep = 0; rep < 150; ++rep) {
    std::vector<std::pair<double, std::size_t>> keyed(n_cand);
    for (std::size_t i = 0; i < n_cand; ++i)
      keyed[i] = {std::log(oracle_rng.uniform_open()) / weights[i], i};
    std::nth_element(keyed.begin(), keyed.begin() + cfg.n - 1, keyed.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t picked = 0;
    for (std::size_t i = 0; i < cfg.n; ++i)
      picked += keyed[i].second < singles ? 1 : 0;
    shares.push_back(static_cast<double>(picked) / static_cast<double>(cfg.n));
  }
  const double expect_share = scex_test::mean(shares);
  const double se = std::sqrt(scex_test::variance(shares));

  std::size_t got_singles = 0;
  for (Eigen::Index r = 0; r < archive.n_fields(); ++r) {
    int count = 0;
    for (Eigen::Index s = 0; s < 2; ++s)
      if (archive.fields(r, s) > v) ++count;
    got_singles += count == 1 ? 1 : 0;
  }
  const double got_share =
      static_cast<double>(got_singles) / static_cast<double>(archive.n_fields());
  CHECK(std::fabs(got_share - expect_share) < 3.0 * se + 0.003);
}

TEST_CASE("exceedance probability: trivial series") {
  auto grid = make_regular_grid(2, 2, 5.0);
  LaplaceField f;
  f.x.resize(100, 4);
  f.censored.setZero(100, 4);
  f.censor_threshold.setConstant(4, -10.0);
  const double v = 2.0;
  // Alternating exceedance series.
  for (int t = 0; t < 100; ++t)
    for (int s = 0; s < 4; ++s) f.x(t, s) = (t % 2 == 0) ? 3.0 : 0.0;
  const auto est = exceedance_probability(f, v, 1.0, 200, 3);
  CHECK(est.estimate == doctest::Approx(0.5));
  // v below every maximum -> probability one.
  const auto one = exceedance_probability(f, -5.0, 1.0, 100, 3);
  CHECK(one.estimate == doctest::Approx(1.0));
  // No exceedances -> zero with degenerate interval.
  const auto zero = exceedance_probability(f, 100.0, 1.0, 100, 3);
  CHECK(zero.estimate == 0.0);
  CHECK(zero.n_exceed == 0);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == 0.0);
}

TEST_CASE("unconditional mixture: trivial p and binomial counts") {
  auto grid = make_regular_grid(3, 3, 5.0);
  DependenceParams psi = scex_test::table_s1();
  const auto marginal = grid_marginal(grid);
  SimulateConfig cfg;
  cfg.n = 50;
  cfg.seed = 31;
  const auto archive = simulate_events(psi, marginal, grid, cfg);

  // Observed data: all tiny (never exceeding), one extreme row.
  Eigen::MatrixXd data = Eigen::MatrixXd::Constant(400, 9, 0.01);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Constant(400, 9, -3.0);
  lap.row(0).setConstant(10.0);  // one exceedance field in the pool

  Rng rng(derive_seed(1, "mix"));
  const auto all_model =
      simulate_unconditional_mix(archive, data, lap, archive.v, 1.0, 300, rng);
  for (const auto flag : all_model.from_model) CHECK(flag == 1);

  const auto all_data =
      simulate_unconditional_mix(archive, data, lap, archive.v, 0.0, 300, rng);
  for (const auto flag : all_data.from_model) CHECK(flag == 0);

  const std::size_t n_total = 100000;
  const double p = 0.273;
  const auto mixed =
      simulate_unconditional_mix(archive, data, lap, archive.v, p, n_total, rng);
  std::size_t from_model = 0;
  for (const auto flag : mixed.from_model) from_model += flag;
  // Binomial 99% interval.
  const double se = std::sqrt(p * (1.0 - p) * static_cast<double>(n_total));
  const double lo = p * n_total - 2.576 * se;
  const double hi = p * n_total + 2.576 * se;
  CHECK(static_cast<double>(from_model) > lo);
  CHECK(static_cast<double>(from_model) < hi);

  // No non-exceedance pool -> error.
  Eigen::MatrixXd lap_all = Eigen::MatrixXd::Constant(400, 9, 10.0);
  CHECK_THROWS_AS(
      simulate_unconditional_mix(archive, data, lap_all, archive.v, 0.5, 10, rng),
      input_error);
}

TEST_CASE("archive save/load round trip") {
  namespace fs = std::filesystem;
  auto grid = make_regular_grid(3, 3, 5.0);
  DependenceParams psi = scex_test::table_s1();
  const auto marginal = grid_marginal(grid);
  SimulateConfig cfg;
  cfg.n = 23;
  cfg.seed = 8;
  const auto archive = simulate_events(psi, marginal, grid, cfg);

  const auto dir = fs::temp_directory_path() / "scex_archive_test";
  fs::remove_all(dir);
  save_archive(archive, dir.string(), 7);  // several chunks
  const auto loaded = load_archive(dir.string());
  CHECK(loaded.scale == archive.scale);
  CHECK(loaded.v == archive.v);
  CHECK(loaded.fields == archive.fields);
  REQUIRE(loaded.meta.size() == archive.meta.size());
  for (std::size_t i = 0; i < archive.meta.size(); ++i) {
    CHECK(loaded.meta[i].cond_site == archive.meta[i].cond_site);
    CHECK(loaded.meta[i].weight == archive.meta[i].weight);
    CHECK(loaded.meta[i].seed == archive.meta[i].seed);
  }
  fs::remove_all(dir);
}
