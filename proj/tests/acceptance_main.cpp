// Acceptance suite: one pass/fail line per criterion. Heavy criteria
// checkpoint per-repetition results under ./acceptance_checkpoints so an
// interrupted run resumes. SCEX_ACCEPT_ONLY=<comma list> restricts the run.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "scex/aggregate.hpp"
#include "scex/dependence.hpp"
#include "scex/diagnostics.hpp"
#include "scex/inference.hpp"
#include "scex/marginal.hpp"
#include "scex/rng.hpp"
#include "scex/simulation.hpp"
#include "scex/specfun.hpp"
#include "scex/synthetic.hpp"
#include "support/oracles.hpp"

using namespace scex;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail) {
  std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion,
              what.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

bool enabled(int criterion) {
  const char* only = std::getenv("SCEX_ACCEPT_ONLY");
  if (!only || !*only) return true;
  const std::string list(only);
  std::size_t pos = 0;
  while (pos < list.size()) {
    const auto comma = list.find(',', pos);
    if (std::stoi(list.substr(pos, comma - pos)) == criterion) return true;
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return false;
}

// ---------------------------------------------------------------------------
// 1. Recovery study at the published protocol scale.
void criterion_recovery() {
  const auto psi0 = reference_dependence_params();
  auto grid = make_regular_grid(15, 15, 5.0);
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.837;
  const auto marginal = make_synthetic_marginal(grid, mspec);

  BootstrapConfig cfg;
  cfg.reps = 50;
  cfg.n_fields = 1000;
  cfg.d_s = 1000;
  cfg.h_max = 28.0;
  cfg.q_u = 0.98;
  cfg.seed = 20260810;
  const char* ckpt = std::getenv("SCEX_ACC1_CHECKPOINT");
  cfg.checkpoint_dir = ckpt && *ckpt ? ckpt : "acceptance_checkpoints";

  const auto summary =
      parametric_bootstrap(psi0, marginal, grid, grid.index_of("r7c7"), cfg);

  bool pass = summary.failed_reps == 0 &&
              static_cast<int>(summary.rel_errors.size()) == cfg.reps;
  std::string detail;
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t c = 0; c < summary.names.size(); ++c) {
    const double med = summary.median_rel_error[c];
    if (!(med >= -0.15 && med <= 0.15)) pass = false;
    if (std::fabs(med) > std::fabs(worst)) {
      worst = med;
      worst_name = summary.names[c];
    }
    detail += summary.names[c] + "=" + std::to_string(med).substr(0, 6) + " ";
  }
  report(1, pass,
         "parameter recovery on 50 repetitions (medians within [-0.15, 0.15])",
         "worst " + worst_name + " = " + std::to_string(worst) + "; " + detail);
}

// ---------------------------------------------------------------------------
// 2. Pseudo-likelihood equals a literal product-form implementation.
void criterion_likelihood_oracle() {
  SpatialGrid grid({{"s0", {0.0, 0.0}, {}, {}},
                    {"s1", {5.0, 0.0}, {}, {}},
                    {"s2", {0.0, 5.0}, {}, {}},
                    {"s3", {5.0, 5.0}, {}, {}}},
                   5.0);
  DependenceParams gen = reference_dependence_params();
  const double u = laplace_quantile(0.98);
  const double c = laplace_quantile(0.7);

  // 10 fields conditioned at site 0 with censoring.
  LaplaceField data;
  data.x.resize(10, 4);
  data.censored.resize(10, 4);
  data.censor_threshold.setConstant(4, c);
  ResidualFieldSimulator sim(gen, grid, 0);
  Rng rng(derive_seed(2, "acc2"));
  for (int t = 0; t < 10; ++t) {
    const double xo = u + rng.exponential();
    const Eigen::VectorXd z = sim.simulate(rng);
    for (Eigen::Index s = 0; s < 4; ++s) {
      double x;
      if (s == 0) {
        x = xo;
      } else {
        const auto nm = norming_functions(xo, sim.distances()[s], gen);
        x = nm.a + nm.b * z[s];
      }
      if (x <= c) {
        data.censored(t, s) = 1;
        data.x(t, s) = c;
      } else {
        data.censored(t, s) = 0;
        data.x(t, s) = x;
      }
    }
  }

  TripleSample all;
  all.h_max = 100.0;
  for (std::uint32_t i = 0; i < 4; ++i)
    for (std::uint32_t j = 0; j < 4; ++j)
      for (std::uint32_t k = j + 1; k < 4; ++k)
        if (j != i && k != i) all.triples.push_back({i, j, k});

  DependenceParams eval_at = gen;
  eval_at.kappa_beta1 = 30.0;
  eval_at.kappa_rho1 = 45.0;

  PseudoLikelihood pl(data, grid, all, u);
  const double fast = pl.negative_log(eval_at);

  const ConditioningSet cs = build_conditioning_set(data, u);
  double oracle = 0.0;
  for (const auto& tr : all.triples) {
    for (const int t : cs.times[tr.i]) {
      const double xi = data.x(t, tr.i);
      const double h_j = grid.distance(tr.i, tr.j, eval_at.aniso);
      const double h_k = grid.distance(tr.i, tr.k, eval_at.aniso);
      const auto rj = compute_residual(data.x(t, tr.j), data.censored(t, tr.j),
                                       xi, h_j, c, eval_at);
      const auto rk = compute_residual(data.x(t, tr.k), data.censored(t, tr.k),
                                       xi, h_k, c, eval_at);
      const DeltaLaplace dj(residual_param_functions(h_j, eval_at));
      const DeltaLaplace dk(residual_param_functions(h_k, eval_at));
      const double r_j = eval_at.rho(h_j);
      const double r_k = eval_at.rho(h_k);
      const double r_jk = eval_at.rho(grid.distance(tr.j, tr.k, eval_at.aniso));
      const double rho =
          (r_jk - r_j * r_k) / std::sqrt((1.0 - r_j * r_j) * (1.0 - r_k * r_k));
      const double g = log_censored_pair_density(
          {rj.z, rk.z, rj.censored, rk.censored}, dj, dk, rho);
      double jac = 0.0;
      if (!rj.censored) jac += eval_at.beta(h_j) * std::log(xi);
      if (!rk.censored) jac += eval_at.beta(h_k) * std::log(xi);
      oracle -= g - jac;
    }
  }
  const double rel = std::fabs(fast - oracle) / std::fabs(oracle);
  report(2, rel <= 1e-9, "triplewise NLL matches the naive product form",
         "relative difference " + std::to_string(rel));
}

// ---------------------------------------------------------------------------
// 3. Censored bivariate density normalizes to 1.
void criterion_censored_normalization() {
  Rng rng(derive_seed(3, "acc3"));
  bool pass = true;
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const DeltaLaplace dl1(0.6 * rng.normal(), 0.5 + rng.uniform(),
                           1.0 + 1.5 * rng.uniform());
    const DeltaLaplace dl2(0.6 * rng.normal(), 0.5 + rng.uniform(),
                           1.0 + 1.5 * rng.uniform());
    const double rho = 1.8 * rng.uniform() - 0.9;
    const double c1 = dl1.mu() + dl1.sigma() * (2.0 * rng.uniform() - 1.5);
    const double c2 = dl2.mu() + dl2.sigma() * (2.0 * rng.uniform() - 1.5);
    const double hi1 = dl1.mu() + 12.0 * dl1.sigma();
    const double hi2 = dl2.mu() + 12.0 * dl2.sigma();

    const double quad = scex_test::integrate(
        [&](double z1) {
          return scex_test::integrate(
              [&](double z2) {
                return censored_pair_density({z1, z2, false, false}, dl1, dl2, rho);
              },
              c2, hi2, 24);
        },
        c1, hi1, 24);
    const double strip1 = scex_test::integrate(
        [&](double z1) {
          return censored_pair_density({z1, c2, false, true}, dl1, dl2, rho);
        },
        c1, hi1, 48);
    const double strip2 = scex_test::integrate(
        [&](double z2) {
          return censored_pair_density({c1, z2, true, false}, dl1, dl2, rho);
        },
        c2, hi2, 48);
    const double mass = censored_pair_density({c1, c2, true, true}, dl1, dl2, rho);
    const double total = quad + strip1 + strip2 + mass;
    worst = std::max(worst, std::fabs(total - 1.0));
    if (std::fabs(total - 1.0) > 1e-3) pass = false;
  }
  report(3, pass, "censored density + masses sum to 1 (20 random configurations)",
         "worst |total-1| = " + std::to_string(worst));
}

// ---------------------------------------------------------------------------
// 4. Delta-Laplace family: variance identity and limiting members.
void criterion_delta_laplace() {
  bool pass = true;
  std::string detail;
  for (const double delta : {0.7, 1.0, 1.5, 2.0, 3.0}) {
    const double mu = 0.3, sigma = 1.2;
    DeltaLaplace dl(mu, sigma, delta);
    const double hw = dl.scale() * std::pow(42.0, 1.0 / delta);
    const double var =
        scex_test::integrate(
            [&](double z) { return (z - mu) * (z - mu) * dl.pdf(z); }, mu - hw,
            mu, 400) +
        scex_test::integrate(
            [&](double z) { return (z - mu) * (z - mu) * dl.pdf(z); }, mu,
            mu + hw, 400);
    const double rel = std::fabs(var - sigma * sigma) / (sigma * sigma);
    if (rel > 1e-6) {
      pass = false;
      detail += "var(delta=" + std::to_string(delta) + ") rel " +
                std::to_string(rel) + "; ";
    }
  }
  DeltaLaplace gauss(0.0, 1.0, 2.0);
  DeltaLaplace lap(0.0, std::sqrt(2.0), 1.0);
  double worst_g = 0.0, worst_l = 0.0;
  for (double z = -6.0; z <= 6.0; z += 0.01) {
    worst_g = std::max(worst_g, std::fabs(gauss.pdf(z) - norm_pdf(z)));
    worst_l = std::max(worst_l, std::fabs(lap.pdf(z) - 0.5 * std::exp(-std::fabs(z))));
  }
  if (worst_g > 1e-10) {
    pass = false;
    detail += "gaussian pdf dev " + std::to_string(worst_g) + "; ";
  }
  if (worst_l > 1e-10) {
    pass = false;
    detail += "laplace pdf dev " + std::to_string(worst_l) + "; ";
  }
  report(4, pass, "delta-Laplace variance and limiting members", detail);
}

// ---------------------------------------------------------------------------
// 5. Matern nu = 1/2 closed form.
void criterion_matern() {
  double worst = 0.0;
  for (double h = 0.0; h <= 200.0; h += 0.25) {
    const double kappa1 = 58.71;
    const double closed = std::exp(-std::sqrt(2.0) * h / kappa1);
    worst = std::max(worst, std::fabs(matern(h, kappa1, 0.5) - closed));
  }
  report(5, worst <= 1e-8, "Matern nu=1/2 equals exp(-sqrt(2) h / kappa1)",
         "max abs deviation " + std::to_string(worst));
}

// ---------------------------------------------------------------------------
// 6. Event-simulation contracts.
void criterion_simulation_contracts() {
  auto grid = make_regular_grid(10, 10, 5.0);
  const auto psi = reference_dependence_params();
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.837;
  const auto marginal = make_synthetic_marginal(grid, mspec);
  bool pass = true;
  std::string detail;

  // (a) Conditioning-site excess ~ Exp(1) over 1e4 conditional draws.
  {
    ConditionalSimulator sim(psi, grid);
    Rng rng(derive_seed(6, "acc6-exp"));
    const double v = laplace_quantile(0.98);
    std::vector<double> excess(10000);
    for (auto& e : excess) {
      const std::size_t cond = rng.uniform_int(grid.size());
      double exc = 0.0;
      sim.simulate(cond, v, rng, &exc);
      e = exc;
    }
    const double p = scex_test::ks_test_pvalue(
        excess, [](double e) { return e <= 0.0 ? 0.0 : 1.0 - std::exp(-e); });
    if (p <= 0.01) pass = false;
    detail += "KS p = " + std::to_string(p) + "; ";
  }

  // (b) Weighted resampling matches brute-force enumeration on 2 cells.
  {
    SpatialGrid two({{"a", {0.0, 0.0}, {}, {}}, {"b", {40.0, 0.0}, {}, {}}}, 5.0);
    const auto m2 = make_synthetic_marginal(two, mspec);
    SimulateConfig cfg;
    cfg.n = 10000;
    cfg.oversample = 5.0;
    cfg.scale = FieldScale::Laplace;
    cfg.seed = 616;
    const auto archive = simulate_events(psi, m2, two, cfg);
    const std::size_t n_cand = static_cast<std::size_t>(
        std::ceil(cfg.oversample * static_cast<double>(cfg.n)));
    ConditionalSimulator sim(psi, two);
    std::size_t singles = 0;
    for (std::size_t i = 0; i < n_cand; ++i) {
      Rng rng(derive_seed(cfg.seed, "sim-field", i));
      const auto cond = rng.uniform_int(2);
      const auto x = sim.simulate(cond, archive.v, rng);
      int count = 0;
      for (Eigen::Index s = 0; s < 2; ++s)
        if (x[s] > archive.v) ++count;
      singles += count == 1 ? 1 : 0;
    }
    // Brute-force enumeration of the weighted without-replacement scheme:
    // many independent replays of the top-n exponential-key rule over the
    // same candidate weights, giving the reference share and its spread.
    std::vector<double> weights(n_cand);
    for (std::size_t i = 0; i < n_cand; ++i)
      weights[i] = i < singles ? 1.0 : 0.5;  // singles first; order irrelevant
    Rng oracle_rng(derive_seed(999, "acc6-oracle"));
    std::vector<double> shares;
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<std::pair<double, std::size_t>> keyed(n_cand);
      for (std::size_t i = 0; i < n_cand; ++i)
        keyed[i] = {std::log(oracle_rng.uniform_open()) / weights[i], i};
      std::nth_element(keyed.begin(), keyed.begin() + cfg.n - 1, keyed.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      std::size_t picked_singles = 0;
      for (std::size_t i = 0; i < cfg.n; ++i)
        picked_singles += keyed[i].second < singles ? 1 : 0;
      shares.push_back(static_cast<double>(picked_singles) /
                       static_cast<double>(cfg.n));
    }
    const double expect = scex_test::mean(shares);
    const double se = std::sqrt(scex_test::variance(shares));
    std::size_t got = 0;
    for (Eigen::Index r = 0; r < archive.n_fields(); ++r) {
      int count = 0;
      for (Eigen::Index s = 0; s < 2; ++s)
        if (archive.fields(r, s) > archive.v) ++count;
      got += count == 1 ? 1 : 0;
    }
    const double share = static_cast<double>(got) /
                         static_cast<double>(archive.n_fields());
    if (std::fabs(share - expect) > 3.0 * se) pass = false;
    detail += "resample share " + std::to_string(share) + " vs " +
              std::to_string(expect) + " (se " + std::to_string(se) + "); ";
  }

  // (c) Data-scale zeros coincide exactly with x <= c(s).
  {
    SimulateConfig cfg;
    cfg.n = 2000;
    cfg.seed = 99;
    cfg.scale = FieldScale::Data;
    const auto data_archive = simulate_events(psi, marginal, grid, cfg);
    cfg.scale = FieldScale::Laplace;
    const auto lap_archive = simulate_events(psi, marginal, grid, cfg);
    long mism = 0;
    for (Eigen::Index r = 0; r < data_archive.n_fields(); ++r)
      for (Eigen::Index s = 0; s < data_archive.fields.cols(); ++s) {
        const bool zero = data_archive.fields(r, s) == 0.0;
        const bool below = lap_archive.fields(r, s) <=
                           marginal.censor_threshold(static_cast<std::size_t>(s));
        if (zero != below) ++mism;
      }
    if (mism != 0) pass = false;
    detail += "zero/censor mismatches " + std::to_string(mism);
  }
  report(6, pass, "event simulation contracts (Exp(1) excess, resampling, zeros)",
         detail);
}

// ---------------------------------------------------------------------------
// 7. Aggregate ordering across nested regions; curves never cross.
void criterion_aggregate_ordering() {
  auto grid = make_regular_grid(15, 15, 5.0);
  const auto psi = reference_dependence_params();
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.837;
  const auto marginal = make_synthetic_marginal(grid, mspec);

  // Three nested chains around different anchors.
  auto block = [&](int r0, int c0, int half) {
    std::vector<std::string> ids;
    for (int r = r0 - half; r <= r0 + half; ++r)
      for (int c = c0 - half; c <= c0 + half; ++c)
        ids.push_back("r" + std::to_string(r) + "c" + std::to_string(c));
    return ids;
  };
  std::vector<std::vector<Region>> chains;
  const std::vector<std::pair<int, int>> anchors{{7, 7}, {6, 8}, {8, 6}};
  for (const auto& [r0, c0] : anchors) {
    std::vector<Region> chain;
    for (int half = 0; half <= 2; ++half)
      chain.push_back(Region::from_site_ids(
          "r" + std::to_string(r0) + "c" + std::to_string(c0) + "_h" +
              std::to_string(half),
          block(r0, c0, half), grid));
    chains.push_back(std::move(chain));
  }

  SimulateConfig cfg;
  cfg.n = 100000;
  cfg.oversample = 5.0;
  cfg.v_quantile = 0.98;
  cfg.seed = 717;
  cfg.scale = FieldScale::Data;

  std::vector<std::vector<std::vector<double>>> totals(
      chains.size(), std::vector<std::vector<double>>(3));
  long violations = 0;
  simulate_events_streaming(
      psi, marginal, grid, cfg,
      [&](const Eigen::VectorXd& field, const EventMeta&) {
        for (std::size_t ch = 0; ch < chains.size(); ++ch) {
          double prev = -1.0;
          for (std::size_t k = 0; k < 3; ++k) {
            const double r =
                aggregate_field(field, chains[ch][k], grid.cell_area()).total;
            totals[ch][k].push_back(r);
            if (r < prev) ++violations;  // nested: total must not decrease
            prev = r;
          }
        }
      });

  bool pass = violations == 0;
  std::string detail = "ordering violations " + std::to_string(violations);

  // Method (i) curves for each chain must not cross.
  ReturnLevelConfig rc;
  rc.tail_q = 0.999;
  rc.obs_per_year = 2160.0;
  rc.bootstrap_reps = 60;
  long crossings = 0;
  for (std::size_t ch = 0; ch < chains.size(); ++ch) {
    std::vector<ReturnLevelCurve> curves;
    for (std::size_t k = 0; k < 3; ++k) {
      AggregateSample sample;
      sample.region = chains[ch][k].name;
      sample.area = chains[ch][k].area;
      sample.source = "model";
      sample.totals = totals[ch][k];
      sample.means = totals[ch][k];
      rc.seed = derive_seed(717, "curve", ch * 3 + k);
      curves.push_back(return_level_curve(sample, rc));
    }
    for (std::size_t k = 1; k < 3; ++k)
      for (std::size_t i = 0; i < curves[k].levels.size(); ++i)
        if (curves[k].levels[i] < curves[k - 1].levels[i]) ++crossings;
  }
  if (crossings != 0) pass = false;
  detail += "; curve crossings " + std::to_string(crossings);
  report(7, pass, "nested aggregates ordered over 1e5 fields; curves never cross",
         detail);
}

// ---------------------------------------------------------------------------
// 8. Independence identities for chi and chi0.
void criterion_independence_identities() {
  auto grid = make_regular_grid(5, 5, 5.0);
  const double p_zero = 0.3;
  Rng rng(derive_seed(8, "acc8"));
  const int n = 60000;
  Eigen::MatrixXd y(n, 25);
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index s = 0; s < 25; ++s)
      y(t, s) = rng.uniform() < p_zero ? 0.0 : rng.exponential();

  bool pass = true;
  std::string detail;
  for (const double q : {0.9, 0.95, 0.99}) {
    const auto chi = chi_q_binned(y, grid, AnisotropyParams::isotropic(), q, 5.0);
    for (std::size_t b = 0; b < chi.chi.size(); ++b) {
      if (!chi.defined[b]) continue;
      if (std::fabs(chi.chi[b] - (1.0 - q)) > 3.0 * chi.std_error[b] + 1e-3)
        pass = false;
    }
    const auto c0 = chi_zero(y, grid, AnisotropyParams::isotropic(), 12, q, 5.0);
    for (std::size_t b = 0; b < c0.chi.size(); ++b) {
      if (!c0.defined[b]) continue;
      if (std::fabs(c0.chi[b] - p_zero) > 3.0 * c0.std_error[b] + 2e-3) pass = false;
    }
    detail += "q=" + std::to_string(q).substr(0, 4) + " ok; ";
  }
  report(8, pass, "independent fields give chi ~ 1-q and chi0 ~ p(s)", detail);
}

// ---------------------------------------------------------------------------
// 9. Self-consistency: fit to model-generated data, method (i) Q-Q inside
//    stationary-bootstrap bands from 0.7 to the 20-year probability.
void criterion_self_consistency() {
  auto grid = make_regular_grid(15, 15, 5.0);
  const auto psi_true = reference_dependence_params();
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.7;
  const auto true_marginal = make_synthetic_marginal(grid, mspec);

  SyntheticDataConfig gen;
  gen.n_time = 4320;  // two years at the summer-hours rate
  gen.p_exc = 0.25;
  gen.v_quantile = 0.98;
  gen.seed = 909;
  const auto y = generate_synthetic(grid, psi_true, true_marginal, gen);

  // Fit both model components to the synthetic data.
  MarginalFitConfig mc;
  mc.lambda = 0.005;
  mc.knots = 100;
  const auto marginal = fit_marginal(y, grid, mc);
  const auto lap = marginal.to_laplace(y);

  DependenceFitConfig dc;
  dc.q_u = 0.98;
  dc.d_s = 700;
  dc.h_max = 28.0;
  dc.multi_starts = 1;
  dc.max_evaluations = 2500;
  dc.seed = 910;
  const auto fit = fit_dependence(lap, grid, dc);

  // Long-run simulation, aggregates only.
  const double v = laplace_quantile(gen.v_quantile);
  const auto p_exc = exceedance_probability(lap, v, 48.0, 500, 911);

  const auto region = Region::from_site_ids(
      "centre",
      {"r6c6", "r6c7", "r6c8", "r7c6", "r7c7", "r7c8", "r8c6", "r8c7", "r8c8"},
      grid);
  SimulateConfig sc;
  sc.n = 100000;
  sc.oversample = 5.0;
  sc.v_quantile = gen.v_quantile;
  sc.seed = 912;
  sc.scale = FieldScale::Data;
  std::vector<double> model_means;
  simulate_events_streaming(fit.psi, marginal, grid, sc,
                            [&](const Eigen::VectorXd& field, const EventMeta&) {
                              model_means.push_back(
                                  aggregate_field(field, region, grid.cell_area())
                                      .mean);
                            });

  // Mixture on the aggregate scale: model event aggregates with probability
  // p_exc, resampled non-exceedance data aggregates otherwise.
  std::vector<double> data_means;
  std::vector<double> body_pool;
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    const double m =
        aggregate_field(y.row(t).transpose(), region, grid.cell_area()).mean;
    data_means.push_back(m);
    if (lap.x.row(t).maxCoeff() < v) body_pool.push_back(m);
  }
  Rng mix_rng(derive_seed(913, "acc9-mix"));
  std::vector<double> mixed;
  mixed.reserve(model_means.size());
  for (std::size_t i = 0; i < model_means.size(); ++i) {
    if (mix_rng.uniform() < p_exc.estimate)
      mixed.push_back(model_means[mix_rng.uniform_int(model_means.size())]);
    else
      mixed.push_back(body_pool[mix_rng.uniform_int(body_pool.size())]);
  }

  QqConfig qc;
  qc.obs_per_year = 2160.0;
  qc.horizon_years = 20.0;
  qc.bootstrap_reps = 400;
  qc.expected_block = 48.0;
  qc.seed = 914;
  const auto rows = aggregate_qq(mixed, data_means, qc);
  int outside = 0;
  for (const auto& row : rows)
    if (row.model_q < row.lo || row.model_q > row.hi) ++outside;
  report(9, outside == 0,
         "self-consistent aggregate Q-Q inside 95% stationary-bootstrap bands",
         std::to_string(outside) + "/" + std::to_string(rows.size()) +
             " points outside; p_exc " + std::to_string(p_exc.estimate));
}

// ---------------------------------------------------------------------------
// 10. Marginal continuity at the threshold and Laplace round trip.
void criterion_marginal_roundtrip() {
  auto grid = make_regular_grid(10, 10, 5.0);
  SyntheticMarginalSpec mspec;
  mspec.p_zero = 0.6;
  mspec.body_points = 4000;
  const auto m = make_synthetic_marginal(grid, mspec);

  bool pass = true;
  std::string detail;
  // Continuity at q(s): both branch limits equal 1 - lambda.
  double worst_cont = 0.0;
  for (std::size_t s = 0; s < m.n_sites(); ++s) {
    const double q = m.site(s).q;
    const double below = m.cdf(q, s);
    const double above = m.cdf(std::nextafter(q, 2.0 * q), s);
    worst_cont = std::max(worst_cont, std::fabs(below - above));
    worst_cont = std::max(worst_cont, std::fabs(below - (1.0 - m.lambda())));
  }
  if (worst_cont > 1e-12) pass = false;
  detail += "continuity gap " + std::to_string(worst_cont) + "; ";

  // Round trip on 1e6 random (site, value) pairs from the body and tail.
  Rng rng(derive_seed(10, "acc10"));
  double worst_rt = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    const std::size_t s = rng.uniform_int(m.n_sites());
    const double p0 = m.site(s).p;
    const double u = p0 + (1.0 - p0 - 1e-9) * rng.uniform_open();
    const double y = m.quantile(clamp_prob(u), s);
    if (y <= 0.0) continue;
    const double back = m.from_laplace_value(m.to_laplace_value(y, s), s);
    worst_rt = std::max(worst_rt, std::fabs(back - y) / (1.0 + y));
  }
  if (worst_rt > 1e-6) pass = false;
  detail += "worst round-trip rel err " + std::to_string(worst_rt);
  report(10, pass, "marginal continuity at q(s) and Laplace round trip", detail);
}

}  // namespace

int main() {
  if (enabled(1)) criterion_recovery();
  if (enabled(2)) criterion_likelihood_oracle();
  if (enabled(3)) criterion_censored_normalization();
  if (enabled(4)) criterion_delta_laplace();
  if (enabled(5)) criterion_matern();
  if (enabled(6)) criterion_simulation_contracts();
  if (enabled(7)) criterion_aggregate_ordering();
  if (enabled(8)) criterion_independence_identities();
  if (enabled(9)) criterion_self_consistency();
  if (enabled(10)) criterion_marginal_roundtrip();
  std::printf("%s (%d failure%s)\n",
              g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              g_failures, g_failures == 1 ? "" : "s");
  return g_failures == 0 ? 0 : 1;
}
