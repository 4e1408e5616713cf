#include <doctest.h>

#include <cmath>

#include "scex/errors.hpp"
#include "scex/gpd.hpp"
#include "scex/marginal.hpp"
#include "scex/rng.hpp"
#include "scex/specfun.hpp"
#include "scex/synthetic.hpp"
#include "support/oracles.hpp"

using namespace scex;

namespace {

MarginalModel toy_model(double p = 0.4, double lambda = 0.01) {
  SyntheticMarginalSpec spec;
  spec.p_zero = p;
  spec.lambda = lambda;
  spec.threshold = 4.0;
  spec.gpd_scale = 1.5;
  spec.gpd_shape = 0.2;
  spec.body_points = 5000;
  return make_synthetic_marginal(make_regular_grid(2, 2, 5.0), spec);
}

// Rainfall-like synthetic data: mixture of zeros and a gamma-ish positive
// part with a heavy tail.
Eigen::MatrixXd rain_like(const SpatialGrid& grid, int n, double p_dry,
                          std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd y(n, static_cast<Eigen::Index>(grid.size()));
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(grid.size()); ++s) {
      if (rng.uniform() < p_dry) {
        y(t, s) = 0.0;
      } else {
        const double e = rng.exponential();
        y(t, s) = 0.3 * e + 0.15 * e * e;  // heavy-ish upper tail
      }
    }
  return y;
}

}  // namespace

TEST_CASE("marginal cdf branches") {
  const auto m = toy_model();
  // Atom at zero.
  CHECK(m.cdf(0.0, 0) == doctest::Approx(0.4));
  // Continuity at the threshold: both branches give 1 - lambda.
  const double q = m.site(0).q;
  CHECK(m.cdf(q, 0) == doctest::Approx(1.0 - m.lambda()).epsilon(1e-12));
  CHECK(m.cdf(q + 1e-300, 0) == doctest::Approx(1.0 - m.lambda()).epsilon(1e-12));
  // GPD tail value: y = q + ups*((2^xi)-1)/xi has survival lambda/2.
  const auto& s = m.site(0);
  const double y = s.q + s.upsilon * (std::pow(2.0, s.xi) - 1.0) / s.xi;
  CHECK(m.cdf(y, 0) == doctest::Approx(1.0 - m.lambda() * 0.5).epsilon(1e-12));
  CHECK_THROWS_AS(m.cdf(-0.1, 0), input_error);
}

TEST_CASE("marginal cdf is monotone with the exact zero jump") {
  const auto m = toy_model(0.35, 0.02);
  double prev = -1.0;
  for (double y = 0.0; y < 30.0; y += 0.01) {
    const double c = m.cdf(y, 1);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK(m.cdf(0.0, 1) == doctest::Approx(0.35));
  // Just above zero the cdf continues from the atom.
  CHECK(m.cdf(1e-12, 1) == doctest::Approx(0.35).epsilon(1e-9));
}

TEST_CASE("marginal quantile: atom, continuity, round trip") {
  const auto m = toy_model();
  CHECK(m.quantile(0.2, 0) == 0.0);  // u inside the atom
  CHECK(m.quantile(1.0 - m.lambda(), 0) ==
        doctest::Approx(m.site(0).q).epsilon(1e-9));
  // Round trip against a bisection oracle for u above the atom.
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double u = 0.4 + 0.599 * rng.uniform();
    const double y = m.quantile(u, 0);
    // Bisection on the cdf as an independent inverse.
    double lo = 0.0, hi = 1e6;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (m.cdf(mid, 0) < u ? lo : hi) = mid;
    }
    CHECK(y == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-6));
    CHECK(m.cdf(y, 0) == doctest::Approx(u).epsilon(1e-9));
  }
  CHECK_THROWS_AS(m.quantile(0.0, 0), input_error);
  CHECK_THROWS_AS(m.quantile(1.0, 0), input_error);
}

TEST_CASE("laplace transform: censoring thresholds and round trip") {
  const auto half = toy_model(0.5);
  CHECK(half.censor_threshold(0) == doctest::Approx(0.0));  // Laplace median

  const auto dryish = toy_model(0.837);
  CHECK(dryish.censor_threshold(0) ==
        doctest::Approx(-std::log(2.0 * (1.0 - 0.837))).epsilon(1e-12));

  // A value at the site median maps to X = 0 when p < 0.5.
  const auto m = toy_model(0.2);
  const double med = m.quantile(0.5, 0);
  CHECK(m.to_laplace_value(med, 0) == doctest::Approx(0.0).epsilon(1e-9));

  // Round trip on uncensored values.
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const double u = 0.21 + 0.7899 * rng.uniform();
    const double y = m.quantile(u, 0);
    const double x = m.to_laplace_value(y, 0);
    const double back = m.from_laplace_value(x, 0);
    CHECK(std::fabs(back - y) <= 1e-6 * (1.0 + y));
  }

  // x below the threshold maps to zero, at the tail boundary to q.
  CHECK(m.from_laplace_value(m.censor_threshold(0) - 0.01, 0) == 0.0);
  const double x_tail = laplace_quantile(1.0 - m.lambda());
  CHECK(m.from_laplace_value(x_tail, 0) == doctest::Approx(m.site(0).q).epsilon(1e-9));
}

TEST_CASE("field transform marks zeros as censored and back") {
  const auto m = toy_model(0.3);
  Eigen::MatrixXd y(3, 4);
  y << 0.0, 1.0, 2.0, 0.0, 5.0, 0.0, 0.5, 1.5, 0.0, 0.0, 0.0, 9.0;
  const auto lap = m.to_laplace(y);
  for (Eigen::Index t = 0; t < 3; ++t)
    for (Eigen::Index s = 0; s < 4; ++s) {
      CHECK((lap.censored(t, s) == 1) == (y(t, s) == 0.0));
      if (y(t, s) == 0.0) CHECK(lap.x(t, s) == lap.censor_threshold[s]);
    }
  const auto back = m.from_laplace(lap.x);
  for (Eigen::Index t = 0; t < 3; ++t)
    for (Eigen::Index s = 0; s < 4; ++s) {
      if (y(t, s) == 0.0)
        CHECK(back(t, s) == 0.0);
      else
        CHECK(back(t, s) == doctest::Approx(y(t, s)).epsilon(1e-6));
    }
  Eigen::MatrixXd bad(1, 4);
  bad << -1.0, 0.0, 0.0, 0.0;
  CHECK_THROWS_AS(m.to_laplace(bad), input_error);
}

TEST_CASE("fit_zero_probability: constant and spatially varying dry fraction") {
  auto grid = make_regular_grid(6, 6, 5.0);
  Rng rng(21);

  // Constant 50% dry.
  Eigen::MatrixXd y(2500, 36);
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index s = 0; s < 36; ++s)
      y(t, s) = rng.uniform() < 0.5 ? 0.0 : 1.0 + rng.exponential();
  const auto surf = fit_zero_probability(y, grid, 36);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const double p = 1.0 / (1.0 + std::exp(-surf.evaluate(grid.site(s).pos)));
    CHECK(std::fabs(p - 0.5) < 0.02);
  }

  // Logistic surface in x recovered within a Monte-Carlo band.
  const int n = 5000;
  Eigen::MatrixXd y2(n, 36);
  for (Eigen::Index t = 0; t < n; ++t)
    for (std::size_t s = 0; s < 36; ++s) {
      const double p_true =
          1.0 / (1.0 + std::exp(-0.05 * grid.site(s).pos.x));
      y2(t, static_cast<Eigen::Index>(s)) =
          rng.uniform() < p_true ? 0.0 : 1.0 + rng.exponential();
    }
  const auto surf2 = fit_zero_probability(y2, grid, 36);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const double p_true = 1.0 / (1.0 + std::exp(-0.05 * grid.site(s).pos.x));
    const double p_hat =
        1.0 / (1.0 + std::exp(-surf2.evaluate(grid.site(s).pos)));
    const double se = std::sqrt(p_true * (1.0 - p_true) / n);
    CHECK(std::fabs(p_hat - p_true) < 4.0 * se + 0.01);
  }

  SpatialGrid two({{"a", {0, 0}, {}, {}}, {"b", {5, 0}, {}, {}}}, 5.0);
  Eigen::MatrixXd small = Eigen::MatrixXd::Zero(10, 2);
  CHECK_THROWS_AS(fit_zero_probability(small, two, 2), fit_error);
}

TEST_CASE("fit_threshold_surface recovers per-site quantiles") {
  auto grid = make_regular_grid(5, 5, 5.0);
  Rng rng(22);
  const int n = 4000;
  Eigen::MatrixXd y(n, 25);
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index s = 0; s < 25; ++s)
      y(t, s) = rng.uniform() < 0.4 ? 0.0 : rng.exponential();
  const double lambda = 0.02;
  const auto surf = fit_threshold_surface(y, lambda, grid, 25);
  // i.i.d. identical sites: the surface should sit near the common
  // theoretical quantile; tolerance twice the Monte-Carlo jitter.
  const double q_true = -std::log((lambda) / 0.6);  // P(Y>y)=0.6 exp(-y)
  for (std::size_t s = 0; s < grid.size(); ++s) {
    CHECK(std::fabs(surf.evaluate(grid.site(s).pos) - q_true) < 0.25);
  }
  CHECK_THROWS_AS(fit_threshold_surface(y, 0.7, grid, 25), config_error);
  CHECK_THROWS_AS(fit_threshold_surface(y, -0.1, grid, 25), config_error);
}

TEST_CASE("fit_gpd_surface recovers constant parameters within pooled CIs") {
  auto grid = make_regular_grid(4, 4, 5.0);
  Rng rng(23);
  const int n = 3000;
  const GpdParams truth{1.0, 0.2};
  Eigen::MatrixXd y(n, 16);
  std::vector<double> thresholds(16, 1.0);
  std::vector<double> pooled;
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index s = 0; s < 16; ++s) {
      // Half the values exceed the threshold with GPD(1, 0.2) excesses.
      if (rng.uniform() < 0.5) {
        const double e = gpd_quantile(rng.uniform(), truth);
        y(t, s) = 1.0 + e;
        pooled.push_back(e);
      } else {
        y(t, s) = rng.uniform();
      }
    }
  const auto surfaces = fit_gpd_surface(y, thresholds, grid, 16);
  const auto pooled_fit = gpd_fit(pooled);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const double ups = std::exp(surfaces.log_scale.evaluate(grid.site(s).pos));
    const double xi = surfaces.shape.evaluate(grid.site(s).pos);
    CHECK(std::fabs(ups - truth.scale) < 4.0 * pooled_fit.se_scale * 4.0);
    CHECK(std::fabs(xi - truth.shape) < 4.0 * pooled_fit.se_shape * 4.0);
  }

  // Too few exceedances in total.
  Eigen::MatrixXd tiny = Eigen::MatrixXd::Zero(1, 16);
  tiny(0, 0) = 2.0;
  CHECK_THROWS_AS(fit_gpd_surface(tiny, thresholds, grid, 16), fit_error);
}

TEST_CASE("full marginal fit on rain-like data: shapes and PIT") {
  auto grid = make_regular_grid(5, 5, 5.0);
  const auto y = rain_like(grid, 6000, 0.6, 31);
  MarginalFitConfig cfg;
  cfg.lambda = 0.01;
  cfg.knots = 25;
  const auto m = fit_marginal(y, grid, cfg);

  REQUIRE(m.n_sites() == 25);
  for (std::size_t s = 0; s < 25; ++s) {
    CHECK(m.site(s).p > 0.5);
    CHECK(m.site(s).p < 0.7);
    CHECK(m.site(s).upsilon > 0.0);
    CHECK(m.site(s).q > 0.0);
  }

  // Pooled PIT: conditional on rain, (F(y)-p)/(1-p) is uniform, so the
  // negative log survival is Exp(1); KS-test within Monte-Carlo bands.
  std::vector<double> pit;
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index s = 0; s < y.cols(); ++s)
      if (y(t, s) > 0.0) {
        const double p0 = m.site(static_cast<std::size_t>(s)).p;
        const double u = m.cdf(y(t, s), static_cast<std::size_t>(s));
        const double cond_u = clamp_prob((u - p0) / (1.0 - p0));
        pit.push_back(-std::log1p(-cond_u));
      }
  // Thin to reduce spatial dependence effects on the KS statistic.
  std::vector<double> thin;
  for (std::size_t i = 0; i < pit.size(); i += 37) thin.push_back(pit[i]);
  const double p = scex_test::ks_test_pvalue(
      thin, [](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-x); });
  CHECK(p > 0.01);
}

TEST_CASE("marginal model json round trip") {
  const auto m = toy_model(0.25, 0.02);
  const auto text = m.to_json();
  const auto back = MarginalModel::from_json(text);
  CHECK(back.lambda() == m.lambda());
  REQUIRE(back.n_sites() == m.n_sites());
  CHECK(back.site(1).p == m.site(1).p);
  CHECK(back.site(2).q == m.site(2).q);
  CHECK(back.site(3).body == m.site(3).body);
  CHECK(back.site_ids() == m.site_ids());
  CHECK_THROWS_AS(MarginalModel::from_json("{}"), std::exception);
}

TEST_CASE("invalid marginal models are rejected") {
  std::vector<SiteMarginal> sites(1);
  sites[0].p = 0.5;
  sites[0].q = 1.0;
  sites[0].upsilon = 1.0;
  sites[0].body = {0.1, 0.2};
  CHECK_THROWS_AS(MarginalModel(0.6, sites, {"a"}), config_error);  // p+lambda>=1
  sites[0].p = -0.1;
  CHECK_THROWS_AS(MarginalModel(0.01, sites, {"a"}), config_error);
  sites[0].p = 0.5;
  sites[0].upsilon = 0.0;
  CHECK_THROWS_AS(MarginalModel(0.01, sites, {"a"}), config_error);
  sites[0].upsilon = 1.0;
  sites[0].body = {0.2, 0.1};
  CHECK_THROWS_AS(MarginalModel(0.01, sites, {"a"}), config_error);
}

TEST_CASE("gpd fit recovers parameters within standard errors") {
  Rng rng(77);
  const GpdParams truth{2.0, 0.25};
  std::vector<double> sample(20000);
  for (auto& v : sample) v = gpd_quantile(rng.uniform(), truth);
  const auto fit = gpd_fit(sample);
  CHECK(std::fabs(fit.params.scale - truth.scale) < 4.0 * fit.se_scale);
  CHECK(std::fabs(fit.params.shape - truth.shape) < 4.0 * fit.se_shape);
  // Quantile round trip.
  for (double u : {0.1, 0.6, 0.99})
    CHECK(gpd_cdf(gpd_quantile(u, truth), truth) == doctest::Approx(u).epsilon(1e-10));
}
