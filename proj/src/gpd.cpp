#include "scex/gpd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scex/errors.hpp"
#include "scex/optim.hpp"
#include "scex/rng.hpp"

namespace scex {

double gpd_logpdf(double e, const GpdParams& p) {
  if (e < 0.0) return -std::numeric_limits<double>::infinity();
  const double w = e / p.scale;
  if (std::fabs(p.shape) < 1e-9)
    return -std::log(p.scale) - w;
  const double a = 1.0 + p.shape * w;
  if (a <= 0.0) return -std::numeric_limits<double>::infinity();
  return -std::log(p.scale) - (1.0 + 1.0 / p.shape) * std::log(a);
}

double gpd_pdf(double e, const GpdParams& p) { return std::exp(gpd_logpdf(e, p)); }

double gpd_survival(double e, const GpdParams& p) {
  if (e <= 0.0) return 1.0;
  const double w = e / p.scale;
  if (std::fabs(p.shape) < 1e-9) return std::exp(-w);
  const double a = 1.0 + p.shape * w;
  if (a <= 0.0) return 0.0;
  return std::pow(a, -1.0 / p.shape);
}

double gpd_cdf(double e, const GpdParams& p) { return 1.0 - gpd_survival(e, p); }

double gpd_quantile(double u, const GpdParams& p) {
  if (!(u >= 0.0 && u < 1.0)) throw input_error("gpd_quantile: u outside [0,1)");
  if (std::fabs(p.shape) < 1e-9) return -p.scale * std::log1p(-u);
  return p.scale / p.shape * (std::pow(1.0 - u, -p.shape) - 1.0);
}

GpdFit gpd_fit(const std::vector<double>& exceedances, unsigned seed) {
  if (exceedances.size() < 5)
    throw fit_error("gpd_fit: need at least 5 exceedances");
  for (const double e : exceedances)
    if (!(e >= 0.0) || !std::isfinite(e))
      throw input_error("gpd_fit: exceedances must be finite and >= 0");

  const double n = static_cast<double>(exceedances.size());
  double mean = 0.0;
  for (const double e : exceedances) mean += e;
  mean /= n;
  double var = 0.0;
  for (const double e : exceedances) var += (e - mean) * (e - mean);
  var /= std::max(1.0, n - 1.0);

  auto nll = [&](const std::vector<double>& t) {
    // t = (log scale, xi); barrier keeps xi in (-0.5, 1).
    const GpdParams p{std::exp(t[0]), t[1]};
    if (!(p.shape > -0.5 && p.shape < 1.0))
      return std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (const double e : exceedances) s -= gpd_logpdf(e, p);
    return s;
  };

  // Moment-style start plus random restarts.
  const double xi0 = std::clamp(0.5 * (1.0 - mean * mean / std::max(var, 1e-12)),
                                -0.4, 0.9);
  const double scale0 = std::max(1e-12, mean * (1.0 - xi0));

  Rng rng(derive_seed(seed, "gpd-fit"));
  NelderMeadOptions opts;
  opts.max_evaluations = 4000;
  opts.initial_step = 0.3;
  OptimResult best;
  best.f = std::numeric_limits<double>::infinity();
  for (int start = 0; start < 5; ++start) {
    std::vector<double> x0{std::log(scale0), xi0};
    if (start > 0) {
      x0[0] += 0.5 * (rng.uniform() - 0.5);
      x0[1] = std::clamp(xi0 + 0.6 * (rng.uniform() - 0.5), -0.45, 0.95);
    }
    const auto res = nelder_mead(nll, x0, opts);
    if (res.f < best.f) best = res;
  }
  if (!std::isfinite(best.f)) throw fit_error("gpd_fit: optimization failed");

  GpdFit out;
  out.params = {std::exp(best.x[0]), best.x[1]};
  out.nll = best.f;
  out.n = static_cast<int>(exceedances.size());

  // Asymptotic covariance of (scale, xi) for xi > -0.5.
  const double xi = out.params.shape, sc = out.params.scale;
  const double c = (1.0 + xi) / n;
  out.se_scale = std::sqrt(std::max(0.0, c * 2.0 * sc * sc));
  out.se_shape = std::sqrt(std::max(0.0, c * (1.0 + xi)));
  return out;
}

}  // namespace scex
