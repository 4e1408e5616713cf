#pragma once

// Generalized Pareto distribution for threshold exceedances: density,
// distribution, quantile, and maximum-likelihood fitting.

#include <vector>

namespace scex {

struct GpdParams {
  double scale = 1.0;  // upsilon > 0
  double shape = 0.0;  // xi
};

// All functions take the exceedance e = y - threshold >= 0.
double gpd_pdf(double e, const GpdParams& p);
double gpd_logpdf(double e, const GpdParams& p);
double gpd_cdf(double e, const GpdParams& p);
double gpd_survival(double e, const GpdParams& p);
double gpd_quantile(double u, const GpdParams& p);  // u in [0,1)

struct GpdFit {
  GpdParams params;
  double nll = 0.0;
  int n = 0;
  // Approximate standard errors from the ML asymptotic covariance.
  double se_scale = 0.0;
  double se_shape = 0.0;
};

// ML fit on exceedances with xi constrained to (-0.5, 1); quasi-Newton on the
// (log scale, xi) parameterization with random restarts.
GpdFit gpd_fit(const std::vector<double>& exceedances, unsigned seed = 1);

}  // namespace scex
