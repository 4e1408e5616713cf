#pragma once

// Scalar special functions used across the library: Gaussian and Laplace
// distribution functions, the regularized incomplete gamma function and its
// inverse, the modified Bessel function K_nu, and the bivariate Gaussian CDF.

namespace scex {

// Standard Gaussian density, CDF, log CDF and quantile.
double norm_pdf(double x);
double norm_cdf(double x);
double norm_logcdf(double x);
// Wichura's AS241 algorithm, |error| < 1e-15 over (0,1).
double norm_quantile(double p);

// Standard Laplace distribution (density 0.5*exp(-|x|)).
double laplace_cdf(double x);
double laplace_quantile(double p);

// Regularized lower incomplete gamma P(a,x) and upper Q(a,x); a > 0, x >= 0.
double gammainc_p(double a, double x);
double gammainc_q(double a, double x);
// Inverse of P(a,.) : returns x with P(a,x) = p.
double gammainc_p_inv(double a, double p);
// Inverse of Q(a,.) : returns x with Q(a,x) = q; well conditioned for small q.
double gammainc_q_inv(double a, double q);

// Modified Bessel function of the second kind K_nu(x) for real nu >= 0, x > 0.
// Temme's series for small x, steed/CF2 for large x; relative error <= 1e-10.
double bessel_k(double nu, double x);

// P(X1 <= h, X2 <= k) for standard bivariate Gaussian with correlation rho.
double bvn_cdf(double h, double k, double rho);

// Clamp a probability into [eps, 1-eps] before quantile transforms.
double clamp_prob(double u, double eps = 1e-12);

}  // namespace scex
