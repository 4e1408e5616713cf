#include "scex/mvn.hpp"

#include <cmath>
#include <vector>

#include "scex/errors.hpp"
#include "scex/rng.hpp"
#include "scex/specfun.hpp"

namespace scex {

namespace {

// Korobov generating vector via powers of a multiplier suited to the sample
// count; adequate for the moderate dimensions capped by the callers.
std::vector<double> korobov_point(std::uint64_t i, std::uint64_t n,
                                  std::uint64_t mult, int dim) {
  std::vector<double> z(dim);
  std::uint64_t g = 1;
  for (int j = 0; j < dim; ++j) {
    z[j] = static_cast<double>((i * g) % n) / static_cast<double>(n);
    g = (g * mult) % n;
  }
  return z;
}

}  // namespace

MvnResult mvn_cdf(const Eigen::VectorXd& upper, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov, int n_samples, int n_shifts,
                  std::uint64_t seed) {
  const int d = static_cast<int>(upper.size());
  if (mean.size() != d || cov.rows() != d || cov.cols() != d)
    throw input_error("mvn_cdf: dimension mismatch");

  MvnResult out;
  if (d == 0) {
    out.value = 1.0;
    return out;
  }
  Eigen::VectorXd b = upper - mean;
  if (d == 1) {
    out.value = norm_cdf(b[0] / std::sqrt(cov(0, 0)));
    return out;
  }
  if (d == 2) {
    const double s1 = std::sqrt(cov(0, 0));
    const double s2 = std::sqrt(cov(1, 1));
    const double rho = cov(0, 1) / (s1 * s2);
    out.value = bvn_cdf(b[0] / s1, b[1] / s2, rho);
    return out;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += 1e-10;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
      throw numeric_error("mvn_cdf: covariance not positive definite");
  }
  Eigen::MatrixXd L = llt.matrixL();

  // Genz transform: sequentially condition each coordinate; integrate the
  // resulting unit-cube function with a shifted lattice rule.
  const std::uint64_t n = static_cast<std::uint64_t>(n_samples);
  const std::uint64_t mult = 1571;  // primitive-ish multiplier, fine for d<=64
  Rng shift_rng(derive_seed(seed, "mvn-shift"));

  std::vector<double> shift(d - 1);
  double sum = 0.0, sumsq = 0.0;
  for (int rep = 0; rep < n_shifts; ++rep) {
    for (auto& s : shift) s = shift_rng.uniform();
    double acc = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::vector<double> w = korobov_point(i + 1, n, mult, d - 1);
      for (int j = 0; j < d - 1; ++j) {
        w[j] += shift[j];
        if (w[j] >= 1.0) w[j] -= 1.0;
      }
      double prob = 1.0;
      std::vector<double> y(d, 0.0);
      for (int k = 0; k < d; ++k) {
        double shifted = b[k];
        for (int j = 0; j < k; ++j) shifted -= L(k, j) * y[j];
        const double ek = norm_cdf(shifted / L(k, k));
        prob *= ek;
        if (prob <= 0.0) break;
        if (k < d - 1) {
          const double u = clamp_prob(w[k] * ek);
          y[k] = norm_quantile(u);
        }
      }
      acc += prob;
    }
    const double est = acc / static_cast<double>(n);
    sum += est;
    sumsq += est * est;
  }
  out.value = sum / n_shifts;
  const double var =
      std::max(0.0, (sumsq / n_shifts - out.value * out.value) / (n_shifts - 1));
  out.std_error = std::sqrt(var);
  return out;
}

}  // namespace scex
