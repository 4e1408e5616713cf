#include "scex/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace scex {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double guarded(const std::function<double(const std::vector<double>&)>& f,
               const std::vector<double>& x, int& evals) {
  ++evals;
  const double v = f(x);
  return std::isfinite(v) ? v : kInf;
}
}  // namespace

OptimResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                        std::vector<double> x0, const NelderMeadOptions& opts) {
  const std::size_t n = x0.size();
  const double dn = static_cast<double>(n);
  // Gao-Han adaptive coefficients.
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / dn;
  const double gamma = 0.75 - 0.5 / dn;
  const double delta = 1.0 - 1.0 / dn;

  OptimResult res;
  int evals = 0;

  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  // Alternating step signs keep the seed simplex centred; one-sided seeding
  // leaves a directional push on flat ridges that never gets corrected.
  auto seed_simplex = [&](const std::vector<double>& centre) {
    for (std::size_t i = 0; i <= n; ++i) {
      simplex[i] = centre;
      if (i > 0) {
        const double sign = (i % 2 == 0) ? -1.0 : 1.0;
        simplex[i][i - 1] +=
            sign * opts.initial_step * std::max(1.0, std::fabs(centre[i - 1]));
      }
      fv[i] = guarded(f, simplex[i], evals);
    }
  };
  seed_simplex(x0);

  int restarts_left = opts.restarts;
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);

  while (evals < opts.max_evaluations) {
    // Order the simplex.
    std::vector<std::size_t> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = idx[0], worst = idx[n], second = idx[n - 1];

    // Convergence: relative value spread and simplex diameter.
    const double fspread = std::fabs(fv[worst] - fv[best]);
    const double fscale = std::max(1.0, std::fabs(fv[best]));
    double diam = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        diam = std::max(diam, std::fabs(simplex[i][j] - simplex[best][j]));
    if ((fspread <= opts.f_tol_rel * fscale && diam <= 1e-4) ||
        diam <= opts.x_tol_abs) {
      if (restarts_left > 0 && evals < opts.max_evaluations) {
        --restarts_left;
        std::vector<double> b = simplex[best];
        seed_simplex(b);
        continue;
      }
      res.converged = true;
      break;
    }

    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i <= n; ++i)
        if (i != worst) s += simplex[i][j];
      centroid[j] = s / dn;
    }

    for (std::size_t j = 0; j < n; ++j)
      xr[j] = centroid[j] + alpha * (centroid[j] - simplex[worst][j]);
    const double fr = guarded(f, xr, evals);

    if (fr < fv[best]) {
      for (std::size_t j = 0; j < n; ++j)
        xe[j] = centroid[j] + beta * (xr[j] - centroid[j]);
      const double fe = guarded(f, xe, evals);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      if (outside) {
        for (std::size_t j = 0; j < n; ++j)
          xc[j] = centroid[j] + gamma * (xr[j] - centroid[j]);
      } else {
        for (std::size_t j = 0; j < n; ++j)
          xc[j] = centroid[j] - gamma * (centroid[j] - simplex[worst][j]);
      }
      const double fc = guarded(f, xc, evals);
      if (fc < std::min(fr, fv[worst])) {
        simplex[worst] = xc;
        fv[worst] = fc;
      } else {
        // Shrink toward the best vertex.
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t j = 0; j < n; ++j)
            simplex[i][j] =
                simplex[best][j] + delta * (simplex[i][j] - simplex[best][j]);
          fv[i] = guarded(f, simplex[i], evals);
        }
      }
    }
    ++res.iterations;
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  res.x = simplex[best];
  res.f = fv[best];
  res.evaluations = evals;
  return res;
}

OptimResult lbfgs(
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& fg,
    std::vector<double> x0, const LbfgsOptions& opts) {
  const std::size_t n = x0.size();
  OptimResult res;
  std::vector<double> x = std::move(x0), g(n), xn(n), gn(n);
  double fx = fg(x, g);
  ++res.evaluations;

  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;

  auto maxnorm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (const double t : v) m = std::max(m, std::fabs(t));
    return m;
  };

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (maxnorm(g) <= opts.g_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    std::vector<double> q = g;
    const int m = static_cast<int>(s_hist.size());
    std::vector<double> a(m);
    for (int i = m - 1; i >= 0; --i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += s_hist[i][j] * q[j];
      a[i] = rho_hist[i] * dot;
      for (std::size_t j = 0; j < n; ++j) q[j] -= a[i] * y_hist[i][j];
    }
    double h0 = 1.0;
    if (m > 0) {
      double sy = 0.0, yy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        sy += s_hist[m - 1][j] * y_hist[m - 1][j];
        yy += y_hist[m - 1][j] * y_hist[m - 1][j];
      }
      if (yy > 0.0) h0 = sy / yy;
    }
    for (double& qj : q) qj *= h0;
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y_hist[i][j] * q[j];
      const double b = rho_hist[i] * dot;
      for (std::size_t j = 0; j < n; ++j) q[j] += s_hist[i][j] * (a[i] - b);
    }
    // q is the descent direction (for -q); Armijo backtracking.
    double dg = 0.0;
    for (std::size_t j = 0; j < n; ++j) dg -= q[j] * g[j];
    if (dg >= 0.0) {  // not a descent direction; reset
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      q = g;
      dg = 0.0;
      for (std::size_t j = 0; j < n; ++j) dg -= g[j] * g[j];
    }
    double step = 1.0;
    double fn = fx;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (std::size_t j = 0; j < n; ++j) xn[j] = x[j] - step * q[j];
      fn = fg(xn, gn);
      ++res.evaluations;
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * dg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = xn[j] - x[j];
      y[j] = gn[j] - g[j];
    }
    double sy = 0.0;
    for (std::size_t j = 0; j < n; ++j) sy += s[j] * y[j];
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    const double df = std::fabs(fx - fn);
    x.swap(xn);
    g.swap(gn);
    fx = fn;
    ++res.iterations;
    if (df <= opts.f_tol_rel * std::max(1.0, std::fabs(fx))) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.f = fx;
  return res;
}

}  // namespace scex
