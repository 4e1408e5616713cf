#pragma once

// Derivative-free and quasi-Newton minimizers used by the fitting routines.

#include <functional>
#include <vector>

namespace scex {

struct OptimResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

struct NelderMeadOptions {
  int max_evaluations = 20000;
  double f_tol_rel = 1e-8;    // relative spread of simplex values
  double x_tol_abs = 1e-9;    // simplex diameter
  double initial_step = 0.1;  // per-coordinate simplex edge (absolute)
  int restarts = 0;           // re-seed simplex at best point this many times
};

// Nelder-Mead with the Gao-Han adaptive coefficients. Non-finite objective
// values are treated as +inf (rejected points).
OptimResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                        std::vector<double> x0, const NelderMeadOptions& opts = {});

struct LbfgsOptions {
  int max_iterations = 500;
  int history = 8;
  double g_tol = 1e-7;   // max-norm of gradient
  double f_tol_rel = 1e-12;
};

// L-BFGS with backtracking Armijo line search. `fg` returns f and fills grad.
OptimResult lbfgs(
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& fg,
    std::vector<double> x0, const LbfgsOptions& opts = {});

}  // namespace scex
