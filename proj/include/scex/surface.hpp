#pragma once

// Thin-plate radial-basis surfaces with ridge penalty, shared by the
// marginal model's smooth parameter fields. The penalty weight is chosen by
// k-fold cross-validation over a log-spaced grid.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "scex/grid.hpp"

namespace scex {

class ThinPlateSurface {
 public:
  ThinPlateSurface() = default;
  ThinPlateSurface(std::vector<Coord> knots, Eigen::VectorXd coef);

  double evaluate(const Coord& s) const;
  const std::vector<Coord>& knots() const { return knots_; }
  const Eigen::VectorXd& coef() const { return coef_; }
  double penalty_weight() const { return penalty_; }
  void set_penalty_weight(double w) { penalty_ = w; }

  // Rows of [1, x, y, phi(|s - knot_1|), ...] for each point.
  static Eigen::MatrixXd design(const std::vector<Coord>& points,
                                const std::vector<Coord>& knots);

  std::string to_json() const;
  static ThinPlateSurface from_json(const std::string& text);

 private:
  std::vector<Coord> knots_;
  Eigen::VectorXd coef_;  // intercept, x, y, then one weight per knot
  double penalty_ = 0.0;
};

// Deterministic farthest-point knot subset of at most `max_knots` sites.
std::vector<Coord> select_knots(const std::vector<Coord>& sites, int max_knots);

// Penalized least squares with ridge on the radial coefficients; lambda
// chosen by k-fold CV on prediction squared error.
ThinPlateSurface fit_ridge_surface(const std::vector<Coord>& points,
                                   const std::vector<double>& values,
                                   int max_knots, int cv_folds = 5);

// Penalized binomial logistic fit (IRLS); values are per-point success
// counts out of totals. Returns the surface on the logit scale.
ThinPlateSurface fit_logistic_surface(const std::vector<Coord>& points,
                                      const std::vector<double>& successes,
                                      const std::vector<double>& totals,
                                      int max_knots, int cv_folds = 5);

}  // namespace scex
