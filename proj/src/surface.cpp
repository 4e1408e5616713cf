#include "scex/surface.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "scex/errors.hpp"
#include "scex/specfun.hpp"

namespace scex {

using nlohmann::json;

namespace {

double tps_basis(double r) { return r <= 0.0 ? 0.0 : r * r * std::log(r); }

// Ridge matrix: penalize radial coefficients only, not the affine part.
Eigen::MatrixXd ridge_matrix(Eigen::Index n_cols) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n_cols, n_cols);
  r(0, 0) = 0.0;
  r(1, 1) = 0.0;
  r(2, 2) = 0.0;
  return r;
}

const std::vector<double>& lambda_grid() {
  static const std::vector<double> grid = {1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6};
  return grid;
}

}  // namespace

ThinPlateSurface::ThinPlateSurface(std::vector<Coord> knots, Eigen::VectorXd coef)
    : knots_(std::move(knots)), coef_(std::move(coef)) {
  if (coef_.size() != static_cast<Eigen::Index>(knots_.size() + 3))
    throw input_error("thin-plate surface: coefficient length mismatch");
}

double ThinPlateSurface::evaluate(const Coord& s) const {
  if (coef_.size() == 0) throw input_error("thin-plate surface: not fitted");
  double v = coef_[0] + coef_[1] * s.x + coef_[2] * s.y;
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    const double r = std::hypot(s.x - knots_[k].x, s.y - knots_[k].y);
    v += coef_[3 + k] * tps_basis(r);
  }
  return v;
}

Eigen::MatrixXd ThinPlateSurface::design(const std::vector<Coord>& points,
                                         const std::vector<Coord>& knots) {
  Eigen::MatrixXd b(points.size(), knots.size() + 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    b(i, 0) = 1.0;
    b(i, 1) = points[i].x;
    b(i, 2) = points[i].y;
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const double r =
          std::hypot(points[i].x - knots[k].x, points[i].y - knots[k].y);
      b(i, 3 + k) = tps_basis(r);
    }
  }
  return b;
}

std::string ThinPlateSurface::to_json() const {
  json j;
  json kx = json::array(), ky = json::array(), c = json::array();
  for (const auto& k : knots_) {
    kx.push_back(k.x);
    ky.push_back(k.y);
  }
  for (Eigen::Index i = 0; i < coef_.size(); ++i) c.push_back(coef_[i]);
  j["knots_x"] = std::move(kx);
  j["knots_y"] = std::move(ky);
  j["coef"] = std::move(c);
  j["penalty"] = penalty_;
  return j.dump();
}

ThinPlateSurface ThinPlateSurface::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw input_error(std::string("thin-plate surface: invalid JSON: ") + e.what());
  }
  std::vector<Coord> knots;
  const auto& kx = j.at("knots_x");
  const auto& ky = j.at("knots_y");
  for (std::size_t i = 0; i < kx.size(); ++i)
    knots.push_back({kx[i].get<double>(), ky[i].get<double>()});
  const auto& c = j.at("coef");
  Eigen::VectorXd coef(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) coef[i] = c[i].get<double>();
  ThinPlateSurface s(std::move(knots), std::move(coef));
  s.set_penalty_weight(j.value("penalty", 0.0));
  return s;
}

std::vector<Coord> select_knots(const std::vector<Coord>& sites, int max_knots) {
  if (static_cast<int>(sites.size()) <= max_knots) return sites;
  std::vector<Coord> knots;
  std::vector<double> dist(sites.size(), std::numeric_limits<double>::infinity());
  knots.push_back(sites.front());
  while (static_cast<int>(knots.size()) < max_knots) {
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const double d = std::hypot(sites[i].x - knots.back().x,
                                  sites[i].y - knots.back().y);
      dist[i] = std::min(dist[i], d);
      if (dist[i] > best) {
        best = dist[i];
        far = i;
      }
    }
    if (best <= 0.0) break;
    knots.push_back(sites[far]);
  }
  return knots;
}

ThinPlateSurface fit_ridge_surface(const std::vector<Coord>& points,
                                   const std::vector<double>& values,
                                   int max_knots, int cv_folds) {
  if (points.size() != values.size())
    throw input_error("fit_ridge_surface: size mismatch");
  if (points.size() < 3)
    throw fit_error("fit_ridge_surface: need at least 3 sites");
  const auto knots = select_knots(points, max_knots);
  const Eigen::MatrixXd b = ThinPlateSurface::design(points, knots);
  const Eigen::Map<const Eigen::VectorXd> y(values.data(),
                                            static_cast<Eigen::Index>(values.size()));
  const Eigen::MatrixXd ridge = ridge_matrix(b.cols());

  auto solve = [&](const Eigen::MatrixXd& bb, const Eigen::VectorXd& yy,
                   double lam) -> Eigen::VectorXd {
    const Eigen::MatrixXd a = bb.transpose() * bb + lam * ridge;
    return Eigen::LDLT<Eigen::MatrixXd>(a).solve(bb.transpose() * yy);
  };

  // k-fold CV over the lambda grid (interleaved fold assignment).
  double best_lam = lambda_grid().front();
  double best_score = std::numeric_limits<double>::infinity();
  const int folds = std::min<int>(cv_folds, static_cast<int>(points.size()));
  for (const double lam : lambda_grid()) {
    double score = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train, test;
      for (int i = 0; i < static_cast<int>(points.size()); ++i)
        (i % folds == f ? test : train).push_back(i);
      if (train.size() < 4) continue;
      Eigen::MatrixXd bt(train.size(), b.cols());
      Eigen::VectorXd yt(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) {
        bt.row(static_cast<Eigen::Index>(i)) = b.row(train[i]);
        yt[static_cast<Eigen::Index>(i)] = y[train[i]];
      }
      const Eigen::VectorXd c = solve(bt, yt, lam);
      for (const int i : test) {
        const double r = b.row(i).dot(c) - y[i];
        score += r * r;
      }
    }
    if (score < best_score) {
      best_score = score;
      best_lam = lam;
    }
  }

  ThinPlateSurface s(knots, solve(b, y, best_lam));
  s.set_penalty_weight(best_lam);
  return s;
}

ThinPlateSurface fit_logistic_surface(const std::vector<Coord>& points,
                                      const std::vector<double>& successes,
                                      const std::vector<double>& totals,
                                      int max_knots, int cv_folds) {
  if (points.size() != successes.size() || points.size() != totals.size())
    throw input_error("fit_logistic_surface: size mismatch");
  if (points.size() < 3)
    throw fit_error("fit_logistic_surface: need at least 3 sites");
  const auto knots = select_knots(points, max_knots);
  const Eigen::MatrixXd b = ThinPlateSurface::design(points, knots);
  const Eigen::MatrixXd ridge = ridge_matrix(b.cols());

  auto irls = [&](const std::vector<int>& rows, double lam) -> Eigen::VectorXd {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(b.cols());
    double s = 0.0, t = 0.0;
    for (const int i : rows) {
      s += successes[i];
      t += totals[i];
    }
    const double pooled = clamp_prob(s / std::max(1.0, t), 1e-6);
    beta[0] = std::log(pooled / (1.0 - pooled));
    for (int iter = 0; iter < 50; ++iter) {
      Eigen::MatrixXd a = lam * ridge;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(b.cols());
      for (const int i : rows) {
        const double eta = b.row(i).dot(beta);
        const double p = 1.0 / (1.0 + std::exp(-eta));
        const double w = std::max(totals[i] * p * (1.0 - p), 1e-10);
        const double z = eta + (successes[i] - totals[i] * p) / w;
        a.noalias() += w * b.row(i).transpose() * b.row(i);
        rhs.noalias() += w * z * b.row(i).transpose();
      }
      const Eigen::VectorXd next = Eigen::LDLT<Eigen::MatrixXd>(a).solve(rhs);
      const double delta = (next - beta).cwiseAbs().maxCoeff();
      beta = next;
      if (delta < 1e-10) break;
    }
    return beta;
  };

  std::vector<int> all(points.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  double best_lam = lambda_grid().front();
  double best_score = std::numeric_limits<double>::infinity();
  const int folds = std::min<int>(cv_folds, static_cast<int>(points.size()));
  for (const double lam : lambda_grid()) {
    double score = 0.0;  // held-out binomial deviance
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train, test;
      for (int i = 0; i < static_cast<int>(points.size()); ++i)
        (i % folds == f ? test : train).push_back(i);
      if (train.size() < 4) continue;
      const Eigen::VectorXd beta = irls(train, lam);
      for (const int i : test) {
        const double p = clamp_prob(1.0 / (1.0 + std::exp(-b.row(i).dot(beta))));
        score -= successes[i] * std::log(p) +
                 (totals[i] - successes[i]) * std::log(1.0 - p);
      }
    }
    if (score < best_score) {
      best_score = score;
      best_lam = lam;
    }
  }

  ThinPlateSurface s(knots, irls(all, best_lam));
  s.set_penalty_weight(best_lam);
  return s;
}

}  // namespace scex
