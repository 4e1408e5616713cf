#include "scex/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "scex/errors.hpp"
#include "scex/marginal.hpp"

namespace scex {

namespace {

// Per-site empirical q-quantile thresholds (plotting-position convention).
std::vector<double> site_thresholds(const Eigen::MatrixXd& fields, double q) {
  std::vector<double> thr(fields.cols());
  for (Eigen::Index s = 0; s < fields.cols(); ++s) {
    std::vector<double> col(fields.rows());
    for (Eigen::Index t = 0; t < fields.rows(); ++t) col[t] = fields(t, s);
    std::sort(col.begin(), col.end());
    thr[static_cast<std::size_t>(s)] = plotting_position_quantile(col, q);
  }
  return thr;
}

}  // namespace

double chi_q_pair(const Eigen::MatrixXd& fields, Eigen::Index site_a,
                  Eigen::Index site_b, double q) {
  if (!(q > 0.0 && q < 1.0)) throw input_error("chi_q: q outside (0,1)");
  const auto thr = site_thresholds(fields, q);
  int cond = 0, joint = 0;
  for (Eigen::Index t = 0; t < fields.rows(); ++t) {
    if (fields(t, site_a) > thr[static_cast<std::size_t>(site_a)]) {
      ++cond;
      if (fields(t, site_b) > thr[static_cast<std::size_t>(site_b)]) ++joint;
    }
  }
  if (cond == 0) throw numeric_error("chi_q: no conditioning exceedances");
  return static_cast<double>(joint) / static_cast<double>(cond);
}

ChiEstimate chi_q_binned(const Eigen::MatrixXd& fields, const SpatialGrid& grid,
                         const AnisotropyParams& aniso, double q, double bin_km) {
  if (!(q > 0.0 && q < 1.0)) throw input_error("chi_q: q outside (0,1)");
  if (static_cast<std::size_t>(fields.cols()) != grid.size())
    throw input_error("chi_q: fields/grid mismatch");
  const auto thr = site_thresholds(fields, q);

  double h_max = 0.0;
  for (std::size_t a = 0; a < grid.size(); ++a)
    for (std::size_t b = a + 1; b < grid.size(); ++b)
      h_max = std::max(h_max, grid.distance(a, b, aniso));
  const int n_bins = static_cast<int>(std::ceil(h_max / bin_km)) + 1;
  std::vector<long> cond(n_bins, 0), joint(n_bins, 0);

  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t b = 0; b < grid.size(); ++b) {
      if (a == b) continue;
      const int bin = static_cast<int>(grid.distance(a, b, aniso) / bin_km);
      for (Eigen::Index t = 0; t < fields.rows(); ++t) {
        if (fields(t, static_cast<Eigen::Index>(a)) > thr[a]) {
          ++cond[bin];
          if (fields(t, static_cast<Eigen::Index>(b)) > thr[b]) ++joint[bin];
        }
      }
    }
  }

  ChiEstimate out;
  out.q = q;
  out.source = "empirical";
  for (int b = 0; b < n_bins; ++b) {
    if (cond[b] == 0 && joint[b] == 0 && b + 1 == n_bins) break;
    out.bin_left.push_back(b * bin_km);
    out.n_cond.push_back(static_cast<int>(cond[b]));
    if (cond[b] == 0) {
      out.defined.push_back(0);
      out.chi.push_back(0.0);
      out.std_error.push_back(0.0);
    } else {
      const double c = static_cast<double>(joint[b]) / static_cast<double>(cond[b]);
      out.defined.push_back(1);
      out.chi.push_back(c);
      out.std_error.push_back(
          std::sqrt(std::max(c * (1.0 - c), 1e-12) / static_cast<double>(cond[b])));
    }
  }
  return out;
}

ChiEstimate chi_zero(const Eigen::MatrixXd& fields, const SpatialGrid& grid,
                     const AnisotropyParams& aniso, std::size_t cond_site,
                     double q, double bin_km) {
  if (!(q > 0.0 && q < 1.0)) throw input_error("chi_zero: q outside (0,1)");
  if (static_cast<std::size_t>(fields.cols()) != grid.size())
    throw input_error("chi_zero: fields/grid mismatch");
  if (cond_site >= grid.size())
    throw input_error("chi_zero: conditioning site out of range");

  // Threshold at the conditioning site only; chi0 asks for zeros elsewhere.
  std::vector<double> col(fields.rows());
  for (Eigen::Index t = 0; t < fields.rows(); ++t)
    col[t] = fields(t, static_cast<Eigen::Index>(cond_site));
  std::sort(col.begin(), col.end());
  const double thr = plotting_position_quantile(col, q);

  std::vector<int> times;
  for (Eigen::Index t = 0; t < fields.rows(); ++t)
    if (fields(t, static_cast<Eigen::Index>(cond_site)) > thr)
      times.push_back(static_cast<int>(t));
  if (times.empty()) throw numeric_error("chi_zero: no conditioning exceedances");

  double h_max = 0.0;
  for (std::size_t s = 0; s < grid.size(); ++s)
    h_max = std::max(h_max, grid.distance(cond_site, s, aniso));
  const int n_bins = static_cast<int>(std::ceil(h_max / bin_km)) + 1;
  std::vector<long> total(n_bins, 0), zeros(n_bins, 0);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    if (s == cond_site) continue;
    const int bin = static_cast<int>(grid.distance(cond_site, s, aniso) / bin_km);
    for (const int t : times) {
      ++total[bin];
      if (fields(t, static_cast<Eigen::Index>(s)) == 0.0) ++zeros[bin];
    }
  }

  ChiEstimate out;
  out.q = q;
  out.source = "empirical";
  for (int b = 0; b < n_bins; ++b) {
    if (total[b] == 0 && b + 1 == n_bins) break;
    out.bin_left.push_back(b * bin_km);
    out.n_cond.push_back(static_cast<int>(total[b]));
    if (total[b] == 0) {
      out.defined.push_back(0);
      out.chi.push_back(0.0);
      out.std_error.push_back(0.0);
    } else {
      const double c = static_cast<double>(zeros[b]) / static_cast<double>(total[b]);
      out.defined.push_back(1);
      out.chi.push_back(c);
      out.std_error.push_back(
          std::sqrt(std::max(c * (1.0 - c), 1e-12) / static_cast<double>(total[b])));
    }
  }
  return out;
}

DependenceFitReport dependence_fit_report(
    const std::optional<DependenceParams>& psi_ai,
    const std::optional<DependenceParams>& psi_ad,
    const std::vector<FreeFitRow>& free_fits, const std::vector<double>& h_grid,
    const std::optional<ChiEstimate>& model_chi) {
  if (!psi_ai && !psi_ad)
    throw input_error("dependence_fit_report: no fitted parameters supplied");
  DependenceFitReport out;
  out.h_grid = h_grid;
  auto curves = [&](const DependenceParams& psi) {
    std::vector<DependenceCurveRow> rows;
    for (const double h : h_grid) {
      DependenceCurveRow r;
      r.h = h;
      r.alpha = psi.alpha(h);
      r.beta = psi.beta(h);
      r.mu = psi.mu(h);
      r.sigma = psi.sigma(h);
      r.delta = psi.delta(h);
      r.rho = psi.rho(h);
      rows.push_back(r);
    }
    return rows;
  };
  if (psi_ai) out.ai = curves(*psi_ai);
  if (psi_ad) out.ad = curves(*psi_ad);
  out.free_fits = free_fits;
  out.model_chi = model_chi;
  return out;
}

}  // namespace scex
