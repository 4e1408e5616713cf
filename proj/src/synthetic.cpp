#include "scex/synthetic.hpp"

#include <cmath>

#include "scex/errors.hpp"
#include "scex/simulation.hpp"
#include "scex/specfun.hpp"

namespace scex {

MarginalModel make_synthetic_marginal(const SpatialGrid& grid,
                                      const SyntheticMarginalSpec& spec) {
  if (!(spec.p_zero >= 0.0 && spec.p_zero < 1.0))
    throw config_error("synthetic marginal: p_zero outside [0,1)");
  if (!(spec.p_zero + spec.lambda < 1.0))
    throw config_error("synthetic marginal: requires p_zero + lambda < 1");
  if (spec.body_points < 10)
    throw config_error("synthetic marginal: body_points too small");

  // Exponential body scaled so its quantile at the body level of the
  // threshold equals the threshold itself.
  const double body_level =
      (1.0 - spec.lambda - spec.p_zero) / (1.0 - spec.p_zero);
  const double scale = spec.threshold / (-std::log1p(-body_level));
  std::vector<double> body(spec.body_points);
  const double n = static_cast<double>(spec.body_points);
  for (int r = 0; r < spec.body_points; ++r) {
    const double u = (static_cast<double>(r) + 0.5) / n;
    body[r] = -scale * std::log1p(-u);
  }

  std::vector<SiteMarginal> sites(grid.size());
  std::vector<std::string> ids(grid.size());
  for (std::size_t s = 0; s < grid.size(); ++s) {
    sites[s].p = spec.p_zero;
    sites[s].q = spec.threshold;
    sites[s].upsilon = spec.gpd_scale;
    sites[s].xi = spec.gpd_shape;
    sites[s].body = body;
    ids[s] = grid.site(s).id;
  }
  return MarginalModel(spec.lambda, std::move(sites), std::move(ids));
}

Eigen::MatrixXd generate_synthetic(const SpatialGrid& grid,
                                   const DependenceParams& psi,
                                   const MarginalModel& marginal,
                                   const SyntheticDataConfig& cfg) {
  if (cfg.n_time < 1) throw config_error("generate_synthetic: n_time must be >= 1");
  if (!(cfg.p_exc >= 0.0 && cfg.p_exc <= 1.0))
    throw config_error("generate_synthetic: p_exc outside [0,1]");
  if (marginal.n_sites() != grid.size())
    throw input_error("generate_synthetic: marginal/grid mismatch");

  if (!(cfg.body_quantile > 0.0 && cfg.body_quantile <= cfg.v_quantile))
    throw config_error("generate_synthetic: body_quantile must lie in (0, v_quantile]");
  const double fl_v = cfg.body_quantile;
  const std::size_t d = grid.size();

  // Which time points carry model extreme events.
  Rng kind_rng(derive_seed(cfg.seed, "synth-kind"));
  std::vector<std::uint8_t> is_event(cfg.n_time);
  std::size_t n_events = 0;
  for (int t = 0; t < cfg.n_time; ++t) {
    is_event[t] = kind_rng.uniform() < cfg.p_exc ? 1 : 0;
    n_events += is_event[t];
  }

  EventArchive events;
  if (n_events > 0) {
    SimulateConfig sim_cfg;
    sim_cfg.n = n_events;
    sim_cfg.v_quantile = cfg.v_quantile;
    sim_cfg.oversample = cfg.oversample;
    sim_cfg.seed = derive_seed(cfg.seed, "synth-events");
    sim_cfg.scale = FieldScale::Data;
    events = simulate_events(psi, marginal, grid, sim_cfg);
  }

  Eigen::MatrixXd out(cfg.n_time, static_cast<Eigen::Index>(d));
  Rng body_rng(derive_seed(cfg.seed, "synth-body"));
  Eigen::Index next_event = 0;
  for (int t = 0; t < cfg.n_time; ++t) {
    if (is_event[t]) {
      out.row(t) = events.fields.row(next_event++);
      continue;
    }
    // Independent body field: exact zero probability, values kept below the
    // conditioning level by mapping the positive part into (p, F_L(v)).
    for (std::size_t s = 0; s < d; ++s) {
      const double p = marginal.site(s).p;
      const double u = body_rng.uniform_open();
      if (u <= p) {
        out(t, static_cast<Eigen::Index>(s)) = 0.0;
      } else {
        const double u_body = p + (u - p) * (fl_v - p) / (1.0 - p);
        out(t, static_cast<Eigen::Index>(s)) = marginal.quantile(u_body, s);
      }
    }
  }
  return out;
}

DependenceParams reference_dependence_params() {
  DependenceParams p;
  p.kappa_alpha1 = 1.95;
  p.kappa_alpha2 = 0.73;
  p.delta_ad_range = 0.0;
  p.kappa_beta1 = 38.58;
  p.kappa_beta2 = 1.02;
  p.kappa_beta3 = 1.0;
  p.kappa_mu1 = 0.65;
  p.kappa_mu2 = 0.28;
  p.kappa_mu3 = 140.0;
  p.kappa_sigma1 = 34.22;
  p.kappa_sigma2 = 0.89;
  p.kappa_delta1 = 0.43;
  p.kappa_delta2 = 0.46;
  p.kappa_delta3 = 142.14;
  p.kappa_delta4 = 1.0;
  p.kappa_rho1 = 58.71;
  p.kappa_rho2 = 0.53;
  p.aniso.theta = -0.18;
  p.aniso.stretch = 0.93;
  p.variant = DependenceVariant::AI;
  return p;
}

}  // namespace scex
