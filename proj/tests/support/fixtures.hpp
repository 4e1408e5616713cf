#pragma once

// Shared test fixtures: the published East-Anglia dependence parameter set
// and small synthetic helpers.

#include "scex/dependence.hpp"

namespace scex_test {

// Fitted AI-model parameter point used across recovery and diagnostic tests;
// mirrors data/table_s1.json.
inline scex::DependenceParams table_s1() {
  scex::DependenceParams p;
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
  p.variant = scex::DependenceVariant::AI;
  return p;
}

}  // namespace scex_test
