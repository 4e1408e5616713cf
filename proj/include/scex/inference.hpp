#pragma once

// Censored triplewise pseudo-likelihood for the dependence model: stratified
// triple sampling, the censored bivariate residual density, the likelihood
// evaluator, optimization of the parameter vector, free pairwise fits, and
// the parametric-bootstrap recovery study.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scex/dependence.hpp"
#include "scex/grid.hpp"
#include "scex/marginal.hpp"
#include "scex/rng.hpp"

namespace scex {

struct Triple {
  std::uint32_t i = 0;  // conditioning site
  std::uint32_t j = 0;  // partner pair, j < k, both != i
  std::uint32_t k = 0;
};

struct TripleSample {
  std::vector<Triple> triples;
  double h_max = 0.0;
  std::uint64_t seed = 0;
};

// Number of distinct feasible triples (i; {j,k}) with both partners within
// h_max of the conditioning site.
std::uint64_t feasible_triple_count(const SpatialGrid& grid,
                                    const AnisotropyParams& aniso, double h_max);

// Stratified sampling: uniform conditioning site, then a without-replacement
// partner pair among its h_max-neighbours; duplicates rejected by canonical
// key. Deterministic under the rng state.
TripleSample sample_triples(const SpatialGrid& grid, const AnisotropyParams& aniso,
                            std::size_t d_s, double h_max, Rng& rng);

// Same scheme with the conditioning site fixed (single-site studies).
TripleSample sample_triples_at(const SpatialGrid& grid,
                               const AnisotropyParams& aniso, std::size_t cond_site,
                               std::size_t d_s, double h_max, Rng& rng);

struct ConditioningSet {
  double u = 0.0;                        // Laplace-scale threshold
  std::vector<std::vector<int>> times;   // exceedance time indices per site
};
ConditioningSet build_conditioning_set(const LaplaceField& data, double u);

// Censored residual for one site given the conditioning value (Eq-13 form):
// uncensored values are normalized, censored cells carry the transformed
// censoring bound.
struct Residual {
  double z = 0.0;
  bool censored = false;
};
Residual compute_residual(double x_j, bool censored_j, double x_i, double h,
                          double censor_j, const DependenceParams& psi);

// Censored bivariate residual density/mass (the four-branch form): density
// when both coordinates are observed, conditional Gaussian CDF for one
// censored coordinate, bivariate Gaussian CDF for two.
struct PairObservation {
  double z1 = 0.0;
  double z2 = 0.0;
  bool censored1 = false;
  bool censored2 = false;
};
double log_censored_pair_density(const PairObservation& obs, const DeltaLaplace& dl1,
                                 const DeltaLaplace& dl2, double rho_cond);
double censored_pair_density(const PairObservation& obs, const DeltaLaplace& dl1,
                             const DeltaLaplace& dl2, double rho_cond);

// Precomputed likelihood evaluator. Gathers per-(conditioning site, partner)
// data arrays once; negative_log() re-derives all distance-indexed model
// quantities from psi (theta and L move distances around during fitting).
class PseudoLikelihood {
 public:
  PseudoLikelihood(const LaplaceField& data, const SpatialGrid& grid,
                   TripleSample triples, double u);

  // Full censored triplewise NLL; terms accumulate in fixed triple order
  // with pairwise reduction, so results are thread-count independent.
  double negative_log(const DependenceParams& psi) const;

  // Initializer objective: residual-independence NLL over the unique legs
  // (no copula factor); used to stage the optimization.
  double negative_log_independent(const DependenceParams& psi) const;

  std::size_t n_terms() const { return n_terms_; }
  const TripleSample& triples() const { return sample_; }

 private:
  struct Leg {
    std::uint32_t cond = 0;     // conditioning site index
    std::uint32_t site = 0;     // partner site index
    double censor = 0.0;        // c(site)
    std::vector<double> x;      // partner values at the conditioning times
    std::vector<std::uint8_t> cens;
  };
  struct TripleRef {
    std::uint32_t leg_j = 0;
    std::uint32_t leg_k = 0;
    std::uint32_t cond = 0;
  };

  const SpatialGrid* grid_;
  TripleSample sample_;
  double u_ = 0.0;
  std::vector<Leg> legs_;
  std::vector<TripleRef> refs_;
  std::vector<std::vector<double>> cond_x_;      // x_t(s_i) per unique cond site
  std::vector<std::vector<double>> cond_logx_;
  std::vector<std::uint32_t> cond_site_of_;      // unique cond index -> grid site
  std::vector<std::uint32_t> leg_cond_slot_;     // leg -> unique cond index
  std::size_t n_terms_ = 0;

  friend class LegWorkspace;
};

// Dependence-parameter fitting configuration. Fixed components hold the
// values given here; free components are optimized on an unconstrained scale.
struct DependenceFitConfig {
  double q_u = 0.98;          // Laplace quantile defining the threshold u
  std::size_t d_s = 5000;
  double h_max = 28.0;
  DependenceVariant variant = DependenceVariant::AI;
  bool fix_delta_range = true;      // Delta = delta_range_value
  bool fix_kappa_beta3 = true;      // kappa_beta3 = kappa_beta3_value
  bool fix_kappa_delta4 = true;     // kappa_delta4 = kappa_delta4_value
  double delta_range_value = 0.0;
  double kappa_beta3_value = 1.0;
  double kappa_delta4_value = 1.0;
  std::uint64_t seed = 1;
  int multi_starts = 3;
  int max_evaluations = 4000;       // per Nelder-Mead run on the full NLL
  double f_tol_rel = 3e-8;          // relative NLL tolerance for convergence
  std::optional<DependenceParams> init;  // optional explicit starting point
};

struct FitResult {
  DependenceParams psi;
  double nll = 0.0;
  bool converged = false;
  int evaluations = 0;
  double elapsed_seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_triples = 0;
  std::size_t n_terms = 0;
};

// Map between DependenceParams and the unconstrained optimization vector.
// Positive parameters move on a log scale, kappa_beta3 on a logit scale,
// theta on a scaled logit over [-pi/2, 0], kappa_delta4 through 1-exp(-t).
class ParamTransform {
 public:
  enum class Subset { All, NoCorrelation, CorrelationOnly };

  ParamTransform(const DependenceFitConfig& cfg, const DependenceParams& fixed,
                 Subset subset = Subset::All);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::vector<double> to_vector(const DependenceParams& psi) const;
  DependenceParams to_params(const std::vector<double>& v) const;

 private:
  std::vector<std::string> names_;
  DependenceParams base_;
};

// Values of the named parameters from a parameter struct (fit reports).
std::vector<double> param_values(const DependenceParams& psi,
                                 const std::vector<std::string>& names);

FitResult fit_dependence(const LaplaceField& data, const SpatialGrid& grid,
                         const DependenceFitConfig& cfg);
FitResult fit_dependence_with_triples(const LaplaceField& data,
                                      const SpatialGrid& grid,
                                      const TripleSample& triples,
                                      const DependenceFitConfig& cfg);

// Free pairwise estimates at one conditioning site: independent per-site ML
// fits of (alpha, beta, mu, sigma, delta) under residual independence.
struct FreePairwiseConfig {
  double q_u = 0.98;
  int min_exceedances = 20;
  DependenceVariant variant = DependenceVariant::AI;
  int max_evaluations = 3000;
};
struct FreeFitRow {
  std::string site_id;
  double h = 0.0;
  double alpha = 0.0, beta = 0.0, mu = 0.0, sigma = 0.0, delta = 1.0;
};
std::vector<FreeFitRow> fit_free_pairwise(const LaplaceField& data,
                                          const SpatialGrid& grid,
                                          std::size_t cond_site,
                                          const AnisotropyParams& aniso,
                                          const FreePairwiseConfig& cfg);

// Parametric bootstrap recovery study: simulate conditional fields at a
// fixed central conditioning site from psi0, refit, and summarize the
// componentwise relative error of the estimator.
struct BootstrapConfig {
  int reps = 50;
  int n_fields = 1000;
  std::size_t d_s = 1000;
  double h_max = 28.0;
  double q_u = 0.98;
  std::uint64_t seed = 1;
  int multi_starts = 1;
  int max_evaluations = 1600;
  std::string checkpoint_dir;  // per-rep JSON results; resumes when non-empty
};
struct BootstrapSummary {
  std::vector<std::string> names;       // free parameter names
  std::vector<double> truth;
  std::vector<std::vector<double>> rel_errors;  // [rep][component]
  std::vector<double> median_rel_error;
  std::vector<double> lo_rel_error;     // 2.5%
  std::vector<double> hi_rel_error;     // 97.5%
  int failed_reps = 0;
};
BootstrapSummary parametric_bootstrap(const DependenceParams& psi0,
                                      const MarginalModel& marginal,
                                      const SpatialGrid& grid,
                                      std::size_t cond_site,
                                      const BootstrapConfig& cfg);

// Multivariate censored conditional CDF: margins are listed censored-first;
// sigma is the conditioned copula correlation over the same ordering.
double multivariate_censored_cdf(const std::vector<double>& censored_bounds,
                                 const std::vector<double>& observed_values,
                                 const std::vector<DeltaLaplace>& margins,
                                 const Eigen::MatrixXd& sigma, int dim_cap = 50);

}  // namespace scex
