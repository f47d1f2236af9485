#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hanam/box_lbfgs.hpp"
#include "hanam/influence_models.hpp"

namespace hanam {

struct FitConfig {
  double rho_lower = -0.999;
  double rho_upper = 0.999;
  int max_iters = 500;
  double grad_tol = 1e-6;
  int history_size = 10;
  double hessian_step = 1e-5;
  int multistart = 2;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::optional<double> fixed_sigma2;  // pin sigma^2 instead of estimating it

  void validate() const;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double v) const { return lower <= v && v <= upper; }
};

struct ParamIntervals {
  double level = 0.95;
  std::vector<Interval> beta;
  std::vector<Interval> gamma;
  Interval rho;
  Interval sigma2;
  Interval log_sigma2;
};

struct FitResult {
  ModelFamily family = ModelFamily::nam_effects();
  bool mle = false;
  ParamVector theta_map;
  ParamVector init_used;
  double log_post = 0.0;   // log posterior, or log likelihood for an MLE fit
  Matrix hessian;          // negative Hessian over (beta, gamma, rho, log sigma^2)
  std::optional<ParamIntervals> intervals;
  std::string interval_error;  // why intervals are missing, if they are
  bool converged = false;
  int n_iters = 0;
  double pg_norm = 0.0;
  int starts_run = 0;
  int starts_failed = 0;
  std::pair<double, double> rho_box{0.0, 0.0};
  std::vector<double> objective_trace;  // log posterior along the winning start's accepted iterates
};

/// Effective rho box: the configured bounds intersected with |rho| <= (1 - 1e-3) / lambda_1(A).
std::pair<double, double> effective_rho_box(const FitConfig& cfg, double spectral_norm_of_a);

/// Spatial two-stage least squares: y on [X, Lambda, Ay] with instruments [X, Lambda, AX, A Lambda, A^2 X].
/// Lambda columns are dropped for the NAM families (latent == nullptr).
ParamVector init_2sls(const Dataset& data, const RowNormalizedNetwork& a, const MatrixNormalApprox* latent,
                      std::pair<double, double> rho_bounds = {-0.999, 0.999});

FitResult map_fit(const Dataset& data, const RowNormalizedNetwork& a, const ModelFamily& family,
                  const Priors& priors, const FitConfig& cfg = {});

/// theta_j +/- z * sqrt((H^{-1})_jj) on the internal scale. Throws IndefiniteHessian.
ParamIntervals credible_intervals(const FitResult& fit, double level);

/// Beta-hat, sigma2-hat and log likelihood of a NAM with rho held fixed.
struct NamProfile {
  Vector beta;
  double sigma2 = 0.0;
  double loglik = 0.0;
};
NamProfile nam_profile(const Dataset& data, const RowNormalizedNetwork& a, ModelKind kind, double rho);

/// Maximum likelihood for a NAM via the concentrated likelihood in rho.
FitResult nam_mle(const Dataset& data, const RowNormalizedNetwork& a, ModelKind kind, const FitConfig& cfg = {});

/// Observed negative Hessian by central differences of the analytic gradient, symmetrised.
Matrix numerical_negative_hessian(const PosteriorEvaluator& eval, const Vector& x, double step);

}  // namespace hanam
