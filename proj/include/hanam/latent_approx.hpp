#pragma once

#include <optional>
#include <vector>

#include "hanam/net_core.hpp"
#include "hanam/types.hpp"

namespace hanam {

/// K posterior draws of the n x D latent position matrix.
struct LatentDraws {
  std::vector<Matrix> draws;
  bool aligned = false;

  Index K() const { return static_cast<Index>(draws.size()); }
  Index n() const { return draws.empty() ? 0 : draws.front().rows(); }
  Index D() const { return draws.empty() ? 0 : draws.front().cols(); }

  /// K >= 2, common shape, finite entries. Throws BadShape / InvalidArgument.
  void validate() const;
};

/// Matrix-normal summary MN(Lambda, Omega, Psi) of a set of draws, Omega(0,0) == 1.
struct MatrixNormalApprox {
  Matrix Lambda;
  Matrix Omega;
  Matrix Psi;
  double fit_loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  int ridge_repairs = 0;
  std::vector<double> loglik_trace;  // one entry per flip-flop sweep, starting value first
};

/// Which value of S11 enters the trailing-block correction of the constrained Omega update.
enum class OmegaS11Reading { Pre, Post };

struct MatrixNormalOptions {
  double rel_tol = 1e-8;    // relative change in the log likelihood
  double param_tol = 1e-8;  // and relative Frobenius change in Omega and Psi
  int max_iters = 500;
  OmegaS11Reading s11_reading = OmegaS11Reading::Pre;
  bool warm_start = true;  // unconstrained sweeps first, then the constrained update to convergence
};

double matrix_normal_loglik(const LatentDraws& draws, const Matrix& Lambda, const Matrix& Omega,
                            const Matrix& Psi);

/// Flip-flop MLE with the Omega(0,0) = 1 constraint. Requires draws.aligned.
MatrixNormalApprox fit_matrix_normal(const LatentDraws& draws, const MatrixNormalOptions& opts = {});

struct ProcrustesOptions {
  int max_iters = 100;
  double tol = 1e-10;
};

/// Rotates/reflects and translates every draw onto a common reference (draw 0, then the mean).
LatentDraws procrustes_align(const LatentDraws& draws, const ProcrustesOptions& opts = {});

/// Node attributes used to form dyadic covariates for the latent-distance model.
struct NodeAttributes {
  Matrix values;                 // n x q, categorical columns hold integer level codes
  std::vector<bool> categorical;  // size q

  Index n() const { return values.rows(); }
  Index q() const { return values.cols(); }
};

/// |x_i - x_j| per continuous column, 1{x_i == x_j} per categorical column.
std::vector<Matrix> dyadic_covariates(const NodeAttributes& attrs);

struct LatentSamplerConfig {
  int D = 3;
  int burn_in = 1000;
  int thin = 5;
  int n_draws = 200;
  double step_size = 0.5;
  double coeff_step_size = 0.05;
  double prior_scale_positions = 3.0;
  double prior_scale_coeffs = 10.0;
  std::uint64_t seed = 1;
  bool adapt_during_burn_in = true;
  std::optional<double> fixed_intercept;  // hold theta_0 fixed
  bool prior_only = false;                // drop the network likelihood

  void validate() const;
};

struct SamplerDiagnostics {
  double acceptance_positions = 0.0;
  double acceptance_coeffs = 0.0;
  double final_step_size = 0.0;
  double final_log_posterior = 0.0;
  Vector coeff_mean;  // (theta_0, theta_w...) posterior mean over stored draws
};

struct LatentSample {
  LatentDraws draws;
  SamplerDiagnostics diagnostics;
};

/// Random-walk Metropolis for logit P(A_ij = 1) = theta_0 - |u_i - u_j| + theta_w' w_ij.
LatentSample sample_latent_posterior(const RowNormalizedNetwork& a, const NodeAttributes& attrs,
                                     const LatentSamplerConfig& cfg);

/// Independent draws truth + N(0, tau^2) noise; a fast stand-in for a posterior sampler.
/// Marked aligned, since no rotation or translation separates them.
LatentDraws perturbed_draws(const Matrix& truth, int K, double tau, std::uint64_t seed);

}  // namespace hanam
