#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "hanam/latent_approx.hpp"
#include "hanam/net_core.hpp"
#include "hanam/types.hpp"

namespace hanam {

enum class ModelKind { HANE, HAND, NamEffects, NamDisturbances };

std::string_view to_string(ModelKind kind);
/// Accepts HANE, HAND, NAM_EFFECTS, NAM_DISTURBANCES (case-insensitive). Throws InvalidArgument.
ModelKind parse_model_kind(std::string_view text);

inline bool is_effects(ModelKind k) { return k == ModelKind::HANE || k == ModelKind::NamEffects; }
inline bool is_homophily_adjusted(ModelKind k) { return k == ModelKind::HANE || k == ModelKind::HAND; }

/// Outcome y and design X (first column the intercept).
struct Dataset {
  Vector y;
  Matrix X;
  std::vector<std::string> column_names;

  Index n() const { return y.size(); }
  Index p() const { return X.cols(); }
  void validate(Index network_n) const;
};

struct ParamVector {
  Vector beta;
  Vector gamma;  // empty for the NAM families
  double rho = 0.0;
  double sigma2 = 1.0;
};

/// beta ~ N(0, sigma_beta^2 I), gamma ~ N(0, sigma_gamma^2 I), rho ~ trN(mu_rho, sigma_rho^2, -1, 1),
/// sigma^2 ~ IG(a/2, b/2). Defaults are the weakly regularising values used in the simulation study.
struct Priors {
  double sigma_beta = 2.25;
  double sigma_gamma = 2.25;
  double mu_rho = 0.36;
  double sigma_rho = 0.7;
  double a = 2.0;
  double b = 2.0;

  /// Improper flat limit: huge normal scales, a = -2 and b = 0 so the sigma^2 term vanishes.
  static Priors flat();
  /// Scales > 0; a >= -2 and b >= 0 (a = -2, b = 0 is the flat limit).
  void validate() const;
};

class ModelFamily {
 public:
  static ModelFamily hane(std::shared_ptr<const MatrixNormalApprox> latent);
  static ModelFamily hand(std::shared_ptr<const MatrixNormalApprox> latent);
  static ModelFamily nam_effects();
  static ModelFamily nam_disturbances();
  static ModelFamily make(ModelKind kind, std::shared_ptr<const MatrixNormalApprox> latent = nullptr);

  ModelKind kind() const { return kind_; }
  const MatrixNormalApprox* latent() const { return latent_.get(); }
  const std::shared_ptr<const MatrixNormalApprox>& latent_ptr() const { return latent_; }
  Index D() const { return latent_ ? latent_->Lambda.cols() : 0; }

 private:
  ModelFamily(ModelKind kind, std::shared_ptr<const MatrixNormalApprox> latent);
  ModelKind kind_;
  std::shared_ptr<const MatrixNormalApprox> latent_;
};

struct ParamGradient {
  Vector beta;
  Vector gamma;
  double rho = 0.0;
  double sigma2 = 0.0;
};

/// Optimiser coordinates: (beta, gamma, rho, log sigma^2).
Vector to_internal(const ParamVector& theta);
ParamVector from_internal(const Vector& x, Index p, Index D);
Index internal_size(Index p, Index D);

/// Evaluates the log posterior (or log likelihood with include_prior = false) and its gradient
/// for one family on one dataset. Holds the network and data by value.
class PosteriorEvaluator {
 public:
  PosteriorEvaluator(ModelFamily family, Dataset data, const RowNormalizedNetwork& a, Priors priors,
                     bool include_prior = true);

  double value(const ParamVector& theta) const;
  double value_and_gradient(const ParamVector& theta, ParamGradient& grad) const;

  /// Same on the internal scale; the log sigma^2 component uses the chain rule.
  double internal_value(const Vector& x, Vector* grad) const;

  const ModelFamily& family() const { return family_; }
  const Dataset& data() const { return data_; }
  const Priors& priors() const { return priors_; }
  const Matrix& network() const { return a_; }
  double spectral_norm() const { return lambda1_; }
  Index p() const { return data_.p(); }
  Index D() const { return family_.D(); }

 private:
  double evaluate(const ParamVector& theta, ParamGradient* grad) const;
  void check_theta(const ParamVector& theta) const;

  ModelFamily family_;
  Dataset data_;
  Matrix a_;
  Priors priors_;
  bool include_prior_;
  double lambda1_;
  Vector ay_;
  Matrix lambda_;  // n x D, empty for NAM
};

double log_posterior(const ParamVector& theta, const ModelFamily& family, const Dataset& data,
                     const RowNormalizedNetwork& a, const Priors& priors);

ParamGradient grad_log_posterior(const ParamVector& theta, const ModelFamily& family, const Dataset& data,
                                 const RowNormalizedNetwork& a, const Priors& priors);

/// Exact multivariate-normal log likelihood of a NAM (theta.gamma ignored).
double nam_loglik(const ParamVector& theta, const Dataset& data, const RowNormalizedNetwork& a, ModelKind kind);

/// Prior terms alone, as they enter the log posterior.
double log_prior(const ParamVector& theta, const Priors& priors, bool include_gamma);

}  // namespace hanam
