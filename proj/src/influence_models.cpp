#include "hanam/influence_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hanam/errors.hpp"

namespace hanam {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::HANE: return "HANE";
    case ModelKind::HAND: return "HAND";
    case ModelKind::NamEffects: return "NAM_EFFECTS";
    case ModelKind::NamDisturbances: return "NAM_DISTURBANCES";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "HANE") return ModelKind::HANE;
  if (up == "HAND") return ModelKind::HAND;
  if (up == "NAM_EFFECTS") return ModelKind::NamEffects;
  if (up == "NAM_DISTURBANCES") return ModelKind::NamDisturbances;
  fail(ErrorKind::InvalidArgument, "unknown model family '" + std::string(text) +
                                       "' (expected HANE, HAND, NAM_EFFECTS or NAM_DISTURBANCES)");
}

void Dataset::validate(Index network_n) const {
  if (y.size() != network_n) {
    std::ostringstream msg;
    msg << "outcome has " << y.size() << " entries but the network has " << network_n << " nodes";
    fail(ErrorKind::BadShape, msg.str());
  }
  if (X.rows() != network_n) {
    std::ostringstream msg;
    msg << "design matrix has " << X.rows() << " rows but the network has " << network_n << " nodes";
    fail(ErrorKind::BadShape, msg.str());
  }
  if (X.cols() < 1) fail(ErrorKind::BadShape, "design matrix has no columns");
  if (!column_names.empty() && static_cast<Index>(column_names.size()) != X.cols())
    fail(ErrorKind::BadShape, "column name count does not match the design matrix");
  if (!y.allFinite() || !X.allFinite()) fail(ErrorKind::InvalidArgument, "dataset has non-finite entries");
}

Priors Priors::flat() {
  Priors p;
  p.sigma_beta = 1e6;
  p.sigma_gamma = 1e6;
  p.mu_rho = 0.0;
  p.sigma_rho = 1e6;
  p.a = -2.0;
  p.b = 0.0;
  return p;
}

void Priors::validate() const {
  if (!(sigma_beta > 0.0) || !(sigma_gamma > 0.0) || !(sigma_rho > 0.0))
    fail(ErrorKind::InvalidArgument, "prior scales must be positive");
  if (!std::isfinite(mu_rho)) fail(ErrorKind::InvalidArgument, "mu_rho must be finite");
  if (!(a >= -2.0) || !(b >= 0.0))
    fail(ErrorKind::InvalidArgument, "inverse-gamma hyperparameters need a >= -2 and b >= 0");
}

ModelFamily::ModelFamily(ModelKind kind, std::shared_ptr<const MatrixNormalApprox> latent)
    : kind_(kind), latent_(std::move(latent)) {
  if (is_homophily_adjusted(kind_) && !latent_)
    fail(ErrorKind::InvalidArgument, std::string(to_string(kind_)) + " requires a matrix-normal latent approximation");
  if (!is_homophily_adjusted(kind_)) latent_.reset();
}

ModelFamily ModelFamily::hane(std::shared_ptr<const MatrixNormalApprox> latent) {
  return ModelFamily(ModelKind::HANE, std::move(latent));
}
ModelFamily ModelFamily::hand(std::shared_ptr<const MatrixNormalApprox> latent) {
  return ModelFamily(ModelKind::HAND, std::move(latent));
}
ModelFamily ModelFamily::nam_effects() { return ModelFamily(ModelKind::NamEffects, nullptr); }
ModelFamily ModelFamily::nam_disturbances() { return ModelFamily(ModelKind::NamDisturbances, nullptr); }
ModelFamily ModelFamily::make(ModelKind kind, std::shared_ptr<const MatrixNormalApprox> latent) {
  return ModelFamily(kind, std::move(latent));
}

Index internal_size(Index p, Index D) { return p + D + 2; }

Vector to_internal(const ParamVector& theta) {
  const Index p = theta.beta.size();
  const Index D = theta.gamma.size();
  Vector x(internal_size(p, D));
  x.head(p) = theta.beta;
  x.segment(p, D) = theta.gamma;
  x(p + D) = theta.rho;
  x(p + D + 1) = std::log(theta.sigma2);
  return x;
}

ParamVector from_internal(const Vector& x, Index p, Index D) {
  ParamVector theta;
  theta.beta = x.head(p);
  theta.gamma = x.segment(p, D);
  theta.rho = x(p + D);
  theta.sigma2 = std::exp(x(p + D + 1));
  return theta;
}

double log_prior(const ParamVector& theta, const Priors& priors, bool include_gamma) {
  double lp = -theta.beta.squaredNorm() / (2.0 * priors.sigma_beta * priors.sigma_beta);
  if (include_gamma) lp -= theta.gamma.squaredNorm() / (2.0 * priors.sigma_gamma * priors.sigma_gamma);
  const double dr = theta.rho - priors.mu_rho;
  lp -= dr * dr / (2.0 * priors.sigma_rho * priors.sigma_rho);
  lp += (-priors.a / 2.0 - 1.0) * std::log(theta.sigma2);
  if (priors.b != 0.0) lp -= priors.b / (2.0 * theta.sigma2);
  return lp;
}

PosteriorEvaluator::PosteriorEvaluator(ModelFamily family, Dataset data, const RowNormalizedNetwork& a,
                                       Priors priors, bool include_prior)
    : family_(std::move(family)),
      data_(std::move(data)),
      a_(a.matrix()),
      priors_(priors),
      include_prior_(include_prior) {
  data_.validate(a.n());
  priors_.validate();
  if (const auto* lat = family_.latent()) {
    if (lat->Lambda.rows() != a.n() || lat->Omega.rows() != a.n() || lat->Omega.cols() != a.n() ||
        lat->Psi.rows() != lat->Lambda.cols() || lat->Psi.cols() != lat->Lambda.cols())
      fail(ErrorKind::BadShape, "latent approximation does not match the network size");
    lambda_ = lat->Lambda;
  }
  lambda1_ = hanam::spectral_norm(a_);
  ay_ = a_ * data_.y;
}

void PosteriorEvaluator::check_theta(const ParamVector& theta) const {
  if (theta.beta.size() != data_.p()) fail(ErrorKind::BadShape, "beta has the wrong length");
  if (is_homophily_adjusted(family_.kind()) && theta.gamma.size() != D())
    fail(ErrorKind::BadShape, "gamma has the wrong length");
  if (!check_stability(theta.rho, lambda1_)) {
    std::ostringstream msg;
    msg << "rho = " << theta.rho << " violates |rho| * lambda_1(A) < 1 (lambda_1 = " << lambda1_ << ")";
    fail(ErrorKind::Unstable, msg.str());
  }
  if (!(theta.sigma2 > 0.0) || !std::isfinite(theta.sigma2)) {
    std::ostringstream msg;
    msg << "sigma2 = " << theta.sigma2 << " is not a positive finite variance";
    fail(ErrorKind::FactorizationFailure, msg.str());
  }
}

namespace {

struct CovFactor {
  Eigen::LLT<Matrix> llt;
  double log_det = 0.0;
};

CovFactor factor_covariance(const Matrix& sigma, const ParamVector& theta) {
  CovFactor f;
  f.llt.compute(sigma);
  if (f.llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "covariance is not positive definite at rho = " << theta.rho << ", sigma2 = " << theta.sigma2;
    fail(ErrorKind::FactorizationFailure, msg.str());
  }
  const auto& lm = f.llt.matrixLLT();
  double ld = 0.0;
  for (Index i = 0; i < lm.rows(); ++i) ld += std::log(lm(i, i));
  f.log_det = 2.0 * ld;
  return f;
}

// tr(Sigma^{-1}) = ||L^{-1}||_F^2
double trace_inverse(const CovFactor& f) {
  const Index n = f.llt.matrixLLT().rows();
  Matrix linv = f.llt.matrixL().solve(Matrix::Identity(n, n));
  return linv.squaredNorm();
}

double log_abs_det(const Eigen::PartialPivLU<Matrix>& lu) {
  const auto& m = lu.matrixLU();
  double ld = 0.0;
  for (Index i = 0; i < m.rows(); ++i) ld += std::log(std::abs(m(i, i)));
  return ld;
}

}  // namespace

double PosteriorEvaluator::evaluate(const ParamVector& theta, ParamGradient* grad) const {
  check_theta(theta);
  const Index n = data_.n();
  const ModelKind kind = family_.kind();
  const bool latent = is_homophily_adjusted(kind);
  const double sigma2 = theta.sigma2;
  const double log2pi = std::log(2.0 * std::numbers::pi);

  Matrix b = Matrix::Identity(n, n) - theta.rho * a_;
  Eigen::PartialPivLU<Matrix> lu(b);
  const double logdet_b = log_abs_det(lu);

  Vector mean_part = data_.X * theta.beta;
  double s = 0.0;
  Vector psi_gamma;
  const Matrix* omega = nullptr;
  if (latent) {
    mean_part += lambda_ * theta.gamma;
    psi_gamma = family_.latent()->Psi * theta.gamma;
    s = theta.gamma.dot(psi_gamma);
    omega = &family_.latent()->Omega;
  }

  double ll = -0.5 * static_cast<double>(n) * log2pi;
  Vector alpha;  // Sigma^{-1} r

  if (grad) {
    grad->beta.resize(data_.p());
    grad->gamma = Vector::Zero(latent ? D() : 0);
  }

  if (is_effects(kind)) {
    const Vector r = data_.y - theta.rho * ay_ - mean_part;
    if (latent) {
      Matrix sigma = s * (*omega);
      sigma.diagonal().array() += sigma2;
      const CovFactor f = factor_covariance(sigma, theta);
      alpha = f.llt.solve(r);
      ll += -0.5 * f.log_det + logdet_b - 0.5 * r.dot(alpha);
      if (grad) {
        const double tr_omega = f.llt.solve(*omega).trace();
        const double quad_omega = alpha.dot((*omega) * alpha);
        grad->gamma = lambda_.transpose() * alpha + psi_gamma * (quad_omega - tr_omega);
        grad->sigma2 = -0.5 * trace_inverse(f) + 0.5 * alpha.squaredNorm();
      }
    } else {
      alpha = r / sigma2;
      ll += -0.5 * static_cast<double>(n) * std::log(sigma2) + logdet_b - 0.5 * r.dot(alpha);
      if (grad) grad->sigma2 = -0.5 * static_cast<double>(n) / sigma2 + 0.5 * alpha.squaredNorm();
    }
    if (grad) {
      grad->beta = data_.X.transpose() * alpha;
      const double tr_am = lu.solve(a_).trace();  // tr(M A) = tr(A M)
      grad->rho = -tr_am + ay_.dot(alpha);
    }
  } else {
    const Vector r = data_.y - mean_part;
    const Matrix m = lu.inverse();
    if (latent) {
      const Matrix mmt = m * m.transpose();
      Matrix sigma = s * (*omega) + sigma2 * mmt;
      const CovFactor f = factor_covariance(sigma, theta);
      alpha = f.llt.solve(r);
      ll += -0.5 * f.log_det - 0.5 * r.dot(alpha);
      if (grad) {
        const double tr_omega = f.llt.solve(*omega).trace();
        const double quad_omega = alpha.dot((*omega) * alpha);
        grad->gamma = lambda_.transpose() * alpha + psi_gamma * (quad_omega - tr_omega);
        // K = G + G', G = M A M M'
        const Matrix g = (m * a_) * mmt;
        const double tr_sg = f.llt.solve(g).trace();
        grad->rho = sigma2 * (alpha.dot(g * alpha) - tr_sg);
        const Vector mt_alpha = m.transpose() * alpha;
        grad->sigma2 = -0.5 * f.llt.solve(mmt).trace() + 0.5 * mt_alpha.squaredNorm();
      }
    } else {
      // Sigma = sigma2 M M', so Sigma^{-1} = B'B / sigma2.
      const Vector br = b * r;
      alpha = b.transpose() * br / sigma2;
      ll += -0.5 * static_cast<double>(n) * std::log(sigma2) + logdet_b - 0.5 * br.squaredNorm() / sigma2;
      if (grad) {
        const Matrix ma = m * a_;
        const double tr_am = ma.trace();
        // alpha' M A M M' alpha with M' alpha = B r / sigma2
        const Vector mt_alpha = br / sigma2;
        const Vector ma_mt_alpha = m.transpose() * (ma.transpose() * alpha);  // (M A M)' alpha
        grad->rho = sigma2 * mt_alpha.dot(ma_mt_alpha) - tr_am;
        grad->sigma2 = -0.5 * static_cast<double>(n) / sigma2 + 0.5 * mt_alpha.squaredNorm();
      }
    }
    if (grad) grad->beta = data_.X.transpose() * alpha;
  }

  if (include_prior_) {
    ll += log_prior(theta, priors_, latent);
    if (grad) {
      grad->beta -= theta.beta / (priors_.sigma_beta * priors_.sigma_beta);
      if (latent) grad->gamma -= theta.gamma / (priors_.sigma_gamma * priors_.sigma_gamma);
      grad->rho -= (theta.rho - priors_.mu_rho) / (priors_.sigma_rho * priors_.sigma_rho);
      grad->sigma2 += -(priors_.a / 2.0 + 1.0) / sigma2 + priors_.b / (2.0 * sigma2 * sigma2);
    }
  }
  return ll;
}

double PosteriorEvaluator::value(const ParamVector& theta) const { return evaluate(theta, nullptr); }

double PosteriorEvaluator::value_and_gradient(const ParamVector& theta, ParamGradient& grad) const {
  return evaluate(theta, &grad);
}

double PosteriorEvaluator::internal_value(const Vector& x, Vector* grad) const {
  const Index p = data_.p();
  const Index d = is_homophily_adjusted(family_.kind()) ? D() : 0;
  const ParamVector theta = from_internal(x, p, d);
  if (!grad) return evaluate(theta, nullptr);
  ParamGradient g;
  const double v = evaluate(theta, &g);
  grad->resize(x.size());
  grad->head(p) = g.beta;
  grad->segment(p, d) = g.gamma;
  (*grad)(p + d) = g.rho;
  (*grad)(p + d + 1) = g.sigma2 * theta.sigma2;
  return v;
}

double log_posterior(const ParamVector& theta, const ModelFamily& family, const Dataset& data,
                     const RowNormalizedNetwork& a, const Priors& priors) {
  return PosteriorEvaluator(family, data, a, priors).value(theta);
}

ParamGradient grad_log_posterior(const ParamVector& theta, const ModelFamily& family, const Dataset& data,
                                 const RowNormalizedNetwork& a, const Priors& priors) {
  ParamGradient g;
  PosteriorEvaluator(family, data, a, priors).value_and_gradient(theta, g);
  return g;
}

double nam_loglik(const ParamVector& theta, const Dataset& data, const RowNormalizedNetwork& a, ModelKind kind) {
  if (is_homophily_adjusted(kind))
    fail(ErrorKind::InvalidArgument, "nam_loglik needs NAM_EFFECTS or NAM_DISTURBANCES");
  ParamVector t = theta;
  t.gamma.resize(0);
  return PosteriorEvaluator(ModelFamily::make(kind), data, a, Priors{}, false).value(t);
}

}  // namespace hanam
