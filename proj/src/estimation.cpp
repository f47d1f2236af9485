#include "hanam/estimation.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hanam/errors.hpp"

namespace hanam {

namespace {

constexpr double kStabilityMargin = 1e-3;
constexpr double kInf = std::numeric_limits<double>::infinity();

Index rank_of(const Matrix& m) {
  if (m.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(1e-9);
  return qr.rank();
}

Matrix append_col(const Matrix& m, const Vector& c) {
  Matrix out(m.rows(), m.cols() + 1);
  out << m, c;
  return out;
}

}  // namespace

void FitConfig::validate() const {
  if (!(rho_lower > -1.0 && rho_upper < 1.0 && rho_lower <= rho_upper))
    fail(ErrorKind::InvalidArgument, "rho bounds must satisfy -1 < lower <= upper < 1");
  if (max_iters < 1 || history_size < 1 || multistart < 0)
    fail(ErrorKind::InvalidArgument, "max_iters, history_size must be positive and multistart non-negative");
  if (!(grad_tol > 0.0) || !(hessian_step > 0.0))
    fail(ErrorKind::InvalidArgument, "tolerances must be positive");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::InvalidArgument, "interval level must lie in (0, 1)");
  if (fixed_sigma2 && !(*fixed_sigma2 > 0.0)) fail(ErrorKind::InvalidArgument, "fixed sigma2 must be positive");
}

std::pair<double, double> effective_rho_box(const FitConfig& cfg, double spectral_norm_of_a) {
  double lo = cfg.rho_lower;
  double hi = cfg.rho_upper;
  if (spectral_norm_of_a > 0.0) {
    const double lim = (1.0 - kStabilityMargin) / spectral_norm_of_a;
    lo = std::max(lo, -lim);
    hi = std::min(hi, lim);
  }
  if (lo > hi) fail(ErrorKind::Unstable, "no admissible rho inside the configured bounds");
  return {lo, hi};
}

ParamVector init_2sls(const Dataset& data, const RowNormalizedNetwork& a, const MatrixNormalApprox* latent,
                      std::pair<double, double> rho_bounds) {
  data.validate(a.n());
  const Matrix& X = data.X;
  const Matrix& A = a.matrix();
  const Index n = data.n();
  const Index p = X.cols();
  if (rank_of(X) < p) fail(ErrorKind::RankDeficientInstruments, "design matrix X does not have full column rank");

  // Exogenous block [X, usable Lambda columns].
  Matrix exog = X;
  std::vector<Index> kept;
  const Index D = latent ? latent->Lambda.cols() : 0;
  for (Index j = 0; j < D; ++j) {
    Matrix trial = append_col(exog, latent->Lambda.col(j));
    if (rank_of(trial) == trial.cols()) {
      exog = std::move(trial);
      kept.push_back(j);
    }
  }

  Matrix instruments = exog;
  auto try_add = [&](const Vector& c) {
    Matrix trial = append_col(instruments, c);
    if (rank_of(trial) == trial.cols()) instruments = std::move(trial);
  };
  const Matrix ax = A * X;
  const Matrix a2x = A * ax;
  for (Index j = 0; j < p; ++j) try_add(ax.col(j));
  for (Index j : kept) try_add(A * latent->Lambda.col(j));
  for (Index j = 0; j < p; ++j) try_add(a2x.col(j));
  if (instruments.cols() <= exog.cols())
    fail(ErrorKind::RankDeficientInstruments, "no excluded instrument available for Ay");

  const Vector ay = A * data.y;
  Matrix z = append_col(exog, ay);

  Eigen::HouseholderQR<Matrix> hqr(instruments);
  const Matrix q = hqr.householderQ() * Matrix::Identity(n, instruments.cols());
  const Matrix zhat = q * (q.transpose() * z);

  Eigen::ColPivHouseholderQR<Matrix> second(zhat);
  second.setThreshold(1e-10);
  if (second.rank() < zhat.cols()) fail(ErrorKind::SingularSecondStage, "projected regressors are collinear");
  const Vector delta = second.solve(data.y);

  ParamVector theta;
  theta.beta = delta.head(p);
  theta.gamma = Vector::Zero(D);
  for (std::size_t k = 0; k < kept.size(); ++k) theta.gamma(kept[k]) = delta(p + static_cast<Index>(k));
  theta.rho = std::clamp(delta(delta.size() - 1), rho_bounds.first, rho_bounds.second);
  const Vector resid = data.y - z * delta;
  const double var_y = (data.y.array() - data.y.mean()).square().mean();
  theta.sigma2 = std::max(resid.squaredNorm() / static_cast<double>(n), 1e-10 * (1.0 + var_y));
  return theta;
}

Matrix numerical_negative_hessian(const PosteriorEvaluator& eval, const Vector& x, double step) {
  const Index dim = x.size();
  Matrix h(dim, dim);
  Vector g0;
  bool have_g0 = false;
  auto grad_at = [&](const Vector& xx, Vector& g) {
    try {
      const double v = eval.internal_value(xx, &g);
      return std::isfinite(v) && g.allFinite();
    } catch (const Error&) {
      return false;
    }
  };
  for (Index j = 0; j < dim; ++j) {
    Vector xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    Vector gp, gm;
    const bool okp = grad_at(xp, gp);
    const bool okm = grad_at(xm, gm);
    if (okp && okm) {
      h.col(j) = -(gp - gm) / (2.0 * step);
    } else {
      if (!have_g0) {
        if (!grad_at(x, g0)) fail(ErrorKind::FactorizationFailure, "gradient unavailable at the optimum");
        have_g0 = true;
      }
      if (okp) h.col(j) = -(gp - g0) / step;
      else if (okm) h.col(j) = -(g0 - gm) / step;
      else fail(ErrorKind::FactorizationFailure, "gradient unavailable around the optimum");
    }
  }
  return 0.5 * (h + h.transpose());
}

ParamIntervals credible_intervals(const FitResult& fit, double level) {
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::InvalidArgument, "interval level must lie in (0, 1)");
  const Matrix h = 0.5 * (fit.hessian + fit.hessian.transpose());
  if (h.rows() == 0 || !h.allFinite()) fail(ErrorKind::IndefiniteHessian, "Hessian is empty or not finite");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  const Vector& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) {
    std::ostringstream msg;
    msg << "negative Hessian is not positive definite; eigenvalues:";
    for (Index i = 0; i < ev.size(); ++i) msg << ' ' << ev(i);
    fail(ErrorKind::IndefiniteHessian, msg.str());
  }
  const Matrix cov = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 * (1.0 + level));

  const ParamVector& t = fit.theta_map;
  const Index p = t.beta.size();
  const Index D = t.gamma.size();
  const Vector x = to_internal(t);
  auto interval = [&](Index j) {
    const double half = z * std::sqrt(cov(j, j));
    return Interval{x(j) - half, x(j) + half};
  };

  ParamIntervals out;
  out.level = level;
  for (Index j = 0; j < p; ++j) out.beta.push_back(interval(j));
  for (Index j = 0; j < D; ++j) out.gamma.push_back(interval(p + j));
  out.rho = interval(p + D);
  out.rho.lower = std::max(out.rho.lower, -1.0);
  out.rho.upper = std::min(out.rho.upper, 1.0);
  out.log_sigma2 = interval(p + D + 1);
  out.sigma2 = Interval{std::exp(out.log_sigma2.lower), std::exp(out.log_sigma2.upper)};
  return out;
}

namespace {

void attach_hessian_and_intervals(FitResult& fit, const PosteriorEvaluator& eval, const FitConfig& cfg) {
  fit.hessian = numerical_negative_hessian(eval, to_internal(fit.theta_map), cfg.hessian_step);
  try {
    fit.intervals = credible_intervals(fit, cfg.level);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::IndefiniteHessian) throw;
    fit.interval_error = e.what();
  }
}

}  // namespace

FitResult map_fit(const Dataset& data, const RowNormalizedNetwork& a, const ModelFamily& family,
                  const Priors& priors, const FitConfig& cfg) {
  cfg.validate();
  const PosteriorEvaluator eval(family, data, a, priors);
  const auto box = effective_rho_box(cfg, eval.spectral_norm());
  const Index p = data.p();
  const Index D = is_homophily_adjusted(family.kind()) ? family.D() : 0;
  const Index dim = internal_size(p, D);

  ParamVector init = init_2sls(data, a, family.latent(), box);
  if (cfg.fixed_sigma2) init.sigma2 = *cfg.fixed_sigma2;

  Vector lower = Vector::Constant(dim, -kInf);
  Vector upper = Vector::Constant(dim, kInf);
  lower(p + D) = box.first;
  upper(p + D) = box.second;
  if (cfg.fixed_sigma2) lower(p + D + 1) = upper(p + D + 1) = std::log(*cfg.fixed_sigma2);

  std::string last_error;
  const Objective objective = [&](const Vector& x, Vector* grad) {
    try {
      const double v = eval.internal_value(x, grad);
      if (grad) *grad = -*grad;
      return -v;
    } catch (const Error& e) {
      last_error = e.what();
      throw;
    }
  };

  BoxLbfgsOptions opts;
  opts.max_iters = cfg.max_iters;
  opts.history = cfg.history_size;
  opts.pg_tol = cfg.grad_tol;

  const Vector x_init = to_internal(init);
  FitResult fit;
  fit.family = family;
  fit.init_used = init;
  fit.rho_box = box;

  std::optional<BoxLbfgsResult> best;
  for (int start = 0; start <= cfg.multistart; ++start) {
    Vector x0 = x_init;
    if (start > 0) {
      Rng rng(derive_seed(cfg.seed, 0x6d73ULL, static_cast<std::uint64_t>(start)));
      x0 += 0.1 * standard_normal_vector(dim, rng);
      for (Index i = 0; i < dim; ++i) x0(i) = std::clamp(x0(i), lower(i), upper(i));
    }
    ++fit.starts_run;
    BoxLbfgsResult res = minimize_box_lbfgs(objective, x0, lower, upper, opts);
    if (!std::isfinite(res.f)) {
      ++fit.starts_failed;
      continue;
    }
    if (!best || res.f < best->f) best = std::move(res);
  }
  if (!best) {
    fail(ErrorKind::AllStartsFailed,
         "every optimiser start ended with a non-finite objective" +
             (last_error.empty() ? std::string() : "; last error: " + last_error));
  }

  fit.theta_map = from_internal(best->x, p, D);
  fit.log_post = -best->f;
  fit.converged = best->converged;
  fit.n_iters = best->iterations;
  fit.pg_norm = best->pg_norm;
  fit.objective_trace.reserve(best->f_trace.size());
  for (double f : best->f_trace) fit.objective_trace.push_back(-f);
  attach_hessian_and_intervals(fit, eval, cfg);
  return fit;
}

NamProfile nam_profile(const Dataset& data, const RowNormalizedNetwork& a, ModelKind kind, double rho) {
  if (is_homophily_adjusted(kind)) fail(ErrorKind::InvalidArgument, "nam_profile needs a NAM family");
  data.validate(a.n());
  const Index n = data.n();
  const Matrix b = Matrix::Identity(n, n) - rho * a.matrix();
  const Vector z = b * data.y;
  const Matrix design = is_effects(kind) ? data.X : Matrix(b * data.X);
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  NamProfile out;
  out.beta = qr.solve(z);
  const Vector resid = z - design * out.beta;
  out.sigma2 = resid.squaredNorm() / static_cast<double>(n);
  if (!(out.sigma2 > 0.0)) fail(ErrorKind::FactorizationFailure, "zero residual variance in the NAM profile");
  Eigen::PartialPivLU<Matrix> lu(b);
  double logdet = 0.0;
  for (Index i = 0; i < n; ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
  out.loglik = -0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi) + std::log(out.sigma2) + 1.0) + logdet;
  return out;
}

FitResult nam_mle(const Dataset& data, const RowNormalizedNetwork& a, ModelKind kind, const FitConfig& cfg) {
  if (is_homophily_adjusted(kind)) fail(ErrorKind::InvalidArgument, "nam_mle needs NAM_EFFECTS or NAM_DISTURBANCES");
  cfg.validate();
  const ModelFamily family = ModelFamily::make(kind);
  const PosteriorEvaluator eval(family, data, a, Priors::flat(), false);
  const auto box = effective_rho_box(cfg, eval.spectral_norm());
  const Index p = data.p();

  auto neg_profile = [&](double rho) {
    try {
      return -nam_profile(data, a, kind, rho).loglik;
    } catch (const Error&) {
      return kInf;
    }
  };
  auto profile_score = [&](double rho) {
    const NamProfile prof = nam_profile(data, a, kind, rho);
    ParamVector t{prof.beta, Vector(), rho, prof.sigma2};
    ParamGradient g;
    eval.value_and_gradient(t, g);
    return g.rho;
  };

  double rho_hat = box.first;
  if (box.second > box.first) {
    const auto [x, fx] = boost::math::tools::brent_find_minima(neg_profile, box.first, box.second,
                                                               std::numeric_limits<double>::digits / 2);
    rho_hat = x;
    if (!std::isfinite(fx)) fail(ErrorKind::AllStartsFailed, "profile likelihood is not finite anywhere in the rho box");
    // Polish with a root of the profile score.
    double delta = 1e-6;
    for (int k = 0; k < 12; ++k, delta *= 4.0) {
      const double lo = std::max(box.first, rho_hat - delta);
      const double hi = std::min(box.second, rho_hat + delta);
      const double slo = profile_score(lo);
      const double shi = profile_score(hi);
      if (slo > 0.0 && shi < 0.0) {
        boost::uintmax_t iters = 200;
        auto bracket = boost::math::tools::toms748_solve(profile_score, lo, hi, slo, shi,
                                                          boost::math::tools::eps_tolerance<double>(50), iters);
        rho_hat = 0.5 * (bracket.first + bracket.second);
        break;
      }
      if (slo == 0.0) { rho_hat = lo; break; }
      if (shi == 0.0) { rho_hat = hi; break; }
      if (lo == box.first && slo <= 0.0 && shi <= 0.0) { rho_hat = box.first; break; }
      if (hi == box.second && slo >= 0.0 && shi >= 0.0) { rho_hat = box.second; break; }
    }
  }

  const NamProfile prof = nam_profile(data, a, kind, rho_hat);
  FitResult fit;
  fit.family = family;
  fit.mle = true;
  fit.rho_box = box;
  fit.theta_map = ParamVector{prof.beta, Vector(), rho_hat, prof.sigma2};
  fit.init_used = fit.theta_map;
  fit.log_post = prof.loglik;
  fit.starts_run = 1;

  const Index dim = internal_size(p, 0);
  Vector lower = Vector::Constant(dim, -kInf);
  Vector upper = Vector::Constant(dim, kInf);
  lower(p) = box.first;
  upper(p) = box.second;
  Vector g;
  eval.internal_value(to_internal(fit.theta_map), &g);
  fit.pg_norm = projected_gradient_norm(to_internal(fit.theta_map), -g, lower, upper);
  fit.converged = fit.pg_norm < cfg.grad_tol;
  fit.objective_trace = {fit.log_post};
  attach_hessian_and_intervals(fit, eval, cfg);
  return fit;
}

}  // namespace hanam
