#include "hanam/latent_approx.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hanam/errors.hpp"

namespace hanam {

namespace {

constexpr double kMinEigen = 1e-10;
constexpr double kRidge = 1e-8;

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Eigen::LLT<Matrix> factor_or_throw(const Matrix& m, const char* name) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::NotPositiveDefinite, std::string(name) + " is not positive definite");
  return llt;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

void LatentDraws::validate() const {
  if (draws.size() < 2) fail(ErrorKind::BadShape, "need at least 2 latent draws");
  const Index rows = draws.front().rows();
  const Index cols = draws.front().cols();
  if (rows < 1 || cols < 1) fail(ErrorKind::BadShape, "latent draws must be non-empty");
  for (std::size_t k = 0; k < draws.size(); ++k) {
    if (draws[k].rows() != rows || draws[k].cols() != cols) {
      std::ostringstream msg;
      msg << "draw " << k << " has shape " << draws[k].rows() << "x" << draws[k].cols()
          << ", expected " << rows << "x" << cols;
      fail(ErrorKind::BadShape, msg.str());
    }
    if (!draws[k].allFinite())
      fail(ErrorKind::InvalidArgument, "draw " + std::to_string(k) + " has non-finite entries");
  }
}

double matrix_normal_loglik(const LatentDraws& draws, const Matrix& Lambda, const Matrix& Omega,
                            const Matrix& Psi) {
  const double n = static_cast<double>(draws.n());
  const double D = static_cast<double>(draws.D());
  const double K = static_cast<double>(draws.K());
  const auto omega_llt = factor_or_throw(Omega, "Omega");
  const auto psi_llt = factor_or_throw(Psi, "Psi");
  const Matrix psi_l = psi_llt.matrixL();

  double quad = 0.0;
  for (const Matrix& u : draws.draws) {
    Matrix w = omega_llt.matrixL().solve(u - Lambda);                   // L_O^{-1} E
    Matrix z = psi_l.triangularView<Eigen::Lower>().solve(w.transpose());  // L_P^{-1} E' L_O^{-T}
    quad += z.squaredNorm();
  }
  return -0.5 * n * D * K * std::log(2.0 * std::numbers::pi) -
         0.5 * K * D * log_det_from_llt(omega_llt) - 0.5 * K * n * log_det_from_llt(psi_llt) -
         0.5 * quad;
}

namespace {

// The first time an iterate's smallest eigenvalue drops below kMinEigen a ridge is switched on
// for that matrix and applied to every later iterate; still failing after the ridge is fatal.
void repair_if_needed(Matrix& m, bool& repaired, int& repairs, const char* name) {
  if (repaired) m.diagonal().array() += kRidge;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  const double min_ev = eig.eigenvalues().minCoeff();
  if (min_ev >= kMinEigen) return;
  if (repaired) {
    std::ostringstream msg;
    msg << name << " is not positive definite even with the ridge (min eigenvalue " << min_ev << ")";
    fail(ErrorKind::NotPositiveDefinite, msg.str());
  }
  repaired = true;
  ++repairs;
  m.diagonal().array() += kRidge;
  Eigen::SelfAdjointEigenSolver<Matrix> again(m, Eigen::EigenvaluesOnly);
  if (again.eigenvalues().minCoeff() < kMinEigen) {
    std::ostringstream msg;
    msg << name << " is not positive definite even with the ridge (min eigenvalue "
        << again.eigenvalues().minCoeff() << ")";
    fail(ErrorKind::NotPositiveDefinite, msg.str());
  }
}

}  // namespace

MatrixNormalApprox fit_matrix_normal(const LatentDraws& draws, const MatrixNormalOptions& opts) {
  draws.validate();
  if (!draws.aligned)
    fail(ErrorKind::InvalidArgument, "fit_matrix_normal requires aligned draws");
  const Index n = draws.n();
  const Index D = draws.D();
  const Index K = draws.K();
  if (K * D <= 1) fail(ErrorKind::BadShape, "need K*D > 1");

  bool all_identical = true;
  for (Index k = 1; k < K && all_identical; ++k)
    all_identical = (draws.draws[k].array() == draws.draws[0].array()).all();
  if (all_identical) fail(ErrorKind::DegenerateDraws, "all latent draws are identical");

  MatrixNormalApprox out;
  out.Lambda = Matrix::Zero(n, D);
  for (const Matrix& u : draws.draws) out.Lambda += u;
  out.Lambda /= static_cast<double>(K);

  // Centred draws stacked side by side (n x KD) and on top of each other (Kn x D).
  Matrix wide(n, K * D);
  Matrix tall(K * n, D);
  for (Index k = 0; k < K; ++k) {
    Matrix e = draws.draws[k] - out.Lambda;
    wide.middleCols(k * D, D) = e;
    tall.middleRows(k * n, n) = e;
  }
  const double spread = wide.squaredNorm();
  if (!(spread > 1e-24 * (1.0 + out.Lambda.squaredNorm()) * static_cast<double>(K)))
    fail(ErrorKind::DegenerateDraws, "latent draws have zero spread");

  out.Omega = Matrix::Identity(n, n);
  out.Psi = Matrix::Identity(D, D);
  double prev = matrix_normal_loglik(draws, out.Lambda, out.Omega, out.Psi);
  out.loglik_trace.push_back(prev);

  bool omega_repaired = false;
  bool psi_repaired = false;
  const double KD = static_cast<double>(K * D);
  const double Kn = static_cast<double>(K * n);

  // One flip-flop sweep. `constrained` selects the three-step update; otherwise Omega is the
  // unconstrained update S / (KD) rescaled to Omega(0,0) = 1, i.e. S / S11.
  auto sweep = [&](bool constrained) {
    {
      const auto psi_llt = factor_or_throw(out.Psi, "Psi");
      const Matrix psi_l = psi_llt.matrixL();
      Matrix f(n, K * D);
      for (Index k = 0; k < K; ++k) {
        // E_k L_P^{-T}
        f.middleCols(k * D, D) =
            psi_l.triangularView<Eigen::Lower>().solve(wide.middleCols(k * D, D).transpose()).transpose();
      }
      Matrix s = f * f.transpose();
      const double s11 = s(0, 0);
      if (!(s11 > 0.0)) fail(ErrorKind::NotPositiveDefinite, "S(1,1) is not positive");
      s /= s11;
      if (constrained && n > 1) {
        const double c = (opts.s11_reading == OmegaS11Reading::Pre ? s11 : 1.0) / KD;
        const Vector s21 = s.col(0).tail(n - 1);
        s.bottomRightCorner(n - 1, n - 1) =
            c * s.bottomRightCorner(n - 1, n - 1) + (1.0 - c) * s21 * s21.transpose();
      }
      s(0, 0) = 1.0;
      out.Omega = 0.5 * (s + s.transpose());
      repair_if_needed(out.Omega, omega_repaired, out.ridge_repairs, "Omega");
      if (omega_repaired) out.Omega /= out.Omega(0, 0);
    }
    {
      const auto omega_llt = factor_or_throw(out.Omega, "Omega");
      Matrix g(K * n, D);
      for (Index k = 0; k < K; ++k)
        g.middleRows(k * n, n) = omega_llt.matrixL().solve(tall.middleRows(k * n, n));
      Matrix psi = g.transpose() * g / Kn;
      out.Psi = 0.5 * (psi + psi.transpose());
      repair_if_needed(out.Psi, psi_repaired, out.ridge_repairs, "Psi");
    }
  };

  auto run = [&](bool constrained) {
    for (int it = 1; it <= opts.max_iters; ++it) {
      const Matrix omega_prev = out.Omega;
      const Matrix psi_prev = out.Psi;
      sweep(constrained);
      const double ll = matrix_normal_loglik(draws, out.Lambda, out.Omega, out.Psi);
      if (!std::isfinite(ll)) fail(ErrorKind::NotPositiveDefinite, "matrix-normal log likelihood is not finite");
      out.loglik_trace.push_back(ll);
      ++out.iterations;
      const double step = std::max((out.Omega - omega_prev).norm() / out.Omega.norm(),
                                   (out.Psi - psi_prev).norm() / out.Psi.norm());
      const bool done = std::abs(ll - prev) < opts.rel_tol * std::abs(prev) && step < opts.param_tol;
      prev = ll;
      if (done) return true;
    }
    return false;
  };

  // The constrained sweep moves the overall scale only through node 1 and converges at a rate
  // near 1 - 1/n; the unconstrained sweep reaches the same optimum (up to the scale split) fast.
  if (opts.warm_start) run(false);
  out.converged = run(true);
  out.fit_loglik = prev;
  return out;
}

LatentDraws procrustes_align(const LatentDraws& draws, const ProcrustesOptions& opts) {
  draws.validate();
  const Index K = draws.K();
  const Index n = draws.n();
  const Index D = draws.D();

  std::vector<Matrix> centred(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) {
    const Matrix& u = draws.draws[static_cast<std::size_t>(k)];
    Eigen::RowVectorXd m = u.colwise().mean();
    centred[static_cast<std::size_t>(k)] = u.rowwise() - m;
    if (centred[static_cast<std::size_t>(k)].cwiseAbs().maxCoeff() == 0.0)
      fail(ErrorKind::RankDeficient, "draw " + std::to_string(k) + " has zero variance in every column");
  }
  const Eigen::RowVectorXd anchor = draws.draws.front().colwise().mean();

  std::vector<Matrix> rotated = centred;
  Matrix ref = centred.front();
  for (int it = 0; it < opts.max_iters; ++it) {
    Matrix next = Matrix::Zero(n, D);
    for (Index k = 0; k < K; ++k) {
      const Matrix& c = centred[static_cast<std::size_t>(k)];
      Eigen::JacobiSVD<Matrix> svd(c.transpose() * ref, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Matrix q = svd.matrixU() * svd.matrixV().transpose();
      rotated[static_cast<std::size_t>(k)] = c * q;
      next += rotated[static_cast<std::size_t>(k)];
    }
    next /= static_cast<double>(K);
    const double change = (next - ref).norm() / std::max(ref.norm(), 1e-300);
    ref = std::move(next);
    if (change < opts.tol) break;
  }

  LatentDraws out;
  out.aligned = true;
  out.draws.reserve(static_cast<std::size_t>(K));
  for (auto& r : rotated) out.draws.push_back(r.rowwise() + anchor);
  return out;
}

std::vector<Matrix> dyadic_covariates(const NodeAttributes& attrs) {
  if (static_cast<Index>(attrs.categorical.size()) != attrs.q())
    fail(ErrorKind::BadShape, "categorical flags do not match attribute columns");
  const Index n = attrs.n();
  std::vector<Matrix> out;
  for (Index c = 0; c < attrs.q(); ++c) {
    Matrix w = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) {
        if (i == j) continue;
        const double xi = attrs.values(i, c);
        const double xj = attrs.values(j, c);
        w(i, j) = attrs.categorical[static_cast<std::size_t>(c)] ? (xi == xj ? 1.0 : 0.0)
                                                                 : std::abs(xi - xj);
      }
    out.push_back(std::move(w));
  }
  return out;
}

void LatentSamplerConfig::validate() const {
  if (D < 1) fail(ErrorKind::InvalidArgument, "latent dimension D must be >= 1");
  if (n_draws < 2) fail(ErrorKind::InvalidArgument, "n_draws must be >= 2");
  if (burn_in < 0 || thin < 1) fail(ErrorKind::InvalidArgument, "burn_in >= 0 and thin >= 1 required");
  if (!(step_size > 0.0) || !(coeff_step_size > 0.0))
    fail(ErrorKind::InvalidArgument, "step sizes must be positive");
  if (!(prior_scale_positions > 0.0) || !(prior_scale_coeffs > 0.0))
    fail(ErrorKind::InvalidArgument, "prior scales must be positive");
}

namespace {

class LatentDistanceChain {
 public:
  LatentDistanceChain(const RowNormalizedNetwork& a, const NodeAttributes& attrs,
                      const LatentSamplerConfig& cfg)
      : cfg_(cfg), n_(a.n()), w_(dyadic_covariates(attrs)), rng_(cfg.seed) {
    y_ = (a.raw().weights().array() > 0.0).cast<double>().matrix();
    u_ = 0.1 * standard_normal_matrix(n_, cfg.D, rng_);
    coeffs_ = Vector::Zero(1 + static_cast<Index>(w_.size()));
    if (cfg.fixed_intercept) {
      coeffs_(0) = *cfg.fixed_intercept;
    } else {
      const double dyads = static_cast<double>(n_ * (n_ - 1));
      const double dens = std::clamp(y_.sum() / dyads, 0.5 / dyads, 1.0 - 0.5 / dyads);
      coeffs_(0) = std::log(dens / (1.0 - dens)) + 1.0;
    }
    refresh_linear();
    step_ = cfg.step_size;
    coeff_step_ = cfg.coeff_step_size;
  }

  void sweep(bool adapt) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double prior_prec = 1.0 / (cfg_.prior_scale_positions * cfg_.prior_scale_positions);
    for (Index i = 0; i < n_; ++i) {
      Eigen::RowVectorXd prop = u_.row(i);
      for (Index d = 0; d < prop.size(); ++d) prop(d) += step_ * normal(rng_);
      double delta = -0.5 * prior_prec * (prop.squaredNorm() - u_.row(i).squaredNorm());
      if (!cfg_.prior_only) delta += node_loglik(i, prop) - node_loglik(i, u_.row(i));
      ++node_tries_;
      if (std::log(unif(rng_)) < delta) {
        u_.row(i) = prop;
        ++node_accepts_;
      }
    }

    Vector prop = coeffs_;
    const Index first = cfg_.fixed_intercept ? 1 : 0;
    if (first < prop.size()) {
      for (Index c = first; c < prop.size(); ++c) prop(c) += coeff_step_ * normal(rng_);
      const double cprec = 1.0 / (cfg_.prior_scale_coeffs * cfg_.prior_scale_coeffs);
      double delta = -0.5 * cprec *
                     (prop.tail(prop.size() - first).squaredNorm() -
                      coeffs_.tail(prop.size() - first).squaredNorm());
      if (!cfg_.prior_only) {
        const Vector old = coeffs_;
        const double before = total_loglik();
        coeffs_ = prop;
        refresh_linear();
        const double after = total_loglik();
        delta += after - before;
        coeffs_ = old;
      }
      ++coeff_tries_;
      if (std::log(unif(rng_)) < delta) {
        coeffs_ = prop;
        ++coeff_accepts_;
      }
      refresh_linear();
    }

    if (adapt && ++window_ % 50 == 0) {
      const double acc = static_cast<double>(node_accepts_) / static_cast<double>(node_tries_);
      step_ *= acc > 0.3 ? 1.1 : 0.9;
      if (coeff_tries_ > 0) {
        const double cacc = static_cast<double>(coeff_accepts_) / static_cast<double>(coeff_tries_);
        coeff_step_ *= cacc > 0.3 ? 1.1 : 0.9;
      }
      reset_counters();
    }
  }

  void reset_counters() { node_tries_ = node_accepts_ = coeff_tries_ = coeff_accepts_ = 0; }

  double log_posterior() const {
    const double pp = 1.0 / (cfg_.prior_scale_positions * cfg_.prior_scale_positions);
    const double cp = 1.0 / (cfg_.prior_scale_coeffs * cfg_.prior_scale_coeffs);
    double lp = -0.5 * pp * u_.squaredNorm() - 0.5 * cp * coeffs_.squaredNorm();
    if (!cfg_.prior_only) lp += total_loglik();
    return lp;
  }

  const Matrix& positions() const { return u_; }
  const Vector& coeffs() const { return coeffs_; }
  double step() const { return step_; }
  double node_acceptance() const {
    return node_tries_ ? static_cast<double>(node_accepts_) / static_cast<double>(node_tries_) : 0.0;
  }
  double coeff_acceptance() const {
    return coeff_tries_ ? static_cast<double>(coeff_accepts_) / static_cast<double>(coeff_tries_) : 0.0;
  }

 private:
  void refresh_linear() {
    linear_ = Matrix::Constant(n_, n_, coeffs_(0));
    for (std::size_t c = 0; c < w_.size(); ++c) linear_ += coeffs_(static_cast<Index>(c) + 1) * w_[c];
  }

  double dyad(Index i, Index j, double dist) const {
    const double eta = linear_(i, j) - dist;
    return y_(i, j) * eta - softplus(eta);
  }

  double node_loglik(Index i, const Eigen::RowVectorXd& ui) const {
    double ll = 0.0;
    for (Index j = 0; j < n_; ++j) {
      if (j == i) continue;
      const double dist = (ui - u_.row(j)).norm();
      ll += dyad(i, j, dist) + dyad(j, i, dist);
    }
    return ll;
  }

  double total_loglik() const {
    double ll = 0.0;
    for (Index i = 0; i < n_; ++i)
      for (Index j = 0; j < n_; ++j)
        if (i != j) ll += dyad(i, j, (u_.row(i) - u_.row(j)).norm());
    return ll;
  }

  const LatentSamplerConfig& cfg_;
  Index n_;
  std::vector<Matrix> w_;
  Rng rng_;
  Matrix y_;
  Matrix u_;
  Vector coeffs_;
  Matrix linear_;
  double step_ = 0.0;
  double coeff_step_ = 0.0;
  long window_ = 0;
  long node_tries_ = 0, node_accepts_ = 0, coeff_tries_ = 0, coeff_accepts_ = 0;
};

}  // namespace

LatentSample sample_latent_posterior(const RowNormalizedNetwork& a, const NodeAttributes& attrs,
                                     const LatentSamplerConfig& cfg) {
  cfg.validate();
  if (attrs.n() != a.n()) {
    std::ostringstream msg;
    msg << "covariates have " << attrs.n() << " rows but the network has " << a.n() << " nodes";
    fail(ErrorKind::BadShape, msg.str());
  }
  LatentDistanceChain chain(a, attrs, cfg);
  for (int s = 0; s < cfg.burn_in; ++s) {
    chain.sweep(cfg.adapt_during_burn_in);
    if (!std::isfinite(chain.log_posterior()))
      fail(ErrorKind::ChainDiverged, "log posterior became non-finite during burn-in");
  }
  chain.reset_counters();

  LatentSample out;
  out.diagnostics.coeff_mean = Vector::Zero(chain.coeffs().size());
  for (int d = 0; d < cfg.n_draws; ++d) {
    for (int t = 0; t < cfg.thin; ++t) chain.sweep(false);
    const double lp = chain.log_posterior();
    if (!std::isfinite(lp)) fail(ErrorKind::ChainDiverged, "log posterior became non-finite");
    out.draws.draws.push_back(chain.positions());
    out.diagnostics.coeff_mean += chain.coeffs();
    out.diagnostics.final_log_posterior = lp;
  }
  out.draws.aligned = false;
  out.diagnostics.coeff_mean /= static_cast<double>(cfg.n_draws);
  out.diagnostics.acceptance_positions = chain.node_acceptance();
  out.diagnostics.acceptance_coeffs = chain.coeff_acceptance();
  out.diagnostics.final_step_size = chain.step();
  return out;
}

LatentDraws perturbed_draws(const Matrix& truth, int K, double tau, std::uint64_t seed) {
  if (K < 2) fail(ErrorKind::InvalidArgument, "need K >= 2 perturbed draws");
  if (!(tau > 0.0)) fail(ErrorKind::InvalidArgument, "perturbation scale must be positive");
  Rng rng(seed);
  LatentDraws out;
  out.draws.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k)
    out.draws.push_back(truth + tau * standard_normal_matrix(truth.rows(), truth.cols(), rng));
  out.aligned = true;  // all draws already share the frame of `truth`
  return out;
}

}  // namespace hanam
