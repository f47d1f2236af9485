#include "doctest.h"
#include "helpers.hpp"

#include "hanam/errors.hpp"
#include "hanam/latent_approx.hpp"

using namespace hanam;
using hanam::testing::random_orthogonal;
using hanam::testing::random_spd;

namespace {

/// K draws Lambda + L_omega Z L_psi' from MN(Lambda, Omega, Psi).
LatentDraws matrix_normal_draws(const Matrix& lambda, const Matrix& omega, const Matrix& psi, int K, Rng& rng) {
  const Matrix lo = omega.llt().matrixL();
  const Matrix lp = psi.llt().matrixL();
  LatentDraws d;
  for (int k = 0; k < K; ++k)
    d.draws.push_back(lambda + lo * standard_normal_matrix(lambda.rows(), lambda.cols(), rng) * lp.transpose());
  d.aligned = true;
  return d;
}

Matrix pairwise_distances(const Matrix& u) {
  Matrix d(u.rows(), u.rows());
  for (Index i = 0; i < u.rows(); ++i)
    for (Index j = 0; j < u.rows(); ++j) d(i, j) = (u.row(i) - u.row(j)).norm();
  return d;
}

double spread_about_mean(const LatentDraws& d) {
  Matrix mean = Matrix::Zero(d.n(), d.D());
  for (const auto& u : d.draws) mean += u;
  mean /= static_cast<double>(d.K());
  double s = 0.0;
  for (const auto& u : d.draws) s += (u - mean).squaredNorm();
  return s;
}

double rel_frob(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("D = 1 fit reproduces the sample covariance split") {
  Rng rng(21);
  const Index n = 6;
  const int K = 500;
  Matrix omega = random_spd(n, rng);
  omega /= omega(0, 0);
  auto draws = matrix_normal_draws(standard_normal_matrix(n, 1, rng), omega, Matrix::Constant(1, 1, 0.7), K, rng);

  // Oracle: C = (1/K) sum (u - mean)(u - mean)', Psi = C11, Omega = C / C11.
  Vector mean = Vector::Zero(n);
  for (const auto& u : draws.draws) mean += u.col(0);
  mean /= K;
  Matrix C = Matrix::Zero(n, n);
  for (const auto& u : draws.draws) C += (u.col(0) - mean) * (u.col(0) - mean).transpose();
  C /= K;

  auto fit = fit_matrix_normal(draws);
  CHECK(fit.converged);
  CHECK(fit.Omega(0, 0) == 1.0);
  CHECK(rel_frob(fit.Psi(0, 0) * fit.Omega, C) < 1e-6);
  CHECK(std::abs(fit.Psi(0, 0) - C(0, 0)) / C(0, 0) < 1e-6);
  CHECK((fit.Lambda.col(0) - mean).norm() < 1e-12);
}

TEST_CASE("identical draws are degenerate") {
  LatentDraws d;
  Matrix u = Matrix::Ones(4, 2);
  d.draws = {u, u, u};
  d.aligned = true;
  try {
    fit_matrix_normal(d);
    FAIL("expected DegenerateDraws");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateDraws);
  }
}

TEST_CASE("unaligned draws are refused") {
  Rng rng(1);
  LatentDraws d;
  for (int k = 0; k < 5; ++k) d.draws.push_back(standard_normal_matrix(4, 2, rng));
  CHECK_THROWS_AS(fit_matrix_normal(d), Error);
}

TEST_CASE("draw validation") {
  LatentDraws d;
  d.draws = {Matrix::Zero(3, 2)};
  CHECK_THROWS_AS(d.validate(), Error);
  d.draws = {Matrix::Zero(3, 2), Matrix::Zero(3, 1)};
  CHECK_THROWS_AS(d.validate(), Error);
  d.draws = {Matrix::Zero(3, 2), Matrix::Zero(3, 2)};
  d.draws[1](0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("known-parameter recovery at n = 20, D = 3, K = 1000") {
  const Index n = 20, D = 3;
  double lambda_err = 0.0, omega_err = 0.0, psi_err = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(100 + s);
    Matrix lambda = standard_normal_matrix(n, D, rng);
    Matrix omega = random_spd(n, rng);
    omega /= omega(0, 0);
    Matrix psi = random_spd(D, rng) * 0.3;
    auto draws = matrix_normal_draws(lambda, omega, psi, 1000, rng);
    auto fit = fit_matrix_normal(draws);
    lambda_err += (fit.Lambda - lambda).cwiseAbs().mean();
    omega_err += rel_frob(fit.Omega, omega);
    psi_err += rel_frob(fit.Psi, psi);
  }
  CHECK(lambda_err / seeds < 0.05);
  CHECK(omega_err / seeds < 0.15);
  CHECK(psi_err / seeds < 0.15);
}

TEST_CASE("flip-flop log likelihood is non-decreasing") {
  for (auto reading : {OmegaS11Reading::Pre, OmegaS11Reading::Post}) {
    for (int s = 0; s < 5; ++s) {
      Rng rng(300 + s);
      Matrix omega = random_spd(8, rng, 0.2);
      omega /= omega(0, 0);
      auto draws = matrix_normal_draws(standard_normal_matrix(8, 3, rng), omega, random_spd(3, rng), 40, rng);
      MatrixNormalOptions opts;
      opts.s11_reading = reading;
      auto fit = fit_matrix_normal(draws, opts);
      REQUIRE(fit.loglik_trace.size() >= 2);
      if (reading == OmegaS11Reading::Pre) {
        for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
          CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-10 * std::abs(fit.loglik_trace[i - 1]));
        CHECK(fit.fit_loglik == doctest::Approx(fit.loglik_trace.back()));
      }
      CHECK(fit.Omega(0, 0) == 1.0);
    }
  }
}

TEST_CASE("pre reading is at least as likely as post reading") {
  Rng rng(17);
  Matrix omega = random_spd(6, rng, 0.1);
  omega /= omega(0, 0);
  auto draws = matrix_normal_draws(standard_normal_matrix(6, 2, rng), omega, random_spd(2, rng), 60, rng);
  MatrixNormalOptions post;
  post.s11_reading = OmegaS11Reading::Post;
  const double pre_ll = fit_matrix_normal(draws).fit_loglik;
  const double post_ll = fit_matrix_normal(draws, post).fit_loglik;
  CHECK(pre_ll >= post_ll - 1e-8);
}

TEST_CASE("scale split leaves the likelihood unchanged") {
  Rng rng(3);
  Matrix omega = random_spd(5, rng);
  omega /= omega(0, 0);
  Matrix psi = random_spd(2, rng);
  auto draws = matrix_normal_draws(standard_normal_matrix(5, 2, rng), omega, psi, 30, rng);
  auto fit = fit_matrix_normal(draws);
  for (double c : {0.1, 2.0, 37.5}) {
    const double a = matrix_normal_loglik(draws, fit.Lambda, fit.Omega, fit.Psi);
    const double b = matrix_normal_loglik(draws, fit.Lambda, c * fit.Omega, fit.Psi / c);
    CHECK(std::abs(a - b) < 1e-9 * std::abs(a));
  }
}

TEST_CASE("matrix-normal log likelihood matches the vectorised MVN density") {
  Rng rng(8);
  const Index n = 4, D = 2;
  Matrix lambda = standard_normal_matrix(n, D, rng);
  Matrix omega = random_spd(n, rng);
  Matrix psi = random_spd(D, rng);
  auto draws = matrix_normal_draws(lambda, omega, psi, 3, rng);
  // vec(U) ~ N(vec(Lambda), Psi (x) Omega)
  Matrix cov(n * D, n * D);
  for (Index a = 0; a < D; ++a)
    for (Index b = 0; b < D; ++b) cov.block(a * n, b * n, n, n) = psi(a, b) * omega;
  Eigen::LLT<Matrix> llt(cov);
  const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  double oracle = 0.0;
  for (const auto& u : draws.draws) {
    Vector r = Eigen::Map<const Vector>(u.data(), n * D) - Eigen::Map<const Vector>(lambda.data(), n * D);
    oracle += -0.5 * (n * D * std::log(2.0 * M_PI) + logdet + r.dot(llt.solve(r)));
  }
  CHECK(matrix_normal_loglik(draws, lambda, omega, psi) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("fit is equivariant under column rotation") {
  Rng rng(44);
  Matrix omega = random_spd(7, rng);
  omega /= omega(0, 0);
  auto draws = matrix_normal_draws(standard_normal_matrix(7, 3, rng), omega, random_spd(3, rng), 80, rng);
  const Matrix R = random_orthogonal(3, rng);
  LatentDraws rotated = draws;
  for (auto& u : rotated.draws) u = u * R;
  auto f0 = fit_matrix_normal(draws);
  auto f1 = fit_matrix_normal(rotated);
  CHECK((f1.Lambda - f0.Lambda * R).norm() < 1e-8);
  CHECK((f1.Psi - R.transpose() * f0.Psi * R).norm() < 1e-8);
  CHECK((f1.Omega - f0.Omega).norm() < 1e-8);
}

TEST_CASE("procrustes undoes rotations, reflections and shifts") {
  Rng rng(9);
  const Matrix u0 = standard_normal_matrix(12, 3, rng);
  LatentDraws d;
  d.draws.push_back(u0);
  for (int k = 0; k < 6; ++k) {
    Matrix R = random_orthogonal(3, rng);
    if (k % 2) R.col(0) *= -1.0;
    Vector c = standard_normal_vector(3, rng) * 5.0;
    d.draws.push_back((u0 * R).rowwise() + c.transpose());
  }
  auto a = procrustes_align(d);
  CHECK(a.aligned);
  for (const auto& u : a.draws) CHECK((u - u0).norm() < 1e-8);
}

TEST_CASE("procrustes leaves identical draws and distances unchanged") {
  Rng rng(10);
  const Matrix u0 = standard_normal_matrix(6, 2, rng);
  LatentDraws same;
  same.draws = {u0, u0, u0};
  for (const auto& u : procrustes_align(same).draws) CHECK((u - u0).norm() < 1e-10);

  LatentDraws d;
  for (int k = 0; k < 10; ++k) d.draws.push_back(standard_normal_matrix(9, 3, rng));
  auto a = procrustes_align(d);
  for (int k = 0; k < 10; ++k)
    CHECK((pairwise_distances(a.draws[k]) - pairwise_distances(d.draws[k])).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("procrustes does not increase spread about the mean") {
  for (int s = 0; s < 20; ++s) {
    Rng rng(500 + s);
    const Matrix base = standard_normal_matrix(10, 2, rng);
    LatentDraws d;
    for (int k = 0; k < 15; ++k) {
      Matrix R = random_orthogonal(2, rng);
      d.draws.push_back(base * R + 0.3 * standard_normal_matrix(10, 2, rng));
    }
    CHECK(spread_about_mean(procrustes_align(d)) <= spread_about_mean(d) + 1e-9);
  }
}

TEST_CASE("procrustes rejects a collapsed draw") {
  Rng rng(2);
  LatentDraws d;
  d.draws = {standard_normal_matrix(5, 2, rng), Matrix::Constant(5, 2, 3.0)};
  try {
    procrustes_align(d);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }
}

TEST_CASE("dyadic covariates") {
  NodeAttributes attrs;
  attrs.values.resize(3, 2);
  attrs.values << 1.0, 0,
                  3.5, 1,
                  0.5, 0;
  attrs.categorical = {false, true};
  auto w = dyadic_covariates(attrs);
  REQUIRE(w.size() == 2);
  CHECK(w[0](0, 1) == 2.5);
  CHECK(w[0](1, 2) == 3.0);
  CHECK(w[1](0, 2) == 1.0);
  CHECK(w[1](0, 1) == 0.0);
}

TEST_CASE("sampler bookkeeping with the minimum draw count") {
  Matrix w(2, 2);
  w << 0, 1, 1, 0;
  auto a = row_normalize(Adjacency(w));
  LatentSamplerConfig cfg;
  cfg.D = 1;
  cfg.burn_in = 10;
  cfg.thin = 1;
  cfg.n_draws = 2;
  auto s = sample_latent_posterior(a, NodeAttributes{Matrix::Zero(2, 0), {}}, cfg);
  CHECK(s.draws.K() == 2);
  CHECK_FALSE(s.draws.aligned);
  CHECK(s.draws.n() == 2);
  CHECK(s.draws.D() == 1);
}

TEST_CASE("sampler rejects mismatched covariates") {
  auto a = hanam::testing::two_cycle();
  LatentSamplerConfig cfg;
  cfg.n_draws = 2;
  try {
    sample_latent_posterior(a, NodeAttributes{Matrix::Zero(3, 1), {false}}, cfg);
    FAIL("expected BadShape");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BadShape);
  }
}

TEST_CASE("an observed edge pulls the pair together relative to the prior") {
  Matrix w(2, 2);
  w << 0, 1, 0, 0;
  auto a = row_normalize(Adjacency(w));
  LatentSamplerConfig cfg;
  cfg.D = 1;
  cfg.burn_in = 2000;
  cfg.thin = 2;
  cfg.n_draws = 4000;
  cfg.fixed_intercept = 0.0;
  cfg.seed = 77;
  auto mean_gap = [&](bool prior_only) {
    cfg.prior_only = prior_only;
    auto s = sample_latent_posterior(a, NodeAttributes{Matrix::Zero(2, 0), {}}, cfg);
    double g = 0.0;
    for (const auto& u : s.draws.draws) g += std::abs(u(0, 0) - u(1, 0));
    return g / s.draws.K();
  };
  CHECK(mean_gap(false) < mean_gap(true));
}

TEST_CASE("with no edges and a very negative intercept the sampler returns the prior") {
  auto a = row_normalize(Adjacency(Matrix::Zero(6, 6)));
  LatentSamplerConfig cfg;
  cfg.D = 2;
  cfg.burn_in = 500;
  cfg.thin = 10;
  cfg.n_draws = 1000;
  cfg.fixed_intercept = -40.0;
  cfg.prior_scale_positions = 2.0;
  cfg.seed = 5;
  auto s = sample_latent_posterior(a, NodeAttributes{Matrix::Zero(6, 0), {}}, cfg);
  // Thinned draws are close to independent; coordinate means should be N(0, 4 / K) under the prior.
  // Bonferroni over 12 coordinates at overall level 0.01, inflated by 2 for residual autocorrelation.
  const double se = 2.0 / std::sqrt(static_cast<double>(s.draws.K()));
  Matrix mean = Matrix::Zero(6, 2);
  for (const auto& u : s.draws.draws) mean += u;
  mean /= static_cast<double>(s.draws.K());
  CHECK(mean.cwiseAbs().maxCoeff() < 2.0 * 3.34 * se);
  double var = 0.0;
  for (const auto& u : s.draws.draws) var += (u - mean).squaredNorm();
  var /= static_cast<double>(s.draws.K() * 12);
  CHECK(var == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("perturbed draws centre on the truth") {
  Rng rng(6);
  Matrix truth = standard_normal_matrix(10, 3, rng);
  auto d = perturbed_draws(truth, 400, 0.1, 12);
  CHECK(d.K() == 400);
  Matrix mean = Matrix::Zero(10, 3);
  for (const auto& u : d.draws) mean += u;
  mean /= 400.0;
  CHECK((mean - truth).cwiseAbs().maxCoeff() < 0.03);
}
