#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "hanam/box_lbfgs.hpp"

using namespace hanam;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

Vector unbounded(Index n, double sign) { return Vector::Constant(n, sign * kInf); }

double rosenbrock(const Vector& x, Vector* g) {
  double f = 0.0;
  if (g) g->setZero(x.size());
  for (Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x(i + 1) - x(i) * x(i);
    const double b = 1.0 - x(i);
    f += 100.0 * a * a + b * b;
    if (g) {
      (*g)(i) += -400.0 * x(i) * a - 2.0 * b;
      (*g)(i + 1) += 200.0 * a;
    }
  }
  return f;
}

}  // namespace

TEST_CASE("unconstrained quadratic") {
  Matrix q(3, 3);
  q << 4, 1, 0,
       1, 3, 0.5,
       0, 0.5, 2;
  Vector c(3);
  c << 1, -2, 0.5;
  auto f = [&](const Vector& x, Vector* g) {
    if (g) *g = q * x - c;
    return 0.5 * x.dot(q * x) - c.dot(x);
  };
  auto r = minimize_box_lbfgs(f, Vector::Zero(3), unbounded(3, -1), unbounded(3, 1));
  CHECK(r.converged);
  CHECK((r.x - q.ldlt().solve(c)).norm() < 1e-6);
}

TEST_CASE("Rosenbrock from the standard start") {
  Vector x0(4);
  x0 << -1.2, 1.0, -1.2, 1.0;
  BoxLbfgsOptions opts;
  opts.max_iters = 2000;
  opts.pg_tol = 1e-8;
  auto r = minimize_box_lbfgs(rosenbrock, x0, unbounded(4, -1), unbounded(4, 1), opts);
  CHECK(r.converged);
  CHECK((r.x - Vector::Ones(4)).norm() < 1e-5);
}

TEST_CASE("active bounds are respected and reported stationary") {
  // minimum of (x - 2)^2 + (y + 3)^2 on [0,1] x [-1,1] is at (1, -1)
  auto f = [](const Vector& x, Vector* g) {
    if (g) {
      g->resize(2);
      (*g)(0) = 2 * (x(0) - 2);
      (*g)(1) = 2 * (x(1) + 3);
    }
    return (x(0) - 2) * (x(0) - 2) + (x(1) + 3) * (x(1) + 3);
  };
  Vector lo(2), hi(2);
  lo << 0, -1;
  hi << 1, 1;
  auto r = minimize_box_lbfgs(f, Vector::Constant(2, 0.5), lo, hi);
  CHECK(r.converged);
  CHECK(r.x(0) == 1.0);
  CHECK(r.x(1) == -1.0);
  CHECK(r.pg_norm < 1e-12);
}

TEST_CASE("pinned coordinates never move") {
  Vector lo(3), hi(3);
  lo << -kInf, 0.25, -kInf;
  hi << kInf, 0.25, kInf;
  auto f = [](const Vector& x, Vector* g) {
    if (g) *g = 2.0 * (x - Vector::Constant(3, 1.0));
    return (x - Vector::Constant(3, 1.0)).squaredNorm();
  };
  Vector x0(3);
  x0 << 5, 0.25, -5;
  auto r = minimize_box_lbfgs(f, x0, lo, hi);
  CHECK(r.converged);
  CHECK(r.x(1) == 0.25);
  CHECK(std::abs(r.x(0) - 1.0) < 1e-7);
}

TEST_CASE("objective trace is non-increasing") {
  Vector x0(6);
  x0 << -1, 2, 0.5, -0.3, 1.5, 0;
  auto r = minimize_box_lbfgs(rosenbrock, x0, Vector::Constant(6, -1.5), Vector::Constant(6, 1.5));
  for (std::size_t i = 1; i < r.f_trace.size(); ++i) CHECK(r.f_trace[i] <= r.f_trace[i - 1] + 1e-12 * std::abs(r.f_trace[i - 1]));
  CHECK(r.f_trace.back() == r.f);
}

TEST_CASE("throwing or non-finite regions are rejected by the line search") {
  // f = x^2 on x > -1; anything left of -1 throws, and x < -0.5 returns NaN.
  auto f = [](const Vector& x, Vector* g) {
    if (x(0) < -1.0) throw std::runtime_error("outside domain");
    if (x(0) < -0.5) return std::numeric_limits<double>::quiet_NaN();
    if (g) *g = 2.0 * (x - Vector::Constant(1, 0.4));
    return (x(0) - 0.4) * (x(0) - 0.4);
  };
  auto r = minimize_box_lbfgs(f, Vector::Constant(1, 3.0), unbounded(1, -1), unbounded(1, 1));
  CHECK(r.converged);
  CHECK(std::abs(r.x(0) - 0.4) < 1e-7);
}

TEST_CASE("projected gradient norm") {
  Vector x(3), g(3), lo(3), hi(3);
  x << 0, 1, 0.5;
  g << 1, -1, 0.2;
  lo << 0, 0, 0;
  hi << 1, 1, 1;
  // first two coordinates are blocked by their bounds
  CHECK(projected_gradient_norm(x, g, lo, hi) == doctest::Approx(0.2));
}

TEST_CASE("iteration cap yields converged = false") {
  BoxLbfgsOptions opts;
  opts.max_iters = 3;
  Vector x0(2);
  x0 << -1.2, 1.0;
  auto r = minimize_box_lbfgs(rosenbrock, x0, unbounded(2, -1), unbounded(2, 1), opts);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations <= 3);
}

TEST_CASE("converges when objective changes fall below rounding error") {
  // A large offset makes f-differences near the optimum invisible in double precision;
  // the gradient still carries the information.
  const Vector scale = (Vector(4) << 1.0, 30.0, 0.02, 400.0).finished();
  auto f = [&](const Vector& x, Vector* g) {
    if (g) *g = scale.cwiseProduct(x - Vector::Ones(4));
    return 1e9 + 0.5 * (x - Vector::Ones(4)).cwiseAbs2().dot(scale);
  };
  BoxLbfgsOptions opts;
  opts.pg_tol = 1e-9;
  auto r = minimize_box_lbfgs(f, Vector::Zero(4), unbounded(4, -1), unbounded(4, 1), opts);
  CHECK(r.converged);
  CHECK(r.pg_norm < 1e-9);
  CHECK((r.x - Vector::Ones(4)).cwiseProduct(scale).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(r.evaluations < 500);
}

TEST_CASE("a stalled objective stops early without claiming convergence") {
  // Gradient inconsistent with f: f is flat, so no step can make progress.
  auto f = [](const Vector& x, Vector* g) {
    if (g) *g = Vector::Constant(x.size(), 1e-3);
    return 5.0;
  };
  BoxLbfgsOptions opts;
  opts.max_iters = 10000;
  auto r = minimize_box_lbfgs(f, Vector::Zero(2), unbounded(2, -1), unbounded(2, 1), opts);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations < 100);
}

TEST_CASE("coupled quadratics started at a corner reach the box-constrained minimum") {
  // At a bound whose gradient points inward the quasi-Newton direction can still point outward;
  // the reference is long-run projected gradient descent.
  for (int seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    Matrix g = standard_normal_matrix(3, 3, rng);
    const Matrix H = g * g.transpose() + 0.05 * Matrix::Identity(3, 3);
    const Vector b = 3.0 * standard_normal_vector(3, rng);
    const Vector lo = -Vector::Ones(3) - standard_normal_vector(3, rng).cwiseAbs() * 0.5;
    const Vector hi = Vector::Ones(3) + standard_normal_vector(3, rng).cwiseAbs() * 0.5;
    auto f = [&](const Vector& x, Vector* grad) {
      if (grad) *grad = H * x - b;
      return 0.5 * x.dot(H * x) - b.dot(x);
    };
    Vector x0 = hi;
    if (seed % 2) x0(0) = lo(0);
    BoxLbfgsOptions opts;
    opts.pg_tol = 1e-9;
    auto r = minimize_box_lbfgs(f, x0, lo, hi, opts);
    CAPTURE(seed);
    CHECK(r.converged);

    const double L = Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().maxCoeff();
    Vector x = x0;
    for (int it = 0; it < 200000; ++it) x = (x - (H * x - b) / L).cwiseMax(lo).cwiseMin(hi);
    CHECK(r.f <= f(x, nullptr) + 1e-9);
    CHECK((r.x - x).cwiseAbs().maxCoeff() < 1e-5);
  }
}
