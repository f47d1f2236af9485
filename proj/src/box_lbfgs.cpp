#include "hanam/box_lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "hanam/errors.hpp"

namespace hanam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRoundoff = 1e-12;
constexpr double kApproxDelta = 0.1;
constexpr int kMaxStalled = 20;

struct Eval {
  double f = kInf;
  Vector g;
  bool ok = false;
};

Eval safe_eval(const Objective& obj, const Vector& x, int& counter) {
  Eval e;
  ++counter;
  try {
    e.f = obj(x, &e.g);
    e.ok = std::isfinite(e.f) && e.g.size() == x.size() && e.g.allFinite();
  } catch (const Error&) {
    e.ok = false;
  }
  if (!e.ok) e.f = kInf;
  return e;
}

}  // namespace

double projected_gradient_norm(const Vector& x, const Vector& g, const Vector& lower, const Vector& upper) {
  double m = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double moved = std::clamp(x(i) - g(i), lower(i), upper(i));
    m = std::max(m, std::abs(moved - x(i)));
  }
  return m;
}

BoxLbfgsResult minimize_box_lbfgs(const Objective& objective, Vector x0, const Vector& lower,
                                  const Vector& upper, const BoxLbfgsOptions& opts) {
  const Index dim = x0.size();
  if (lower.size() != dim || upper.size() != dim)
    fail(ErrorKind::BadShape, "bound vectors must match the parameter dimension");
  for (Index i = 0; i < dim; ++i) {
    if (!(lower(i) <= upper(i))) fail(ErrorKind::InvalidArgument, "lower bound exceeds upper bound");
    x0(i) = std::clamp(x0(i), lower(i), upper(i));
  }

  BoxLbfgsResult res;
  Eval cur = safe_eval(objective, x0, res.evaluations);
  if (!cur.ok) {
    res.x = x0;
    res.f = kInf;
    res.status = "objective not finite at the starting point";
    return res;
  }
  Vector x = x0;
  res.f_trace.push_back(cur.f);

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  int stalled = 0;
  double best_pg = kInf;

  auto free_mask = [&](const Vector& xx, const Vector& g) {
    Eigen::Array<bool, Eigen::Dynamic, 1> free(dim);
    for (Index i = 0; i < dim; ++i) {
      const bool pinned = lower(i) == upper(i);
      const bool at_lo = xx(i) <= lower(i) && g(i) > 0.0;
      const bool at_hi = xx(i) >= upper(i) && g(i) < 0.0;
      free(i) = !(pinned || at_lo || at_hi);
    }
    return free;
  };

  for (int it = 0; it < opts.max_iters; ++it) {
    res.pg_norm = projected_gradient_norm(x, cur.g, lower, upper);
    if (res.pg_norm < opts.pg_tol) {
      res.converged = true;
      res.status = "projected gradient below tolerance";
      break;
    }
    const auto free = free_mask(x, cur.g);
    Vector q = cur.g;
    for (Index i = 0; i < dim; ++i)
      if (!free(i)) q(i) = 0.0;

    // Two-loop recursion on the free subspace.
    const std::size_t m = s_hist.size();
    std::vector<double> a(m);
    for (std::size_t k = m; k-- > 0;) {
      a[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= a[k] * y_hist[k];
    }
    double gamma = 1.0;
    if (m > 0) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    else gamma = 1.0 / std::max(1.0, cur.g.lpNorm<Eigen::Infinity>());
    Vector d = gamma * q;
    for (std::size_t k = 0; k < m; ++k) {
      const double bcoef = rho_hist[k] * y_hist[k].dot(d);
      d += (a[k] - bcoef) * s_hist[k];
    }
    d = -d;
    // The quasi-Newton direction may still point out of the box at a bound the gradient does not
    // press against; such components would cap the step at zero.
    for (Index i = 0; i < dim; ++i)
      if (!free(i) || (x(i) >= upper(i) && d(i) > 0.0) || (x(i) <= lower(i) && d(i) < 0.0)) d(i) = 0.0;

    double slope = cur.g.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -cur.g / std::max(1.0, cur.g.lpNorm<Eigen::Infinity>());
      for (Index i = 0; i < dim; ++i)
        if (!free(i)) d(i) = 0.0;
      slope = cur.g.dot(d);
      if (!(slope < 0.0)) {
        res.status = "no descent direction";
        break;
      }
    }

    // Largest step keeping every coordinate inside its box.
    double step_max = kInf;
    for (Index i = 0; i < dim; ++i) {
      if (d(i) > 0.0) step_max = std::min(step_max, (upper(i) - x(i)) / d(i));
      else if (d(i) < 0.0) step_max = std::min(step_max, (lower(i) - x(i)) / d(i));
    }

    // Weak Wolfe bisection search.
    double lo = 0.0, hi = kInf;
    double step = std::min(1.0, step_max);
    Eval trial;
    Vector xt;
    bool accepted = false;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      xt = x + step * d;
      if (step == step_max) {
        for (Index i = 0; i < dim; ++i) xt(i) = std::clamp(xt(i), lower(i), upper(i));
      }
      trial = safe_eval(objective, xt, res.evaluations);
      // Near the optimum f changes by less than its rounding error; accept on the directional
      // derivative alone when f has not visibly increased (approximate Wolfe conditions).
      const double dphi = trial.ok ? trial.g.dot(d) : 0.0;
      const bool approx_wolfe = trial.ok && trial.f <= cur.f + kRoundoff * std::abs(cur.f) &&
                                dphi >= opts.wolfe * slope && dphi <= (1.0 - 2.0 * kApproxDelta) * -slope;
      if (approx_wolfe) {
        accepted = true;
        break;
      }
      if (!trial.ok || trial.f > cur.f + opts.armijo * step * slope) {
        hi = step;
      } else if (trial.g.dot(d) < opts.wolfe * slope) {
        lo = step;
        if (step >= step_max) {
          accepted = true;  // still descending at the bound: stop there
          break;
        }
      } else {
        accepted = true;
        break;
      }
      if (std::isfinite(hi)) step = 0.5 * (lo + hi);
      else step = std::min(2.0 * lo, step_max);
      if (step <= 0.0 || (std::isfinite(hi) && hi - lo < 1e-16 * std::max(1.0, hi))) break;
    }
    if (!accepted) {
      // Accept a sufficient-decrease point from the bracket if one was found.
      if (lo > 0.0) {
        xt = x + lo * d;
        trial = safe_eval(objective, xt, res.evaluations);
        accepted = trial.ok && trial.f <= cur.f;
      }
      if (!accepted) {
        res.status = "line search failed";
        break;
      }
    }

    const Vector s = xt - x;
    const Vector yv = trial.g - cur.g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    // Stalled: neither the objective nor the projected gradient improves.
    const double trial_pg = projected_gradient_norm(xt, trial.g, lower, upper);
    const bool f_progress = cur.f - trial.f > kRoundoff * std::max(1.0, std::abs(cur.f));
    if (f_progress || trial_pg < 0.5 * best_pg) stalled = 0;
    else ++stalled;
    best_pg = std::min(best_pg, trial_pg);
    x = xt;
    cur = std::move(trial);
    res.f_trace.push_back(cur.f);
    res.iterations = it + 1;
    if (stalled >= kMaxStalled) {
      res.status = "no progress in the objective";
      break;
    }
  }

  res.x = x;
  res.f = cur.f;
  res.grad = cur.g;
  res.pg_norm = projected_gradient_norm(x, cur.g, lower, upper);
  if (!res.converged && res.pg_norm < opts.pg_tol) {
    res.converged = true;
    res.status = "projected gradient below tolerance";
  }
  if (res.status.empty()) res.status = "iteration limit reached";
  return res;
}

}  // namespace hanam
