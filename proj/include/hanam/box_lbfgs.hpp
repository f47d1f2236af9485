#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hanam/types.hpp"

namespace hanam {

/// Objective to minimise; fills grad when non-null. May throw or return non-finite values,
/// which the line search treats as rejections.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct BoxLbfgsOptions {
  int max_iters = 500;
  int history = 10;
  double pg_tol = 1e-6;  // infinity norm of the projected gradient
  double armijo = 1e-4;
  double wolfe = 0.9;
  int max_line_search = 60;
};

struct BoxLbfgsResult {
  Vector x;
  double f = 0.0;
  Vector grad;
  double pg_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
  std::vector<double> f_trace;  // objective at every accepted iterate, starting point first
};

/// Infinity norm of P(x - g) - x where P clips to [lower, upper].
double projected_gradient_norm(const Vector& x, const Vector& g, const Vector& lower, const Vector& upper);

/// Limited-memory BFGS with bound constraints handled by an active set: variables sitting on a
/// bound with the gradient pushing outward are frozen for the iteration, steps are capped at the
/// first bound they reach. lower == upper pins a coordinate.
BoxLbfgsResult minimize_box_lbfgs(const Objective& objective, Vector x0, const Vector& lower,
                                  const Vector& upper, const BoxLbfgsOptions& opts = {});

}  // namespace hanam
