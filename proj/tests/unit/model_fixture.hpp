#pragma once

#include <memory>

#include "helpers.hpp"
#include "hanam/influence_models.hpp"
#include "hanam/latent_approx.hpp"

namespace hanam::testing {

struct Problem {
  RowNormalizedNetwork a;
  Dataset data;
  std::shared_ptr<const MatrixNormalApprox> latent;
};

/// Random network, design with intercept, outcome and matrix-normal summary.
inline Problem random_problem(Index n, Index p, Index D, std::uint64_t seed) {
  Rng rng(seed);
  Problem pr{random_network(n, 0.15, seed * 31 + 7), {}, nullptr};
  pr.data.X = standard_normal_matrix(n, p, rng);
  pr.data.X.col(0).setOnes();
  pr.data.y = standard_normal_vector(n, rng) + pr.data.X * Vector::Constant(p, 0.3);
  auto mn = std::make_shared<MatrixNormalApprox>();
  mn->Lambda = standard_normal_matrix(n, D, rng);
  Matrix omega = random_spd(n, rng, 0.5);
  mn->Omega = omega / omega(0, 0);
  mn->Psi = random_spd(D, rng, 0.2) * 0.5;
  pr.latent = mn;
  return pr;
}

/// A random parameter point with |rho| lambda_1 <= 0.9.
inline ParamVector random_theta(Index p, Index D, double lambda1, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ParamVector t;
  t.beta = standard_normal_vector(p, rng);
  t.gamma = standard_normal_vector(D, rng) * 0.5;
  t.rho = 0.9 * u(rng) / std::max(1.0, lambda1);
  t.sigma2 = std::exp(u(rng));
  return t;
}

}  // namespace hanam::testing
