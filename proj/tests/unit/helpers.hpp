#pragma once

#include <cmath>
#include <random>

#include "hanam/net_core.hpp"
#include "hanam/types.hpp"

namespace hanam::testing {

/// Random directed 0/1 adjacency with roughly `density` of off-diagonal entries set,
/// every row guaranteed at least one edge.
inline Adjacency random_adjacency(Index n, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution edge(density);
  std::uniform_int_distribution<Index> pick(0, n - 2);
  Matrix w = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j)
      if (i != j && edge(rng)) w(i, j) = 1.0;
    if (w.row(i).sum() == 0.0) {
      Index j = pick(rng);
      w(i, j >= i ? j + 1 : j) = 1.0;
    }
  }
  return Adjacency(w);
}

inline RowNormalizedNetwork random_network(Index n, double density, std::uint64_t seed) {
  return row_normalize(random_adjacency(n, density, seed));
}

inline RowNormalizedNetwork two_cycle() {
  Matrix w(2, 2);
  w << 0, 1, 1, 0;
  return row_normalize(Adjacency(w));
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline Matrix random_spd(Index n, Rng& rng, double jitter = 0.5) {
  Matrix g = standard_normal_matrix(n, n, rng);
  return g * g.transpose() / static_cast<double>(n) + jitter * Matrix::Identity(n, n);
}

/// Haar-ish random orthogonal matrix from QR of a Gaussian matrix.
inline Matrix random_orthogonal(Index d, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(standard_normal_matrix(d, d, rng));
  Matrix q = qr.householderQ();
  return q;
}

}  // namespace hanam::testing
