#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace hanam {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// splitmix64 finaliser; the seed-mixing function for every derived stream.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a) {
  return mix64(master ^ mix64(a));
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, Rest... rest) {
  return derive_seed(derive_seed(master, a), static_cast<std::uint64_t>(rest)...);
}

inline Vector standard_normal_vector(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Matrix standard_normal_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace hanam
