#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hanam/types.hpp"

namespace hanam {

/// Raw directed (possibly weighted) adjacency: nonnegative, zero diagonal, n >= 2.
class Adjacency {
 public:
  /// Validates and takes ownership. Throws NegativeEntry / NonzeroDiagonal / BadShape.
  explicit Adjacency(Matrix weights, std::vector<std::string> node_labels = {});

  Index n() const { return weights_.rows(); }
  const Matrix& weights() const { return weights_; }
  const std::vector<std::string>& node_labels() const { return labels_; }
  std::size_t edge_count() const;

 private:
  Matrix weights_;
  std::vector<std::string> labels_;
};

/// Row-normalised network A; rows sum to 1, or 0 for isolated (zero out-degree) nodes.
class RowNormalizedNetwork {
 public:
  Index n() const { return a_.rows(); }
  const Matrix& matrix() const { return a_; }
  const Adjacency& raw() const { return raw_; }
  const std::vector<Index>& isolated() const { return isolated_; }

 private:
  friend RowNormalizedNetwork row_normalize(const Adjacency& raw);
  RowNormalizedNetwork(Matrix a, Adjacency raw, std::vector<Index> isolated)
      : a_(std::move(a)), raw_(std::move(raw)), isolated_(std::move(isolated)) {}

  Matrix a_;
  Adjacency raw_;
  std::vector<Index> isolated_;
};

RowNormalizedNetwork row_normalize(const Adjacency& raw);

struct SpectralNormOptions {
  int max_iters = 10000;
  double tol = 1e-12;
};

/// Largest singular value by power iteration on A'A. Throws NoConvergence.
double spectral_norm(const Matrix& a, const SpectralNormOptions& opts = {});
double spectral_norm(const RowNormalizedNetwork& a, const SpectralNormOptions& opts = {});

/// |rho| * lambda_1(A) < 1.
bool check_stability(double rho, const RowNormalizedNetwork& a);
bool check_stability(double rho, double spectral_norm_of_a);

}  // namespace hanam
