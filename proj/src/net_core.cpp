#include "hanam/net_core.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hanam/errors.hpp"

namespace hanam {

Adjacency::Adjacency(Matrix weights, std::vector<std::string> node_labels)
    : weights_(std::move(weights)), labels_(std::move(node_labels)) {
  if (weights_.rows() != weights_.cols())
    fail(ErrorKind::BadShape, "adjacency must be square");
  if (weights_.rows() < 2) fail(ErrorKind::BadShape, "adjacency needs at least 2 nodes");
  if (!labels_.empty() && static_cast<Index>(labels_.size()) != weights_.rows())
    fail(ErrorKind::BadShape, "node label count does not match adjacency size");
  for (Index j = 0; j < weights_.cols(); ++j) {
    for (Index i = 0; i < weights_.rows(); ++i) {
      const double w = weights_(i, j);
      if (!std::isfinite(w)) {
        std::ostringstream msg;
        msg << "non-finite entry at (" << i << ", " << j << ")";
        fail(ErrorKind::InvalidArgument, msg.str());
      }
      if (w < 0.0) {
        std::ostringstream msg;
        msg << "entry (" << i << ", " << j << ") = " << w << " is negative";
        fail(ErrorKind::NegativeEntry, msg.str());
      }
    }
  }
  for (Index i = 0; i < weights_.rows(); ++i) {
    if (weights_(i, i) != 0.0) {
      std::ostringstream msg;
      msg << "diagonal entry " << i << " = " << weights_(i, i);
      fail(ErrorKind::NonzeroDiagonal, msg.str());
    }
  }
}

std::size_t Adjacency::edge_count() const {
  return static_cast<std::size_t>((weights_.array() > 0.0).count());
}

RowNormalizedNetwork row_normalize(const Adjacency& raw) {
  Matrix a = raw.weights();
  std::vector<Index> isolated;
  for (Index i = 0; i < a.rows(); ++i) {
    const double s = a.row(i).sum();
    if (s == 0.0) {
      isolated.push_back(i);
      continue;
    }
    // Leave rows that already sum to one untouched so normalisation is idempotent.
    if (std::abs(s - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) continue;
    a.row(i) /= s;
  }
  return RowNormalizedNetwork(std::move(a), raw, std::move(isolated));
}

double spectral_norm(const Matrix& a, const SpectralNormOptions& opts) {
  const Index n = a.cols();
  if (n == 0) return 0.0;
  if (a.squaredNorm() == 0.0) return 0.0;

  // Block power iteration on A'A with a Rayleigh-Ritz step; a block of a few vectors keeps
  // clustered leading singular values from stalling the iteration.
  const Index b = std::min<Index>(n, 4);
  Matrix v(n, b);
  for (Index j = 0; j < b; ++j)
    for (Index i = 0; i < n; ++i)
      v(i, j) = (j == 0 ? 1.0 : 0.0) + 0.1 * std::sin(1.0 + 2.3 * static_cast<double>(i) + 0.7 * static_cast<double>(j));
  Eigen::HouseholderQR<Matrix> qr(v);
  v = qr.householderQ() * Matrix::Identity(n, b);

  double lambda = 0.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    const Matrix av = a * v;
    Eigen::SelfAdjointEigenSolver<Matrix> ritz(av.transpose() * av);
    const double next = ritz.eigenvalues()(b - 1);
    if (!(next > 0.0)) return 0.0;
    if (it > 0 && std::abs(next - lambda) <= opts.tol * std::abs(next)) return std::sqrt(next);
    lambda = next;
    const Matrix w = a.transpose() * av * ritz.eigenvectors();
    Eigen::HouseholderQR<Matrix> q(w);
    v = q.householderQ() * Matrix::Identity(n, b);
  }
  fail(ErrorKind::NoConvergence, "power iteration did not converge within " +
                                     std::to_string(opts.max_iters) + " iterations");
}

double spectral_norm(const RowNormalizedNetwork& a, const SpectralNormOptions& opts) {
  return spectral_norm(a.matrix(), opts);
}

bool check_stability(double rho, double spectral_norm_of_a) {
  return std::abs(rho) * spectral_norm_of_a < 1.0;
}

bool check_stability(double rho, const RowNormalizedNetwork& a) {
  if (rho == 0.0) return true;
  return check_stability(rho, spectral_norm(a));
}

}  // namespace hanam
