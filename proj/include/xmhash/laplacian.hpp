#pragma once

#include "xmhash/common.hpp"

namespace xmh {

/// Symmetric graph Laplacian with a dense view and a fast product.
///
/// When built from an expanded affinity Zhat (N x P), Lap = I - Zhat Lambda^-1 Zhat^T
/// and products Lap * Y cost O(N P L) through the low-rank factor instead of
/// O(N^2 L).
class Laplacian {
public:
  Laplacian() = default;
  Laplacian(Matrix dense);  // NOLINT(google-explicit-constructor)

  static Laplacian from_expanded_affinity(const Matrix& z_hat);

  Index size() const { return dense_.rows(); }
  const Matrix& dense() const { return dense_; }
  Matrix apply(const Matrix& y) const;

private:
  Matrix dense_;
  Matrix factor_;  // Zhat Lambda^{-1/2}, empty for plain dense Laplacians
};

/// Lambda = diag(Zhat^T 1) with zero (unused-anchor) columns mapped to 1.
Vector anchor_degrees(const Matrix& z_hat);

/// A = Zhat Lambda^-1 Zhat^T, symmetrized.
Matrix affinity_from_expanded(const Matrix& z_hat);

}  // namespace xmh
