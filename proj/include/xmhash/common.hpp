#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xmh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Binary codes are stored as real matrices whose entries are exactly -1.0 or +1.0.
using CodeMatrix = Eigen::MatrixXd;

/// Raised for invalid input data and unmet preconditions anywhere in the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "0.3.1";

// sign with sign(0) := +1
inline double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

inline CodeMatrix sign_matrix(const Matrix& m) {
  return m.unaryExpr([](double v) { return sign_of(v); });
}

inline bool is_binary(const Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != 1.0 && m(i, j) != -1.0) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b);

/// Indices of the `k` smallest entries of `row`, ordered by (value, index).
std::vector<Index> k_smallest(const Vector& values, Index k);

}  // namespace xmh
