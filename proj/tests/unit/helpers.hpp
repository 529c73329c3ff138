#pragma once

#include "xmhash/anchor_graph.hpp"
#include "xmhash/common.hpp"
#include "xmhash/dataset.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testutil {

using xmh::Index;
using xmh::Matrix;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Matrix random_binary(Index rows, Index cols, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.5);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = b(rng) ? 1.0 : -1.0;
  return m;
}

inline Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
  Matrix q = qr.householderQ();
  // fix signs so the distribution is Haar
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q;
}

/// Central differences of f over every entry of x.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      const double keep = probe(i, j);
      probe(i, j) = keep + h;
      const double up = f(probe);
      probe(i, j) = keep - h;
      const double down = f(probe);
      probe(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

/// max |a - b| / max(1, max |b|)
inline double relative_error(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// A fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("xmhash_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Anchor-graph Laplacians of a small clustered synthetic set.
inline std::vector<xmh::Laplacian> synthetic_laplacians(std::uint64_t seed, int per_cluster = 20, double spread = 0.5,
                                                        Index anchors = 12, int clusters = 3) {
  xmh::SynthesisSpec spec;
  spec.n_clusters = clusters;
  spec.per_cluster = per_cluster;
  spec.spread = spread;
  spec.seed = seed;
  const auto d = xmh::unit_variance_normalize(xmh::synthesize_clustered(spec));
  return xmh::build_graph(d, xmh::learn_joint_anchors(d, anchors, seed), xmh::GraphParams{}).laplacians();
}

}  // namespace testutil
