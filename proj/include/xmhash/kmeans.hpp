#pragma once

#include "xmhash/common.hpp"

#include <cstdint>
#include <vector>

namespace xmh {

struct KMeansResult {
  Matrix centroids;               // k x D
  std::vector<Index> assignment;  // one entry per row of the input
  int iterations = 0;
  double inertia = 0.0;
  bool converged = false;
};

/// Lloyd iterations from k-means++ seeding. Stops when no centroid moves by
/// more than `tol` (Euclidean) or after `max_iters`. An emptied cluster is
/// re-seeded with the point farthest from its assigned centroid.
KMeansResult kmeans(const Matrix& x, Index k, std::uint64_t seed, int max_iters = 100, double tol = 1e-6);

}  // namespace xmh
