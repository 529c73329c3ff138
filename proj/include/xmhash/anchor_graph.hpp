#pragma once

#include "xmhash/common.hpp"
#include "xmhash/dataset.hpp"
#include "xmhash/laplacian.hpp"

#include <cstdint>
#include <vector>

namespace xmh {

/// Kernel bandwidth: a fixed value, or the mean squared distance from each
/// point to its k nearest anchors.
struct Bandwidth {
  bool automatic = true;
  double value = 0.0;

  static Bandwidth fixed(double v) { return {false, v}; }
  static Bandwidth mean_knn() { return {true, 0.0}; }
};

/// Per-modality anchors learned from one joint clustering: anchor p of every
/// modality comes from the same cross-modal centroid.
struct AnchorSet {
  std::vector<Matrix> anchors;  // P x D^m each
  Index count() const { return anchors.empty() ? 0 : anchors.front().rows(); }
};

/// k-means over the column-wise concatenation of all modalities, then the
/// centroids are split back per modality.
AnchorSet learn_joint_anchors(const MultiModalDataset& data, Index anchor_count, std::uint64_t seed,
                              int max_iters = 100);

/// Row-stochastic data-to-anchor affinity: Gaussian kernel exp(-d^2/sigma) over
/// the k nearest anchors of each point, zero elsewhere.
Matrix data_to_anchor(const Matrix& features, const Matrix& anchors, Index k, Bandwidth sigma,
                      double* sigma_used = nullptr);

/// Row-stochastic anchor-to-anchor affinity over reciprocal k_a-nearest
/// anchors plus the anchor itself. Anchors without reciprocal neighbours keep
/// a pure self-row, so k_a = 0 gives the identity.
Matrix anchor_to_anchor(const Matrix& anchors, Index k_a, Bandwidth sigma, double* sigma_used = nullptr);

struct GraphParams {
  Index k = 3;
  Index k_a = 2;
  Bandwidth sigma = Bandwidth::mean_knn();
};

struct ModalityGraph {
  Matrix z;       // N x P
  Matrix s;       // P x P
  Matrix z_hat;   // N x P, Z * S
  Vector degree;  // diag of Lambda, from Z_hat
  Matrix a;       // N x N
  Laplacian lap;  // I - A
  double sigma_data = 0.0;
  double sigma_anchor = 0.0;
};

struct AnchorGraph {
  std::vector<ModalityGraph> modalities;
  GraphParams params;

  Index instance_count() const { return modalities.empty() ? 0 : modalities.front().z.rows(); }
  std::vector<Laplacian> laplacians() const;
};

/// Builds Z, S, Zhat = Z S, A = Zhat Lambda^-1 Zhat^T and Lap = I - A for every
/// modality. `threads` > 1 builds modalities concurrently.
AnchorGraph build_graph(const MultiModalDataset& data, const AnchorSet& anchors, const GraphParams& params,
                        int threads = 1);

/// Rebuilds A and Lap from a cached Zhat.
ModalityGraph graph_from_expanded(Matrix z_hat);

}  // namespace xmh
