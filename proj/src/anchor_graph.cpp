#include "xmhash/anchor_graph.hpp"

#include "xmhash/kmeans.hpp"
#include "xmhash/parallel.hpp"

#include <cmath>
#include <limits>

namespace xmh {

std::vector<Laplacian> AnchorGraph::laplacians() const {
  std::vector<Laplacian> out;
  for (const auto& g : modalities) out.push_back(g.lap);
  return out;
}

AnchorSet learn_joint_anchors(const MultiModalDataset& data, Index anchor_count, std::uint64_t seed, int max_iters) {
  const Index n = data.instance_count();
  if (n < 1 || data.modality_count() == 0) throw Error("learn_joint_anchors: empty dataset");
  if (anchor_count < 1) throw Error("learn_joint_anchors: P must be >= 1");
  if (anchor_count > n)
    throw Error("learn_joint_anchors: P=" + std::to_string(anchor_count) + " exceeds N=" + std::to_string(n));

  Index total = 0;
  for (const auto& x : data.modalities()) total += x.cols();
  Matrix joint(n, total);
  Index offset = 0;
  for (const auto& x : data.modalities()) {
    joint.middleCols(offset, x.cols()) = x;
    offset += x.cols();
  }

  const auto km = kmeans(joint, anchor_count, seed, max_iters);
  AnchorSet set;
  offset = 0;
  for (const auto& x : data.modalities()) {
    set.anchors.push_back(km.centroids.middleCols(offset, x.cols()));
    offset += x.cols();
  }
  return set;
}

Matrix data_to_anchor(const Matrix& features, const Matrix& anchors, Index k, Bandwidth sigma, double* sigma_used) {
  const Index n = features.rows();
  const Index p = anchors.rows();
  if (k < 1) throw Error("data_to_anchor: k must be >= 1");
  if (k > p) throw Error("data_to_anchor: k=" + std::to_string(k) + " exceeds P=" + std::to_string(p));
  if (!sigma.automatic && !(sigma.value > 0.0)) throw Error("data_to_anchor: sigma must be > 0");

  const Matrix d = pairwise_sq_dists(features, anchors);
  std::vector<std::vector<Index>> nn(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    nn[static_cast<std::size_t>(i)] = k_smallest(d.row(i).transpose(), k);
    for (auto j : nn[static_cast<std::size_t>(i)]) acc += d(i, j);
  }
  double s = sigma.value;
  if (sigma.automatic) {
    s = acc / static_cast<double>(n * k);
    // every point sits on its anchors: the kernel is flat for any bandwidth
    if (!(s > 0.0)) s = 1.0;
  }
  if (sigma_used) *sigma_used = s;

  Matrix z = Matrix::Zero(n, p);
  for (Index i = 0; i < n; ++i) {
    const auto& idx = nn[static_cast<std::size_t>(i)];
    // shifting by the nearest distance cancels in the normalisation and avoids underflow
    const double d0 = d(i, idx.front());
    double norm = 0.0;
    for (auto j : idx) {
      z(i, j) = std::exp(-(d(i, j) - d0) / s);
      norm += z(i, j);
    }
    for (auto j : idx) z(i, j) /= norm;
  }
  return z;
}

Matrix anchor_to_anchor(const Matrix& anchors, Index k_a, Bandwidth sigma, double* sigma_used) {
  const Index p = anchors.rows();
  if (k_a < 0) throw Error("anchor_to_anchor: k_a must be >= 0");
  if (k_a >= p) throw Error("anchor_to_anchor: k_a=" + std::to_string(k_a) + " must be < P=" + std::to_string(p));
  if (!sigma.automatic && !(sigma.value > 0.0)) throw Error("anchor_to_anchor: sigma must be > 0");
  Matrix s_mat = Matrix::Identity(p, p);
  if (k_a == 0) {
    if (sigma_used) *sigma_used = sigma.automatic ? 1.0 : sigma.value;
    return s_mat;
  }

  Matrix d = pairwise_sq_dists(anchors, anchors);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<Index>> nn(static_cast<std::size_t>(p));
  Matrix is_nn = Matrix::Zero(p, p);
  double acc = 0.0;
  for (Index i = 0; i < p; ++i) {
    Vector row = d.row(i).transpose();
    row(i) = inf;
    nn[static_cast<std::size_t>(i)] = k_smallest(row, k_a);
    for (auto j : nn[static_cast<std::size_t>(i)]) {
      is_nn(i, j) = 1.0;
      acc += d(i, j);
    }
  }
  double bw = sigma.value;
  if (sigma.automatic) {
    bw = acc / static_cast<double>(p * k_a);
    if (!(bw > 0.0)) bw = 1.0;
  }
  if (sigma_used) *sigma_used = bw;

  for (Index i = 0; i < p; ++i) {
    double norm = 1.0;  // self weight K(u_i, u_i) = 1
    for (auto j : nn[static_cast<std::size_t>(i)]) {
      if (is_nn(j, i) == 0.0) continue;
      s_mat(i, j) = std::exp(-d(i, j) / bw);
      norm += s_mat(i, j);
    }
    s_mat.row(i) /= norm;
  }
  return s_mat;
}

ModalityGraph graph_from_expanded(Matrix z_hat) {
  ModalityGraph g;
  g.degree = anchor_degrees(z_hat);
  g.lap = Laplacian::from_expanded_affinity(z_hat);
  g.a = Matrix::Identity(z_hat.rows(), z_hat.rows()) - g.lap.dense();
  g.z_hat = std::move(z_hat);
  return g;
}

AnchorGraph build_graph(const MultiModalDataset& data, const AnchorSet& anchors, const GraphParams& params,
                        int threads) {
  if (anchors.anchors.size() != data.modality_count())
    throw Error("build_graph: anchor set has " + std::to_string(anchors.anchors.size()) + " modalities, dataset has " +
                std::to_string(data.modality_count()));
  AnchorGraph graph;
  graph.params = params;
  graph.modalities.resize(data.modality_count());
  parallel_for(data.modality_count(), threads, [&](std::size_t m) {
    const Matrix& u = anchors.anchors[m];
    double sd = 0.0;
    double sa = 0.0;
    Matrix z = data_to_anchor(data.modality(m), u, params.k, params.sigma, &sd);
    Matrix s = anchor_to_anchor(u, params.k_a, params.sigma, &sa);
    ModalityGraph g = graph_from_expanded(z * s);
    g.z = std::move(z);
    g.s = std::move(s);
    g.sigma_data = sd;
    g.sigma_anchor = sa;
    graph.modalities[m] = std::move(g);
  });
  return graph;
}

}  // namespace xmh
