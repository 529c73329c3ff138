#include "xmhash/spectral.hpp"

#include "xmhash/parallel.hpp"

#include <cmath>

namespace xmh {

EigenPairs smallest_positive_eigenpairs(const Matrix& lap, Index count, std::optional<double> zero_tol) {
  const Index n = lap.rows();
  if (lap.cols() != n) throw Error("eigenpairs: Laplacian must be square");
  if (count < 1) throw Error("eigenpairs: need at least one eigenpair");
  if (count > n - 1) throw Error("eigenpairs: L=" + std::to_string(count) + " exceeds N-1=" + std::to_string(n - 1));
  if ((lap - lap.transpose()).cwiseAbs().maxCoeff() > 1e-8) throw Error("eigenpairs: Laplacian is not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(lap);
  if (solver.info() != Eigen::Success) throw Error("eigenpairs: eigensolver failed");
  const Vector& evals = solver.eigenvalues();
  const double tol = zero_tol.value_or(1e-8 * std::max(evals(n - 1), 0.0));

  Index first = 0;
  while (first < n && evals(first) <= tol) ++first;
  const Index available = n - first;
  if (available < count)
    throw Error("eigenpairs: only " + std::to_string(available) + " positive eigenvalues, " + std::to_string(count) +
                " requested (deficit " + std::to_string(count - available) + "; graph too disconnected)");

  EigenPairs out;
  out.zero_count = first;
  out.values = evals.segment(first, count);
  out.vectors = solver.eigenvectors().middleCols(first, count);
  for (Index j = 0; j < count; ++j) {
    Index arg = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, j) < 0.0) out.vectors.col(j) *= -1.0;
  }
  return out;
}

Matrix procrustes(const Matrix& m) {
  if (m.rows() != m.cols()) throw Error("procrustes: matrix must be square");
  if (!m.allFinite()) throw Error("procrustes: non-finite input");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixV() * svd.matrixU().transpose();
}

double orthogonality_residual(const Matrix& y) {
  const auto n = static_cast<double>(y.rows());
  return (y.transpose() * y - n * Matrix::Identity(y.cols(), y.cols())).norm();
}

double alignment_objective(const std::vector<Matrix>& rotated) {
  double total = 0.0;
  for (std::size_t m = 0; m < rotated.size(); ++m)
    for (std::size_t t = 0; t < rotated.size(); ++t)
      if (m != t) total += (rotated[t].transpose() * rotated[m]).trace();
  return total;
}

InitResult init_embeddings(const std::vector<Laplacian>& laps, Index code_length, const InitConfig& config) {
  if (laps.empty()) throw Error("init_embeddings: no modalities");
  const Index n = laps.front().size();
  for (const auto& lap : laps)
    if (lap.size() != n) throw Error("init_embeddings: Laplacians differ in size");
  const std::size_t modalities = laps.size();
  const Index l = code_length;

  InitResult res;
  std::vector<Matrix> base(modalities);
  res.eigenvalues.resize(modalities);
  parallel_for(modalities, config.threads, [&](std::size_t m) {
    auto pairs = smallest_positive_eigenpairs(laps[m].dense(), l, config.zero_tol);
    base[m] = std::sqrt(static_cast<double>(n)) * pairs.vectors;
    res.eigenvalues[m] = pairs.values;
  });

  auto& rot = res.rotations;
  rot.rotations.assign(modalities, Matrix::Identity(l, l));
  std::vector<Matrix> rotated = base;
  double objective = alignment_objective(rotated);
  rot.round_objectives.push_back(objective);

  if (modalities > 1) {
    const double tol = config.rel_tol * static_cast<double>(n * l);
    for (int round = 0; round < config.max_rounds; ++round) {
      for (std::size_t m = 0; m < modalities; ++m) {
        Matrix others = Matrix::Zero(n, l);
        for (std::size_t t = 0; t < modalities; ++t)
          if (t != m) others += rotated[t];
        rot.rotations[m] = procrustes(others.transpose() * base[m]);
        rotated[m] = base[m] * rot.rotations[m];
        rot.update_objectives.push_back(alignment_objective(rotated));
      }
      const double next = rot.update_objectives.back();
      rot.round_objectives.push_back(next);
      rot.rounds = round + 1;
      const double gain = next - objective;
      objective = next;
      if (gain < tol) break;
    }
  }
  rot.alignment_objective = objective;

  for (std::size_t m = 0; m < modalities; ++m)
    res.embeddings.push_back({rotated[m], orthogonality_residual(rotated[m])});
  return res;
}

}  // namespace xmh
