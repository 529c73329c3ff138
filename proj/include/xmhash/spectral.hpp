#pragma once

#include "xmhash/common.hpp"
#include "xmhash/laplacian.hpp"

#include <optional>
#include <vector>

namespace xmh {

struct EigenPairs {
  Vector values;   // ascending
  Matrix vectors;  // N x L, orthonormal columns
  Index zero_count = 0;
};

/// The L eigenpairs of a symmetric PSD Laplacian that follow its numerically
/// zero eigenvalues. Eigenvalues <= zero_tol count as zero; by default
/// zero_tol = 1e-8 * largest eigenvalue. Each eigenvector is signed so its
/// largest-magnitude entry is positive. Throws when fewer than L positive
/// eigenvalues exist.
EigenPairs smallest_positive_eigenpairs(const Matrix& lap, Index count, std::optional<double> zero_tol = std::nullopt);

/// Orthogonal R maximising Tr(M R): with M = U S V^T, R = V U^T.
Matrix procrustes(const Matrix& m);

struct SpectralEmbedding {
  Matrix y;                            // N x L
  double orthogonality_residual = 0.0; // ||Y^T Y - N I||_F
};

struct RotationSet {
  std::vector<Matrix> rotations;      // L x L each
  double alignment_objective = 0.0;   // sum over ordered pairs m != t of Tr(R_t^T Yh_t^T Yh_m R_m)
  std::vector<double> round_objectives;   // after each full round; entry 0 is the unrotated start
  std::vector<double> update_objectives;  // after every single-rotation update
  int rounds = 0;
};

struct InitResult {
  std::vector<SpectralEmbedding> embeddings;
  RotationSet rotations;
  std::vector<Vector> eigenvalues;
};

struct InitConfig {
  int max_rounds = 50;
  // stop once a round improves the alignment by less than rel_tol * N * L
  double rel_tol = 1e-7;
  std::optional<double> zero_tol;
  int threads = 1;
};

/// Spectral initialisation: Yh_m = sqrt(N) E_m from the smallest positive
/// eigenpairs, then block-coordinate Procrustes rotations maximising the
/// pairwise correlation of the rotated embeddings. Returns Y_m = Yh_m R_m.
InitResult init_embeddings(const std::vector<Laplacian>& laps, Index code_length, const InitConfig& config = {});

/// Ordered-pair alignment objective of a set of rotated embeddings.
double alignment_objective(const std::vector<Matrix>& rotated);

double orthogonality_residual(const Matrix& y);

}  // namespace xmh
