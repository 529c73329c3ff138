#pragma once

#include "xmhash/binary_update.hpp"
#include "xmhash/common.hpp"
#include "xmhash/embedding_update.hpp"
#include "xmhash/laplacian.hpp"
#include "xmhash/spectral.hpp"

#include <cstdint>
#include <vector>

namespace xmh {

struct JointCodeConfig {
  Index code_length = 16;
  double alpha = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int outer_max_iters = 20;
  // stop when the total objective changes by less than outer_tol * N * L
  double outer_tol = 1e-5;
  EpmConfig epm;
  AlConfig al;
  InitConfig init;
  // reuse the previous relaxed B as the starting point of each binary update
  bool warm_start_codes = true;
  // reject a sub-step that worsens its own subproblem objective
  bool keep_best = true;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct TraceRow {
  int iteration = 0;
  double total = 0.0;                 // sum_m J(B, Y_m)
  std::vector<double> per_modality;   // J(B, Y_m)
  double surrogate = 0.0;             // total + alpha * (independence + balance penalties)
  int epm_iterations = 0;
  double al_residual = 0.0;           // max_m ||Y_m^T Y_m - N I||_F
};

struct BinaryCodes {
  CodeMatrix b;      // N x L, exactly +-1
  Matrix relaxed;    // last box-constrained iterate of the binary update
  std::vector<TraceRow> trace;
  int epm_iterations = 0;
  int al_iterations = 0;
  bool warning = false;  // some sub-solver hit its budget before converging
};

struct JointCodeResult {
  BinaryCodes codes;
  std::vector<Matrix> embeddings;
  InitResult init;
};

/// sum_m J(B, Y_m)
double total_objective(const CodeMatrix& b, const std::vector<Matrix>& ys, const std::vector<Laplacian>& laps,
                       double alpha);

/// Stage-1 alternation: spectral initialisation, then alternate the exact
/// penalty binary update and the per-modality augmented-Lagrangian embedding
/// update until the joint objective settles.
JointCodeResult run_joint_codes(const std::vector<Laplacian>& laps, const JointCodeConfig& config);

using MccshConfig = JointCodeConfig;
inline JointCodeResult run_mccsh(const std::vector<Laplacian>& laps, const MccshConfig& config) {
  return run_joint_codes(laps, config);
}

}  // namespace xmh
