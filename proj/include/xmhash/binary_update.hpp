#pragma once

#include "xmhash/common.hpp"

#include <cstdint>
#include <vector>

namespace xmh {

/// Exact-penalty (MPEC) schedule for the binary-code subproblem.
struct EpmConfig {
  double rho0 = 0.1;
  double rho_growth = 1.05;
  double eta = 0.01;
  int inner_max_iters = 100;
  int max_outer_iters = 1000;
  double binary_tol = 1e-4;
  // inner projected descent stops when ||dB||_F <= inner_tol * sqrt(N L)
  double inner_tol = 1e-6;
  // starting point when no warm start is given: uniform in [-init_scale, init_scale]
  double init_scale = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// L(B) = -sum_m Tr(B^T Y_m) + l1/4 ||B^T B - N I||^2 + l2/2 ||B^T 1||^2
double penalized_code_loss(const Matrix& b, const std::vector<Matrix>& ys, double lambda1, double lambda2);

/// Q(B) = L(B) + rho (N L - Tr(B^T V))
double epm_surrogate(const Matrix& b, const std::vector<Matrix>& ys, double lambda1, double lambda2, double rho,
                     const Matrix& v);

/// Gradient of Q: -sum Y_m + l1 B (B^T B - N I) + l2 1 (1^T B) - rho V.
Matrix grad_q(const Matrix& b, const std::vector<Matrix>& ys, double lambda1, double lambda2, double rho,
              const Matrix& v);

struct EpmResult {
  CodeMatrix codes;                // exactly +-1
  Matrix relaxed;                  // box-constrained iterate before snapping
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool converged = false;          // reached binary_tol before the budget ran out
  bool inner_monotone = true;      // Q never increased across accepted inner steps
  std::vector<double> norm_history;  // ||B||_F after each outer iteration
  double final_rho = 0.0;
};

/// Projected gradient descent on Q with clamp to [-1, 1], closed-form V
/// update and geometric rho growth until every entry is within binary_tol of
/// +-1, then sign-snapping with sign(0) = +1. Step size starts at eta and is
/// halved whenever Q would increase.
EpmResult update_b_epm(const std::vector<Matrix>& ys, const EpmConfig& config, double lambda1, double lambda2,
                       const Matrix* b_init = nullptr);

}  // namespace xmh
