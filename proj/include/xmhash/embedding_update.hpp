#pragma once

#include "xmhash/common.hpp"
#include "xmhash/laplacian.hpp"

#include <vector>

namespace xmh {

/// Augmented-Lagrangian schedule for the orthogonality-constrained embedding update.
struct AlConfig {
  double mu0 = 0.01;
  double mu_growth = 2.0;
  // stop when |J_t+1 - J_t| < eps * max(1, |J_t|) and the iterate is feasible
  double eps = 1e-3;
  int max_outer_iters = 40;  // T_max
  int inner_max_iters = 500;
  // inner descent stops when ||grad||_F <= inner_grad_tol * (1 + alpha ||B||_F)
  double inner_grad_tol = 1e-6;
  // required ||Y^T Y - N I||_F / N on exit
  double feasibility_tol = 1e-3;

  void validate() const;
};

/// J(B, Y) = Tr(Y^T Lap Y) - alpha Tr(B^T Y)
double objective_j(const Matrix& b, const Matrix& y, const Laplacian& lap, double alpha);

/// L_AL = J(B, Y) - Tr(Gamma^T Phi) + mu/2 ||Phi||^2 with Phi = Y^T Y - N I.
double al_function(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y, const Matrix& gamma,
                   double mu);

/// 2 Lap Y - alpha B - Y (Gamma + Gamma^T) + 2 mu Y Phi; equals the usual
/// 2 Lap Y - alpha B - 2 Y Gamma + 2 mu Y Phi for symmetric Gamma.
Matrix al_gradient(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y, const Matrix& gamma,
                   double mu);

/// Gamma_0 = (Y^T Y)^-1 Y^T (Lap Y - alpha/2 B), symmetrised.
Matrix initial_multiplier(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y0);

struct AlResult {
  Matrix y;
  double objective = 0.0;  // J(B, Y) at exit
  double residual = 0.0;   // ||Y^T Y - N I||_F at exit
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;   // after each inner minimisation
  std::vector<double> objective_history;  // J after each inner minimisation
};

/// Minimises J(B, Y) subject to Y^T Y = N I by the method of multipliers.
/// The warm start is polar-projected onto the constraint first when it is
/// further than 0.01 N from feasibility.
AlResult update_y_al(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y_init,
                     const AlConfig& config = {});

/// Nearest matrix with Y^T Y = N I (polar factor scaled by sqrt(N)).
Matrix project_to_constraint(const Matrix& y);

}  // namespace xmh
