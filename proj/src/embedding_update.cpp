#include "xmhash/embedding_update.hpp"

#include <cmath>

namespace xmh {

namespace {

struct Eval {
  double value = 0.0;
  Matrix lap_y;
  Matrix phi;
};

Eval evaluate(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y, const Matrix& gamma, double mu) {
  Eval e;
  const auto n = static_cast<double>(y.rows());
  e.lap_y = lap.apply(y);
  e.phi = y.transpose() * y - n * Matrix::Identity(y.cols(), y.cols());
  e.value = y.cwiseProduct(e.lap_y).sum() - alpha * b.cwiseProduct(y).sum() - gamma.cwiseProduct(e.phi).sum() +
            0.5 * mu * e.phi.squaredNorm();
  return e;
}

Matrix gradient_from(const Eval& e, const Matrix& b, double alpha, const Matrix& y, const Matrix& gamma, double mu) {
  return 2.0 * e.lap_y - alpha * b - y * (gamma + gamma.transpose()) + 2.0 * mu * y * e.phi;
}

void check_shapes(const Laplacian& lap, const Matrix& b, const Matrix& y) {
  if (y.rows() != lap.size() || b.rows() != y.rows() || b.cols() != y.cols())
    throw Error("embedding update: dimension mismatch");
}

// Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.
int minimise_inner(const Laplacian& lap, const Matrix& b, double alpha, Matrix& y, const Matrix& gamma, double mu,
                   const AlConfig& config, double grad_tol, double& step) {
  Eval cur = evaluate(lap, b, alpha, y, gamma, mu);
  Matrix g = gradient_from(cur, b, alpha, y, gamma, mu);
  int it = 0;
  for (; it < config.inner_max_iters; ++it) {
    const double gg = g.squaredNorm();
    if (std::sqrt(gg) <= grad_tol) break;
    Matrix next;
    Eval trial;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      next = y - step * g;
      trial = evaluate(lap, b, alpha, next, gamma, mu);
      if (trial.value <= cur.value - 1e-4 * step * gg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Matrix g_next = gradient_from(trial, b, alpha, next, gamma, mu);
    const Matrix s = next - y;
    const double sy = s.cwiseProduct(g_next - g).sum();
    step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;
    y = std::move(next);
    g = std::move(g_next);
    cur = std::move(trial);
  }
  return it;
}

}  // namespace

void AlConfig::validate() const {
  if (!(mu0 > 0.0)) throw Error("al: mu0 must be > 0");
  if (!(mu_growth > 1.0)) throw Error("al: mu growth factor must be > 1");
  if (!(eps > 0.0)) throw Error("al: eps must be > 0");
  if (max_outer_iters < 1 || inner_max_iters < 1) throw Error("al: iteration budgets must be >= 1");
}

double objective_j(const Matrix& b, const Matrix& y, const Laplacian& lap, double alpha) {
  check_shapes(lap, b, y);
  return y.cwiseProduct(lap.apply(y)).sum() - alpha * b.cwiseProduct(y).sum();
}

double al_function(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y, const Matrix& gamma,
                   double mu) {
  check_shapes(lap, b, y);
  return evaluate(lap, b, alpha, y, gamma, mu).value;
}

Matrix al_gradient(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y, const Matrix& gamma,
                   double mu) {
  check_shapes(lap, b, y);
  return gradient_from(evaluate(lap, b, alpha, y, gamma, mu), b, alpha, y, gamma, mu);
}

Matrix initial_multiplier(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y0) {
  check_shapes(lap, b, y0);
  const Matrix gram = y0.transpose() * y0;
  const Matrix rhs = y0.transpose() * (lap.apply(y0) - 0.5 * alpha * b);
  const Matrix gamma = gram.ldlt().solve(rhs);
  return 0.5 * (gamma + gamma.transpose());
}

Matrix project_to_constraint(const Matrix& y) {
  Eigen::JacobiSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return std::sqrt(static_cast<double>(y.rows())) * svd.matrixU() * svd.matrixV().transpose();
}

AlResult update_y_al(const Laplacian& lap, const Matrix& b, double alpha, const Matrix& y_init,
                     const AlConfig& config) {
  config.validate();
  check_shapes(lap, b, y_init);
  const auto n = static_cast<double>(y_init.rows());
  const Index l = y_init.cols();
  const Matrix eye = Matrix::Identity(l, l);

  AlResult res;
  Matrix y = y_init;
  auto residual = [&](const Matrix& m) { return (m.transpose() * m - n * eye).norm(); };
  if (residual(y) > 0.01 * n) y = project_to_constraint(y);

  Matrix gamma = initial_multiplier(lap, b, alpha, y);
  double mu = config.mu0;
  double j_prev = objective_j(b, y, lap, alpha);
  const double grad_tol = config.inner_grad_tol * (1.0 + alpha * b.norm());
  // starting step on the scale of the inverse curvature of the trace term
  double step = 0.25;

  for (int t = 0; t < config.max_outer_iters; ++t) {
    res.inner_iterations += minimise_inner(lap, b, alpha, y, gamma, mu, config, grad_tol, step);
    const Matrix phi = y.transpose() * y - n * eye;
    const double r = phi.norm();
    const double j = objective_j(b, y, lap, alpha);
    res.residual_history.push_back(r);
    res.objective_history.push_back(j);
    res.outer_iterations = t + 1;
    if (std::abs(j - j_prev) < config.eps * std::max(1.0, std::abs(j_prev)) && r <= config.feasibility_tol * n) {
      res.converged = true;
      break;
    }
    gamma -= mu * phi;
    mu *= config.mu_growth;
    j_prev = j;
  }
  res.y = std::move(y);
  res.objective = objective_j(b, res.y, lap, alpha);
  res.residual = residual(res.y);
  return res;
}

}  // namespace xmh
