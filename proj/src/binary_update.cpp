#include "xmhash/binary_update.hpp"

#include <cmath>
#include <random>

namespace xmh {

namespace {

Matrix sum_of(const std::vector<Matrix>& ys) {
  if (ys.empty()) throw Error("binary update: no embeddings");
  Matrix s = ys.front();
  for (std::size_t m = 1; m < ys.size(); ++m) {
    if (ys[m].rows() != s.rows() || ys[m].cols() != s.cols()) throw Error("binary update: embedding shape mismatch");
    s += ys[m];
  }
  return s;
}

double loss_with_sum(const Matrix& b, const Matrix& ysum, double lambda1, double lambda2) {
  const auto n = static_cast<double>(b.rows());
  const Matrix gram = b.transpose() * b - n * Matrix::Identity(b.cols(), b.cols());
  const Vector colsum = b.colwise().sum().transpose();
  return -(b.cwiseProduct(ysum)).sum() + 0.25 * lambda1 * gram.squaredNorm() + 0.5 * lambda2 * colsum.squaredNorm();
}

double q_with_sum(const Matrix& b, const Matrix& ysum, double lambda1, double lambda2, double rho, const Matrix& v) {
  const auto nl = static_cast<double>(b.size());
  return loss_with_sum(b, ysum, lambda1, lambda2) + rho * (nl - b.cwiseProduct(v).sum());
}

Matrix grad_with_sum(const Matrix& b, const Matrix& ysum, double lambda1, double lambda2, double rho,
                     const Matrix& v) {
  const auto n = static_cast<double>(b.rows());
  const Matrix gram = b.transpose() * b - n * Matrix::Identity(b.cols(), b.cols());
  Matrix g = -ysum + lambda1 * b * gram - rho * v;
  // 1_{NxN} B without materialising the N x N ones matrix
  g.rowwise() += lambda2 * b.colwise().sum();
  return g;
}

}  // namespace

void EpmConfig::validate() const {
  if (!(rho0 > 0.0)) throw Error("epm: rho0 must be > 0");
  if (!(rho_growth > 1.0)) throw Error("epm: rho growth factor must be > 1");
  if (!(eta > 0.0)) throw Error("epm: eta must be > 0");
  if (inner_max_iters < 1 || max_outer_iters < 1) throw Error("epm: iteration budgets must be >= 1");
  if (!(binary_tol > 0.0)) throw Error("epm: binary_tol must be > 0");
}

double penalized_code_loss(const Matrix& b, const std::vector<Matrix>& ys, double lambda1, double lambda2) {
  return loss_with_sum(b, sum_of(ys), lambda1, lambda2);
}

double epm_surrogate(const Matrix& b, const std::vector<Matrix>& ys, double lambda1, double lambda2, double rho,
                     const Matrix& v) {
  return q_with_sum(b, sum_of(ys), lambda1, lambda2, rho, v);
}

Matrix grad_q(const Matrix& b, const std::vector<Matrix>& ys, double lambda1, double lambda2, double rho,
              const Matrix& v) {
  return grad_with_sum(b, sum_of(ys), lambda1, lambda2, rho, v);
}

EpmResult update_b_epm(const std::vector<Matrix>& ys, const EpmConfig& config, double lambda1, double lambda2,
                       const Matrix* b_init) {
  config.validate();
  const Matrix ysum = sum_of(ys);
  const Index n = ysum.rows();
  const Index l = ysum.cols();
  const double nl = static_cast<double>(n * l);

  Matrix b(n, l);
  if (b_init) {
    if (b_init->rows() != n || b_init->cols() != l) throw Error("epm: warm start has the wrong shape");
    b = b_init->cwiseMax(-1.0).cwiseMin(1.0);
  } else {
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u(-config.init_scale, config.init_scale);
    for (Index j = 0; j < l; ++j)
      for (Index i = 0; i < n; ++i) b(i, j) = u(rng);
  }

  EpmResult res;
  Matrix v = Matrix::Zero(n, l);
  double rho = config.rho0;
  const double change_tol = config.inner_tol * std::sqrt(nl);

  for (int outer = 0; outer < config.max_outer_iters; ++outer) {
    double step = config.eta;
    double q = q_with_sum(b, ysum, lambda1, lambda2, rho, v);
    for (int inner = 0; inner < config.inner_max_iters; ++inner) {
      const Matrix g = grad_with_sum(b, ysum, lambda1, lambda2, rho, v);
      Matrix next;
      double q_next = q;
      bool accepted = false;
      while (step >= config.eta * 1e-12) {
        next = (b - step * g).cwiseMax(-1.0).cwiseMin(1.0);
        q_next = q_with_sum(next, ysum, lambda1, lambda2, rho, v);
        if (q_next <= q) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      ++res.inner_iterations;
      if (!accepted) break;
      if (q_next > q) res.inner_monotone = false;
      const double change = (next - b).norm();
      b = std::move(next);
      q = q_next;
      step = std::min(config.eta, 2.0 * step);
      if (change <= change_tol) break;
    }

    const double norm = b.norm();
    v = norm > 0.0 ? Matrix(std::sqrt(nl) / norm * b) : Matrix::Zero(n, l);
    rho *= config.rho_growth;
    res.norm_history.push_back(norm);
    res.outer_iterations = outer + 1;
    if ((1.0 - b.cwiseAbs().array()).maxCoeff() < config.binary_tol) {
      res.converged = true;
      break;
    }
  }
  res.final_rho = rho;
  res.relaxed = b;
  res.codes = sign_matrix(b);
  return res;
}

}  // namespace xmh
