#include "xmhash/laplacian.hpp"

namespace xmh {

Laplacian::Laplacian(Matrix dense) : dense_(std::move(dense)) {
  if (dense_.rows() != dense_.cols()) throw Error("Laplacian must be square");
}

Laplacian Laplacian::from_expanded_affinity(const Matrix& z_hat) {
  Laplacian lap;
  const Vector deg = anchor_degrees(z_hat);
  lap.factor_ = z_hat * deg.cwiseSqrt().cwiseInverse().asDiagonal();
  Matrix a = lap.factor_ * lap.factor_.transpose();
  a = 0.5 * (a + a.transpose()).eval();
  lap.dense_ = Matrix::Identity(z_hat.rows(), z_hat.rows()) - a;
  return lap;
}

Matrix Laplacian::apply(const Matrix& y) const {
  if (y.rows() != size()) throw Error("Laplacian::apply: dimension mismatch");
  if (factor_.size() == 0) return dense_ * y;
  return y - factor_ * (factor_.transpose() * y);
}

Vector anchor_degrees(const Matrix& z_hat) {
  Vector deg = z_hat.colwise().sum().transpose();
  for (Index p = 0; p < deg.size(); ++p)
    if (deg(p) <= 0.0) deg(p) = 1.0;
  return deg;
}

Matrix affinity_from_expanded(const Matrix& z_hat) {
  const Vector deg = anchor_degrees(z_hat);
  Matrix a = z_hat * deg.cwiseInverse().asDiagonal() * z_hat.transpose();
  return 0.5 * (a + a.transpose());
}

}  // namespace xmh
