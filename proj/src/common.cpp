#include "xmhash/common.hpp"

#include <algorithm>
#include <numeric>

namespace xmh {

Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error("pairwise_sq_dists: dimension mismatch");
  // direct differences keep exact ties exact, which the kNN tie-break relies on
  Matrix d(a.rows(), b.rows());
  const Matrix bt = b.transpose();
  for (Index i = 0; i < a.rows(); ++i) {
    const Vector ai = a.row(i).transpose();
    d.row(i) = (bt.colwise() - ai).colwise().squaredNorm();
  }
  return d;
}

std::vector<Index> k_smallest(const Vector& values, Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  k = std::min<Index>(k, values.size());
  auto less = [&](Index i, Index j) {
    return values(i) < values(j) || (values(i) == values(j) && i < j);
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), less);
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace xmh
