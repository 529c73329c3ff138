#include "xmhash/kmeans.hpp"

#include <limits>
#include <random>

namespace xmh {

namespace {

// squared distances via the norm expansion; fine for assignment, not for exact ties
Matrix fast_sq_dists(const Matrix& x, const Vector& x_norms, const Matrix& c) {
  Matrix d = -2.0 * x * c.transpose();
  d.colwise() += x_norms;
  d.rowwise() += c.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

Matrix plus_plus_seed(const Matrix& x, Index k, std::mt19937_64& rng) {
  const Index n = x.rows();
  Matrix c(k, x.cols());
  std::uniform_int_distribution<Index> pick(0, n - 1);
  c.row(0) = x.row(pick(rng));
  Vector best = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index j = 1; j < k; ++j) {
    const double total = best.sum();
    Index chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      chosen = n - 1;
      for (Index i = 0; i < n; ++i) {
        target -= best(i);
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    c.row(j) = x.row(chosen);
    best = best.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

}  // namespace

KMeansResult kmeans(const Matrix& x, Index k, std::uint64_t seed, int max_iters, double tol) {
  const Index n = x.rows();
  if (n < 1) throw Error("kmeans: empty input");
  if (k < 1) throw Error("kmeans: need at least one centroid");
  if (k > n) throw Error("kmeans: " + std::to_string(k) + " centroids for " + std::to_string(n) + " points");

  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids = plus_plus_seed(x, k, rng);
  res.assignment.assign(static_cast<std::size_t>(n), 0);
  const Vector x_norms = x.rowwise().squaredNorm();

  for (int it = 0; it < max_iters; ++it) {
    const Matrix d = fast_sq_dists(x, x_norms, res.centroids);
    Vector nearest(n);
    for (Index i = 0; i < n; ++i) {
      Index arg = 0;
      nearest(i) = d.row(i).minCoeff(&arg);
      res.assignment[static_cast<std::size_t>(i)] = arg;
    }

    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const auto a = res.assignment[static_cast<std::size_t>(i)];
      sums.row(a) += x.row(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    Matrix next(k, x.cols());
    for (Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        next.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
      } else {
        Index far = 0;
        nearest.maxCoeff(&far);
        next.row(j) = x.row(far);
        nearest(far) = 0.0;
      }
    }
    const double shift = (next - res.centroids).rowwise().norm().maxCoeff();
    res.centroids = std::move(next);
    res.iterations = it + 1;
    if (shift < tol) {
      res.converged = true;
      break;
    }
  }

  const Matrix d = fast_sq_dists(x, x_norms, res.centroids);
  res.inertia = 0.0;
  for (Index i = 0; i < n; ++i) {
    Index arg = 0;
    res.inertia += d.row(i).minCoeff(&arg);
    res.assignment[static_cast<std::size_t>(i)] = arg;
  }
  return res;
}

}  // namespace xmh
