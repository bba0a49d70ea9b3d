#include "laser/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace laser::kernels {

namespace {

double row_pair_sum(const Matrix& points, std::span<const Index> members, std::size_t a, double eps) {
  double s = 0.0;
  auto x = points.row(members[a]);
  for (std::size_t b = a + 1; b < members.size(); ++b) {
    s += 1.0 / std::max(distance(x, points.row(members[b])), eps);
  }
  return s;
}

}  // namespace

namespace serial {

Matrix centroid_sq_distances(const Matrix& points, const Matrix& centroids) {
  Matrix out(points.rows(), centroids.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t g = 0; g < centroids.rows(); ++g) {
      out(i, g) = squared_distance(points.row(i), centroids.row(g));
    }
  }
  return out;
}

double inverse_distance_pair_sum(const Matrix& points, std::span<const Index> members, double eps) {
  double total = 0.0;
  for (std::size_t a = 0; a < members.size(); ++a) total += row_pair_sum(points, members, a, eps);
  return total;
}

Matrix label_means(const Matrix& points, std::span<const Index> labels, std::size_t n_labels,
                   std::vector<std::size_t>& counts) {
  Matrix means(n_labels, points.cols());
  counts.assign(n_labels, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto row = points.row(i);
    auto dst = means.row(labels[i]);
    for (std::size_t k = 0; k < row.size(); ++k) dst[k] += row[k];
    ++counts[labels[i]];
  }
  for (std::size_t g = 0; g < n_labels; ++g) {
    if (counts[g] == 0) continue;
    for (double& v : means.row(g)) v /= static_cast<double>(counts[g]);
  }
  return means;
}

}  // namespace serial

namespace omp {

Matrix centroid_sq_distances(const Matrix& points, const Matrix& centroids) {
  Matrix out(points.rows(), centroids.rows());
  const auto n = static_cast<std::int64_t>(points.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::size_t g = 0; g < centroids.rows(); ++g) {
      out(static_cast<std::size_t>(i), g) = squared_distance(points.row(static_cast<std::size_t>(i)), centroids.row(g));
    }
  }
  return out;
}

double inverse_distance_pair_sum(const Matrix& points, std::span<const Index> members, double eps) {
  std::vector<double> partial(members.size(), 0.0);
  const auto n = static_cast<std::int64_t>(members.size());
  // Row a owns pairs (a, b > a); later rows are cheaper, hence dynamic.
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t a = 0; a < n; ++a) {
    partial[static_cast<std::size_t>(a)] = row_pair_sum(points, members, static_cast<std::size_t>(a), eps);
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace omp

Matrix centroid_sq_distances(const Matrix& points, const Matrix& centroids, Exec exec) {
  return exec == Exec::serial ? serial::centroid_sq_distances(points, centroids)
                              : omp::centroid_sq_distances(points, centroids);
}

double inverse_distance_pair_sum(const Matrix& points, std::span<const Index> members, double eps, Exec exec) {
  return exec == Exec::serial ? serial::inverse_distance_pair_sum(points, members, eps)
                              : omp::inverse_distance_pair_sum(points, members, eps);
}

}  // namespace laser::kernels
