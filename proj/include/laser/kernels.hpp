#pragma once

#include <span>

#include "laser/common.hpp"

// Data-parallel inner loops used by grouping and analysis. Each kernel has a
// serial reference and an OpenMP version; both produce bit-identical results
// because every reduction is done per row first and then summed in index order.
namespace laser::kernels {

enum class Exec { serial, parallel };

namespace serial {

/// out(i, g) = squared Euclidean distance between points row i and centroid g.
Matrix centroid_sq_distances(const Matrix& points, const Matrix& centroids);

/// Sum over unordered distinct pairs {x, y} of members of 1 / max(dist, eps).
double inverse_distance_pair_sum(const Matrix& points, std::span<const Index> members, double eps);

/// Mean of the selected rows per label; rows of empty labels are zero and
/// their counts 0.
Matrix label_means(const Matrix& points, std::span<const Index> labels, std::size_t n_labels,
                   std::vector<std::size_t>& counts);

}  // namespace serial

namespace omp {

Matrix centroid_sq_distances(const Matrix& points, const Matrix& centroids);
double inverse_distance_pair_sum(const Matrix& points, std::span<const Index> members, double eps);

}  // namespace omp

Matrix centroid_sq_distances(const Matrix& points, const Matrix& centroids, Exec exec = Exec::parallel);
double inverse_distance_pair_sum(const Matrix& points, std::span<const Index> members, double eps,
                                 Exec exec = Exec::parallel);

}  // namespace laser::kernels
