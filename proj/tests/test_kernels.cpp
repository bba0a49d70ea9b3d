#include <omp.h>

#include "doctest.h"
#include "laser/kernels.hpp"

using namespace laser;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Matrix m(r, c);
  Rng g(seed);
  for (double& x : m.data()) x = g.normal();
  return m;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("centroid distances agree bit for bit") {
  auto p = random_matrix(333, 16, 1);
  auto c = random_matrix(8, 16, 2);
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    CHECK(kernels::serial::centroid_sq_distances(p, c) == kernels::omp::centroid_sq_distances(p, c));
  }
  auto d = kernels::centroid_sq_distances(p, c);
  CHECK(d(5, 3) == squared_distance(p.row(5), c.row(3)));
}

TEST_CASE("pair sums agree bit for bit") {
  auto p = random_matrix(400, 16, 3);
  std::vector<Index> members;
  for (Index i = 0; i < 400; i += 3) members.push_back(i);
  for (int threads : {1, 3, 4}) {
    omp_set_num_threads(threads);
    CHECK(kernels::serial::inverse_distance_pair_sum(p, members, 1e-8) ==
          kernels::omp::inverse_distance_pair_sum(p, members, 1e-8));
  }
  std::vector<Index> two{0, 1};
  CHECK(kernels::inverse_distance_pair_sum(p, two, 1e-8, kernels::Exec::serial) ==
        1.0 / distance(p.row(0), p.row(1)));
}

TEST_CASE("label means") {
  Matrix p(4, 1);
  p(0, 0) = 1;
  p(1, 0) = 3;
  p(2, 0) = 10;
  p(3, 0) = 7;
  std::vector<Index> labels{0, 0, 1, 2};
  std::vector<std::size_t> counts;
  auto m = kernels::serial::label_means(p, labels, 4, counts);
  CHECK(m(0, 0) == 2.0);
  CHECK(m(1, 0) == 10.0);
  CHECK(counts == std::vector<std::size_t>{2, 1, 1, 0});
}

}
