#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "laser/grouping.hpp"

using namespace laser;

namespace {

Matrix points_of(std::vector<std::vector<double>> rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

Matrix gaussian_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Matrix m(n, dim);
  Rng r(seed);
  for (double& x : m.data()) x = r.normal();
  return m;
}

std::size_t spread(const std::vector<std::size_t>& sizes) {
  auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  return *hi - *lo;
}

}  // namespace

TEST_SUITE("grouping") {

TEST_CASE("single group priorities are negative distances to the global centroid") {
  auto p = points_of({{0, 0}, {2, 0}, {1, 3}});
  std::vector<Index> labels{0, 0, 0};
  auto pr = compute_similarity_kmeans(p, labels, 1);
  REQUIRE(pr.size() == 3);
  for (const auto& x : pr) {
    CHECK(x.group == 0);
    CHECK(x.priority == doctest::Approx(-distance(p.row(x.user), std::vector<double>{1, 1})));
  }
}

TEST_CASE("two singleton groups") {
  auto p = points_of({{0, 0}, {2, 0}});
  std::vector<Index> labels{0, 1};
  auto pr = compute_similarity_kmeans(p, labels, 2);
  std::map<std::pair<Index, Index>, double> by;
  for (const auto& x : pr) by[{x.user, x.group}] = x.priority;
  CHECK(by[{0, 0}] == 0.0);
  CHECK(by[{1, 1}] == 0.0);
  CHECK(by[{0, 1}] == -2.0);
  CHECK(by[{1, 0}] == -2.0);
}

TEST_CASE("identical points fall back to the tie-break") {
  auto p = points_of({{1, 1}, {1, 1}, {1, 1}});
  std::vector<Index> labels{0, 1, 0};
  auto pr = compute_similarity_kmeans(p, labels, 2);
  std::sort(pr.begin(), pr.end(), priority_before);
  for (std::size_t k = 0; k + 1 < pr.size(); ++k) {
    CHECK(pr[k].priority == pr[k + 1].priority);
    CHECK(std::make_pair(pr[k].user, pr[k].group) < std::make_pair(pr[k + 1].user, pr[k + 1].group));
  }
  // first three users grab group 0 until its capacity (2) is reached
  CHECK(assign_by_priority(pr, 3, 2) == std::vector<Index>{0, 0, 1});
}

TEST_CASE("capacity arithmetic") {
  auto plan = balanced_group(gaussian_points(5, 2, 1), ClusterConfig{2, 20, 1});
  auto sizes = plan.sizes();
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{2, 3});

  auto ten = random_balanced_labels(10, 4, 3);
  std::vector<std::size_t> c(4, 0);
  for (Index g : ten) ++c[g];
  std::sort(c.begin(), c.end());
  CHECK(c == std::vector<std::size_t>{2, 2, 3, 3});
}

TEST_CASE("separated pairs") {
  auto p = points_of({{0, 0}, {0.1, 0}, {10, 0}, {10.1, 0}, {0, 10}, {0, 10.1}});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(balanced_group(p, ClusterConfig{3, 20, seed}).sizes() == std::vector<std::size_t>{2, 2, 2});
  }
  // init {0,1,2,2,0,1}: centroids (0,5), (0.05,5.05), (10.05,0); the greedy
  // pass puts each pair together and the second pass changes nothing.
  auto traced = balanced_kmeans(p, ClusterConfig{3, 20, 0}, std::vector<Index>{0, 1, 2, 2, 0, 1});
  CHECK(traced.labels == std::vector<Index>{0, 0, 2, 2, 1, 1});
  CHECK(traced.iterations == 2);
  auto fixed = balanced_kmeans(p, ClusterConfig{3, 20, 0}, std::vector<Index>{0, 0, 1, 1, 2, 2});
  CHECK(fixed.labels == std::vector<Index>{0, 0, 1, 1, 2, 2});
  CHECK(fixed.iterations == 1);
}

TEST_CASE("one group is trivially stable") {
  auto res = balanced_kmeans(gaussian_points(7, 3, 2), ClusterConfig{1, 20, 0});
  CHECK(res.iterations == 1);
  CHECK(std::all_of(res.labels.begin(), res.labels.end(), [](Index g) { return g == 0; }));
}

TEST_CASE("invalid group counts") {
  auto p = gaussian_points(3, 2, 1);
  CHECK_THROWS_AS(balanced_group(p, ClusterConfig{4, 20, 0}), PreconditionError);
  CHECK_THROWS_AS(balanced_group(p, ClusterConfig{0, 20, 0}), PreconditionError);
}

TEST_CASE("balance across sizes") {
  for (std::size_t n : {17, 64, 301}) {
    auto p = gaussian_points(n, 4, n);
    for (std::size_t s : {2, 4, 8, 16}) {
      if (s > n) continue;
      auto plan = make_plan(p, ClusterConfig{s, 10, 5});
      auto sizes = plan.sizes();
      CHECK(spread(sizes) <= 1);
      CHECK(*std::max_element(sizes.begin(), sizes.end()) <= (n + s - 1) / s);
    }
  }
}

TEST_CASE("permuting users permutes labels") {
  const std::size_t n = 40;
  auto p = gaussian_points(n, 3, 9);
  std::vector<Index> perm(n);
  for (Index i = 0; i < n; ++i) perm[i] = i;
  Rng r(4);
  shuffle(perm, r);
  Matrix q(n, 3);
  for (std::size_t i = 0; i < n; ++i) std::copy(p.row(perm[i]).begin(), p.row(perm[i]).end(), q.row(i).begin());
  auto init = random_balanced_labels(n, 4, 2);
  std::vector<Index> init_q(n);
  for (std::size_t i = 0; i < n; ++i) init_q[i] = init[perm[i]];
  ClusterConfig cfg{4, 20, 0};
  auto a = balanced_kmeans(p, cfg, init).labels;
  auto b = balanced_kmeans(q, cfg, init_q).labels;
  for (std::size_t i = 0; i < n; ++i) CHECK(b[i] == a[perm[i]]);
}

TEST_CASE("cohesion examples") {
  auto p = points_of({{0, 0}, {2, 0}, {1, std::sqrt(3.0)}, {5, 5}});
  std::vector<Index> single{3}, pair{0, 1}, tri{0, 1, 2};
  CHECK(cohesion(p, single) == 0.0);
  CHECK(cohesion(p, pair) == 0.25);
  auto unit = points_of({{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}});
  CHECK(cohesion(unit, tri) == doctest::Approx(1.0).epsilon(1e-12));
  auto same = points_of({{1, 1}, {1, 1}});
  std::vector<Index> both{0, 1};
  CHECK(cohesion(same, both) == doctest::Approx(0.5e8));
  CHECK_THROWS_AS(cohesion(p, std::vector<Index>{}), PreconditionError);
}

TEST_CASE("training order") {
  CHECK(order_by_cohesion(std::vector<double>{0.8, 0.3}) == std::vector<Index>{0, 1});
  CHECK(order_by_cohesion(std::vector<double>{0.3, 0.8}) == std::vector<Index>{1, 0});
  CHECK(order_by_cohesion(std::vector<double>{0.5, 0.9, 0.5}) == std::vector<Index>{1, 0, 2});
  auto plan = make_plan(gaussian_points(6, 2, 1), ClusterConfig{1, 20, 0});
  CHECK(plan.train_order == std::vector<Index>{0});
}

TEST_CASE("tight cluster is trained first") {
  Rng r(12);
  Matrix p(40, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    double sd = i < 20 ? 0.1 : 2.0;
    double cx = i < 20 ? 0.0 : 20.0;
    p(i, 0) = cx + sd * r.normal();
    p(i, 1) = sd * r.normal();
  }
  auto plan = make_plan(p, ClusterConfig{2, 20, 3});
  Index first = plan.train_order[0];
  for (std::size_t i = 0; i < 20; ++i) CHECK(plan.labels[i] == first);
  CHECK(plan.cohesion[first] > plan.cohesion[plan.train_order[1]]);
}

TEST_CASE("scaling points scales cohesion and keeps the order") {
  auto p = gaussian_points(48, 4, 21);
  auto plan = make_plan(p, ClusterConfig{4, 20, 1});
  Matrix q = p;
  for (double& x : q.data()) x *= 2.0;
  auto scaled = make_plan(q, ClusterConfig{4, 20, 1});
  CHECK(scaled.labels == plan.labels);
  CHECK(scaled.train_order == plan.train_order);
  for (std::size_t g = 0; g < 4; ++g) CHECK(scaled.cohesion[g] == doctest::Approx(plan.cohesion[g] / 2.0));
}

TEST_CASE("plan file round trip") {
  auto plan = make_plan(gaussian_points(30, 3, 2), ClusterConfig{4, 20, 1});
  auto path = (std::filesystem::temp_directory_path() / "laser_plan_test.txt").string();
  save_plan(plan, path);
  auto back = load_plan(path);
  CHECK(back.labels == plan.labels);
  CHECK(back.train_order == plan.train_order);
  for (std::size_t g = 0; g < 4; ++g) CHECK(back.cohesion[g] == doctest::Approx(plan.cohesion[g]).epsilon(1e-8));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_plan(path), PrerequisiteError);
}

}
