#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "laser/eval.hpp"
#include "laser/synthetic.hpp"

using namespace laser;

namespace {

TrainTestSplit split_data(std::size_t users, std::vector<double> pools, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_users = users;
  s.n_items = 200;
  s.n_clusters = pools.size();
  s.ratings_per_user = 20;
  s.pool_fraction = pools;
  s.seed = seed;
  return split(build_matrix(make_synthetic(s).triples, 1), {0.9, seed});
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("rank terms") {
  CHECK(rank_terms(1, 10).ndcg == 1.0);
  CHECK(rank_terms(1, 10).hr == 1.0);
  CHECK(rank_terms(3, 10).ndcg == 0.5);
  CHECK(rank_terms(10, 10).hr == 1.0);
  CHECK(rank_terms(11, 10).ndcg == 0.0);
  CHECK(rank_terms(11, 10).hr == 0.0);
  CHECK_THROWS_AS(rank_terms(0, 10), PreconditionError);
}

TEST_CASE("oracle and constant scorers") {
  auto d = split_data(40, {0.3, 0.6}, 1);
  const auto& test = d.test;
  Scorer oracle = [&](Index u, std::span<const Index> items) {
    std::vector<double> s;
    for (Index i : items) s.push_back(test.contains(u, i) ? 1.0 : 0.0);
    return s;
  };
  auto best = ndcg_hr_at_10(oracle, d.train, d.test, RankEvalConfig{});
  CHECK(best.ndcg == 1.0);
  CHECK(best.hr == 1.0);
  CHECK(best.interactions == d.test.n_entries());
  CHECK(best.reduced_pool_users == 0);

  Scorer flat = [](Index, std::span<const Index> items) { return std::vector<double>(items.size(), 0.5); };
  auto worst = ndcg_hr_at_10(flat, d.train, d.test, RankEvalConfig{});
  CHECK(worst.ndcg == 0.0);
  CHECK(worst.hr == 0.0);
}

TEST_CASE("metrics are bounded and HR dominates NDCG") {
  auto d = split_data(60, {0.3, 0.6}, 2);
  Scorer noise = [](Index u, std::span<const Index> items) {
    std::vector<double> s;
    for (Index i : items) s.push_back(Rng(derive_key(u, i)).uniform());
    return s;
  };
  RankEvalConfig cfg;
  cfg.seed = 3;
  auto m = ndcg_hr_at_10(noise, d.train, d.test, cfg);
  CHECK(m.ndcg >= 0.0);
  CHECK(m.hr <= 1.0);
  CHECK(m.hr >= m.ndcg);
  CHECK(m.hr == doctest::Approx(0.1).epsilon(0.6));
  auto again = ndcg_hr_at_10(noise, d.train, d.test, cfg);
  CHECK(again.ndcg == m.ndcg);
}

TEST_CASE("small catalogues use a reduced pool") {
  std::vector<RatingTriple> t;
  for (std::int64_t u = 0; u < 4; ++u) {
    for (std::int64_t i = 0; i < 6; ++i) t.push_back({u, i + u, 4.0, 0});
  }
  auto d = split(build_matrix(t, 1), {0.5, 1});
  Scorer flat = [](Index, std::span<const Index> items) { return std::vector<double>(items.size(), 0.0); };
  auto m = ndcg_hr_at_10(flat, d.train, d.test, RankEvalConfig{});
  CHECK(m.reduced_pool_users == 4);
  CHECK(m.hr == 1.0);
}

TEST_CASE("empty test set") {
  auto d = split_data(20, {0.5}, 1);
  InteractionMatrix empty(d.train.n_users(), d.train.n_items(), 5.0, {});
  Scorer flat = [](Index, std::span<const Index> items) { return std::vector<double>(items.size(), 0.0); };
  CHECK_THROWS_AS(ndcg_hr_at_10(flat, d.train, empty, RankEvalConfig{}), EmptyDatasetError);
}

TEST_CASE("one group loss equals the whole-model test loss") {
  auto d = split_data(40, {0.3, 0.6}, 4);
  LearnConfig cfg;
  cfg.train.total_epochs = 3;
  cfg.train.seed = 2;
  GroupPlan plan{1, std::vector<Index>(40, 0), {0.0}, {0}};
  auto losses = per_group_loss(plan, d.train, d.test, cfg);
  REQUIRE(losses.size() == 1);
  std::vector<Index> users(40);
  std::iota(users.begin(), users.end(), 0);
  CHECK(losses[0] == test_loss(learn(d.train, plan, cfg).served().params, d.test, users));
}

TEST_CASE("tight cluster is easier to fit") {
  auto d = split_data(120, {0.1, 0.9}, 6);
  LearnConfig cfg;
  cfg.train.total_epochs = 10;
  cfg.train.seed = 1;
  GroupPlan plan{2, {}, {0.0, 0.0}, {0, 1}};
  for (Index u = 0; u < 120; ++u) plan.labels.push_back(u % 2);
  auto losses = per_group_loss(plan, d.train, d.test, cfg);
  CHECK(losses[0] <= losses[1]);
}

TEST_CASE("expected cost examples") {
  CHECK(expected_cost({{1, 1}}) == 1.5);
  CHECK(expected_cost_lower_bound({{1, 1}}) == 1.5);
  CHECK(expected_cost({{1, 3}}) == 3.25);
  CHECK(expected_cost_lower_bound({{1, 3}}) == 3.0);
  CHECK(expected_cost({{7}}) == 7.0);
  CHECK(std::abs(monte_carlo_cost({{1, 1}}, 100000, 1) - 1.5) <= 0.01);
  CHECK(std::abs(monte_carlo_cost({{1, 3}}, 100000, 1) - 3.25) <= 0.03);
  CHECK(expected_cost({{2, 2, 2}}) <= expected_cost({{1, 2, 3}}));
  CHECK(cost_variance({{5}}) == 0.0);
  CHECK_THROWS_AS(expected_cost({{}}), PreconditionError);
  CHECK_THROWS_AS(expected_cost({{1, 0}}), PreconditionError);
}

TEST_CASE("utility identity examples") {
  std::vector<double> l{0.0, std::log(2.0)}, p{0.75, 0.25};
  auto r = utility_identity_check(l, p);
  CHECK(r.lhs == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(r.rhs == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(r.gap < 1e-15);

  std::vector<double> l3{0.2, 0.9, 1.4}, u3{1.0 / 3, 1.0 / 3, 1.0 / 3};
  auto uni = utility_identity_check(l3, u3);
  CHECK(uni.lhs == doctest::Approx((std::exp(-0.2) + std::exp(-0.9) + std::exp(-1.4)) / 3).epsilon(1e-15));
  CHECK_THROWS_AS(utility_identity_check(l3, std::vector<double>{0.5, 0.5, 0.5}), PreconditionError);
}

TEST_CASE("spearman") {
  std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 100}, c{5, 4, 3, 2, 1};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
  std::vector<double> x{1, 2, 2, 3}, y{1, 3, 2, 4};
  CHECK(spearman(x, y) == doctest::Approx(0.9486833).epsilon(1e-6));
}

TEST_CASE("median timing runs warm-up plus repeats") {
  int calls = 0;
  double t = median_seconds([&] { ++calls; }, 5, 1);
  CHECK(calls == 6);
  CHECK(t >= 0.0);
}

TEST_CASE("report rows") {
  std::ostringstream out;
  std::vector<ReportRow> rows{{"laser", "DMF", 4, "top", 5.0, 0.25, 0.5, 1.5, 7}};
  write_report(rows, out);
  std::string s = out.str();
  CHECK(s.find(std::string(kReportHeader) + "\n") != std::string::npos);
  CHECK(s.find("laser,DMF,4,top,5,0.250000,0.500000,1.500000,7\n") != std::string::npos);
}

}
