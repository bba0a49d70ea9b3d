#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "laser/pipeline.hpp"
#include "laser/synthetic.hpp"

using namespace laser;

namespace {

InteractionMatrix data(std::size_t users = 80, std::uint64_t seed = 2) {
  SyntheticSpec s;
  s.n_users = users;
  s.n_items = 60;
  s.ratings_per_user = 8;
  s.pool_fraction = graded_pools(4, 0.2, 0.7);
  s.seed = seed;
  return build_matrix(make_synthetic(s).triples, 1);
}

LearnConfig config(ModelKind kind = ModelKind::dmf, std::size_t epochs = 2) {
  LearnConfig c;
  c.model = kind;
  c.train.total_epochs = epochs;
  c.train.batch_size = 64;
  c.train.seed = 13;
  return c;
}

GroupPlan plan_for(std::size_t n, std::size_t s) {
  GroupPlan p;
  p.n_groups = s;
  p.labels = random_balanced_labels(n, s, 3);
  p.cohesion.assign(s, 0.0);
  for (std::size_t g = s; g-- > 0;) p.train_order.push_back(static_cast<Index>(g));
  return p;
}

Index member_at(const GroupPlan& plan, std::size_t position, std::size_t k = 0) {
  return plan.members()[plan.train_order[position]][k];
}

std::vector<Index> all_users(std::size_t n) {
  std::vector<Index> v(n);
  for (Index i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::string tmpdir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d.string();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("one group is plain training") {
  auto m = data();
  auto cfg = config();
  auto chain = learn(m, plan_for(m.n_users(), 1), cfg);
  CHECK(chain.checkpoints.size() == 1);

  auto s = init_state(m.n_users(), m.n_items(), cfg.model, cfg.train);
  s.rng = group_stream(cfg.train.seed, 0);
  auto pos = all_positives(m);
  for (std::size_t e = 0; e < cfg.train.total_epochs; ++e) train_epoch_on(s, pos, m, cfg.train);
  CHECK(chain.served() == s);
}

TEST_CASE("two groups compose through a checkpoint restore") {
  auto m = data();
  auto cfg = config(ModelKind::nmf);
  auto plan = plan_for(m.n_users(), 2);
  auto chain = learn(m, plan, cfg);
  auto members = plan.members();

  auto path = (std::filesystem::temp_directory_path() / "laser_compose.ckpt").string();
  auto s = init_state(m.n_users(), m.n_items(), cfg.model, cfg.train);
  train_group(s, m, members[plan.train_order[0]], 0, cfg);
  save_checkpoint(s, path);
  auto restored = load_checkpoint(path);
  train_group(restored, m, members[plan.train_order[1]], 1, cfg);
  CHECK(restored == chain.served());
  std::filesystem::remove(path);
}

TEST_CASE("anti-SeqTrain reverses the visit order") {
  auto plan = plan_for(10, 2);
  auto fwd = visit_order(plan, TrainOrder::seqtrain);
  auto back = visit_order(plan, TrainOrder::anti_seqtrain);
  std::reverse(back.begin(), back.end());
  CHECK(fwd == back);
  CHECK(fwd == plan.train_order);
}

TEST_CASE("locate takes the earliest position") {
  auto plan = plan_for(40, 4);
  CHECK(locate(plan, {{member_at(plan, 3)}}) == 3);
  CHECK(locate(plan, {{member_at(plan, 3), member_at(plan, 0)}}) == 0);
  CHECK(locate(plan, {{member_at(plan, 2), member_at(plan, 3, 1)}}) == 2);
  CHECK(locate(plan, {{member_at(plan, 3)}}, TrainOrder::anti_seqtrain) == 0);
  CHECK_THROWS_AS(locate(plan, {{40}}), PreconditionError);
}

TEST_CASE("rollback retrains only the suffix") {
  auto m = data();
  auto cfg = config();
  auto plan = plan_for(m.n_users(), 4);
  auto chain = learn(m, plan, cfg);
  auto last = unlearn(chain, m, {{member_at(plan, 3)}});
  CHECK(last.groups_retrained == 1);
  CHECK(last.rollback_position == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(last.chain.checkpoints[k] == chain.checkpoints[k]);
  auto first = unlearn(chain, m, {{member_at(plan, 0)}});
  CHECK(first.groups_retrained == 4);
}

TEST_CASE("unlearning equals retraining on the edited data") {
  auto m = data();
  for (ModelKind k : {ModelKind::dmf, ModelKind::nmf}) {
    for (std::size_t s : {2, 4}) {
      auto cfg = config(k);
      auto plan = plan_for(m.n_users(), s);
      auto chain = learn(m, plan, cfg);
      UnlearnRequest req{{member_at(plan, s - 1), member_at(plan, s / 2, 1)}};
      auto out = unlearn(chain, m, req);
      CHECK(out.chain.served().params == retrain_baseline(m.without_users(req.users), plan, cfg));
      CHECK(out.chain.erased_users.size() == 2);

      // a second request stacks on the first
      UnlearnRequest again{{member_at(plan, s - 1, 2)}};
      auto twice = unlearn(out.chain, out.train, again);
      auto edited = m.without_users(req.users).without_users(again.users);
      CHECK(twice.chain.served().params == retrain_baseline(edited, plan, cfg));
    }
  }
}

TEST_CASE("empty edit reproduces the original model") {
  auto m = data();
  auto cfg = config();
  auto plan = plan_for(m.n_users(), 2);
  CHECK(retrain_baseline(m, plan, cfg) == learn(m, plan, cfg).served().params);
}

TEST_CASE("request validation") {
  auto m = data(12);
  auto cfg = config();
  auto plan = plan_for(m.n_users(), 4);
  auto chain = learn(m, plan, cfg);
  CHECK_THROWS_AS(unlearn(chain, m, {{}}), PreconditionError);
  CHECK_THROWS_AS(unlearn(chain, m, {{99}}), PreconditionError);
  auto whole_group = plan.members()[plan.train_order[1]];
  try {
    unlearn(chain, m, {whole_group});
    FAIL("expected an error");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("re-group") != std::string::npos);
  }
  auto once = unlearn(chain, m, {{member_at(plan, 2)}});
  CHECK_THROWS_AS(unlearn(once.chain, once.train, {{member_at(plan, 2)}}), PreconditionError);
  CHECK_THROWS_AS(validate_request(m, {all_users(m.n_users())}), PreconditionError);
}

TEST_CASE("C-SISA with one shard is plain training") {
  auto m = data();
  auto cfg = config();
  auto plan = plan_for(m.n_users(), 1);
  auto model = csisa(m, plan, cfg);
  CHECK(model.merged == learn(m, plan, cfg).served().params);
}

TEST_CASE("C-SISA serves each user row from its own shard") {
  auto m = data();
  auto cfg = config(ModelKind::nmf);
  auto plan = plan_for(m.n_users(), 4);
  auto model = csisa(m, plan, cfg);
  REQUIRE(model.shards.size() == 4);
  for (Index u : {0u, 17u, 45u, 79u}) {
    auto served = model.merged.user_row(u);
    auto own = model.shards[plan.labels[u]].params.user_row(u);
    CHECK(std::equal(served.begin(), served.end(), own.begin(), own.end()));
  }
  auto L = model.merged.layout();
  double mean = 0.0;
  for (const auto& s : model.shards) mean += s.params.values[L.fuse.bias.offset];
  CHECK(model.merged.values[L.fuse.bias.offset] == doctest::Approx(mean / 4));

  auto out = csisa_unlearn(model, m, {{member_at(plan, 2)}});
  CHECK(out.shards_retrained == 1);
  auto fresh = csisa(m.without_users(std::vector<Index>{member_at(plan, 2)}), plan, cfg);
  CHECK(out.model.merged == fresh.merged);
}

TEST_CASE("request sizes") {
  CHECK(request_size(100, 2.5) == 3);
  CHECK(request_size(6040, 5.0) == 302);
  CHECK(request_size(6040, 2.5) == 151);
  CHECK(request_size(10, 10.0) == 1);
  CHECK_THROWS_AS(parse_request_spec("top@100", 0), PreconditionError);
  CHECK_THROWS_AS(parse_request_spec("all@5", 0), PreconditionError);
  auto g = parse_request_spec("rand@2.5", 9);
  CHECK(g.kind == RequestKind::rand_at_k);
  CHECK(g.k_percent == 2.5);
}

TEST_CASE("top requests pick the most active users") {
  std::vector<RatingTriple> t;
  for (std::int64_t u = 0; u < 6040; ++u) {
    std::int64_t deg = 2 + (u * 7919) % 37;
    for (std::int64_t k = 0; k < deg; ++k) t.push_back({u, k, 3.0, 0});
  }
  auto m = build_matrix(t, 1);
  auto req = generate_request(m, {RequestKind::top_at_k, 5.0, 1});
  REQUIRE(req.users.size() == 302);
  CHECK(std::is_sorted(req.users.begin(), req.users.end()));
  std::size_t min_in = SIZE_MAX, max_out = 0;
  for (Index u = 0; u < m.n_users(); ++u) {
    if (std::binary_search(req.users.begin(), req.users.end(), u)) min_in = std::min(min_in, m.degree(u));
    else max_out = std::max(max_out, m.degree(u));
  }
  CHECK(min_in >= max_out);
}

TEST_CASE("random requests are seeded") {
  auto m = data(100);
  auto a = generate_request(m, {RequestKind::rand_at_k, 2.5, 4});
  CHECK(a.users.size() == 3);
  CHECK(a.users == generate_request(m, {RequestKind::rand_at_k, 2.5, 4}).users);
}

TEST_CASE("mean rollback depth for uniform single-user requests") {
  const std::size_t s = 4;
  auto plan = plan_for(400, s);
  Rng r(5);
  double total = 0.0;
  for (int k = 0; k < 1000; ++k) total += s - locate(plan, {{static_cast<Index>(r.below(400))}});
  double expected = (s + 1) / 2.0;
  CHECK(std::abs(total / 1000 - expected) <= 0.05 * expected);
}

TEST_CASE("chain files round trip") {
  auto m = data();
  auto cfg = config(ModelKind::nmf);
  auto plan = plan_for(m.n_users(), 2);
  auto chain = unlearn(learn(m, plan, cfg), m, {{member_at(plan, 1)}}).chain;
  auto dir = tmpdir("laser_chain_test");
  save_chain(chain, dir, {{"dataset", "abc"}});
  std::map<std::string, std::string> extras;
  auto back = load_chain(dir + "/chain.manifest", &extras);
  CHECK(extras["dataset"] == "abc");
  CHECK(back.checkpoints == chain.checkpoints);
  CHECK(back.initial == chain.initial);
  CHECK(back.visit_order == chain.visit_order);
  CHECK(back.erased_users == chain.erased_users);
  CHECK(back.plan.labels == chain.plan.labels);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_chain(dir + "/chain.manifest"), PrerequisiteError);
}

}
