#include "laser/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace laser {

RankTerms rank_terms(std::size_t rank, std::size_t cutoff) {
  if (rank == 0) throw PreconditionError("ranks are 1-based");
  if (rank > cutoff) return {0.0, 0.0};
  return {1.0 / std::log2(static_cast<double>(rank) + 1.0), 1.0};
}

Scorer model_scorer(const ModelParams& params) {
  return [&params](Index user, std::span<const Index> items) { return predict_items(params, user, items); };
}

RankMetrics ndcg_hr_at_10(const ModelParams& params, const InteractionMatrix& train, const InteractionMatrix& test,
                          const RankEvalConfig& config) {
  return ndcg_hr_at_10(model_scorer(params), train, test, config);
}

RankMetrics ndcg_hr_at_10(const Scorer& scorer, const InteractionMatrix& train, const InteractionMatrix& test,
                          const RankEvalConfig& config) {
  if (config.cutoff < 1) throw PreconditionError("cutoff must be >= 1");
  const std::size_t n_users = test.n_users();
  const std::size_t n_items = test.n_items();
  std::vector<Index> users;
  for (std::size_t u = 0; u < n_users; ++u) {
    if (test.degree(static_cast<Index>(u)) > 0 && train.degree(static_cast<Index>(u)) > 0) {
      users.push_back(static_cast<Index>(u));
    }
  }
  if (users.empty()) throw EmptyDatasetError("no test interactions to evaluate");

  std::vector<double> ndcg_sum(users.size(), 0.0), hr_sum(users.size(), 0.0);
  std::vector<std::size_t> count(users.size(), 0);
  std::vector<char> reduced(users.size(), 0);
  const auto n = static_cast<std::int64_t>(users.size());

#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t k = 0; k < n; ++k) {
    const auto slot = static_cast<std::size_t>(k);
    const Index u = users[slot];
    std::vector<Index> pool;
    for (std::size_t i = 0; i < n_items; ++i) {
      auto item = static_cast<Index>(i);
      if (!train.contains(u, item) && !test.contains(u, item)) pool.push_back(item);
    }
    if (pool.size() < config.negatives) reduced[slot] = 1;
    Rng rng = Rng::substream(config.seed, u, 0xE7A1);
    for (const auto& held : test.ratings_of(u)) {
      const std::size_t take = std::min(config.negatives, pool.size());
      for (std::size_t j = 0; j < take; ++j) std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
      std::vector<Index> candidates;
      candidates.reserve(take + 1);
      candidates.push_back(held.item);
      candidates.insert(candidates.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
      auto scores = scorer(u, candidates);
      std::size_t rank = 1;
      for (std::size_t j = 1; j < scores.size(); ++j) rank += scores[j] >= scores[0];
      auto terms = rank_terms(rank, config.cutoff);
      ndcg_sum[slot] += terms.ndcg;
      hr_sum[slot] += terms.hr;
      ++count[slot];
    }
  }

  RankMetrics m;
  for (std::size_t k = 0; k < users.size(); ++k) {
    m.ndcg += ndcg_sum[k];
    m.hr += hr_sum[k];
    m.interactions += count[k];
    m.reduced_pool_users += reduced[k];
  }
  m.ndcg /= static_cast<double>(m.interactions);
  m.hr /= static_cast<double>(m.interactions);
  return m;
}

double test_loss(const ModelParams& params, const InteractionMatrix& test, std::span<const Index> users) {
  double s = 0.0;
  std::size_t n = 0;
  for (Index u : users) {
    for (const auto& r : test.ratings_of(u)) {
      s += bce_term(predict(params, u, r.item), r.value / test.r_max());
      ++n;
    }
  }
  if (n == 0) throw EmptyDatasetError("no test entries for the requested users");
  return s / static_cast<double>(n);
}

std::vector<double> per_group_loss(const GroupPlan& plan, const InteractionMatrix& train,
                                   const InteractionMatrix& test, const LearnConfig& config) {
  plan.validate();
  const auto members = plan.members();
  std::vector<double> losses(plan.n_groups, 0.0);
  std::vector<std::string> errors(plan.n_groups);
  const auto n = static_cast<std::int64_t>(plan.n_groups);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t g = 0; g < n; ++g) {
    const auto gi = static_cast<std::size_t>(g);
    try {
      LearnConfig cfg = config;
      cfg.epochs_per_group = config.train.total_epochs;
      TrainingState state = init_state(train.n_users(), train.n_items(), config.model, cfg.train);
      train_group(state, train, members[gi], 0, cfg);
      losses[gi] = test_loss(state.params, test, members[gi]);
    } catch (const std::exception& e) {
      errors[gi] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("per-group loss failed: " + e);
  }
  return losses;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("spearman needs two equal samples of size >= 2");
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------

double CostProfile::total() const { return std::accumulate(costs.begin(), costs.end(), 0.0); }

void CostProfile::validate() const {
  if (costs.empty()) throw PreconditionError("cost profile is empty");
  for (double c : costs) {
    if (!(c > 0.0)) throw PreconditionError("group costs must be positive");
  }
}

namespace {

std::vector<double> suffix_sums(const std::vector<double>& c) {
  std::vector<double> s(c.size());
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) {
    acc += c[i];
    s[i] = acc;
  }
  return s;
}

}  // namespace

double expected_cost(const CostProfile& profile) {
  profile.validate();
  const double z = profile.total();
  auto suffix = suffix_sums(profile.costs);
  double e = 0.0;
  for (std::size_t i = 0; i < profile.costs.size(); ++i) e += suffix[i] * profile.costs[i] / z;
  return e;
}

double expected_cost_lower_bound(const CostProfile& profile) {
  profile.validate();
  const double n = static_cast<double>(profile.costs.size());
  return profile.total() / 2.0 * (1.0 + 1.0 / n);
}

double cost_variance(const CostProfile& profile) {
  profile.validate();
  const double z = profile.total();
  auto suffix = suffix_sums(profile.costs);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    double p = profile.costs[i] / z;
    m1 += p * suffix[i];
    m2 += p * suffix[i] * suffix[i];
  }
  return std::max(0.0, m2 - m1 * m1);
}

double monte_carlo_cost(const CostProfile& profile, std::size_t n_trials, std::uint64_t seed) {
  profile.validate();
  if (n_trials < 1) throw PreconditionError("n_trials must be >= 1");
  std::vector<double> cum(profile.costs.size());
  std::partial_sum(profile.costs.begin(), profile.costs.end(), cum.begin());
  auto suffix = suffix_sums(profile.costs);
  Rng rng = Rng::substream(seed, 0xC057);
  double total = 0.0;
  for (std::size_t t = 0; t < n_trials; ++t) total += suffix[sample_cumulative(cum, rng)];
  return total / static_cast<double>(n_trials);
}

// ---------------------------------------------------------------------------

UtilityIdentity utility_identity_check(std::span<const double> losses, std::span<const double> prior) {
  if (losses.size() != prior.size() || losses.empty()) {
    throw PreconditionError("losses and prior must be non-empty and of equal length");
  }
  double mass = std::accumulate(prior.begin(), prior.end(), 0.0);
  if (std::abs(mass - 1.0) > 1e-9) throw PreconditionError("prior does not sum to 1");
  const double s = static_cast<double>(losses.size());
  std::vector<double> utility(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) utility[i] = std::exp(-losses[i]);
  double u_bar = std::accumulate(utility.begin(), utility.end(), 0.0) / s;
  double p_bar = mass / s;
  UtilityIdentity r{0.0, 0.0, 0.0};
  double cov = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    r.lhs += utility[i] * prior[i];
    cov += (utility[i] - u_bar) * (prior[i] - p_bar);
  }
  r.rhs = u_bar + cov;
  r.gap = std::abs(r.lhs - r.rhs);
  return r;
}

// ---------------------------------------------------------------------------

double median_seconds(const std::function<void()>& fn, std::size_t repeats, std::size_t warmup) {
  using clock = std::chrono::steady_clock;
  for (std::size_t k = 0; k < warmup; ++k) fn();
  std::vector<double> times;
  for (std::size_t k = 0; k < std::max<std::size_t>(repeats, 1); ++k) {
    auto t0 = clock::now();
    fn();
    times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

UnlearnTiming time_unlearn(const UnlearnScenario& sc) {
  UnlearnTiming t;
  const CheckpointChain chain = learn(sc.train, sc.plan, sc.config);
  const CsisaModel shards = csisa(sc.train, sc.plan, sc.config);
  const InteractionMatrix edited = sc.train.without_users(sc.request.users);

  t.retrain_seconds = median_seconds([&] { (void)retrain_baseline(edited, sc.plan, sc.config); }, sc.repeats);
  t.csisa_seconds = median_seconds(
      [&] { t.csisa_shards_retrained = csisa_unlearn(shards, sc.train, sc.request).shards_retrained; }, sc.repeats);
  t.laser_seconds = median_seconds(
      [&] { t.laser_groups_retrained = unlearn(chain, sc.train, sc.request).groups_retrained; }, sc.repeats);
  return t;
}

void write_report(std::span<const ReportRow> rows, std::ostream& out, bool header) {
  if (header) {
    out << "# ranking protocol: held-out item vs 99 sampled unobserved items, cutoff 10\n";
    out << kReportHeader << '\n';
  }
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%s,%s,%.6f,%.6f,%.6f,%llu\n", r.method.c_str(), r.model.c_str(),
                  r.groups, r.request_kind.c_str(), format_double(r.k_percent).c_str(), r.ndcg10, r.hr10, r.seconds,
                  static_cast<unsigned long long>(r.seed));
    out << buf;
  }
}

}  // namespace laser
