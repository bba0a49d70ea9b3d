#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "laser/cfmodels.hpp"
#include "laser/grouping.hpp"
#include "laser/ingest.hpp"
#include "laser/pipeline.hpp"

namespace laser {

// ---------------------------------------------------------------------------
// Ranking metrics (sampled protocol: the held-out item against `negatives`
// unobserved items; a negative scoring equal to the held-out item outranks it).

struct RankEvalConfig {
  std::size_t cutoff = 10;
  std::size_t negatives = 99;
  std::uint64_t seed = 0;
};

struct RankMetrics {
  double ndcg = 0.0;
  double hr = 0.0;
  std::size_t interactions = 0;
  /// Users whose unobserved pool was smaller than the negative count.
  std::size_t reduced_pool_users = 0;
};

struct RankTerms {
  double ndcg;
  double hr;
};

/// Contribution of one held-out item at 1-based `rank`.
RankTerms rank_terms(std::size_t rank, std::size_t cutoff);

using Scorer = std::function<std::vector<double>(Index user, std::span<const Index> items)>;

/// Scores with a trained model.
Scorer model_scorer(const ModelParams& params);

/// Evaluates every test entry of users that still own training data.
RankMetrics ndcg_hr_at_10(const Scorer& scorer, const InteractionMatrix& train, const InteractionMatrix& test,
                          const RankEvalConfig& config);
RankMetrics ndcg_hr_at_10(const ModelParams& params, const InteractionMatrix& train, const InteractionMatrix& test,
                          const RankEvalConfig& config);

/// Mean normalised BCE of the model over the test entries of `users`.
double test_loss(const ModelParams& params, const InteractionMatrix& test, std::span<const Index> users);

/// For each group (indexed by group id): train from scratch on that group's
/// ratings for total_epochs and report the loss on its test entries.
std::vector<double> per_group_loss(const GroupPlan& plan, const InteractionMatrix& train,
                                   const InteractionMatrix& test, const LearnConfig& config);

/// Spearman rank correlation, average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Expected retraining cost of sequential unlearning.

struct CostProfile {
  std::vector<double> costs;

  double total() const;
  void validate() const;
};

/// sum_i (sum_{j >= i} c_j) * c_i / Z
double expected_cost(const CostProfile& profile);
/// (Z / 2) * (1 + 1 / n), attained by equal costs.
double expected_cost_lower_bound(const CostProfile& profile);
/// Variance of the suffix cost of a single request.
double cost_variance(const CostProfile& profile);
/// Requests located with probability c_i / Z; averages the suffix cost.
double monte_carlo_cost(const CostProfile& profile, std::size_t n_trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Prior-weighted utility identity: sum U_i p_i = mean(U) + sum (U_i - U_bar)(p_i - p_bar)
// with U_i = exp(-L_i).

struct UtilityIdentity {
  double lhs;
  double rhs;
  double gap;
};

UtilityIdentity utility_identity_check(std::span<const double> losses, std::span<const double> prior);

// ---------------------------------------------------------------------------
// Timing

/// Runs `fn` warmup + repeats times and returns the median of the timed runs.
double median_seconds(const std::function<void()>& fn, std::size_t repeats = 5, std::size_t warmup = 1);

struct UnlearnScenario {
  InteractionMatrix train;
  GroupPlan plan;
  LearnConfig config;
  UnlearnRequest request;
  std::size_t repeats = 5;
};

struct UnlearnTiming {
  double retrain_seconds = 0.0;
  double csisa_seconds = 0.0;
  double laser_seconds = 0.0;
  std::size_t laser_groups_retrained = 0;
  std::size_t csisa_shards_retrained = 0;
};

/// Times Retrain, C-SISA unlearning and LASER unlearning on the same request.
/// The original chain and shard models are built once, outside the timings.
UnlearnTiming time_unlearn(const UnlearnScenario& scenario);

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::string method;
  std::string model;
  std::size_t groups = 0;
  std::string request_kind;
  double k_percent = 0.0;
  double ndcg10 = 0.0;
  double hr10 = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kReportHeader = "method,model,S,request_kind,K,ndcg10,hr10,seconds,seed";

void write_report(std::span<const ReportRow> rows, std::ostream& out, bool header = true);

}  // namespace laser
