#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laser/cfmodels.hpp"
#include "laser/grouping.hpp"
#include "laser/ingest.hpp"

namespace laser {

enum class TrainOrder { seqtrain, anti_seqtrain };

TrainOrder parse_train_order(const std::string& name);
std::string to_string(TrainOrder order);

struct LearnConfig {
  ModelKind model = ModelKind::dmf;
  TrainConfig train;
  TrainOrder order = TrainOrder::seqtrain;
  /// Epochs spent on each group; 0 means train.total_epochs.
  std::size_t epochs_per_group = 0;

  std::size_t group_epochs() const { return epochs_per_group ? epochs_per_group : train.total_epochs; }
};

/// Model + optimizer snapshots taken after each group of a sequential run.
/// checkpoints[k] is the state after the k-th visited group, so the chain is
/// indexed by training position, not by group id.
struct CheckpointChain {
  GroupPlan plan;
  LearnConfig config;
  std::vector<Index> visit_order;
  TrainingState initial;
  std::vector<TrainingState> checkpoints;
  std::vector<Index> erased_users;

  const TrainingState& served() const { return checkpoints.back(); }
};

struct UnlearnRequest {
  std::vector<Index> users;
};

enum class RequestKind { rand_at_k, top_at_k };

struct RequestGenerator {
  RequestKind kind = RequestKind::rand_at_k;
  double k_percent = 5.0;
  std::uint64_t seed = 0;
};

/// Parses "rand@2.5" / "top@5".
RequestGenerator parse_request_spec(const std::string& spec, std::uint64_t seed);
std::string to_string(RequestKind kind);

/// Group visit order: plan.train_order, reversed for anti-SeqTrain.
std::vector<Index> visit_order(const GroupPlan& plan, TrainOrder order);

/// Seed of the RNG stream used while training the group at `position`.
/// Identical for a from-scratch run and for a rollback retrain.
Rng group_stream(std::uint64_t seed, std::size_t position);

/// Trains `epochs` epochs on one group's ratings, starting a fresh stream.
void train_group(TrainingState& state, const InteractionMatrix& train, std::span<const Index> members,
                 std::size_t position, const LearnConfig& config);

CheckpointChain learn(const InteractionMatrix& train, const GroupPlan& plan, const LearnConfig& config);

/// Earliest position in the visit order that holds a requested user.
std::size_t locate(const GroupPlan& plan, const UnlearnRequest& request, TrainOrder order = TrainOrder::seqtrain);

struct UnlearnResult {
  CheckpointChain chain;
  InteractionMatrix train;
  std::size_t rollback_position = 0;
  std::size_t groups_retrained = 0;
};

/// Removes the requested users' ratings, restores the checkpoint before the
/// earliest affected position and retrains the remaining suffix.
UnlearnResult unlearn(const CheckpointChain& chain, const InteractionMatrix& train, const UnlearnRequest& request);

/// Ground truth: learn() from scratch on the edited data, served model only.
ModelParams retrain_baseline(const InteractionMatrix& train_minus_erased, const GroupPlan& plan,
                             const LearnConfig& config);

/// Isolated per-group models merged into one served model.
struct CsisaModel {
  GroupPlan plan;
  LearnConfig config;
  std::vector<TrainingState> shards;
  ModelParams merged;
};

std::uint64_t shard_seed(std::uint64_t seed, std::size_t group);

/// User rows from the user's own shard; every other tensor is the mean over
/// shards.
ModelParams merge_shards(const GroupPlan& plan, const std::vector<TrainingState>& shards);

/// Trains one model per group for total_epochs each; shards run concurrently.
CsisaModel csisa(const InteractionMatrix& train, const GroupPlan& plan, const LearnConfig& config);

struct CsisaUnlearnResult {
  CsisaModel model;
  std::size_t shards_retrained = 0;
};

/// Retrains, from scratch, only the shards that held a requested user.
CsisaUnlearnResult csisa_unlearn(const CsisaModel& model, const InteractionMatrix& train,
                                 const UnlearnRequest& request);

UnlearnRequest generate_request(const InteractionMatrix& matrix, const RequestGenerator& gen);

/// Number of users a K% request covers out of n: ceil(K/100 * n).
std::size_t request_size(std::size_t n, double k_percent);

/// Throws unless every id names a user that still owns ratings.
void validate_request(const InteractionMatrix& train, const UnlearnRequest& request);

// ---------------------------------------------------------------------------
// On-disk chain: a text manifest next to one checkpoint file per position.

/// Writes plan.txt, initial.ckpt, ckpt_NNN.ckpt and chain.manifest into dir.
/// `extras` are copied into the manifest verbatim (key=value).
void save_chain(const CheckpointChain& chain, const std::string& dir,
                const std::map<std::string, std::string>& extras = {});

/// Loads a manifest and every checkpoint it lists; checks each header
/// against the plan.
CheckpointChain load_chain(const std::string& manifest_path, std::map<std::string, std::string>* extras = nullptr);

}  // namespace laser
