#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "laser/common.hpp"
#include "laser/ingest.hpp"

namespace laser {

enum class ModelKind : std::uint32_t { dmf = 1, nmf = 2 };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

inline constexpr std::size_t kEmbedDim = 16;
inline constexpr std::size_t kHidden1 = 64;
inline constexpr std::size_t kHidden2 = 32;
/// DMF predictions are clamped to [kPredictionFloor, 1].
inline constexpr double kPredictionFloor = 1e-6;
/// The loss clamps predictions to [kLogClamp, 1 - kLogClamp] before taking logs.
inline constexpr double kLogClamp = 1e-7;

/// View of one parameter tensor inside the flat parameter vector.
struct Tensor {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out x 1
};

/// Tensor placement for a model kind.
///
/// DMF: user tower 16 -> 64 -> 32 and item tower 16 -> 64 -> 32, ReLU after
/// both layers, prediction = cosine of the tower outputs.
/// NMF: GMF branch alpha_u * beta_i (16) and MLP branch [alpha_u; beta_i]
/// 32 -> 64 -> 32 with ReLU, fused by an affine 48 -> 1 layer and a sigmoid.
struct ParamLayout {
  ModelKind kind = ModelKind::dmf;
  Tensor user_embed;
  Tensor item_embed;
  DenseLayer user1, user2, item1, item2;  // DMF towers
  DenseLayer mlp1, mlp2, fuse;            // NMF
  std::size_t total = 0;

  static ParamLayout make(ModelKind kind, std::size_t n_users, std::size_t n_items);
};

struct ModelParams {
  ModelKind kind = ModelKind::dmf;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<double> values;

  ParamLayout layout() const { return ParamLayout::make(kind, n_users, n_items); }
  std::span<double> slice(const Tensor& t) { return {values.data() + t.offset, t.size()}; }
  std::span<const double> slice(const Tensor& t) const { return {values.data() + t.offset, t.size()}; }
  std::span<const double> user_row(Index u) const;
  std::span<const double> item_row(Index i) const;

  bool operator==(const ModelParams&) const = default;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState for_params(const ModelParams& params, double learning_rate);
  bool operator==(const OptimizerState&) const = default;
};

struct TrainConfig {
  std::size_t total_epochs = 50;
  std::size_t batch_size = 256;
  std::size_t negative_per_positive = 4;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Everything a checkpoint holds: resuming from it continues a run exactly.
struct TrainingState {
  ModelParams params;
  OptimizerState opt;
  Rng rng;
  std::uint64_t epochs_done = 0;
  std::uint64_t seed = 0;

  bool operator==(const TrainingState&) const = default;
};

/// A training example: `rating` is the observed value, 0 for sampled negatives.
struct Sample {
  Index user;
  Index item;
  double rating;
};

/// i.i.d. N(0, 0.01^2) over every parameter, deterministic under seed.
ModelParams init_params(std::size_t n_users, std::size_t n_items, ModelKind kind, std::uint64_t seed);

TrainingState init_state(std::size_t n_users, std::size_t n_items, ModelKind kind, const TrainConfig& config);

double predict(const ModelParams& params, Index user, Index item);

/// Scores every item for one user (DMF reuses the user tower).
std::vector<double> predict_items(const ModelParams& params, Index user, std::span<const Index> items);

/// Normalised BCE contribution of a single prediction against target r / r_max.
double bce_term(double prediction, double target);

/// Mean normalised BCE over a batch.
double loss(const ModelParams& params, std::span<const Sample> batch, double r_max);

/// Mean loss and its gradient (same layout as params.values).
double loss_and_gradient(const ModelParams& params, std::span<const Sample> batch, double r_max,
                         std::vector<double>& grad);

/// One bias-corrected Adam update.
void adam_step(std::vector<double>& values, std::span<const double> grad, OptimizerState& opt);

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

/// Positive entries of the given users, in (user, item) order.
std::vector<Sample> positives_of(const InteractionMatrix& train, std::span<const Index> users);
std::vector<Sample> all_positives(const InteractionMatrix& train);

/// One pass over `positives` in shuffled mini-batches, each positive joined by
/// `negative_per_positive` items the user has not rated in `train`.
EpochStats train_epoch_on(TrainingState& state, std::span<const Sample> positives, const InteractionMatrix& train,
                          const TrainConfig& config);

/// One pass over every entry of `train`.
EpochStats train_epoch(TrainingState& state, const InteractionMatrix& train, const TrainConfig& config);

void save_checkpoint(const TrainingState& state, const std::string& path);
TrainingState load_checkpoint(const std::string& path);

}  // namespace laser
