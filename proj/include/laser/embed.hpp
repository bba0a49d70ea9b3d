#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "laser/common.hpp"
#include "laser/hypergraph.hpp"

namespace laser {

struct EmbedConfig {
  std::size_t dim = 16;
  std::size_t window = 2;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  double min_learning_rate = 0.0001;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Collaborative user embedding B (n_users x dim).
struct EmbeddingMatrix {
  Matrix vectors;

  std::size_t n_users() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  bool operator==(const EmbeddingMatrix&) const = default;
};

struct EmbeddingResult {
  EmbeddingMatrix embedding;
  /// Mean negative-sampling loss per (center, context) pair, one per epoch.
  std::vector<double> epoch_loss;
};

/// Skip-gram with negative sampling over the walk corpus; returns the input
/// vector table. Single-threaded and deterministic under config.seed.
EmbeddingResult train_embedding(const UserSequenceCorpus& corpus, const EmbedConfig& config);

/// Seeded initial input table: uniform in [-0.5/dim, 0.5/dim].
Matrix initial_embedding(std::size_t n_users, const EmbedConfig& config);

// Per-pair objective, exposed for gradient checking:
//   L = -log s(u_pos . v) - sum_n log s(-u_n . v)
double sgns_loss(std::span<const double> center, std::span<const double> context,
                 const std::vector<std::span<const double>>& negatives);

struct SgnsGradient {
  std::vector<double> center;
  std::vector<double> context;
  std::vector<std::vector<double>> negatives;
};

SgnsGradient sgns_gradient(std::span<const double> center, std::span<const double> context,
                           const std::vector<std::span<const double>>& negatives);

/// Versioned little-endian binary: magic, version, N, M, then N*M doubles.
void save_embedding(const EmbeddingMatrix& embedding, const std::string& path);
EmbeddingMatrix load_embedding(const std::string& path);

}  // namespace laser
