#pragma once

#include <cstdint>
#include <vector>

#include "laser/ingest.hpp"

namespace laser {

/// Planted-cluster rating generator.
///
/// Items are split into one block per cluster. A user of cluster c draws
/// most of its items from a pool inside block c whose size is
/// `pool_fraction[c]` of the block: a small pool means heavy item overlap
/// between the cluster's users (tight), a large one means little (diffuse).
/// In-pool items are rated high, off-pool items low.
struct SyntheticSpec {
  std::size_t n_users = 500;
  std::size_t n_items = 400;
  std::size_t n_clusters = 4;
  std::size_t ratings_per_user = 20;
  /// One entry per cluster; empty means 0.25 everywhere.
  std::vector<double> pool_fraction;
  /// Probability that a rating falls outside the user's pool.
  double noise = 0.1;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  std::vector<RatingTriple> triples;
  std::vector<std::size_t> cluster_of_user;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

/// Pool fractions rising linearly from `tight` to `diffuse`.
std::vector<double> graded_pools(std::size_t n_clusters, double tight, double diffuse);

}  // namespace laser
