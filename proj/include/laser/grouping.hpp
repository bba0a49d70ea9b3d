#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laser/common.hpp"
#include "laser/ingest.hpp"
#include "laser/kernels.hpp"

namespace laser {

enum class GroupSource { collab_embedding, raw_ratings, random };

GroupSource parse_group_source(const std::string& name);
std::string to_string(GroupSource source);

struct ClusterConfig {
  std::size_t n_groups = 4;
  std::size_t max_iter = 20;
  std::uint64_t seed = 0;
  GroupSource source = GroupSource::collab_embedding;
};

/// User partition plus the curriculum order derived from it.
struct GroupPlan {
  std::size_t n_groups = 0;
  std::vector<Index> labels;
  std::vector<double> cohesion;
  /// Group ids, most cohesive first.
  std::vector<Index> train_order;

  std::vector<std::vector<Index>> members() const;
  std::vector<std::size_t> sizes() const;
  /// Inverse of train_order: position at which each group is trained.
  std::vector<std::size_t> positions() const;
  void validate() const;

  bool operator==(const GroupPlan&) const = default;
};

struct PairPriority {
  Index user;
  Index group;
  double priority;
};

/// Strict weak order of the balanced-assignment priority list: higher priority first,
/// then ascending user id, then ascending group id.
bool priority_before(const PairPriority& a, const PairPriority& b);

/// Centroids of the labelled points. A label with no members is re-seeded at
/// the point farthest from its own centroid.
Matrix group_centroids(const Matrix& points, std::span<const Index> labels, std::size_t n_groups);

/// All (user, group) pairs with priority = -distance(user, centroid(group)).
std::vector<PairPriority> compute_similarity_kmeans(const Matrix& points, std::span<const Index> labels,
                                                    std::size_t n_groups,
                                                    kernels::Exec exec = kernels::Exec::parallel);

/// Walks a priority list and hands each user its best group that still has
/// room. At most N mod S groups may reach ceil(N/S); the rest stop at
/// floor(N/S), so sizes never differ by more than one.
std::vector<Index> assign_by_priority(std::vector<PairPriority> priorities, std::size_t n_users,
                                      std::size_t n_groups);

struct BalancedLabels {
  std::vector<Index> labels;
  std::size_t iterations = 0;
};

/// Balanced random allocation: a seeded shuffle dealt round-robin.
std::vector<Index> random_balanced_labels(std::size_t n_users, std::size_t n_groups, std::uint64_t seed);

/// Balanced k-means over the centroid-distance priority. `initial` overrides the seeded
/// random starting allocation.
BalancedLabels balanced_kmeans(const Matrix& points, const ClusterConfig& config,
                               std::optional<std::vector<Index>> initial = std::nullopt,
                               kernels::Exec exec = kernels::Exec::parallel);

/// Labels only; cohesion and train_order left empty.
GroupPlan balanced_group(const Matrix& points, const ClusterConfig& config);

/// Unconstrained Lloyd iterations from seeded Forgy centroids. Kept as the
/// negative control for balance.
std::vector<Index> plain_kmeans(const Matrix& points, std::size_t n_groups, std::size_t max_iter,
                                std::uint64_t seed);

/// Pair-sum of inverse distances over distinct unordered pairs, divided by
/// the group size. Singletons score 0.
double cohesion(const Matrix& points, std::span<const Index> members,
                kernels::Exec exec = kernels::Exec::parallel);

inline constexpr double kCohesionEps = 1e-8;

/// Groups sorted by cohesion, descending, ties by group id.
std::vector<Index> order_by_cohesion(std::span<const double> cohesion);

GroupPlan make_plan(const Matrix& points, const ClusterConfig& config);
/// Labels from cluster_points (ignored for the random source), cohesion from
/// cohesion_points.
GroupPlan make_plan(const Matrix& cluster_points, const Matrix& cohesion_points, const ClusterConfig& config);

/// Dense user rows of the rating matrix (0 where unrated); the L-BKM input.
Matrix rating_points(const InteractionMatrix& matrix);

/// Plan file: S / labels / cohesion (9 significant digits) / train order.
void write_plan(const GroupPlan& plan, std::ostream& out);
void save_plan(const GroupPlan& plan, const std::string& path);
GroupPlan load_plan(const std::string& path);

}  // namespace laser
