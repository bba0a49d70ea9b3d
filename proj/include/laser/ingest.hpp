#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laser/common.hpp"

namespace laser {

/// One parsed rating with its external (dataset) ids.
struct RatingTriple {
  std::int64_t user = 0;
  std::int64_t item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  bool operator==(const RatingTriple&) const = default;
};

enum class RatingFormat { movielens_dat, csv };

RatingFormat parse_rating_format(const std::string& name);

struct Rating {
  Index item;
  double value;

  bool operator==(const Rating&) const = default;
};

/// Sparse user x item rating store in CSR layout (rows sorted by item).
///
/// Dense ids run 0..n_users-1 and 0..n_items-1; the external ids they came
/// from are kept in user_ids()/item_ids(). A user may own zero entries after
/// erasure, the id space is never compacted.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;

  /// Builds from dense-id triples. Duplicate (user, item) keys are rejected.
  InteractionMatrix(std::size_t n_users, std::size_t n_items, double r_max,
                    std::vector<RatingTriple> dense_triples,
                    std::vector<std::int64_t> user_ids = {},
                    std::vector<std::int64_t> item_ids = {});

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t n_entries() const { return entries_.size(); }
  double r_max() const { return r_max_; }
  double sparsity() const;

  std::span<const Rating> ratings_of(Index user) const {
    return {entries_.data() + offsets_[user], offsets_[user + 1] - offsets_[user]};
  }
  std::size_t degree(Index user) const { return offsets_[user + 1] - offsets_[user]; }
  bool contains(Index user, Index item) const;
  std::optional<double> rating(Index user, Index item) const;

  /// Users holding at least one entry.
  std::size_t n_active_users() const;

  const std::vector<std::int64_t>& user_ids() const { return user_ids_; }
  const std::vector<std::int64_t>& item_ids() const { return item_ids_; }

  /// Entries as triples carrying external ids (input form of build_matrix).
  std::vector<RatingTriple> to_external_triples() const;

  /// Copy with every entry of the given users removed; ids stay stable.
  InteractionMatrix without_users(std::span<const Index> users) const;

  /// item -> users rating it, ascending.
  std::vector<std::vector<Index>> item_index() const;

  bool operator==(const InteractionMatrix&) const = default;

 private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  double r_max_ = 0.0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Rating> entries_;
  std::vector<std::int64_t> user_ids_;
  std::vector<std::int64_t> item_ids_;
};

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

std::vector<RatingTriple> load_ratings(const std::string& path, RatingFormat format);
std::vector<RatingTriple> parse_ratings(std::istream& in, RatingFormat format);

/// Filters users and items below `min_interactions` to a fixed point and
/// re-indexes densely (ascending external id). `r_max` <= 0 means "use the
/// largest observed rating".
InteractionMatrix build_matrix(std::span<const RatingTriple> triples, std::size_t min_interactions,
                               double r_max = 0.0);

struct TrainTestSplit {
  InteractionMatrix train;
  InteractionMatrix test;
};

TrainTestSplit split(const InteractionMatrix& matrix, const SplitSpec& spec);

/// Number of training entries a user with `n` ratings keeps.
std::size_t train_count(std::size_t n, double train_fraction);

/// Keeps a seeded uniform sample of users and re-runs the filter.
InteractionMatrix subsample_users(const InteractionMatrix& matrix, double fraction,
                                  std::size_t min_interactions, std::uint64_t seed);

/// `user<TAB>item<TAB>rating` lines, dense ids, sorted by (user, item).
void write_dump(const InteractionMatrix& matrix, std::ostream& out);
void write_dump(const InteractionMatrix& matrix, const std::string& path);

/// Reads a dump. Dimensions default to max id + 1.
InteractionMatrix read_dump(const std::string& path, std::size_t n_users = 0, std::size_t n_items = 0,
                            double r_max = 0.0);

}  // namespace laser
