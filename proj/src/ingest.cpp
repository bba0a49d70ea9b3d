#include "laser/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

namespace laser {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

template <typename T>
T parse_number(std::string_view field, const char* what, std::size_t line) {
  field = trim(field);
  T value{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw ParseError("bad " + std::string(what) + " field '" + std::string(field) + "'", line);
  }
  return value;
}

RatingTriple make_triple(std::string_view user, std::string_view item, std::string_view rating,
                         std::string_view timestamp, std::size_t line) {
  RatingTriple t;
  t.user = parse_number<std::int64_t>(user, "user", line);
  t.item = parse_number<std::int64_t>(item, "item", line);
  t.rating = parse_number<double>(rating, "rating", line);
  if (!(t.rating > 0.0) || !std::isfinite(t.rating)) {
    throw ParseError("rating must be positive and finite", line);
  }
  if (!timestamp.empty()) t.timestamp = parse_number<std::int64_t>(timestamp, "timestamp", line);
  return t;
}

}  // namespace

RatingFormat parse_rating_format(const std::string& name) {
  if (name == "movielens_dat" || name == "dat") return RatingFormat::movielens_dat;
  if (name == "csv") return RatingFormat::csv;
  throw PreconditionError("unknown rating format '" + name + "' (expected movielens_dat or csv)");
}

// ---------------------------------------------------------------------------
// InteractionMatrix

InteractionMatrix::InteractionMatrix(std::size_t n_users, std::size_t n_items, double r_max,
                                     std::vector<RatingTriple> dense_triples,
                                     std::vector<std::int64_t> user_ids,
                                     std::vector<std::int64_t> item_ids)
    : n_users_(n_users), n_items_(n_items), r_max_(r_max), user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)) {
  if (user_ids_.empty()) {
    user_ids_.resize(n_users_);
    std::iota(user_ids_.begin(), user_ids_.end(), 0);
  }
  if (item_ids_.empty()) {
    item_ids_.resize(n_items_);
    std::iota(item_ids_.begin(), item_ids_.end(), 0);
  }
  if (user_ids_.size() != n_users_ || item_ids_.size() != n_items_) {
    throw PreconditionError("external id maps do not match matrix dimensions");
  }

  offsets_.assign(n_users_ + 1, 0);
  for (const auto& t : dense_triples) {
    if (t.user < 0 || static_cast<std::size_t>(t.user) >= n_users_ || t.item < 0 ||
        static_cast<std::size_t>(t.item) >= n_items_) {
      throw PreconditionError("rating (" + std::to_string(t.user) + ", " + std::to_string(t.item) +
                              ") outside matrix dimensions");
    }
    ++offsets_[t.user + 1];
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  entries_.resize(dense_triples.size());
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& t : dense_triples) {
    entries_[cursor[t.user]++] = Rating{static_cast<Index>(t.item), t.rating};
  }
  for (std::size_t u = 0; u < n_users_; ++u) {
    auto first = entries_.begin() + static_cast<std::ptrdiff_t>(offsets_[u]);
    auto last = entries_.begin() + static_cast<std::ptrdiff_t>(offsets_[u + 1]);
    std::sort(first, last, [](const Rating& a, const Rating& b) { return a.item < b.item; });
    auto dup = std::adjacent_find(first, last, [](const Rating& a, const Rating& b) { return a.item == b.item; });
    if (dup != last) {
      throw PreconditionError("duplicate rating for user " + std::to_string(u) + ", item " +
                              std::to_string(dup->item));
    }
  }
}

double InteractionMatrix::sparsity() const {
  double cells = static_cast<double>(n_users_) * static_cast<double>(n_items_);
  return cells > 0 ? 1.0 - static_cast<double>(entries_.size()) / cells : 1.0;
}

bool InteractionMatrix::contains(Index user, Index item) const { return rating(user, item).has_value(); }

std::optional<double> InteractionMatrix::rating(Index user, Index item) const {
  auto row = ratings_of(user);
  auto it = std::lower_bound(row.begin(), row.end(), item,
                             [](const Rating& r, Index i) { return r.item < i; });
  if (it != row.end() && it->item == item) return it->value;
  return std::nullopt;
}

std::size_t InteractionMatrix::n_active_users() const {
  std::size_t n = 0;
  for (std::size_t u = 0; u < n_users_; ++u) n += degree(static_cast<Index>(u)) > 0;
  return n;
}

std::vector<RatingTriple> InteractionMatrix::to_external_triples() const {
  std::vector<RatingTriple> out;
  out.reserve(entries_.size());
  for (std::size_t u = 0; u < n_users_; ++u) {
    for (const auto& r : ratings_of(static_cast<Index>(u))) {
      out.push_back({user_ids_[u], item_ids_[r.item], r.value, 0});
    }
  }
  return out;
}

InteractionMatrix InteractionMatrix::without_users(std::span<const Index> users) const {
  std::vector<bool> drop(n_users_, false);
  for (Index u : users) {
    if (u >= n_users_) throw PreconditionError("unknown user id " + std::to_string(u));
    drop[u] = true;
  }
  std::vector<RatingTriple> kept;
  kept.reserve(entries_.size());
  for (std::size_t u = 0; u < n_users_; ++u) {
    if (drop[u]) continue;
    for (const auto& r : ratings_of(static_cast<Index>(u))) {
      kept.push_back({static_cast<std::int64_t>(u), r.item, r.value, 0});
    }
  }
  return InteractionMatrix(n_users_, n_items_, r_max_, std::move(kept), user_ids_, item_ids_);
}

std::vector<std::vector<Index>> InteractionMatrix::item_index() const {
  std::vector<std::vector<Index>> index(n_items_);
  for (std::size_t u = 0; u < n_users_; ++u) {
    for (const auto& r : ratings_of(static_cast<Index>(u))) index[r.item].push_back(static_cast<Index>(u));
  }
  return index;
}

// ---------------------------------------------------------------------------
// Loading

std::vector<RatingTriple> parse_ratings(std::istream& in, RatingFormat format) {
  std::vector<RatingTriple> out;
  std::string raw;
  std::size_t line_no = 0;
  int col_user = -1, col_item = -1, col_rating = -1, col_ts = -1;
  std::size_t n_cols = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;

    if (format == RatingFormat::movielens_dat) {
      auto f = split_on(line, "::");
      if (f.size() != 3 && f.size() != 4) throw ParseError("expected user::item::rating::timestamp", line_no);
      out.push_back(make_triple(f[0], f[1], f[2], f.size() == 4 ? f[3] : std::string_view{}, line_no));
      continue;
    }

    auto f = split_on(line, ",");
    if (col_user < 0) {
      n_cols = f.size();
      for (std::size_t c = 0; c < f.size(); ++c) {
        auto name = trim(f[c]);
        if (name == "user") col_user = static_cast<int>(c);
        else if (name == "item") col_item = static_cast<int>(c);
        else if (name == "rating") col_rating = static_cast<int>(c);
        else if (name == "timestamp") col_ts = static_cast<int>(c);
      }
      if (col_user < 0 || col_item < 0 || col_rating < 0) {
        throw ParseError("CSV header must name user,item,rating columns", line_no);
      }
      continue;
    }
    if (f.size() != n_cols) {
      throw ParseError("expected " + std::to_string(n_cols) + " fields, got " + std::to_string(f.size()), line_no);
    }
    out.push_back(make_triple(f[col_user], f[col_item], f[col_rating],
                              col_ts >= 0 ? f[col_ts] : std::string_view{}, line_no));
  }
  if (out.empty()) throw EmptyDatasetError("dataset contains no ratings");
  return out;
}

std::vector<RatingTriple> load_ratings(const std::string& path, RatingFormat format) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("cannot open ratings file " + path);
  try {
    return parse_ratings(in, format);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

// ---------------------------------------------------------------------------
// Filtering and re-indexing

InteractionMatrix build_matrix(std::span<const RatingTriple> triples, std::size_t min_interactions,
                               double r_max) {
  if (min_interactions < 1) throw PreconditionError("min_interactions must be >= 1");

  // Deduplicate, keeping the latest timestamp (later input line on ties).
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = triples[a];
    const auto& y = triples[b];
    if (x.user != y.user) return x.user < y.user;
    if (x.item != y.item) return x.item < y.item;
    return x.timestamp < y.timestamp;
  });
  std::vector<RatingTriple> unique;
  unique.reserve(triples.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& t = triples[order[k]];
    if (!unique.empty() && unique.back().user == t.user && unique.back().item == t.item) {
      unique.back() = t;
    } else {
      unique.push_back(t);
    }
  }

  // Provisional compact ids so counting needs no hash maps.
  std::vector<std::int64_t> users, items;
  for (const auto& t : unique) {
    users.push_back(t.user);
    items.push_back(t.item);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  auto id_of = [](const std::vector<std::int64_t>& ids, std::int64_t ext) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), ext) - ids.begin());
  };
  std::vector<std::size_t> uid(unique.size()), iid(unique.size());
  for (std::size_t k = 0; k < unique.size(); ++k) {
    uid[k] = id_of(users, unique[k].user);
    iid[k] = id_of(items, unique[k].item);
  }

  std::vector<bool> alive(unique.size(), true);
  while (true) {
    std::vector<std::size_t> ucount(users.size(), 0), icount(items.size(), 0);
    for (std::size_t k = 0; k < unique.size(); ++k) {
      if (!alive[k]) continue;
      ++ucount[uid[k]];
      ++icount[iid[k]];
    }
    bool changed = false;
    for (std::size_t k = 0; k < unique.size(); ++k) {
      if (alive[k] && (ucount[uid[k]] < min_interactions || icount[iid[k]] < min_interactions)) {
        alive[k] = false;
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::vector<bool> user_kept(users.size(), false), item_kept(items.size(), false);
  double observed_max = 0.0;
  for (std::size_t k = 0; k < unique.size(); ++k) {
    if (!alive[k]) continue;
    user_kept[uid[k]] = true;
    item_kept[iid[k]] = true;
    observed_max = std::max(observed_max, unique[k].rating);
  }
  std::vector<std::int64_t> user_ext, item_ext;
  std::vector<std::int64_t> user_dense(users.size(), -1), item_dense(items.size(), -1);
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (user_kept[u]) {
      user_dense[u] = static_cast<std::int64_t>(user_ext.size());
      user_ext.push_back(users[u]);
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (item_kept[i]) {
      item_dense[i] = static_cast<std::int64_t>(item_ext.size());
      item_ext.push_back(items[i]);
    }
  }
  if (user_ext.empty()) throw EmptyDatasetError("every rating was filtered out");

  std::vector<RatingTriple> dense;
  for (std::size_t k = 0; k < unique.size(); ++k) {
    if (!alive[k]) continue;
    dense.push_back({user_dense[uid[k]], item_dense[iid[k]], unique[k].rating, unique[k].timestamp});
  }
  if (r_max <= 0.0) r_max = observed_max;
  std::size_t n_users = user_ext.size();
  std::size_t n_items = item_ext.size();
  return InteractionMatrix(n_users, n_items, r_max, std::move(dense), std::move(user_ext), std::move(item_ext));
}

// ---------------------------------------------------------------------------
// Splitting

std::size_t train_count(std::size_t n, double train_fraction) {
  auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

TrainTestSplit split(const InteractionMatrix& matrix, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw PreconditionError("train_fraction must lie in (0, 1)");
  }
  std::vector<RatingTriple> train, test;
  for (std::size_t u = 0; u < matrix.n_users(); ++u) {
    auto row = matrix.ratings_of(static_cast<Index>(u));
    if (row.size() < 2) {
      throw PreconditionError("user " + std::to_string(matrix.user_ids()[u]) + " has " +
                              std::to_string(row.size()) + " rating(s); splitting needs at least 2");
    }
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng::substream(spec.seed, u, 0x5917);
    shuffle(idx, rng);
    std::size_t k = train_count(row.size(), spec.train_fraction);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& r = row[idx[j]];
      RatingTriple t{static_cast<std::int64_t>(u), r.item, r.value, 0};
      (j < k ? train : test).push_back(t);
    }
  }
  return {InteractionMatrix(matrix.n_users(), matrix.n_items(), matrix.r_max(), std::move(train),
                            matrix.user_ids(), matrix.item_ids()),
          InteractionMatrix(matrix.n_users(), matrix.n_items(), matrix.r_max(), std::move(test),
                            matrix.user_ids(), matrix.item_ids())};
}

InteractionMatrix subsample_users(const InteractionMatrix& matrix, double fraction,
                                  std::size_t min_interactions, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw PreconditionError("subsample fraction must lie in (0, 1]");
  std::vector<Index> users(matrix.n_users());
  std::iota(users.begin(), users.end(), 0);
  Rng rng = Rng::substream(seed, 0x5ab5);
  shuffle(users, rng);
  auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(users.size())));
  users.resize(std::max<std::size_t>(keep, 1));
  std::sort(users.begin(), users.end());
  std::vector<RatingTriple> triples;
  for (Index u : users) {
    for (const auto& r : matrix.ratings_of(u)) {
      triples.push_back({matrix.user_ids()[u], matrix.item_ids()[r.item], r.value, 0});
    }
  }
  return build_matrix(triples, min_interactions, matrix.r_max());
}

// ---------------------------------------------------------------------------
// Dumps

void write_dump(const InteractionMatrix& matrix, std::ostream& out) {
  for (std::size_t u = 0; u < matrix.n_users(); ++u) {
    for (const auto& r : matrix.ratings_of(static_cast<Index>(u))) {
      out << u << '\t' << r.item << '\t' << format_double(r.value) << '\n';
    }
  }
}

void write_dump(const InteractionMatrix& matrix, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_dump(matrix, out);
}

InteractionMatrix read_dump(const std::string& path, std::size_t n_users, std::size_t n_items, double r_max) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("cannot open dataset dump " + path);
  std::vector<RatingTriple> triples;
  std::string raw;
  std::size_t line_no = 0;
  std::size_t max_user = 0, max_item = 0;
  double max_rating = 0.0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    auto f = split_on(line, "\t");
    if (f.size() != 3) throw ParseError("expected user<TAB>item<TAB>rating", line_no);
    RatingTriple t = make_triple(f[0], f[1], f[2], {}, line_no);
    max_user = std::max(max_user, static_cast<std::size_t>(t.user) + 1);
    max_item = std::max(max_item, static_cast<std::size_t>(t.item) + 1);
    max_rating = std::max(max_rating, t.rating);
    triples.push_back(t);
  }
  if (n_users == 0) n_users = max_user;
  if (n_items == 0) n_items = max_item;
  if (r_max <= 0.0) r_max = max_rating;
  return InteractionMatrix(n_users, n_items, r_max, std::move(triples));
}

}  // namespace laser
