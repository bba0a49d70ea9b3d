#include "laser/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace laser {

GroupSource parse_group_source(const std::string& name) {
  if (name == "collab_embedding" || name == "cbkm") return GroupSource::collab_embedding;
  if (name == "raw_ratings" || name == "bkm") return GroupSource::raw_ratings;
  if (name == "random" || name == "rand") return GroupSource::random;
  throw PreconditionError("unknown grouping source '" + name + "'");
}

std::string to_string(GroupSource source) {
  switch (source) {
    case GroupSource::collab_embedding: return "collab_embedding";
    case GroupSource::raw_ratings: return "raw_ratings";
    case GroupSource::random: return "random";
  }
  return "?";
}

std::vector<std::vector<Index>> GroupPlan::members() const {
  std::vector<std::vector<Index>> m(n_groups);
  for (std::size_t u = 0; u < labels.size(); ++u) m[labels[u]].push_back(static_cast<Index>(u));
  return m;
}

std::vector<std::size_t> GroupPlan::sizes() const {
  std::vector<std::size_t> s(n_groups, 0);
  for (Index g : labels) ++s[g];
  return s;
}

std::vector<std::size_t> GroupPlan::positions() const {
  std::vector<std::size_t> pos(n_groups, 0);
  for (std::size_t k = 0; k < train_order.size(); ++k) pos[train_order[k]] = k;
  return pos;
}

void GroupPlan::validate() const {
  if (n_groups == 0) throw PreconditionError("plan has no groups");
  for (Index g : labels) {
    if (g >= n_groups) throw PreconditionError("plan label " + std::to_string(g) + " out of range");
  }
  if (train_order.size() != n_groups) throw PreconditionError("train order must list every group once");
  std::vector<Index> sorted = train_order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t g = 0; g < n_groups; ++g) {
    if (sorted[g] != g) throw PreconditionError("train order is not a permutation of the groups");
  }
  if (!cohesion.empty() && cohesion.size() != n_groups) throw PreconditionError("cohesion size mismatch");
}

bool priority_before(const PairPriority& a, const PairPriority& b) {
  if (a.priority != b.priority) return a.priority > b.priority;
  if (a.user != b.user) return a.user < b.user;
  return a.group < b.group;
}

Matrix group_centroids(const Matrix& points, std::span<const Index> labels, std::size_t n_groups) {
  std::vector<std::size_t> counts;
  Matrix centroids = kernels::serial::label_means(points, labels, n_groups, counts);
  std::vector<bool> used(points.rows(), false);
  for (std::size_t g = 0; g < n_groups; ++g) {
    if (counts[g] > 0) continue;
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (used[i]) continue;
      double d = squared_distance(points.row(i), centroids.row(labels[i]));
      if (d > best) {
        best = d;
        far = i;
      }
    }
    used[far] = true;
    std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(g).begin());
  }
  return centroids;
}

std::vector<PairPriority> compute_similarity_kmeans(const Matrix& points, std::span<const Index> labels,
                                                    std::size_t n_groups, kernels::Exec exec) {
  Matrix centroids = group_centroids(points, labels, n_groups);
  Matrix d2 = kernels::centroid_sq_distances(points, centroids, exec);
  std::vector<PairPriority> p;
  p.reserve(points.rows() * n_groups);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t g = 0; g < n_groups; ++g) {
      p.push_back({static_cast<Index>(i), static_cast<Index>(g), -std::sqrt(d2(i, g))});
    }
  }
  return p;
}

std::vector<Index> assign_by_priority(std::vector<PairPriority> priorities, std::size_t n_users,
                                      std::size_t n_groups) {
  if (n_groups == 0 || n_groups > n_users) throw PreconditionError("need 1 <= S <= N");
  std::sort(priorities.begin(), priorities.end(), priority_before);
  const std::size_t floor_size = n_users / n_groups;
  const std::size_t n_ceil = n_users - floor_size * n_groups;
  std::vector<std::size_t> size(n_groups, 0);
  std::size_t at_ceil = 0;
  constexpr Index kUnassigned = static_cast<Index>(-1);
  std::vector<Index> labels(n_users, kUnassigned);
  std::size_t assigned = 0;
  for (const auto& p : priorities) {
    if (labels[p.user] != kUnassigned) continue;
    std::size_t s = size[p.group];
    bool room = s < floor_size || (s == floor_size && at_ceil < n_ceil);
    if (!room) continue;
    if (s == floor_size) ++at_ceil;
    ++size[p.group];
    labels[p.user] = p.group;
    if (++assigned == n_users) break;
  }
  if (assigned != n_users) throw PreconditionError("priority list does not cover every user");
  return labels;
}

std::vector<Index> random_balanced_labels(std::size_t n_users, std::size_t n_groups, std::uint64_t seed) {
  if (n_groups == 0) throw PreconditionError("S must be >= 1");
  if (n_groups > n_users) throw PreconditionError("S = " + std::to_string(n_groups) + " exceeds N = " +
                                                  std::to_string(n_users));
  std::vector<Index> users(n_users);
  std::iota(users.begin(), users.end(), 0);
  Rng rng = Rng::substream(seed, 0xBA1);
  shuffle(users, rng);
  std::vector<Index> labels(n_users);
  for (std::size_t k = 0; k < n_users; ++k) labels[users[k]] = static_cast<Index>(k % n_groups);
  return labels;
}

BalancedLabels balanced_kmeans(const Matrix& points, const ClusterConfig& config,
                               std::optional<std::vector<Index>> initial, kernels::Exec exec) {
  const std::size_t n = points.rows();
  const std::size_t s = config.n_groups;
  if (s == 0) throw PreconditionError("S must be >= 1");
  if (s > n) throw PreconditionError("S = " + std::to_string(s) + " exceeds N = " + std::to_string(n));
  if (config.max_iter < 1) throw PreconditionError("max_iter must be >= 1");

  BalancedLabels out;
  out.labels = initial ? std::move(*initial) : random_balanced_labels(n, s, config.seed);
  if (out.labels.size() != n) throw PreconditionError("initial labels must cover every user");
  while (true) {
    auto priorities = compute_similarity_kmeans(points, out.labels, s, exec);
    auto next = assign_by_priority(std::move(priorities), n, s);
    ++out.iterations;
    bool stable = next == out.labels;
    out.labels = std::move(next);
    if (stable || out.iterations >= config.max_iter) break;
  }
  return out;
}

GroupPlan balanced_group(const Matrix& points, const ClusterConfig& config) {
  GroupPlan plan;
  plan.n_groups = config.n_groups;
  plan.labels = balanced_kmeans(points, config).labels;
  return plan;
}

std::vector<Index> plain_kmeans(const Matrix& points, std::size_t n_groups, std::size_t max_iter,
                                std::uint64_t seed) {
  const std::size_t n = points.rows();
  if (n_groups == 0 || n_groups > n) throw PreconditionError("need 1 <= k <= N");
  std::vector<Index> pick(n);
  std::iota(pick.begin(), pick.end(), 0);
  Rng rng = Rng::substream(seed, 0xF06);
  shuffle(pick, rng);
  Matrix centroids(n_groups, points.cols());
  for (std::size_t g = 0; g < n_groups; ++g) {
    std::copy(points.row(pick[g]).begin(), points.row(pick[g]).end(), centroids.row(g).begin());
  }
  std::vector<Index> labels(n, 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    Matrix d2 = kernels::centroid_sq_distances(points, centroids);
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      Index best = 0;
      for (std::size_t g = 1; g < n_groups; ++g) {
        if (d2(i, g) < d2(i, best)) best = static_cast<Index>(g);
      }
      changed |= best != labels[i];
      labels[i] = best;
    }
    if (!changed) break;
    std::vector<std::size_t> counts;
    Matrix means = kernels::serial::label_means(points, labels, n_groups, counts);
    for (std::size_t g = 0; g < n_groups; ++g) {
      if (counts[g] > 0) std::copy(means.row(g).begin(), means.row(g).end(), centroids.row(g).begin());
    }
  }
  return labels;
}

double cohesion(const Matrix& points, std::span<const Index> members, kernels::Exec exec) {
  if (members.empty()) throw PreconditionError("cohesion of an empty group");
  if (members.size() == 1) return 0.0;
  return kernels::inverse_distance_pair_sum(points, members, kCohesionEps, exec) /
         static_cast<double>(members.size());
}

std::vector<Index> order_by_cohesion(std::span<const double> rho) {
  std::vector<Index> order(rho.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return rho[a] > rho[b]; });
  return order;
}

GroupPlan make_plan(const Matrix& points, const ClusterConfig& config) { return make_plan(points, points, config); }

GroupPlan make_plan(const Matrix& cluster_points, const Matrix& cohesion_points, const ClusterConfig& config) {
  if (cluster_points.rows() != cohesion_points.rows()) throw PreconditionError("point sets cover different users");
  GroupPlan plan;
  plan.n_groups = config.n_groups;
  plan.labels = config.source == GroupSource::random
                    ? random_balanced_labels(cluster_points.rows(), config.n_groups, config.seed)
                    : balanced_kmeans(cluster_points, config).labels;
  auto members = plan.members();
  plan.cohesion.resize(plan.n_groups);
  for (std::size_t g = 0; g < plan.n_groups; ++g) plan.cohesion[g] = cohesion(cohesion_points, members[g]);
  plan.train_order = order_by_cohesion(plan.cohesion);
  return plan;
}

Matrix rating_points(const InteractionMatrix& matrix) {
  Matrix m(matrix.n_users(), matrix.n_items(), 0.0);
  for (std::size_t u = 0; u < matrix.n_users(); ++u) {
    for (const auto& r : matrix.ratings_of(static_cast<Index>(u))) m(u, r.item) = r.value;
  }
  return m;
}

void write_plan(const GroupPlan& plan, std::ostream& out) {
  out << plan.n_groups << '\n';
  for (std::size_t u = 0; u < plan.labels.size(); ++u) out << (u ? " " : "") << plan.labels[u];
  out << '\n';
  char buf[64];
  for (std::size_t g = 0; g < plan.cohesion.size(); ++g) {
    std::snprintf(buf, sizeof buf, "%.9g", plan.cohesion[g]);
    out << (g ? " " : "") << buf;
  }
  out << '\n';
  for (std::size_t k = 0; k < plan.train_order.size(); ++k) out << (k ? " " : "") << plan.train_order[k];
  out << '\n';
}

void save_plan(const GroupPlan& plan, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_plan(plan, out);
}

GroupPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("cannot open plan " + path + " (run the group command first)");
  std::string lines[4];
  for (auto& l : lines) {
    if (!std::getline(in, l)) throw FormatError(path + ": plan file needs 4 lines");
  }
  GroupPlan plan;
  try {
    plan.n_groups = std::stoul(lines[0]);
    std::istringstream labels(lines[1]), rho(lines[2]), order(lines[3]);
    for (Index v; labels >> v;) plan.labels.push_back(v);
    for (std::string v; rho >> v;) plan.cohesion.push_back(std::stod(v));
    for (Index v; order >> v;) plan.train_order.push_back(v);
  } catch (const std::exception& e) {
    throw FormatError(path + ": malformed plan (" + e.what() + ")");
  }
  plan.validate();
  return plan;
}

}  // namespace laser
