#include "laser/hypergraph.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace laser {

void Hypergraph::validate() const {
  if (edges.size() != n_vertices || weights.size() != n_vertices || vertex_to_edges.size() != n_vertices) {
    throw PreconditionError("hypergraph needs exactly one hyperedge per vertex");
  }
  for (std::size_t e = 0; e < n_vertices; ++e) {
    if (!std::binary_search(edges[e].begin(), edges[e].end(), static_cast<Index>(e))) {
      throw PreconditionError("hyperedge " + std::to_string(e) + " misses its own vertex");
    }
    if (weights[e].size() != edges[e].size()) throw PreconditionError("weight table misaligned");
    for (double w : weights[e]) {
      if (!(w > 0.0)) throw PreconditionError("non-positive weight in hyperedge " + std::to_string(e));
    }
  }
}

void WalkConfig::validate() const {
  if (repetition < 1 || depth < 1) throw PreconditionError("walk repetition and depth must be >= 1");
  if (l_order < 2) throw PreconditionError("l_order must be >= 2");
}

std::size_t max_user_hops(std::size_t l_order) { return l_order >= 2 ? (l_order - 2) / 2 : 0; }

std::vector<Index> reachable_neighbors(const InteractionMatrix& matrix, Index user, std::size_t l_order) {
  return reachable_neighbors(matrix, matrix.item_index(), user, l_order);
}

std::vector<Index> reachable_neighbors(const InteractionMatrix& matrix,
                                       const std::vector<std::vector<Index>>& item_users, Index user,
                                       std::size_t l_order) {
  if (user >= matrix.n_users()) throw PreconditionError("user " + std::to_string(user) + " out of range");
  const std::size_t hops = max_user_hops(l_order);
  std::vector<bool> seen_user(matrix.n_users(), false);
  std::vector<bool> seen_item(matrix.n_items(), false);
  std::vector<Index> reached{user};
  seen_user[user] = true;
  std::vector<Index> frontier{user};
  for (std::size_t h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<Index> next;
    for (Index u : frontier) {
      for (const auto& r : matrix.ratings_of(u)) {
        if (seen_item[r.item]) continue;
        seen_item[r.item] = true;
        for (Index v : item_users[r.item]) {
          if (seen_user[v]) continue;
          seen_user[v] = true;
          next.push_back(v);
          reached.push_back(v);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(reached.begin(), reached.end());
  return reached;
}

namespace {

double global_mean(const InteractionMatrix& matrix, Index user) {
  auto row = matrix.ratings_of(user);
  if (row.empty()) return 1.0;  // no ratings: neutral positive weight
  double s = 0.0;
  for (const auto& r : row) s += r.value;
  return s / static_cast<double>(row.size());
}

// Weights of hyperedge `members`: each member's mean rating over items that
// at least one other member also rated, falling back to its global mean.
std::vector<double> edge_weights(const InteractionMatrix& matrix, const std::vector<Index>& members,
                                 std::vector<std::uint32_t>& item_count, std::vector<Index>& touched) {
  for (Index m : members) {
    for (const auto& r : matrix.ratings_of(m)) {
      if (item_count[r.item]++ == 0) touched.push_back(r.item);
    }
  }
  std::vector<double> w(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : matrix.ratings_of(members[k])) {
      if (item_count[r.item] >= 2) {
        s += r.value;
        ++n;
      }
    }
    w[k] = n > 0 ? s / static_cast<double>(n) : global_mean(matrix, members[k]);
  }
  for (Index i : touched) item_count[i] = 0;
  touched.clear();
  return w;
}

}  // namespace

Hypergraph build_hypergraph(const InteractionMatrix& matrix, std::size_t l_order, kernels::Exec exec) {
  if (matrix.n_users() == 0) throw EmptyDatasetError("cannot build a hypergraph from an empty matrix");
  if (l_order < 2) throw PreconditionError("l_order must be >= 2");
  const auto item_users = matrix.item_index();
  const std::size_t n = matrix.n_users();

  Hypergraph g;
  g.n_vertices = n;
  g.edges.resize(n);
  g.weights.resize(n);

  const auto n_signed = static_cast<std::int64_t>(n);
#pragma omp parallel if (exec == kernels::Exec::parallel)
  {
    std::vector<std::uint32_t> item_count(matrix.n_items(), 0);
    std::vector<Index> touched;
#pragma omp for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < n_signed; ++i) {
      auto u = static_cast<Index>(i);
      g.edges[u] = reachable_neighbors(matrix, item_users, u, l_order);
      g.weights[u] = edge_weights(matrix, g.edges[u], item_count, touched);
    }
  }

  g.vertex_to_edges.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    for (Index v : g.edges[e]) g.vertex_to_edges[v].push_back(static_cast<Index>(e));
  }
  return g;
}

HypergraphWalker::HypergraphWalker(const Hypergraph& graph) : graph_(graph) {
  graph_.validate();
  edge_choice_cum_.resize(graph.n_vertices);
  vertex_choice_cum_.resize(graph.n_vertices);
  for (std::size_t v = 0; v < graph.n_vertices; ++v) {
    auto& cum = edge_choice_cum_[v];
    double acc = 0.0;
    for (Index e : graph.vertex_to_edges[v]) {
      acc += static_cast<double>(graph.edges[e].size());
      cum.push_back(acc);
    }
  }
  for (std::size_t e = 0; e < graph.n_vertices; ++e) {
    auto& cum = vertex_choice_cum_[e];
    cum.resize(graph.weights[e].size());
    std::partial_sum(graph.weights[e].begin(), graph.weights[e].end(), cum.begin());
  }
}

Index HypergraphWalker::choose_edge(Index vertex, Rng& rng) const {
  const auto& cum = edge_choice_cum_[vertex];
  return graph_.vertex_to_edges[vertex][sample_cumulative(cum, rng)];
}

Index HypergraphWalker::choose_vertex(Index edge, Rng& rng) const {
  return graph_.edges[edge][sample_cumulative(vertex_choice_cum_[edge], rng)];
}

std::vector<Index> HypergraphWalker::walk(Index start, std::size_t depth, Rng& rng) const {
  std::vector<Index> seq;
  seq.reserve(depth + 1);
  seq.push_back(start);
  Index cur = start;
  for (std::size_t k = 0; k < depth; ++k) {
    cur = choose_vertex(choose_edge(cur, rng), rng);
    seq.push_back(cur);
  }
  return seq;
}

UserSequenceCorpus random_walk(const Hypergraph& graph, const WalkConfig& config, kernels::Exec exec) {
  config.validate();
  HypergraphWalker walker(graph);
  UserSequenceCorpus corpus;
  corpus.n_vertices = graph.n_vertices;
  corpus.sequences.resize(graph.n_vertices * config.repetition);
  const auto total = static_cast<std::int64_t>(corpus.sequences.size());
#pragma omp parallel for schedule(static) if (exec == kernels::Exec::parallel)
  for (std::int64_t s = 0; s < total; ++s) {
    auto v = static_cast<Index>(static_cast<std::size_t>(s) / config.repetition);
    std::size_t r = static_cast<std::size_t>(s) % config.repetition;
    Rng rng = Rng::substream(config.seed, v, r);
    corpus.sequences[static_cast<std::size_t>(s)] = walker.walk(v, config.depth, rng);
  }
  return corpus;
}

void write_hypergraph_dump(const Hypergraph& graph, std::ostream& out) {
  for (std::size_t e = 0; e < graph.n_vertices; ++e) {
    out << e << ':';
    for (std::size_t k = 0; k < graph.edges[e].size(); ++k) {
      out << (k == 0 ? " " : "; ") << graph.edges[e][k] << ',' << format_double(graph.weights[e][k]);
    }
    out << '\n';
  }
}

}  // namespace laser
