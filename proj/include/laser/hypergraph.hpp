#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "laser/ingest.hpp"
#include "laser/kernels.hpp"

namespace laser {

/// Hypergraph with edge-dependent vertex weights over the users of a rating
/// matrix. Hyperedge i holds user i's reachable neighbourhood; weights[i][k]
/// is w(i, edges[i][k]).
struct Hypergraph {
  std::size_t n_vertices = 0;
  std::vector<std::vector<Index>> edges;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<Index>> vertex_to_edges;

  /// Throws PreconditionError when a structural invariant is broken.
  void validate() const;

  bool operator==(const Hypergraph&) const = default;
};

struct WalkConfig {
  std::size_t repetition = 4;
  std::size_t depth = 8;
  std::size_t l_order = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// N * repetition sequences of length depth + 1. Sequence v * repetition + r
/// is the r-th walk started from vertex v.
struct UserSequenceCorpus {
  std::size_t n_vertices = 0;
  std::vector<std::vector<Index>> sequences;

  bool operator==(const UserSequenceCorpus&) const = default;
};

/// User hops allowed by an l-order bound: a path over h user hops has 2h + 1
/// vertices, which must stay below l.
std::size_t max_user_hops(std::size_t l_order);

std::vector<Index> reachable_neighbors(const InteractionMatrix& matrix, Index user, std::size_t l_order);
std::vector<Index> reachable_neighbors(const InteractionMatrix& matrix,
                                       const std::vector<std::vector<Index>>& item_users, Index user,
                                       std::size_t l_order);

Hypergraph build_hypergraph(const InteractionMatrix& matrix, std::size_t l_order,
                            kernels::Exec exec = kernels::Exec::parallel);

/// Sampling tables for the two-stage walk step.
class HypergraphWalker {
 public:
  explicit HypergraphWalker(const Hypergraph& graph);

  /// Hyperedge containing `vertex`, drawn with probability proportional to its size.
  Index choose_edge(Index vertex, Rng& rng) const;
  /// Member of `edge`, drawn with probability proportional to w(edge, member).
  Index choose_vertex(Index edge, Rng& rng) const;

  std::vector<Index> walk(Index start, std::size_t depth, Rng& rng) const;

 private:
  const Hypergraph& graph_;
  std::vector<std::vector<double>> edge_choice_cum_;
  std::vector<std::vector<double>> vertex_choice_cum_;
};

UserSequenceCorpus random_walk(const Hypergraph& graph, const WalkConfig& config,
                               kernels::Exec exec = kernels::Exec::parallel);

/// `edge_id: v,w; v,w; ...`, one line per hyperedge, ids ascending.
void write_hypergraph_dump(const Hypergraph& graph, std::ostream& out);

}  // namespace laser
