#pragma once

#include "laser/embed.hpp"
#include "laser/grouping.hpp"
#include "laser/hypergraph.hpp"
#include "laser/ingest.hpp"

namespace laser {

struct EmbeddingSetup {
  WalkConfig walk;
  EmbedConfig embed;
};

/// Hypergraph, walks and skip-gram training in one call.
EmbeddingResult collaborative_embedding(const InteractionMatrix& train, const EmbeddingSetup& setup);

/// Groups users by config.source; cohesion and training order always come
/// from the collaborative embedding.
GroupPlan group_users(const InteractionMatrix& train, const EmbeddingMatrix& embedding, const ClusterConfig& config);

}  // namespace laser
