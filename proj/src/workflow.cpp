#include "laser/workflow.hpp"

namespace laser {

EmbeddingResult collaborative_embedding(const InteractionMatrix& train, const EmbeddingSetup& setup) {
  setup.walk.validate();
  setup.embed.validate();
  Hypergraph graph = build_hypergraph(train, setup.walk.l_order);
  return train_embedding(random_walk(graph, setup.walk), setup.embed);
}

GroupPlan group_users(const InteractionMatrix& train, const EmbeddingMatrix& embedding, const ClusterConfig& config) {
  if (embedding.n_users() != train.n_users()) throw PreconditionError("embedding does not match the dataset");
  if (config.source == GroupSource::raw_ratings) return make_plan(rating_points(train), embedding.vectors, config);
  return make_plan(embedding.vectors, config);
}

}  // namespace laser
