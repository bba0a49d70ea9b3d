#include "laser/synthetic.hpp"

#include <algorithm>
#include <numeric>

namespace laser {

std::vector<double> graded_pools(std::size_t n_clusters, double tight, double diffuse) {
  std::vector<double> pools(n_clusters, tight);
  for (std::size_t c = 0; c < n_clusters && n_clusters > 1; ++c) {
    pools[c] = tight + (diffuse - tight) * static_cast<double>(c) / static_cast<double>(n_clusters - 1);
  }
  return pools;
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.n_clusters == 0 || spec.n_users < spec.n_clusters || spec.n_items < spec.n_clusters) {
    throw PreconditionError("synthetic spec needs n_users, n_items >= n_clusters >= 1");
  }
  if (spec.ratings_per_user == 0 || spec.ratings_per_user >= spec.n_items) {
    throw PreconditionError("ratings_per_user must lie in [1, n_items)");
  }
  std::vector<double> pools = spec.pool_fraction;
  if (pools.empty()) pools.assign(spec.n_clusters, 0.25);
  if (pools.size() != spec.n_clusters) throw PreconditionError("pool_fraction needs one entry per cluster");

  const std::size_t block = spec.n_items / spec.n_clusters;
  if (block < spec.ratings_per_user && spec.noise <= 0.0) {
    throw PreconditionError("item block smaller than ratings_per_user and noise = 0");
  }
  std::vector<std::vector<Index>> pool_items(spec.n_clusters);
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    Rng rng = Rng::substream(spec.seed, 0x9001, c);
    std::vector<Index> items(block);
    std::iota(items.begin(), items.end(), static_cast<Index>(c * block));
    shuffle(items, rng);
    auto size = static_cast<std::size_t>(std::clamp(pools[c], 0.0, 1.0) * static_cast<double>(block));
    size = std::clamp<std::size_t>(size, std::min<std::size_t>(spec.ratings_per_user, block), block);
    items.resize(size);
    std::sort(items.begin(), items.end());
    pool_items[c] = std::move(items);
  }

  SyntheticData out;
  out.cluster_of_user.resize(spec.n_users);
  std::int64_t clock = 0;
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    std::size_t c = u % spec.n_clusters;
    out.cluster_of_user[u] = c;
    Rng rng = Rng::substream(spec.seed, 0x9002, u);
    const auto& pool = pool_items[c];
    std::vector<bool> taken(spec.n_items, false);
    std::size_t made = 0;
    while (made < spec.ratings_per_user) {
      bool off_pool = rng.uniform() < spec.noise;
      Index item = off_pool ? static_cast<Index>(rng.below(spec.n_items)) : pool[rng.below(pool.size())];
      if (taken[item]) continue;
      taken[item] = true;
      bool in_pool = std::binary_search(pool.begin(), pool.end(), item);
      double rating = in_pool ? 4.0 + static_cast<double>(rng.below(2)) : 1.0 + static_cast<double>(rng.below(3));
      out.triples.push_back({static_cast<std::int64_t>(u), static_cast<std::int64_t>(item), rating, ++clock});
      ++made;
    }
  }
  return out;
}

}  // namespace laser
