#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "laser/eval.hpp"
#include "laser/pipeline.hpp"
#include "laser/synthetic.hpp"
#include "laser/workflow.hpp"

namespace laser::cli {

/// Everything a run depends on. Loaded from a key=value file with
/// [section] headers; command-line flags override afterwards.
struct RunConfig {
  // [data]
  std::string data_path;
  RatingFormat format = RatingFormat::movielens_dat;
  std::size_t min_interactions = 5;
  double train_fraction = 0.9;
  double subsample = 1.0;

  // [synth]
  SyntheticSpec synth;

  // [walk], [embed]
  EmbeddingSetup embedding;

  // [group]
  ClusterConfig cluster;

  // [train]
  LearnConfig learn;

  // [unlearn]
  std::string request = "rand@5";

  // [eval]
  RankEvalConfig eval;

  // [bench]
  std::vector<std::size_t> bench_groups{1, 2, 4, 8};
  std::vector<ModelKind> bench_models{ModelKind::dmf, ModelKind::nmf};
  std::vector<std::string> bench_requests{"rand@5", "top@5"};
  std::size_t bench_seeds = 3;

  // [run]
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "laser_out";

  /// Propagates `seed` into every sub-config.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

/// Canonical `section.key=value` listing; feeds the artifact hashes.
std::string canonical(const RunConfig& cfg, const std::string& section);

}  // namespace laser::cli
