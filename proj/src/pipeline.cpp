#include "laser/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace laser {

namespace fs = std::filesystem;

TrainOrder parse_train_order(const std::string& name) {
  if (name == "seqtrain") return TrainOrder::seqtrain;
  if (name == "anti_seqtrain") return TrainOrder::anti_seqtrain;
  throw PreconditionError("unknown training order '" + name + "' (expected seqtrain or anti_seqtrain)");
}

std::string to_string(TrainOrder order) { return order == TrainOrder::seqtrain ? "seqtrain" : "anti_seqtrain"; }

std::string to_string(RequestKind kind) { return kind == RequestKind::rand_at_k ? "rand" : "top"; }

RequestGenerator parse_request_spec(const std::string& spec, std::uint64_t seed) {
  auto at = spec.find('@');
  if (at == std::string::npos) throw PreconditionError("request spec must look like rand@K or top@K");
  RequestGenerator gen;
  gen.seed = seed;
  std::string kind = spec.substr(0, at);
  if (kind == "rand") gen.kind = RequestKind::rand_at_k;
  else if (kind == "top") gen.kind = RequestKind::top_at_k;
  else throw PreconditionError("unknown request kind '" + kind + "'");
  try {
    gen.k_percent = std::stod(spec.substr(at + 1));
  } catch (const std::exception&) {
    throw PreconditionError("bad K in request spec '" + spec + "'");
  }
  if (!(gen.k_percent > 0.0 && gen.k_percent < 100.0)) throw PreconditionError("K must lie in (0, 100)");
  return gen;
}

std::vector<Index> visit_order(const GroupPlan& plan, TrainOrder order) {
  std::vector<Index> v = plan.train_order;
  if (order == TrainOrder::anti_seqtrain) std::reverse(v.begin(), v.end());
  return v;
}

Rng group_stream(std::uint64_t seed, std::size_t position) { return Rng::substream(seed, 0x6E0, position); }

void train_group(TrainingState& state, const InteractionMatrix& train, std::span<const Index> members,
                 std::size_t position, const LearnConfig& config) {
  auto positives = positives_of(train, members);
  if (positives.empty()) {
    throw PreconditionError("group at position " + std::to_string(position) +
                            " has no ratings left; re-group the users before training");
  }
  state.rng = group_stream(config.train.seed, position);
  for (std::size_t e = 0; e < config.group_epochs(); ++e) train_epoch_on(state, positives, train, config.train);
}

namespace {

void check_plan_covers(const GroupPlan& plan, const InteractionMatrix& train) {
  plan.validate();
  if (plan.labels.size() != train.n_users()) {
    throw PreconditionError("plan labels " + std::to_string(plan.labels.size()) + " users, dataset has " +
                            std::to_string(train.n_users()));
  }
}

}  // namespace

CheckpointChain learn(const InteractionMatrix& train, const GroupPlan& plan, const LearnConfig& config) {
  config.train.validate();
  check_plan_covers(plan, train);
  CheckpointChain chain;
  chain.plan = plan;
  chain.config = config;
  chain.visit_order = visit_order(plan, config.order);
  chain.initial = init_state(train.n_users(), train.n_items(), config.model, config.train);

  const auto members = plan.members();
  TrainingState state = chain.initial;
  for (std::size_t pos = 0; pos < chain.visit_order.size(); ++pos) {
    train_group(state, train, members[chain.visit_order[pos]], pos, config);
    chain.checkpoints.push_back(state);
  }
  return chain;
}

std::size_t locate(const GroupPlan& plan, const UnlearnRequest& request, TrainOrder order) {
  if (request.users.empty()) throw PreconditionError("unlearning request names no users");
  auto visit = visit_order(plan, order);
  std::vector<std::size_t> pos_of(plan.n_groups);
  for (std::size_t k = 0; k < visit.size(); ++k) pos_of[visit[k]] = k;
  std::size_t earliest = visit.size();
  for (Index u : request.users) {
    if (u >= plan.labels.size()) throw PreconditionError("unknown user id " + std::to_string(u));
    earliest = std::min(earliest, pos_of[plan.labels[u]]);
  }
  return earliest;
}

void validate_request(const InteractionMatrix& train, const UnlearnRequest& request) {
  if (request.users.empty()) throw PreconditionError("unlearning request names no users");
  for (Index u : request.users) {
    if (u >= train.n_users()) throw PreconditionError("unknown user id " + std::to_string(u));
    if (train.degree(u) == 0) {
      throw PreconditionError("user " + std::to_string(u) + " holds no data in the current dataset");
    }
  }
  std::vector<Index> sorted = request.users;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() >= train.n_active_users()) {
    throw PreconditionError("request would erase every remaining user");
  }
}

UnlearnResult unlearn(const CheckpointChain& chain, const InteractionMatrix& train, const UnlearnRequest& request) {
  validate_request(train, request);
  check_plan_covers(chain.plan, train);

  UnlearnResult out;
  out.train = train.without_users(request.users);
  const auto members = chain.plan.members();
  for (std::size_t g = 0; g < members.size(); ++g) {
    bool any = std::any_of(members[g].begin(), members[g].end(), [&](Index u) { return out.train.degree(u) > 0; });
    if (!any) {
      throw PreconditionError("request empties group " + std::to_string(g) + "; re-group the users before unlearning");
    }
  }

  const std::size_t p = locate(chain.plan, request, chain.config.order);
  out.rollback_position = p;
  out.chain.plan = chain.plan;
  out.chain.config = chain.config;
  out.chain.visit_order = chain.visit_order;
  out.chain.initial = chain.initial;
  out.chain.checkpoints.assign(chain.checkpoints.begin(), chain.checkpoints.begin() + static_cast<std::ptrdiff_t>(p));
  out.chain.erased_users = chain.erased_users;
  out.chain.erased_users.insert(out.chain.erased_users.end(), request.users.begin(), request.users.end());
  std::sort(out.chain.erased_users.begin(), out.chain.erased_users.end());
  out.chain.erased_users.erase(std::unique(out.chain.erased_users.begin(), out.chain.erased_users.end()),
                               out.chain.erased_users.end());

  TrainingState state = p == 0 ? chain.initial : chain.checkpoints[p - 1];
  for (std::size_t pos = p; pos < chain.visit_order.size(); ++pos) {
    train_group(state, out.train, members[chain.visit_order[pos]], pos, chain.config);
    out.chain.checkpoints.push_back(state);
    ++out.groups_retrained;
  }
  return out;
}

ModelParams retrain_baseline(const InteractionMatrix& train_minus_erased, const GroupPlan& plan,
                             const LearnConfig& config) {
  return learn(train_minus_erased, plan, config).served().params;
}

std::uint64_t shard_seed(std::uint64_t seed, std::size_t group) {
  return group == 0 ? seed : derive_key(seed, 0xC515, group);
}

ModelParams merge_shards(const GroupPlan& plan, const std::vector<TrainingState>& shards) {
  if (shards.empty()) throw PreconditionError("no shards to merge");
  ModelParams merged = shards.front().params;
  const ParamLayout L = merged.layout();
  const std::size_t user_end = L.user_embed.offset + L.user_embed.size();
  for (std::size_t k = user_end; k < merged.values.size(); ++k) {
    double s = 0.0;
    for (const auto& sh : shards) s += sh.params.values[k];
    merged.values[k] = s / static_cast<double>(shards.size());
  }
  for (std::size_t u = 0; u < plan.labels.size(); ++u) {
    const auto& src = shards[plan.labels[u]].params.values;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(u * kEmbedDim), kEmbedDim,
                merged.values.begin() + static_cast<std::ptrdiff_t>(u * kEmbedDim));
  }
  return merged;
}

namespace {

TrainingState train_shard(const InteractionMatrix& train, std::span<const Index> members, std::size_t group,
                          const LearnConfig& config) {
  LearnConfig shard_cfg = config;
  shard_cfg.train.seed = shard_seed(config.train.seed, group);
  shard_cfg.epochs_per_group = config.train.total_epochs;
  TrainingState state = init_state(train.n_users(), train.n_items(), config.model, shard_cfg.train);
  train_group(state, train, members, 0, shard_cfg);
  return state;
}

}  // namespace

CsisaModel csisa(const InteractionMatrix& train, const GroupPlan& plan, const LearnConfig& config) {
  config.train.validate();
  check_plan_covers(plan, train);
  CsisaModel model;
  model.plan = plan;
  model.config = config;
  model.shards.resize(plan.n_groups);
  const auto members = plan.members();
  const auto n = static_cast<std::int64_t>(plan.n_groups);
  std::vector<std::string> errors(plan.n_groups);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t g = 0; g < n; ++g) {
    auto gi = static_cast<std::size_t>(g);
    try {
      model.shards[gi] = train_shard(train, members[gi], gi, config);
    } catch (const std::exception& e) {
      errors[gi] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("C-SISA shard failed: " + e);
  }
  model.merged = merge_shards(plan, model.shards);
  return model;
}

CsisaUnlearnResult csisa_unlearn(const CsisaModel& model, const InteractionMatrix& train,
                                 const UnlearnRequest& request) {
  validate_request(train, request);
  InteractionMatrix edited = train.without_users(request.users);
  std::vector<bool> hit(model.plan.n_groups, false);
  for (Index u : request.users) hit[model.plan.labels[u]] = true;
  std::vector<Index> affected;
  for (std::size_t g = 0; g < hit.size(); ++g) {
    if (hit[g]) affected.push_back(static_cast<Index>(g));
  }

  CsisaUnlearnResult out;
  out.model = model;
  const auto members = model.plan.members();
  const auto n = static_cast<std::int64_t>(affected.size());
  std::vector<std::string> errors(affected.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t k = 0; k < n; ++k) {
    std::size_t g = affected[static_cast<std::size_t>(k)];
    try {
      out.model.shards[g] = train_shard(edited, members[g], g, model.config);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("C-SISA shard retrain failed: " + e);
  }
  out.model.merged = merge_shards(model.plan, out.model.shards);
  out.shards_retrained = affected.size();
  return out;
}

std::size_t request_size(std::size_t n, double k_percent) {
  double exact = k_percent * static_cast<double>(n) / 100.0;
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

UnlearnRequest generate_request(const InteractionMatrix& matrix, const RequestGenerator& gen) {
  if (!(gen.k_percent > 0.0 && gen.k_percent < 100.0)) throw PreconditionError("K must lie in (0, 100)");
  std::vector<Index> candidates;
  for (std::size_t u = 0; u < matrix.n_users(); ++u) {
    if (matrix.degree(static_cast<Index>(u)) > 0) candidates.push_back(static_cast<Index>(u));
  }
  const std::size_t count = request_size(candidates.size(), gen.k_percent);
  if (count == 0) throw PreconditionError("K% selects no users");
  if (count >= candidates.size()) throw PreconditionError("K% covers every user and would empty the dataset");

  UnlearnRequest req;
  if (gen.kind == RequestKind::top_at_k) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](Index a, Index b) { return matrix.degree(a) > matrix.degree(b); });
    req.users.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    Rng rng = Rng::substream(gen.seed, 0x4E0);
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    for (std::size_t k = 0; k < count; ++k) {
      std::size_t j = k + rng.below(candidates.size() - k);
      std::swap(candidates[k], candidates[j]);
    }
    req.users.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::sort(req.users.begin(), req.users.end());
  return req;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string checkpoint_name(std::size_t pos) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%03zu.ckpt", pos);
  return buf;
}

}  // namespace

void save_chain(const CheckpointChain& chain, const std::string& dir, const std::map<std::string, std::string>& extras) {
  fs::create_directories(dir);
  const fs::path root(dir);
  save_plan(chain.plan, (root / "plan.txt").string());
  save_checkpoint(chain.initial, (root / "initial.ckpt").string());
  for (std::size_t k = 0; k < chain.checkpoints.size(); ++k) {
    save_checkpoint(chain.checkpoints[k], (root / checkpoint_name(k)).string());
  }
  std::ofstream out(root / "chain.manifest", std::ios::binary);
  if (!out) throw Error("cannot write manifest in " + dir);
  const auto& c = chain.config;
  out << "laser-chain 1\n";
  out << "plan=plan.txt\n";
  out << "model=" << to_string(c.model) << '\n';
  out << "order=" << to_string(c.order) << '\n';
  out << "seed=" << c.train.seed << '\n';
  out << "total_epochs=" << c.train.total_epochs << '\n';
  out << "epochs_per_group=" << c.group_epochs() << '\n';
  out << "batch_size=" << c.train.batch_size << '\n';
  out << "negative_per_positive=" << c.train.negative_per_positive << '\n';
  out << "learning_rate=" << format_double(c.train.learning_rate) << '\n';
  out << "initial=initial.ckpt\n";
  out << "checkpoints=" << chain.checkpoints.size() << '\n';
  for (std::size_t k = 0; k < chain.checkpoints.size(); ++k) out << "checkpoint." << k << '=' << checkpoint_name(k) << '\n';
  out << "erased=";
  for (std::size_t k = 0; k < chain.erased_users.size(); ++k) out << (k ? " " : "") << chain.erased_users[k];
  out << '\n';
  for (const auto& [key, value] : extras) out << key << '=' << value << '\n';
}

CheckpointChain load_chain(const std::string& manifest_path, std::map<std::string, std::string>* extras) {
  std::ifstream in(manifest_path);
  if (!in) throw PrerequisiteError("no chain manifest at " + manifest_path + " (run the train command first)");
  std::string line;
  if (!std::getline(in, line) || line != "laser-chain 1") throw FormatError(manifest_path + ": not a chain manifest");
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(manifest_path + ": missing key " + key);
    return it->second;
  };
  const fs::path root = fs::path(manifest_path).parent_path();
  CheckpointChain chain;
  try {
    chain.plan = load_plan((root / need("plan")).string());
    chain.config.model = parse_model_kind(need("model"));
    chain.config.order = parse_train_order(need("order"));
    chain.config.train.seed = std::stoull(need("seed"));
    chain.config.train.total_epochs = std::stoull(need("total_epochs"));
    chain.config.epochs_per_group = std::stoull(need("epochs_per_group"));
    chain.config.train.batch_size = std::stoull(need("batch_size"));
    chain.config.train.negative_per_positive = std::stoull(need("negative_per_positive"));
    chain.config.train.learning_rate = std::stod(need("learning_rate"));
  } catch (const std::logic_error& e) {
    throw FormatError(manifest_path + ": bad value (" + e.what() + ")");
  }
  chain.visit_order = visit_order(chain.plan, chain.config.order);
  chain.initial = load_checkpoint((root / need("initial")).string());
  std::size_t count = std::stoull(need("checkpoints"));
  if (count != chain.plan.n_groups) throw FormatError(manifest_path + ": chain length does not match the plan");
  for (std::size_t k = 0; k < count; ++k) {
    chain.checkpoints.push_back(load_checkpoint((root / need("checkpoint." + std::to_string(k))).string()));
  }
  auto check_header = [&](const TrainingState& s, const std::string& what) {
    if (s.params.kind != chain.config.model || s.params.n_users != chain.plan.labels.size() ||
        s.seed != chain.config.train.seed) {
      throw FormatError(manifest_path + ": " + what + " header does not match the plan/config");
    }
  };
  check_header(chain.initial, "initial checkpoint");
  for (std::size_t k = 0; k < count; ++k) check_header(chain.checkpoints[k], "checkpoint " + std::to_string(k));
  std::istringstream erased(need("erased"));
  for (Index u; erased >> u;) chain.erased_users.push_back(u);

  if (extras) {
    static const char* known[] = {"plan", "model", "order", "seed", "total_epochs", "epochs_per_group", "batch_size",
                                  "negative_per_positive", "learning_rate", "initial", "checkpoints", "erased"};
    for (const auto& [key, value] : kv) {
      bool is_known = std::find(std::begin(known), std::end(known), key) != std::end(known) ||
                      key.rfind("checkpoint.", 0) == 0;
      if (!is_known) (*extras)[key] = value;
    }
  }
  return chain;
}

}  // namespace laser
