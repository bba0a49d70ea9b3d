// laser_cli: ingest -> embed -> group -> train -> unlearn -> eval, plus a
// synthetic data generator and the desk-scale experiment grid (bench).

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "artifacts.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace laser;
using namespace laser::cli;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string method_name(GroupSource source) {
  switch (source) {
    case GroupSource::collab_embedding: return "laser_cbkm";
    case GroupSource::raw_ratings: return "laser_bkm";
    case GroupSource::random: return "laser_rand";
  }
  return "laser";
}

// --------------------------------------------------------------------------
// data stage

struct Dataset {
  InteractionMatrix train;
  InteractionMatrix test;
};

Dataset load_data(const Workspace& ws) {
  ws.require("data");
  std::ifstream meta(ws.path("data", "meta.txt"));
  std::size_t n_users = 0, n_items = 0;
  double r_max = 0.0;
  std::string key;
  while (meta >> key) {
    if (key == "users") meta >> n_users;
    else if (key == "items") meta >> n_items;
    else if (key == "r_max") meta >> r_max;
    else meta.ignore(1 << 20, '\n');
  }
  if (!n_users || !n_items) throw FormatError("corrupt " + ws.path("data", "meta.txt"));
  return {read_dump(ws.path("data", "train.tsv"), n_users, n_items, r_max),
          read_dump(ws.path("data", "test.tsv"), n_users, n_items, r_max)};
}

void cmd_synth(const RunConfig& cfg, const Workspace& ws) {
  auto data = make_synthetic(cfg.synth);
  std::string dir = ws.fresh("synth");
  std::ofstream out(dir + "/ratings.csv");
  out << "user,item,rating,timestamp\n";
  for (const auto& t : data.triples) out << t.user << ',' << t.item << ',' << format_double(t.rating) << ',' << t.timestamp << '\n';
  out.close();
  ws.commit("synth", canonical(cfg, "synth"), {});
  std::printf("synth: %zu ratings for %zu users -> %s/ratings.csv\n", data.triples.size(), cfg.synth.n_users,
              dir.c_str());
}

void cmd_ingest(RunConfig cfg, const Workspace& ws) {
  std::vector<std::string> inputs;
  if (cfg.data_path.empty()) {
    if (!ws.has("synth")) {
      throw PrerequisiteError("no input: set data.path, pass --input, or run `laser_cli synth` first");
    }
    ws.require("synth");
    cfg.data_path = ws.path("synth", "ratings.csv");
    cfg.format = RatingFormat::csv;
    inputs.push_back("synth");
  }
  if (!fs::exists(cfg.data_path)) throw PrerequisiteError("rating file not found: " + cfg.data_path);
  auto matrix = build_matrix(load_ratings(cfg.data_path, cfg.format), cfg.min_interactions);
  if (cfg.subsample < 1.0) matrix = subsample_users(matrix, cfg.subsample, cfg.min_interactions, cfg.seed);
  auto parts = split(matrix, {cfg.train_fraction, cfg.seed});

  std::string dir = ws.fresh("data");
  write_dump(parts.train, dir + "/train.tsv");
  write_dump(parts.test, dir + "/test.tsv");
  {
    std::ofstream meta(dir + "/meta.txt");
    meta << "users " << matrix.n_users() << "\nitems " << matrix.n_items() << "\nr_max " << format_double(matrix.r_max())
         << "\nratings " << matrix.n_entries() << "\nsparsity " << format_double(matrix.sparsity()) << '\n';
    std::ofstream ids(dir + "/user_ids.txt");
    for (std::size_t u = 0; u < matrix.user_ids().size(); ++u) ids << u << '\t' << matrix.user_ids()[u] << '\n';
  }
  std::string config = canonical(cfg, "data") + "source=" + Fingerprint().add_file(cfg.data_path).hex() + "\n";
  ws.commit("data", config, inputs);
  std::printf("ingest: %zu users, %zu items, %zu ratings, sparsity %.3f%% (train %zu / test %zu)\n",
              matrix.n_users(), matrix.n_items(), matrix.n_entries(), 100.0 * matrix.sparsity(),
              parts.train.n_entries(), parts.test.n_entries());
}

void cmd_embed(const RunConfig& cfg, const Workspace& ws, bool dump_graph) {
  auto data = load_data(ws);
  std::string dir = ws.fresh("embed");
  auto t0 = std::chrono::steady_clock::now();
  auto graph = build_hypergraph(data.train, cfg.embedding.walk.l_order);
  if (dump_graph) {
    std::ofstream h(dir + "/hypergraph.txt");
    write_hypergraph_dump(graph, h);
  }
  auto result = train_embedding(random_walk(graph, cfg.embedding.walk), cfg.embedding.embed);
  save_embedding(result.embedding, dir + "/embedding.bin");
  {
    std::ofstream loss(dir + "/loss.txt");
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) loss << e + 1 << '\t' << format_double(result.epoch_loss[e]) << '\n';
  }
  ws.write_timing("embed", seconds_since(t0));
  ws.commit("embed", canonical(cfg, "embed"), {"data"});
  std::printf("embed: %zu users x %zu dims, final SGNS loss %.4f\n", result.embedding.vectors.rows(),
              result.embedding.vectors.cols(), result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
}

void cmd_group(const RunConfig& cfg, const Workspace& ws) {
  auto data = load_data(ws);
  ws.require("embed");
  auto embedding = load_embedding(ws.path("embed", "embedding.bin"));
  auto plan = group_users(data.train, embedding, cfg.cluster);
  ws.fresh("group");
  save_plan(plan, ws.path("group", "plan.txt"));
  ws.commit("group", canonical(cfg, "group"), {"data", "embed"});
  std::printf("group: source %s, S=%zu, sizes", to_string(cfg.cluster.source).c_str(), plan.n_groups);
  for (auto s : plan.sizes()) std::printf(" %zu", s);
  std::printf(", order");
  for (auto g : plan.train_order) std::printf(" %u", g);
  std::printf("\n");
}

void cmd_train(const RunConfig& cfg, const Workspace& ws) {
  auto data = load_data(ws);
  ws.require("group");
  auto plan = load_plan(ws.path("group", "plan.txt"));
  auto t0 = std::chrono::steady_clock::now();
  auto chain = learn(data.train, plan, cfg.learn);
  double t = seconds_since(t0);
  std::string dir = ws.fresh("train");
  save_chain(chain, dir, {{"source", to_string(cfg.cluster.source)}});
  ws.write_timing("train", t);
  ws.commit("train", canonical(cfg, "train"), {"data", "group"});
  std::printf("train: %s, S=%zu, %zu epochs per group, %.2f s\n", to_string(cfg.learn.model).c_str(), plan.n_groups,
              chain.config.epochs_per_group ? chain.config.epochs_per_group : chain.config.train.total_epochs, t);
}

void cmd_unlearn(const RunConfig& cfg, const Workspace& ws, const std::string& from, const std::string& name,
                 const std::vector<Index>& users) {
  if (from == name) throw PreconditionError("--from and --name must differ");
  if (name == "data" || name == "embed" || name == "group" || name == "train" || name == "eval" || name == "synth" ||
      name == "bench")
    throw PreconditionError("--name '" + name + "' collides with another stage");
  ws.require(from);
  auto data = load_data(ws);
  std::map<std::string, std::string> extras;
  auto chain = load_chain(ws.path(from, "chain.manifest"), &extras);
  auto current = data.train.without_users(chain.erased_users);

  UnlearnRequest request;
  std::string kind = "users";
  double k_percent = 0.0;
  if (!users.empty()) {
    request.users = users;
  } else {
    auto gen = parse_request_spec(cfg.request, cfg.seed);
    request = generate_request(current, gen);
    kind = to_string(gen.kind);
    k_percent = gen.k_percent;
  }
  auto t0 = std::chrono::steady_clock::now();
  auto out = unlearn(chain, current, request);
  double t = seconds_since(t0);

  std::string dir = ws.fresh(name);
  extras["request_kind"] = kind;
  extras["request_k"] = format_double(k_percent);
  save_chain(out.chain, dir, extras);
  {
    std::ofstream r(dir + "/request.txt");
    r << "kind=" << kind << "\nk=" << format_double(k_percent) << "\nusers=";
    for (std::size_t k = 0; k < request.users.size(); ++k) r << (k ? " " : "") << request.users[k];
    r << "\nrollback_position=" << out.rollback_position << "\ngroups_retrained=" << out.groups_retrained << '\n';
  }
  ws.write_timing(name, t);
  ws.commit(name, canonical(cfg, "unlearn"), {"data", from});
  std::printf("unlearn: %zu users erased, rollback to position %zu, %zu of %zu groups retrained, %.2f s\n",
              request.users.size(), out.rollback_position, out.groups_retrained, chain.plan.n_groups, t);
}

void cmd_eval(const RunConfig& cfg, const Workspace& ws, const std::vector<std::string>& stages) {
  auto data = load_data(ws);
  std::vector<ReportRow> rows;
  std::vector<std::string> inputs{"data"};
  for (const auto& stage : stages) {
    if (stage != "train" && !ws.has(stage)) continue;
    ws.require(stage);
    inputs.push_back(stage);
    std::map<std::string, std::string> extras;
    auto chain = load_chain(ws.path(stage, "chain.manifest"), &extras);
    auto current = data.train.without_users(chain.erased_users);
    auto m = ndcg_hr_at_10(chain.served().params, current, data.test.without_users(chain.erased_users), cfg.eval);
    ReportRow row;
    row.method = method_name(extras.count("source") ? parse_group_source(extras["source"]) : cfg.cluster.source);
    row.model = to_string(chain.config.model);
    row.groups = chain.plan.n_groups;
    row.request_kind = extras.count("request_kind") ? extras["request_kind"] : "none";
    row.k_percent = extras.count("request_k") ? std::stod(extras["request_k"]) : 0.0;
    row.ndcg10 = m.ndcg;
    row.hr10 = m.hr;
    row.seconds = ws.read_timing(stage);
    row.seed = chain.config.train.seed;
    rows.push_back(row);
  }
  std::string dir = ws.fresh("eval");
  {
    std::ofstream out(dir + "/report.csv");
    write_report(rows, out);
  }
  ws.commit("eval", canonical(cfg, "eval"), inputs);
  write_report(rows, std::cout);
}

void cmd_bench(const RunConfig& cfg, const Workspace& ws) {
  auto data = load_data(ws);
  const auto& train = data.train;
  std::vector<ReportRow> rows;
  auto clock = [](auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    return seconds_since(t0);
  };
  for (std::size_t k = 0; k < cfg.bench_seeds; ++k) {
    RunConfig run = cfg;
    run.apply_seed(cfg.seed + k);
    auto embedding = collaborative_embedding(train, run.embedding).embedding;
    for (std::size_t s : cfg.bench_groups) {
      auto cluster = run.cluster;
      cluster.n_groups = s;
      cluster.source = GroupSource::collab_embedding;
      auto cbkm = group_users(train, embedding, cluster);
      cluster.source = GroupSource::random;
      auto rand = group_users(train, embedding, cluster);
      for (ModelKind model : cfg.bench_models) {
        auto lc = run.learn;
        lc.model = model;
        auto chain_c = learn(train, cbkm, lc);
        auto chain_r = learn(train, rand, lc);
        auto shards = csisa(train, rand, lc);
        for (const auto& spec : cfg.bench_requests) {
          auto gen = parse_request_spec(spec, run.seed);
          auto request = generate_request(train, gen);
          auto edited = train.without_users(request.users);
          auto test = data.test.without_users(request.users);
          auto add = [&](const std::string& method, const ModelParams& params, double seconds) {
            auto m = ndcg_hr_at_10(params, edited, test, run.eval);
            rows.push_back({method, to_string(model), s, to_string(gen.kind), gen.k_percent, m.ndcg, m.hr, seconds,
                            run.seed});
          };
          ModelParams retrained;
          double t = clock([&] { retrained = retrain_baseline(edited, cbkm, lc); });
          add("retrain", retrained, t);
          UnlearnResult a, b;
          t = clock([&] { a = unlearn(chain_c, train, request); });
          add("laser_cbkm", a.chain.served().params, t);
          t = clock([&] { b = unlearn(chain_r, train, request); });
          add("laser_rand", b.chain.served().params, t);
          CsisaUnlearnResult c;
          t = clock([&] { c = csisa_unlearn(shards, train, request); });
          add("csisa", c.model.merged, t);
          std::fprintf(stderr, "bench: seed %llu S=%zu %s %s done\n", static_cast<unsigned long long>(run.seed), s,
                       to_string(model).c_str(), spec.c_str());
        }
      }
    }
  }
  std::string dir = ws.fresh("bench");
  {
    std::ofstream out(dir + "/report.csv");
    write_report(rows, out);
  }
  ws.commit("bench", canonical(cfg, "train") + canonical(cfg, "embed") + canonical(cfg, "eval"), {"data"});
  write_report(rows, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LASER: erasable collaborative filtering via sequential group training"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  app.add_option("--config", config_path, "key=value configuration file with [section] headers");
  auto* seed_opt = app.add_option("--seed", seed, "seed for every random stream");
  auto* threads_opt = app.add_option("--threads", threads, "OpenMP thread count")->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out", out, "artifact root directory");

  auto* synth = app.add_subcommand("synth", "write a planted-cluster synthetic rating file");
  std::size_t users = 0, items = 0, clusters = 0, ratings = 0;
  synth->add_option("--users", users);
  synth->add_option("--items", items);
  synth->add_option("--clusters", clusters);
  synth->add_option("--ratings-per-user", ratings);

  auto* ingest = app.add_subcommand("ingest", "load, filter and split a rating file");
  std::string input, format;
  std::size_t min_interactions = 0;
  ingest->add_option("--input", input, "rating file (default: data.path, else the synth output)");
  ingest->add_option("--format", format, "movielens_dat | csv");
  ingest->add_option("--min", min_interactions, "minimum ratings per user and item");

  auto* embed = app.add_subcommand("embed", "hypergraph walks and skip-gram user embedding");
  bool dump_graph = false;
  embed->add_flag("--dump-hypergraph", dump_graph, "also write hypergraph.txt");

  auto* group = app.add_subcommand("group", "balanced grouping and cohesion ordering");
  std::string source;
  std::size_t n_groups = 0;
  group->add_option("--source", source, "collab_embedding | raw_ratings | random");
  group->add_option("--S,--groups", n_groups, "number of groups")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "sequential group training with checkpoints");
  std::string model, order;
  std::size_t epochs = 0;
  train->add_option("--model", model, "dmf | nmf");
  train->add_option("--epochs", epochs, "epochs T")->check(CLI::PositiveNumber);
  train->add_option("--order", order, "seqtrain | anti_seqtrain");

  auto* unlearn_cmd = app.add_subcommand("unlearn", "erase users by rolling back the checkpoint chain");
  std::string request, from = "train", name = "unlearn";
  std::vector<Index> erase;
  unlearn_cmd->add_option("--request", request, "rand@K or top@K");
  unlearn_cmd->add_option("--users", erase, "explicit dense user ids instead of --request");
  unlearn_cmd->add_option("--from", from, "stage holding the chain to unlearn from");
  unlearn_cmd->add_option("--name", name, "stage directory to write");

  auto* eval = app.add_subcommand("eval", "NDCG@10 / HR@10 report for trained and unlearned chains");
  std::vector<std::string> stages{"train", "unlearn"};
  eval->add_option("--stages", stages, "chain stages to evaluate (missing ones other than train are skipped)");

  auto* bench = app.add_subcommand("bench", "experiment grid: retrain, C-SISA and LASER after unlearning");

  app.fallthrough();
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (*seed_opt) cfg.apply_seed(seed);
    if (*threads_opt) cfg.threads = threads;
    if (*out_opt) cfg.out = out;
    if (users) cfg.synth.n_users = users;
    if (items) cfg.synth.n_items = items;
    if (clusters) cfg.synth.n_clusters = clusters;
    if (ratings) cfg.synth.ratings_per_user = ratings;
    if (!input.empty()) cfg.data_path = input;
    if (!format.empty()) cfg.format = parse_rating_format(format);
    if (min_interactions) cfg.min_interactions = min_interactions;
    if (!source.empty()) cfg.cluster.source = parse_group_source(source);
    if (n_groups) cfg.cluster.n_groups = n_groups;
    if (!model.empty()) cfg.learn.model = parse_model_kind(model);
    if (epochs) cfg.learn.train.total_epochs = epochs;
    if (!order.empty()) cfg.learn.order = parse_train_order(order);
    if (!request.empty()) cfg.request = request;
    cfg.validate();
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

    Workspace ws(cfg.out);
    if (*synth) cmd_synth(cfg, ws);
    else if (*ingest) cmd_ingest(cfg, ws);
    else if (*embed) cmd_embed(cfg, ws, dump_graph);
    else if (*group) cmd_group(cfg, ws);
    else if (*train) cmd_train(cfg, ws);
    else if (*unlearn_cmd) cmd_unlearn(cfg, ws, from, name, erase);
    else if (*eval) cmd_eval(cfg, ws, stages);
    else if (*bench) cmd_bench(cfg, ws);
  } catch (const PrerequisiteError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
