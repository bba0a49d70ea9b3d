#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace laser::cli {
namespace {

std::string trim(std::string s) {
  const char* ws = " \t\r";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t to_size(const std::string& v) {
  std::size_t pos = 0;
  long long x = std::stoll(v, &pos);
  if (pos != v.size() || x < 0) throw std::invalid_argument(v);
  return static_cast<std::size_t>(x);
}

double to_real(const std::string& v) {
  std::size_t pos = 0;
  double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return x;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"data.path", [](RunConfig& c, const std::string& v) { c.data_path = v; }},
      {"data.format", [](RunConfig& c, const std::string& v) { c.format = parse_rating_format(v); }},
      {"data.min_interactions", [](RunConfig& c, const std::string& v) { c.min_interactions = to_size(v); }},
      {"data.train_fraction", [](RunConfig& c, const std::string& v) { c.train_fraction = to_real(v); }},
      {"data.subsample", [](RunConfig& c, const std::string& v) { c.subsample = to_real(v); }},

      {"synth.users", [](RunConfig& c, const std::string& v) { c.synth.n_users = to_size(v); }},
      {"synth.items", [](RunConfig& c, const std::string& v) { c.synth.n_items = to_size(v); }},
      {"synth.clusters", [](RunConfig& c, const std::string& v) { c.synth.n_clusters = to_size(v); }},
      {"synth.ratings_per_user", [](RunConfig& c, const std::string& v) { c.synth.ratings_per_user = to_size(v); }},
      {"synth.noise", [](RunConfig& c, const std::string& v) { c.synth.noise = to_real(v); }},
      {"synth.pools",
       [](RunConfig& c, const std::string& v) {
         c.synth.pool_fraction.clear();
         for (const auto& x : split_list(v)) c.synth.pool_fraction.push_back(to_real(x));
       }},

      {"walk.repetition", [](RunConfig& c, const std::string& v) { c.embedding.walk.repetition = to_size(v); }},
      {"walk.depth", [](RunConfig& c, const std::string& v) { c.embedding.walk.depth = to_size(v); }},
      {"walk.l_order", [](RunConfig& c, const std::string& v) { c.embedding.walk.l_order = to_size(v); }},

      {"embed.dim", [](RunConfig& c, const std::string& v) { c.embedding.embed.dim = to_size(v); }},
      {"embed.window", [](RunConfig& c, const std::string& v) { c.embedding.embed.window = to_size(v); }},
      {"embed.negatives", [](RunConfig& c, const std::string& v) { c.embedding.embed.negatives = to_size(v); }},
      {"embed.epochs", [](RunConfig& c, const std::string& v) { c.embedding.embed.epochs = to_size(v); }},
      {"embed.learning_rate", [](RunConfig& c, const std::string& v) { c.embedding.embed.learning_rate = to_real(v); }},
      {"embed.min_learning_rate",
       [](RunConfig& c, const std::string& v) { c.embedding.embed.min_learning_rate = to_real(v); }},

      {"group.S", [](RunConfig& c, const std::string& v) { c.cluster.n_groups = to_size(v); }},
      {"group.max_iter", [](RunConfig& c, const std::string& v) { c.cluster.max_iter = to_size(v); }},
      {"group.source", [](RunConfig& c, const std::string& v) { c.cluster.source = parse_group_source(v); }},

      {"train.model", [](RunConfig& c, const std::string& v) { c.learn.model = parse_model_kind(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.learn.train.total_epochs = to_size(v); }},
      {"train.epochs_per_group", [](RunConfig& c, const std::string& v) { c.learn.epochs_per_group = to_size(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.learn.train.batch_size = to_size(v); }},
      {"train.negatives", [](RunConfig& c, const std::string& v) { c.learn.train.negative_per_positive = to_size(v); }},
      {"train.learning_rate", [](RunConfig& c, const std::string& v) { c.learn.train.learning_rate = to_real(v); }},
      {"train.order", [](RunConfig& c, const std::string& v) { c.learn.order = parse_train_order(v); }},

      {"unlearn.request", [](RunConfig& c, const std::string& v) { c.request = v; }},

      {"eval.cutoff", [](RunConfig& c, const std::string& v) { c.eval.cutoff = to_size(v); }},
      {"eval.negatives", [](RunConfig& c, const std::string& v) { c.eval.negatives = to_size(v); }},

      {"bench.S",
       [](RunConfig& c, const std::string& v) {
         c.bench_groups.clear();
         for (const auto& x : split_list(v)) c.bench_groups.push_back(to_size(x));
       }},
      {"bench.models",
       [](RunConfig& c, const std::string& v) {
         c.bench_models.clear();
         for (const auto& x : split_list(v)) c.bench_models.push_back(parse_model_kind(x));
       }},
      {"bench.requests", [](RunConfig& c, const std::string& v) { c.bench_requests = split_list(v); }},
      {"bench.seeds", [](RunConfig& c, const std::string& v) { c.bench_seeds = to_size(v); }},

      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_size(v); }},
      {"run.threads", [](RunConfig& c, const std::string& v) { c.threads = static_cast<int>(to_size(v)); }},
      {"run.out", [](RunConfig& c, const std::string& v) { c.out = v; }},
  };
  return table;
}

template <typename T>
std::string join(const std::vector<T>& v, auto fn) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + fn(v[k]);
  return s;
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  embedding.walk.seed = s;
  embedding.embed.seed = s;
  cluster.seed = s;
  learn.train.seed = s;
  eval.seed = s;
}

void RunConfig::validate() const {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) throw PreconditionError("data.train_fraction must be in (0, 1)");
  if (subsample <= 0.0 || subsample > 1.0) throw PreconditionError("data.subsample must be in (0, 1]");
  if (min_interactions < 1) throw PreconditionError("data.min_interactions must be >= 1");
  if (cluster.n_groups < 1) throw PreconditionError("group.S must be >= 1");
  if (bench_seeds < 1) throw PreconditionError("bench.seeds must be >= 1");
  embedding.walk.validate();
  embedding.embed.validate();
  learn.train.validate();
  parse_request_spec(request, seed);
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string full = section.empty() ? key : section + "." + key;
    auto it = setters().find(full);
    if (it == setters().end()) throw ParseError("unknown key '" + full + "'", lineno);
    try {
      it->second(cfg, value);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("bad value '" + value + "' for " + full, lineno);
    }
  }
  cfg.apply_seed(cfg.seed);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("cannot open config file " + path);
  return parse_run_config(in);
}

std::string canonical(const RunConfig& c, const std::string& section) {
  std::ostringstream s;
  auto kv = [&](const char* k, const std::string& v) { s << section << '.' << k << '=' << v << '\n'; };
  auto num = [](double x) { return format_double(x); };
  if (section == "data") {
    kv("format", c.format == RatingFormat::csv ? "csv" : "movielens_dat");
    kv("min_interactions", std::to_string(c.min_interactions));
    kv("train_fraction", num(c.train_fraction));
    kv("subsample", num(c.subsample));
  } else if (section == "synth") {
    kv("users", std::to_string(c.synth.n_users));
    kv("items", std::to_string(c.synth.n_items));
    kv("clusters", std::to_string(c.synth.n_clusters));
    kv("ratings_per_user", std::to_string(c.synth.ratings_per_user));
    kv("noise", num(c.synth.noise));
    kv("pools", join(c.synth.pool_fraction, num));
  } else if (section == "embed") {
    const auto& w = c.embedding.walk;
    const auto& e = c.embedding.embed;
    kv("walk", std::to_string(w.repetition) + "," + std::to_string(w.depth) + "," + std::to_string(w.l_order));
    kv("dim", std::to_string(e.dim));
    kv("window", std::to_string(e.window));
    kv("negatives", std::to_string(e.negatives));
    kv("epochs", std::to_string(e.epochs));
    kv("learning_rate", num(e.learning_rate) + "," + num(e.min_learning_rate));
  } else if (section == "group") {
    kv("S", std::to_string(c.cluster.n_groups));
    kv("max_iter", std::to_string(c.cluster.max_iter));
    kv("source", to_string(c.cluster.source));
  } else if (section == "train") {
    const auto& t = c.learn.train;
    kv("model", to_string(c.learn.model));
    kv("epochs", std::to_string(t.total_epochs) + "," + std::to_string(c.learn.epochs_per_group));
    kv("batch_size", std::to_string(t.batch_size));
    kv("negatives", std::to_string(t.negative_per_positive));
    kv("learning_rate", num(t.learning_rate));
    kv("order", to_string(c.learn.order));
  } else if (section == "unlearn") {
    kv("request", c.request);
  } else if (section == "eval") {
    kv("cutoff", std::to_string(c.eval.cutoff));
    kv("negatives", std::to_string(c.eval.negatives));
  } else {
    throw PreconditionError("no canonical form for section " + section);
  }
  s << "seed=" << c.seed << '\n';
  return s.str();
}

}  // namespace laser::cli
