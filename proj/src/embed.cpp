#include "laser/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace laser {

namespace {

constexpr char kEmbeddingMagic[8] = {'L', 'S', 'R', 'E', 'M', 'B', '\0', '\0'};
constexpr std::uint32_t kEmbeddingVersion = 1;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace

void EmbedConfig::validate() const {
  if (dim < 1 || window < 1 || negatives < 1) {
    throw PreconditionError("embedding dim, window and negatives must be >= 1");
  }
  if (!(learning_rate >= 0.0)) throw PreconditionError("embedding learning rate must be >= 0");
}

Matrix initial_embedding(std::size_t n_users, const EmbedConfig& config) {
  Matrix m(n_users, config.dim);
  Rng rng = Rng::substream(config.seed, 0xE1B);
  const double half = 0.5 / static_cast<double>(config.dim);
  for (double& x : m.data()) x = rng.uniform(-half, half);
  return m;
}

double sgns_loss(std::span<const double> center, std::span<const double> context,
                 const std::vector<std::span<const double>>& negatives) {
  double loss = -log_sigmoid(dot(context, center));
  for (const auto& n : negatives) loss -= log_sigmoid(-dot(n, center));
  return loss;
}

SgnsGradient sgns_gradient(std::span<const double> center, std::span<const double> context,
                           const std::vector<std::span<const double>>& negatives) {
  const std::size_t m = center.size();
  SgnsGradient g;
  g.center.assign(m, 0.0);
  g.context.assign(m, 0.0);
  double coef = -(1.0 - sigmoid(dot(context, center)));
  for (std::size_t k = 0; k < m; ++k) {
    g.center[k] += coef * context[k];
    g.context[k] = coef * center[k];
  }
  for (const auto& n : negatives) {
    double c = sigmoid(dot(n, center));
    std::vector<double> gn(m);
    for (std::size_t k = 0; k < m; ++k) {
      g.center[k] += c * n[k];
      gn[k] = c * center[k];
    }
    g.negatives.push_back(std::move(gn));
  }
  return g;
}

EmbeddingResult train_embedding(const UserSequenceCorpus& corpus, const EmbedConfig& config) {
  config.validate();
  if (corpus.sequences.empty()) throw EmptyDatasetError("walk corpus is empty");
  const std::size_t n = corpus.n_vertices;
  const std::size_t m = config.dim;

  std::vector<double> freq(n, 0.0);
  std::size_t tokens = 0;
  for (const auto& seq : corpus.sequences) {
    for (Index v : seq) {
      if (v >= n) throw PreconditionError("corpus vertex " + std::to_string(v) + " out of range");
      freq[v] += 1.0;
    }
    tokens += seq.size();
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (freq[v] == 0.0) throw PreconditionError("user " + std::to_string(v) + " never appears in the walk corpus");
  }

  // Negative-sampling law: unigram^0.75.
  std::vector<double> neg_cum(n);
  double acc = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    acc += std::pow(freq[v], 0.75);
    neg_cum[v] = acc;
  }

  EmbeddingResult result;
  Matrix input = initial_embedding(n, config);
  Matrix output(n, m, 0.0);
  Rng rng = Rng::substream(config.seed, 0xE1C);

  const double total_steps = static_cast<double>(std::max<std::size_t>(tokens * config.epochs, 1));
  double step = 0.0;
  std::vector<double> grad_center(m);
  std::vector<std::size_t> order(corpus.sequences.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t s : order) {
      const auto& seq = corpus.sequences[s];
      for (std::size_t c = 0; c < seq.size(); ++c) {
        double lr = config.learning_rate -
                    (config.learning_rate - config.min_learning_rate) * (step / total_steps);
        lr = std::max(lr, std::min(config.min_learning_rate, config.learning_rate));
        step += 1.0;
        auto center = input.row(seq[c]);
        std::size_t lo = c >= config.window ? c - config.window : 0;
        std::size_t hi = std::min(seq.size() - 1, c + config.window);
        for (std::size_t o = lo; o <= hi; ++o) {
          if (o == c) continue;
          std::fill(grad_center.begin(), grad_center.end(), 0.0);
          double pair_loss = 0.0;
          // Target 0 is the observed context, the rest are sampled negatives.
          for (std::size_t k = 0; k <= config.negatives; ++k) {
            Index target;
            double label;
            if (k == 0) {
              target = seq[o];
              label = 1.0;
            } else {
              target = static_cast<Index>(sample_cumulative(neg_cum, rng));
              if (target == seq[o]) continue;
              label = 0.0;
            }
            auto out = output.row(target);
            double score = dot(out, center);
            pair_loss -= label > 0 ? log_sigmoid(score) : log_sigmoid(-score);
            double g = (label - sigmoid(score)) * lr;
            for (std::size_t d = 0; d < m; ++d) grad_center[d] += g * out[d];
            for (std::size_t d = 0; d < m; ++d) out[d] += g * center[d];
          }
          for (std::size_t d = 0; d < m; ++d) center[d] += grad_center[d];
          loss_sum += pair_loss;
          ++pairs;
        }
      }
    }
    result.epoch_loss.push_back(pairs > 0 ? loss_sum / static_cast<double>(pairs) : 0.0);
  }

  for (double x : input.data()) {
    if (!std::isfinite(x)) throw DivergenceError("embedding training produced a non-finite value", 0);
  }
  result.embedding.vectors = std::move(input);
  return result;
}

void save_embedding(const EmbeddingMatrix& embedding, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(kEmbeddingMagic, sizeof kEmbeddingMagic);
  binio::write_u32(out, kEmbeddingVersion);
  binio::write_u64(out, embedding.n_users());
  binio::write_u64(out, embedding.dim());
  binio::write_f64s(out, embedding.vectors.data());
}

EmbeddingMatrix load_embedding(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot open embedding " + path + " (run the embed command first)");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kEmbeddingMagic)) throw FormatError(path + ": not an embedding file");
  if (auto v = binio::read_u32(in); v != kEmbeddingVersion) {
    throw FormatError(path + ": unsupported embedding version " + std::to_string(v));
  }
  std::size_t n = binio::read_u64(in);
  std::size_t m = binio::read_u64(in);
  EmbeddingMatrix e{Matrix(n, m)};
  binio::read_f64s(in, e.vectors.data());
  return e;
}

}  // namespace laser
