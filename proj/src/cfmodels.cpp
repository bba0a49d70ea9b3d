#include "laser/cfmodels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

namespace laser {

namespace {

constexpr char kCheckpointMagic[8] = {'L', 'S', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::size_t place(std::size_t& cursor, std::size_t rows, std::size_t cols, Tensor& t) {
  t = Tensor{cursor, rows, cols};
  cursor += rows * cols;
  return cursor;
}

void place_layer(std::size_t& cursor, std::size_t out, std::size_t in, DenseLayer& layer) {
  place(cursor, out, in, layer.weight);
  place(cursor, out, 1, layer.bias);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// y = relu(W x + b)
void dense_relu(const double* values, const DenseLayer& layer, std::span<const double> x, std::span<double> y) {
  const double* w = values + layer.weight.offset;
  const double* b = values + layer.bias.offset;
  const std::size_t in = layer.weight.cols;
  for (std::size_t o = 0; o < layer.weight.rows; ++o) {
    double s = b[o];
    const double* wr = w + o * in;
    for (std::size_t k = 0; k < in; ++k) s += wr[k] * x[k];
    y[o] = s > 0.0 ? s : 0.0;
  }
}

// Back through relu(W x + b): dy is the gradient w.r.t. the post-ReLU output y.
// Accumulates dW, db into grad and writes dx (if non-empty).
void dense_relu_backward(const double* values, double* grad, const DenseLayer& layer, std::span<const double> x,
                         std::span<const double> y, std::span<const double> dy, std::span<double> dx) {
  const double* w = values + layer.weight.offset;
  double* gw = grad + layer.weight.offset;
  double* gb = grad + layer.bias.offset;
  const std::size_t in = layer.weight.cols;
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < layer.weight.rows; ++o) {
    if (!(y[o] > 0.0)) continue;
    double dz = dy[o];
    if (dz == 0.0) continue;
    gb[o] += dz;
    double* gwr = gw + o * in;
    const double* wr = w + o * in;
    for (std::size_t k = 0; k < in; ++k) gwr[k] += dz * x[k];
    if (!dx.empty()) {
      for (std::size_t k = 0; k < in; ++k) dx[k] += dz * wr[k];
    }
  }
}

struct Tower {
  std::array<double, kEmbedDim> x{};
  std::array<double, kHidden1> h1{};
  std::array<double, kHidden2> out{};
};

void tower_forward(const double* values, const DenseLayer& l1, const DenseLayer& l2, std::span<const double> x,
                   Tower& t) {
  std::copy(x.begin(), x.end(), t.x.begin());
  dense_relu(values, l1, t.x, t.h1);
  dense_relu(values, l2, t.h1, t.out);
}

void tower_backward(const double* values, double* grad, const DenseLayer& l1, const DenseLayer& l2, const Tower& t,
                    std::span<const double> d_out, std::span<double> dx) {
  std::array<double, kHidden1> dh1{};
  dense_relu_backward(values, grad, l2, t.h1, t.out, d_out, dh1);
  dense_relu_backward(values, grad, l1, t.x, t.h1, dh1, dx);
}

struct CosineResult {
  double cos = 0.0;
  double denom = 0.0;
  double np2 = 0.0;
  double nq2 = 0.0;
};

CosineResult cosine(std::span<const double> p, std::span<const double> q) {
  CosineResult r;
  r.np2 = dot(p, p);
  r.nq2 = dot(q, q);
  r.denom = std::sqrt(r.np2) * std::sqrt(r.nq2);
  r.cos = r.denom > 1e-300 ? dot(p, q) / r.denom : 0.0;
  return r;
}

double dmf_prediction(double cos) { return std::clamp(cos, kPredictionFloor, 1.0); }

double bce_grad(double prediction, double target) {
  if (prediction < kLogClamp || prediction > 1.0 - kLogClamp) return 0.0;
  return -target / prediction + (1.0 - target) / (1.0 - prediction);
}

void check_index(const ModelParams& params, Index user, Index item) {
  if (user >= params.n_users || item >= params.n_items) {
    throw PreconditionError("prediction index (" + std::to_string(user) + ", " + std::to_string(item) +
                            ") out of range");
  }
}

double nmf_forward(const ModelParams& params, const ParamLayout& L, Index u, Index i,
                   std::array<double, 2 * kEmbedDim>& mlp_in, std::array<double, kHidden1>& h1,
                   std::array<double, kHidden2>& h2, std::array<double, kEmbedDim>& gmf) {
  auto xu = params.user_row(u);
  auto xi = params.item_row(i);
  for (std::size_t k = 0; k < kEmbedDim; ++k) {
    gmf[k] = xu[k] * xi[k];
    mlp_in[k] = xu[k];
    mlp_in[kEmbedDim + k] = xi[k];
  }
  const double* v = params.values.data();
  dense_relu(v, L.mlp1, mlp_in, h1);
  dense_relu(v, L.mlp2, h1, h2);
  const double* w = v + L.fuse.weight.offset;
  double z = v[L.fuse.bias.offset];
  for (std::size_t k = 0; k < kEmbedDim; ++k) z += w[k] * gmf[k];
  for (std::size_t k = 0; k < kHidden2; ++k) z += w[kEmbedDim + k] * h2[k];
  return z;
}

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
  if (name == "dmf" || name == "DMF") return ModelKind::dmf;
  if (name == "nmf" || name == "NMF") return ModelKind::nmf;
  throw PreconditionError("unknown model kind '" + name + "' (expected dmf or nmf)");
}

std::string to_string(ModelKind kind) { return kind == ModelKind::dmf ? "DMF" : "NMF"; }

ParamLayout ParamLayout::make(ModelKind kind, std::size_t n_users, std::size_t n_items) {
  ParamLayout L;
  L.kind = kind;
  std::size_t cursor = 0;
  place(cursor, n_users, kEmbedDim, L.user_embed);
  place(cursor, n_items, kEmbedDim, L.item_embed);
  if (kind == ModelKind::dmf) {
    place_layer(cursor, kHidden1, kEmbedDim, L.user1);
    place_layer(cursor, kHidden2, kHidden1, L.user2);
    place_layer(cursor, kHidden1, kEmbedDim, L.item1);
    place_layer(cursor, kHidden2, kHidden1, L.item2);
  } else {
    place_layer(cursor, kHidden1, 2 * kEmbedDim, L.mlp1);
    place_layer(cursor, kHidden2, kHidden1, L.mlp2);
    place_layer(cursor, 1, kEmbedDim + kHidden2, L.fuse);
  }
  L.total = cursor;
  return L;
}

std::span<const double> ModelParams::user_row(Index u) const {
  return {values.data() + static_cast<std::size_t>(u) * kEmbedDim, kEmbedDim};
}

std::span<const double> ModelParams::item_row(Index i) const {
  return {values.data() + (n_users + static_cast<std::size_t>(i)) * kEmbedDim, kEmbedDim};
}

OptimizerState OptimizerState::for_params(const ModelParams& params, double learning_rate) {
  OptimizerState s;
  s.m.assign(params.values.size(), 0.0);
  s.v.assign(params.values.size(), 0.0);
  s.learning_rate = learning_rate;
  return s;
}

void TrainConfig::validate() const {
  if (total_epochs < 1) throw PreconditionError("total_epochs must be >= 1");
  if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw PreconditionError("learning_rate must be >= 0");
}

ModelParams init_params(std::size_t n_users, std::size_t n_items, ModelKind kind, std::uint64_t seed) {
  if (n_users < 1 || n_items < 1) throw PreconditionError("model needs at least one user and one item");
  ModelParams p;
  p.kind = kind;
  p.n_users = n_users;
  p.n_items = n_items;
  p.values.resize(p.layout().total);
  Rng rng = Rng::substream(seed, 0x1417);
  for (double& x : p.values) x = 0.01 * rng.normal();
  return p;
}

TrainingState init_state(std::size_t n_users, std::size_t n_items, ModelKind kind, const TrainConfig& config) {
  TrainingState s;
  s.params = init_params(n_users, n_items, kind, config.seed);
  s.opt = OptimizerState::for_params(s.params, config.learning_rate);
  s.rng = Rng::substream(config.seed, 0x7A1);
  s.seed = config.seed;
  return s;
}

double predict(const ModelParams& params, Index user, Index item) {
  check_index(params, user, item);
  const ParamLayout L = params.layout();
  const double* v = params.values.data();
  if (params.kind == ModelKind::dmf) {
    Tower tu, ti;
    tower_forward(v, L.user1, L.user2, params.user_row(user), tu);
    tower_forward(v, L.item1, L.item2, params.item_row(item), ti);
    return dmf_prediction(cosine(tu.out, ti.out).cos);
  }
  std::array<double, 2 * kEmbedDim> mlp_in;
  std::array<double, kHidden1> h1;
  std::array<double, kHidden2> h2;
  std::array<double, kEmbedDim> gmf;
  return sigmoid(nmf_forward(params, L, user, item, mlp_in, h1, h2, gmf));
}

std::vector<double> predict_items(const ModelParams& params, Index user, std::span<const Index> items) {
  std::vector<double> out(items.size());
  if (params.kind != ModelKind::dmf) {
    for (std::size_t k = 0; k < items.size(); ++k) out[k] = predict(params, user, items[k]);
    return out;
  }
  const ParamLayout L = params.layout();
  const double* v = params.values.data();
  Tower tu, ti;
  check_index(params, user, 0);
  tower_forward(v, L.user1, L.user2, params.user_row(user), tu);
  for (std::size_t k = 0; k < items.size(); ++k) {
    check_index(params, user, items[k]);
    tower_forward(v, L.item1, L.item2, params.item_row(items[k]), ti);
    out[k] = dmf_prediction(cosine(tu.out, ti.out).cos);
  }
  return out;
}

double bce_term(double prediction, double target) {
  double y = std::clamp(prediction, kLogClamp, 1.0 - kLogClamp);
  return -(target * std::log(y) + (1.0 - target) * std::log(1.0 - y));
}

double loss(const ModelParams& params, std::span<const Sample> batch, double r_max) {
  if (batch.empty()) return 0.0;
  double s = 0.0;
  for (const auto& smp : batch) s += bce_term(predict(params, smp.user, smp.item), smp.rating / r_max);
  return s / static_cast<double>(batch.size());
}

double loss_and_gradient(const ModelParams& params, std::span<const Sample> batch, double r_max,
                         std::vector<double>& grad) {
  grad.assign(params.values.size(), 0.0);
  if (batch.empty()) return 0.0;
  const ParamLayout L = params.layout();
  const double* v = params.values.data();
  double* g = grad.data();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;

  if (params.kind == ModelKind::dmf) {
    Tower tu, ti;
    std::array<double, kHidden2> dp{}, dq{};
    std::array<double, kEmbedDim> dx{};
    std::size_t k = 0;
    while (k < batch.size()) {
      // Runs of samples sharing a user reuse one user-tower pass.
      const Index u = batch[k].user;
      check_index(params, u, batch[k].item);
      tower_forward(v, L.user1, L.user2, params.user_row(u), tu);
      std::fill(dp.begin(), dp.end(), 0.0);
      for (; k < batch.size() && batch[k].user == u; ++k) {
        const Index i = batch[k].item;
        check_index(params, u, i);
        tower_forward(v, L.item1, L.item2, params.item_row(i), ti);
        CosineResult c = cosine(tu.out, ti.out);
        double yhat = dmf_prediction(c.cos);
        double target = batch[k].rating / r_max;
        total += bce_term(yhat, target);
        bool live = c.denom > 1e-300 && c.cos > kPredictionFloor && c.cos < 1.0;
        double dcos = live ? bce_grad(yhat, target) * scale : 0.0;
        if (dcos == 0.0) continue;
        for (std::size_t d = 0; d < kHidden2; ++d) {
          dp[d] += dcos * (ti.out[d] / c.denom - c.cos * tu.out[d] / c.np2);
          dq[d] = dcos * (tu.out[d] / c.denom - c.cos * ti.out[d] / c.nq2);
        }
        tower_backward(v, g, L.item1, L.item2, ti, dq, dx);
        double* gi = g + L.item_embed.offset + static_cast<std::size_t>(i) * kEmbedDim;
        for (std::size_t d = 0; d < kEmbedDim; ++d) gi[d] += dx[d];
      }
      tower_backward(v, g, L.user1, L.user2, tu, dp, dx);
      double* gu = g + L.user_embed.offset + static_cast<std::size_t>(u) * kEmbedDim;
      for (std::size_t d = 0; d < kEmbedDim; ++d) gu[d] += dx[d];
    }
    return total * scale;
  }

  std::array<double, 2 * kEmbedDim> mlp_in, d_in;
  std::array<double, kHidden1> h1, dh1;
  std::array<double, kHidden2> h2, dh2;
  std::array<double, kEmbedDim> gmf;
  const double* w = v + L.fuse.weight.offset;
  for (const auto& smp : batch) {
    check_index(params, smp.user, smp.item);
    double z = nmf_forward(params, L, smp.user, smp.item, mlp_in, h1, h2, gmf);
    double yhat = sigmoid(z);
    double target = smp.rating / r_max;
    total += bce_term(yhat, target);
    double dz = bce_grad(yhat, target) * yhat * (1.0 - yhat) * scale;
    if (dz == 0.0) continue;
    double* gw = g + L.fuse.weight.offset;
    g[L.fuse.bias.offset] += dz;
    for (std::size_t k = 0; k < kEmbedDim; ++k) gw[k] += dz * gmf[k];
    for (std::size_t k = 0; k < kHidden2; ++k) {
      gw[kEmbedDim + k] += dz * h2[k];
      dh2[k] = dz * w[kEmbedDim + k];
    }
    dense_relu_backward(v, g, L.mlp2, h1, h2, dh2, dh1);
    dense_relu_backward(v, g, L.mlp1, mlp_in, h1, dh1, d_in);
    auto xu = params.user_row(smp.user);
    auto xi = params.item_row(smp.item);
    double* gu = g + L.user_embed.offset + static_cast<std::size_t>(smp.user) * kEmbedDim;
    double* gi = g + L.item_embed.offset + static_cast<std::size_t>(smp.item) * kEmbedDim;
    for (std::size_t k = 0; k < kEmbedDim; ++k) {
      double dgmf = dz * w[k];
      gu[k] += dgmf * xi[k] + d_in[k];
      gi[k] += dgmf * xu[k] + d_in[kEmbedDim + k];
    }
  }
  return total * scale;
}

void adam_step(std::vector<double>& values, std::span<const double> grad, OptimizerState& opt) {
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  const double step_size = opt.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  for (std::size_t k = 0; k < values.size(); ++k) {
    double gk = grad[k];
    opt.m[k] = opt.beta1 * opt.m[k] + (1.0 - opt.beta1) * gk;
    opt.v[k] = opt.beta2 * opt.v[k] + (1.0 - opt.beta2) * gk * gk;
    double denom = std::sqrt(opt.v[k]) / sqrt_bc2 + opt.eps;
    values[k] -= step_size * opt.m[k] / denom;
  }
}

std::vector<Sample> positives_of(const InteractionMatrix& train, std::span<const Index> users) {
  std::vector<Sample> out;
  for (Index u : users) {
    for (const auto& r : train.ratings_of(u)) out.push_back({u, r.item, r.value});
  }
  return out;
}

std::vector<Sample> all_positives(const InteractionMatrix& train) {
  std::vector<Index> users(train.n_users());
  std::iota(users.begin(), users.end(), 0);
  return positives_of(train, users);
}

EpochStats train_epoch_on(TrainingState& state, std::span<const Sample> positives, const InteractionMatrix& train,
                          const TrainConfig& config) {
  config.validate();
  EpochStats stats;
  std::vector<std::size_t> order(positives.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, state.rng);

  const std::size_t n_items = train.n_items();
  std::vector<Sample> batch;
  std::vector<double> grad;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    std::size_t end = std::min(order.size(), start + config.batch_size);
    batch.clear();
    for (std::size_t k = start; k < end; ++k) {
      const Sample& pos = positives[order[k]];
      batch.push_back(pos);
      for (std::size_t n = 0; n < config.negative_per_positive; ++n) {
        Index item = static_cast<Index>(state.rng.below(n_items));
        for (int tries = 0; tries < 64 && train.contains(pos.user, item); ++tries) {
          item = static_cast<Index>(state.rng.below(n_items));
        }
        batch.push_back({pos.user, item, 0.0});
      }
    }
    double batch_loss = loss_and_gradient(state.params, batch, train.r_max(), grad);
    if (!std::isfinite(batch_loss)) throw DivergenceError("non-finite training loss", stats.batches);
    adam_step(state.params.values, grad, state.opt);
    loss_sum += batch_loss;
    ++stats.batches;
  }
  stats.mean_loss = stats.batches ? loss_sum / static_cast<double>(stats.batches) : 0.0;
  ++state.epochs_done;
  return stats;
}

EpochStats train_epoch(TrainingState& state, const InteractionMatrix& train, const TrainConfig& config) {
  auto positives = all_positives(train);
  return train_epoch_on(state, positives, train, config);
}

void save_checkpoint(const TrainingState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const auto& p = state.params;
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  binio::write_u32(out, kCheckpointVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(p.kind));
  binio::write_u64(out, p.n_users);
  binio::write_u64(out, p.n_items);
  binio::write_u64(out, state.epochs_done);
  binio::write_u64(out, state.seed);
  binio::write_u32(out, kEmbedDim);
  binio::write_u32(out, kHidden1);
  binio::write_u32(out, kHidden2);
  binio::write_u64(out, p.values.size());
  binio::write_f64s(out, p.values);
  binio::write_f64s(out, state.opt.m);
  binio::write_f64s(out, state.opt.v);
  binio::write_u64(out, state.opt.step);
  binio::write_f64(out, state.opt.learning_rate);
  binio::write_f64(out, state.opt.beta1);
  binio::write_f64(out, state.opt.beta2);
  binio::write_f64(out, state.opt.eps);
  binio::write_u64(out, state.rng.key());
  binio::write_u64(out, state.rng.counter());
  if (!out) throw Error("failed writing " + path);
}

TrainingState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot open checkpoint " + path + " (run the train command first)");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic)) throw FormatError(path + ": not a checkpoint file");
  if (auto v = binio::read_u32(in); v != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(v));
  }
  TrainingState s;
  auto kind = binio::read_u32(in);
  if (kind != static_cast<std::uint32_t>(ModelKind::dmf) && kind != static_cast<std::uint32_t>(ModelKind::nmf)) {
    throw FormatError(path + ": unknown model kind " + std::to_string(kind));
  }
  s.params.kind = static_cast<ModelKind>(kind);
  s.params.n_users = binio::read_u64(in);
  s.params.n_items = binio::read_u64(in);
  s.epochs_done = binio::read_u64(in);
  s.seed = binio::read_u64(in);
  if (binio::read_u32(in) != kEmbedDim || binio::read_u32(in) != kHidden1 || binio::read_u32(in) != kHidden2) {
    throw FormatError(path + ": architecture mismatch");
  }
  std::size_t count = binio::read_u64(in);
  if (count != s.params.layout().total) throw FormatError(path + ": parameter count does not match header");
  s.params.values.resize(count);
  s.opt.m.resize(count);
  s.opt.v.resize(count);
  binio::read_f64s(in, s.params.values);
  binio::read_f64s(in, s.opt.m);
  binio::read_f64s(in, s.opt.v);
  s.opt.step = binio::read_u64(in);
  s.opt.learning_rate = binio::read_f64(in);
  s.opt.beta1 = binio::read_f64(in);
  s.opt.beta2 = binio::read_f64(in);
  s.opt.eps = binio::read_f64(in);
  std::uint64_t key = binio::read_u64(in);
  std::uint64_t counter = binio::read_u64(in);
  s.rng = Rng(key, counter);
  return s;
}

}  // namespace laser
