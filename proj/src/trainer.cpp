#include "crossclr/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crossclr/errors.hpp"
#include "crossclr/retrieval.hpp"

namespace crossclr {

using nlohmann::json;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u * kInvSqrt2)); }

double gelu_grad(double u) {
  return 0.5 * (1.0 + std::erf(u * kInvSqrt2)) + u * kInvSqrt2Pi * std::exp(-0.5 * u * u);
}

Matrix affine(const DenseLayer& layer, const Matrix& inputs) {
  Matrix out = inner_products(inputs, layer.weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += layer.bias[k];
  }
  return out;
}

// Intermediate activations of one forward pass, kept for backprop.
struct ForwardCache {
  Matrix pre_activation;  // first layer output
  Matrix hidden;          // gelu(pre_activation), two-layer encoders only
  Matrix output;          // unnormalized projection
};

ForwardCache forward_cached(const EncoderParams& p, const Matrix& inputs) {
  ForwardCache c;
  c.pre_activation = affine(p.first, inputs);
  if (!p.second) {
    c.output = c.pre_activation;
    return c;
  }
  c.hidden = c.pre_activation;
  for (double& v : c.hidden.values()) v = gelu(v);
  c.output = affine(*p.second, c.hidden);
  return c;
}

// Gradients laid out like the parameters.
EncoderParams zero_like(const EncoderParams& p) {
  EncoderParams g;
  g.first = {Matrix(p.first.weight.rows(), p.first.weight.cols()),
             std::vector<double>(p.first.bias.size(), 0.0)};
  if (p.second) {
    g.second = DenseLayer{Matrix(p.second->weight.rows(), p.second->weight.cols()),
                          std::vector<double>(p.second->bias.size(), 0.0)};
  }
  return g;
}

// dL/dW += G^T * A, dL/db += column sums of G.
void layer_backward(DenseLayer& grad, const Matrix& g, const Matrix& inputs) {
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const auto gi = g.row(i);
    const auto ai = inputs.row(i);
    for (std::size_t o = 0; o < gi.size(); ++o) {
      const double c = gi[o];
      if (c == 0.0) continue;
      auto w = grad.weight.row(o);
      for (std::size_t k = 0; k < ai.size(); ++k) w[k] += c * ai[k];
      grad.bias[o] += c;
    }
  }
}

EncoderParams backward(const EncoderParams& p, const ForwardCache& cache, const Matrix& inputs,
                       const Matrix& grad_output) {
  EncoderParams g = zero_like(p);
  if (!p.second) {
    layer_backward(g.first, grad_output, inputs);
    return g;
  }
  layer_backward(*g.second, grad_output, cache.hidden);
  // dL/dhidden = grad_output * W2, then through gelu.
  Matrix grad_hidden(grad_output.rows(), p.second->weight.cols());
  for (std::size_t i = 0; i < grad_output.rows(); ++i) {
    auto gh = grad_hidden.row(i);
    const auto go = grad_output.row(i);
    for (std::size_t o = 0; o < go.size(); ++o) {
      const auto w = p.second->weight.row(o);
      for (std::size_t k = 0; k < gh.size(); ++k) gh[k] += go[o] * w[k];
    }
    const auto pre = cache.pre_activation.row(i);
    for (std::size_t k = 0; k < gh.size(); ++k) gh[k] *= gelu_grad(pre[k]);
  }
  layer_backward(g.first, grad_hidden, inputs);
  return g;
}

template <typename Fn>
void for_each_param(EncoderParams& p, Fn&& fn) {
  fn(p.first.weight.values());
  fn(std::span<double>(p.first.bias));
  if (p.second) {
    fn(p.second->weight.values());
    fn(std::span<double>(p.second->bias));
  }
}

template <typename Fn>
void for_each_param(TrainState& s, Fn&& fn) {
  for_each_param(s.enc_x, fn);
  for_each_param(s.enc_y, fn);
}

std::size_t total_parameters(const TrainState& s) {
  return s.enc_x.parameter_count() + s.enc_y.parameter_count();
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

EmbeddingBatch gather(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) std::ranges::copy(m.row(idx[i]), out.row(i).begin());
  return EmbeddingBatch(std::move(out));
}

// --- binary serialization -------------------------------------------------

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) {
    u64(s.size());
    buf_.append(s);
  }
  void doubles(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double x : m.values()) f64(x);
  }
  void raw(std::string_view s) { buf_.append(s); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes() {
    const std::size_t n = u64();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::size_t n = u64();
    need(8 * n);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  Matrix matrix() {
    const std::size_t r = u64();
    const std::size_t c = u64();
    need(8 * r * c);
    Matrix m(r, c);
    for (double& x : m.values()) x = f64();
    return m;
  }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorKind::TruncatedFile,
                  "checkpoint ends at byte offset " + std::to_string(data_.size()) + ", needed " +
                      std::to_string(pos_ + n));
    }
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kCheckpointMagic = "XCKP";
constexpr std::uint32_t kCheckpointVersion = 1;

void write_encoder(Writer& w, const EncoderParams& p) {
  w.matrix(p.first.weight);
  w.doubles(p.first.bias);
  w.u32(p.second ? 1 : 0);
  if (p.second) {
    w.matrix(p.second->weight);
    w.doubles(p.second->bias);
  }
}

EncoderParams read_encoder(Reader& r) {
  EncoderParams p;
  p.first.weight = r.matrix();
  p.first.bias = r.doubles();
  if (r.u32() != 0) {
    DenseLayer second;
    second.weight = r.matrix();
    second.bias = r.doubles();
    p.second = std::move(second);
  }
  return p;
}

}  // namespace

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = first.weight.values().size() + first.bias.size();
  if (second) n += second->weight.values().size() + second->bias.size();
  return n;
}

EncoderParams make_encoder(std::size_t d_in, std::size_t d_out, std::size_t hidden,
                           std::mt19937_64& rng) {
  const auto layer = [&rng](std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer l{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& v : l.weight.values()) v = dist(rng);
    return l;
  };
  EncoderParams p;
  if (hidden == 0) {
    p.first = layer(d_in, d_out);
  } else {
    p.first = layer(d_in, hidden);
    p.second = layer(hidden, d_out);
  }
  return p;
}

Matrix encoder_project(const EncoderParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.d_in()) {
    throw Error(ErrorKind::DimensionMismatch,
                "encoder expects dim " + std::to_string(params.d_in()) + ", got " +
                    std::to_string(inputs.cols()));
  }
  return forward_cached(params, inputs).output;
}

EmbeddingBatch encoder_forward(const EncoderParams& params, const EmbeddingBatch& batch) {
  return l2_normalize(EmbeddingBatch(encoder_project(params, batch.data())));
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw Error(ErrorKind::ConfigParseError, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 2");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::InvalidArgument, "lr must be >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "lr_decay_factor must lie in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidArgument, "momentum must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error(ErrorKind::InvalidArgument, "beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "adam_eps must be > 0");
  if (embed_dim == 0) throw Error(ErrorKind::InvalidArgument, "embed_dim must be positive");
  if (loss == LossKind::crossclr && queue_capacity < batch_size)
    throw Error(ErrorKind::BatchLargerThanCapacity, "queue capacity below the batch size");
  loss_config.validate();
}

void to_json(json& j, const LossConfig& c) {
  j = {{"tau", c.tau},
       {"lambda", c.lambda_intra},
       {"gamma", c.gamma},
       {"kappa", c.kappa},
       {"threshold_mode", std::string(to_string(c.threshold_mode))},
       {"weight_norm", std::string(to_string(c.weight_norm))},
       {"reduction", std::string(to_string(c.reduction))},
       {"pruning", c.pruning_enabled},
       {"weighting", c.weighting_enabled},
       {"intra", c.intra_enabled},
       {"margin", c.margin},
       {"beta", c.beta},
       {"top_k", c.top_k},
       {"queue_min_fill", c.queue_min_fill}};
}

void from_json(const json& j, LossConfig& c) {
  c.tau = j.at("tau").get<double>();
  c.lambda_intra = j.at("lambda").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.kappa = j.at("kappa").get<double>();
  c.threshold_mode = parse_threshold_mode(j.at("threshold_mode").get<std::string>());
  c.weight_norm = parse_weight_norm(j.at("weight_norm").get<std::string>());
  c.reduction = parse_reduction(j.at("reduction").get<std::string>());
  c.pruning_enabled = j.at("pruning").get<bool>();
  c.weighting_enabled = j.at("weighting").get<bool>();
  c.intra_enabled = j.at("intra").get<bool>();
  c.margin = j.at("margin").get<double>();
  c.beta = j.at("beta").get<double>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.queue_min_fill = j.at("queue_min_fill").get<std::size_t>();
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"lr", c.lr},
       {"warmup_epochs", c.warmup_epochs},
       {"plateau_patience", c.plateau_patience},
       {"plateau_cooldown", c.plateau_cooldown},
       {"lr_decay_factor", c.lr_decay_factor},
       {"optimizer", std::string(to_string(c.optimizer))},
       {"momentum", c.momentum},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"seed", c.seed},
       {"loss", std::string(to_string(c.loss))},
       {"loss_config", c.loss_config},
       {"queue_capacity", c.queue_capacity},
       {"embed_dim", c.embed_dim},
       {"hidden_dim", c.hidden_dim}};
}

void from_json(const json& j, TrainConfig& c) {
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
  c.plateau_patience = j.at("plateau_patience").get<std::size_t>();
  c.plateau_cooldown = j.at("plateau_cooldown").get<std::size_t>();
  c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.momentum = j.at("momentum").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  c.loss_config = j.at("loss_config").get<LossConfig>();
  c.queue_capacity = j.at("queue_capacity").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
}

void to_json(json& j, const EpochLog& e) {
  j = {{"epoch", e.epoch},
       {"lr", e.lr},
       {"train_loss", e.train_loss},
       {"steps", e.steps},
       {"val_r1_ab", e.val_r1_ab},
       {"val_r5_ab", e.val_r5_ab},
       {"val_r10_ab", e.val_r10_ab},
       {"val_r1_ba", e.val_r1_ba},
       {"val_r5_ba", e.val_r5_ba},
       {"val_r10_ba", e.val_r10_ba},
       {"val_metric", e.val_metric}};
}

TrainState init_train_state(const TrainConfig& config, std::size_t d_x, std::size_t d_y,
                            std::size_t samples_per_epoch) {
  config.validate();
  TrainState s;
  s.config = config;
  s.rng.seed(config.seed);
  s.enc_x = make_encoder(d_x, config.embed_dim, config.hidden_dim, s.rng);
  s.enc_y = make_encoder(d_y, config.embed_dim, config.hidden_dim, s.rng);
  const std::size_t n_params = total_parameters(s);
  s.optimizer.first_moment.assign(n_params, 0.0);
  s.optimizer.second_moment.assign(n_params, 0.0);
  if (config.loss == LossKind::crossclr) {
    std::size_t capacity = config.queue_capacity;
    if (samples_per_epoch > 0) capacity = std::min(capacity, samples_per_epoch);
    s.queue.emplace(std::max(capacity, config.batch_size), d_x, d_y);
  }
  s.lr = warmup_lr(config, 0);
  return s;
}

LossOutput evaluate_loss(const TrainState& s, const EmbeddingBatch& hx, const EmbeddingBatch& hy,
                         const EmbeddingBatch& in_x, const EmbeddingBatch& in_y) {
  const LossConfig& lc = s.config.loss_config;
  switch (s.config.loss) {
    case LossKind::crossclr:
      if (s.queue) {
        const Projector px = [&s](const EmbeddingBatch& b) { return encoder_forward(s.enc_x, b); };
        const Projector py = [&s](const EmbeddingBatch& b) { return encoder_forward(s.enc_y, b); };
        return crossclr_queue(hx, hy, in_x, in_y, *s.queue, px, py, lc);
      }
      return crossclr_batch(hx, hy, in_x, in_y, lc);
    case LossKind::crossclr_batch: return crossclr_batch(hx, hy, in_x, in_y, lc);
    case LossKind::crossclr_multipos: return crossclr_multipos(hx, hy, in_x, in_y, lc);
    case LossKind::ntxent: return ntxent(hx, hy, lc.tau);
    case LossKind::clip: return clip_symmetric(hx, hy, lc.tau);
    case LossKind::max_margin: return max_margin(hx, hy, lc.margin);
  }
  throw Error(ErrorKind::InvalidArgument, "unhandled loss kind");
}

StepMetrics train_step(TrainState& s, const EmbeddingBatch& x, const EmbeddingBatch& y) {
  if (x.n() != s.config.batch_size || y.n() != s.config.batch_size) {
    throw Error(ErrorKind::DimensionMismatch, "batch size differs from the configured size");
  }
  std::optional<MemoryQueue> saved_queue;
  if (s.queue) {
    saved_queue = *s.queue;
    s.queue->enqueue(x, y);
  }
  const auto restore = [&] {
    if (saved_queue) s.queue = std::move(saved_queue);
  };

  ForwardCache cx, cy;
  LossOutput loss;
  try {
    cx = forward_cached(s.enc_x, x.data());
    cy = forward_cached(s.enc_y, y.data());
    loss = evaluate_loss(s, EmbeddingBatch(cx.output), EmbeddingBatch(cy.output), x, y);
  } catch (...) {
    restore();
    throw;
  }
  if (!std::isfinite(loss.value) || !all_finite(loss.grad_zx.values()) || !all_finite(loss.grad_zy.values())) {
    restore();
    throw Error(ErrorKind::NonFiniteLoss, "step " + std::to_string(s.step));
  }

  EncoderParams gx = backward(s.enc_x, cx, x.data(), loss.grad_zx);
  EncoderParams gy = backward(s.enc_y, cy, y.data(), loss.grad_zy);
  std::vector<double> grad;
  grad.reserve(total_parameters(s));
  const auto append = [&grad](std::span<double> v) { grad.insert(grad.end(), v.begin(), v.end()); };
  for_each_param(gx, append);
  for_each_param(gy, append);

  const TrainConfig& c = s.config;
  OptimizerState& opt = s.optimizer;
  ++opt.steps;
  std::size_t idx = 0;
  if (c.optimizer == OptimizerKind::adam) {
    const double t = static_cast<double>(opt.steps);
    const double bias1 = 1.0 - std::pow(c.momentum, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for_each_param(s, [&](std::span<double> p) {
      for (double& w : p) {
        const double g = grad[idx];
        double& m = opt.first_moment[idx];
        double& v = opt.second_moment[idx];
        m = c.momentum * m + (1.0 - c.momentum) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        w -= s.lr * (m / bias1) / (std::sqrt(v / bias2) + c.adam_eps);
        ++idx;
      }
    });
  } else {
    for_each_param(s, [&](std::span<double> p) {
      for (double& w : p) {
        double& velocity = opt.first_moment[idx];
        velocity = c.momentum * velocity + grad[idx];
        w -= s.lr * velocity;
        ++idx;
      }
    });
  }
  ++s.step;
  return {loss.value, std::move(loss.diagnostics)};
}

double warmup_lr(const TrainConfig& config, std::size_t epoch) {
  if (epoch >= config.warmup_epochs) return config.lr;
  const double frac = static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
  return config.lr * (0.1 + 0.9 * frac);
}

std::pair<EmbeddingBatch, EmbeddingBatch> embed_dataset(const TrainState& s,
                                                        const PairedEmbeddingDataset& ds) {
  return {encoder_forward(s.enc_x, EmbeddingBatch(ds.x)), encoder_forward(s.enc_y, EmbeddingBatch(ds.y))};
}

void run_epochs(TrainState& s, const PairedEmbeddingDataset& train, const PairedEmbeddingDataset& val,
                std::vector<EpochLog>& log) {
  const TrainConfig& c = s.config;
  const std::size_t n = train.size();
  const std::size_t n_batches = n / c.batch_size;
  if (n_batches == 0) throw Error(ErrorKind::EmptyDataset, "training set smaller than one batch");
  if (val.size() == 0) throw Error(ErrorKind::EmptyDataset, "validation set is empty");

  std::vector<std::size_t> ks;
  for (std::size_t k : {1, 5, 10})
    if (k <= val.size()) ks.push_back(k);
  const auto recall = [](const RetrievalReport& r, std::size_t k) {
    const auto it = r.recall_at.find(k);
    return it == r.recall_at.end() ? 1.0 : it->second;
  };

  std::vector<std::size_t> order(n);
  while (s.epoch < c.epochs) {
    s.lr = warmup_lr(c, s.epoch) * s.lr_scale;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), s.rng);
    EpochLog entry;
    entry.epoch = s.epoch;
    entry.lr = s.lr;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * c.batch_size, c.batch_size);
      loss_sum += train_step(s, gather(train.x, idx), gather(train.y, idx)).loss;
    }
    entry.steps = n_batches;
    entry.train_loss = loss_sum / static_cast<double>(n_batches);

    const auto [vx, vy] = embed_dataset(s, val);
    const auto [ab, ba] = evaluate_retrieval(vx, vy, ks);
    entry.val_r1_ab = recall(ab, 1);
    entry.val_r5_ab = recall(ab, 5);
    entry.val_r10_ab = recall(ab, 10);
    entry.val_r1_ba = recall(ba, 1);
    entry.val_r5_ba = recall(ba, 5);
    entry.val_r10_ba = recall(ba, 10);
    entry.val_metric = entry.val_r1_ab + entry.val_r1_ba;

    // Reduce on plateau with cooldown.
    if (entry.val_metric > s.best_metric) {
      s.best_metric = entry.val_metric;
      s.epochs_since_best = 0;
    } else {
      ++s.epochs_since_best;
    }
    if (s.cooldown_left > 0) {
      --s.cooldown_left;
      s.epochs_since_best = 0;
    } else if (s.epochs_since_best >= c.plateau_patience) {
      s.lr_scale *= c.lr_decay_factor;
      s.cooldown_left = c.plateau_cooldown;
      s.epochs_since_best = 0;
    }
    log.push_back(entry);
    ++s.epoch;
  }
}

FitResult fit(const TrainConfig& config, const PairedEmbeddingDataset& train,
              const PairedEmbeddingDataset& val) {
  if (train.size() == 0 || val.size() == 0) throw Error(ErrorKind::EmptyDataset, "empty dataset");
  const std::size_t per_epoch = (train.size() / config.batch_size) * config.batch_size;
  FitResult result{init_train_state(config, train.x.cols(), train.y.cols(), per_epoch), {}};
  run_epochs(result.state, train, val, result.log);
  return result;
}

std::string serialize_state(const TrainState& s) {
  Writer w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.bytes(json(s.config).dump());
  write_encoder(w, s.enc_x);
  write_encoder(w, s.enc_y);
  w.doubles(s.optimizer.first_moment);
  w.doubles(s.optimizer.second_moment);
  w.u64(s.optimizer.steps);
  w.u32(s.queue ? 1 : 0);
  if (s.queue) {
    w.u64(s.queue->capacity());
    w.u64(s.queue->dim_x());
    w.u64(s.queue->dim_y());
    w.u64(s.queue->size());
    if (s.queue->size() > 0) {
      const auto [qx, qy] = s.queue->snapshot();
      w.matrix(qx.data());
      w.matrix(qy.data());
    }
  }
  w.u64(s.epoch);
  w.u64(s.step);
  w.f64(s.lr);
  w.f64(s.lr_scale);
  w.f64(s.best_metric);
  w.u64(s.epochs_since_best);
  w.u64(s.cooldown_left);
  std::ostringstream rng;
  rng << s.rng;
  w.bytes(rng.str());
  return w.take();
}

TrainState deserialize_state(std::string_view blob) {
  if (blob.size() < 4 || blob.substr(0, 4) != kCheckpointMagic) {
    throw Error(ErrorKind::BadMagic, "not a checkpoint");
  }
  Reader r(blob.substr(4));
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(v));
  }
  TrainState s;
  try {
    s.config = json::parse(r.bytes()).get<TrainConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigParseError, std::string("checkpoint config: ") + e.what());
  }
  s.enc_x = read_encoder(r);
  s.enc_y = read_encoder(r);
  s.optimizer.first_moment = r.doubles();
  s.optimizer.second_moment = r.doubles();
  s.optimizer.steps = r.u64();
  if (r.u32() != 0) {
    const std::size_t capacity = r.u64(), dx = r.u64(), dy = r.u64(), size = r.u64();
    s.queue.emplace(capacity, dx, dy);
    if (size > 0) {
      EmbeddingBatch qx(r.matrix());
      EmbeddingBatch qy(r.matrix());
      s.queue->enqueue(qx, qy);
    }
  }
  s.epoch = r.u64();
  s.step = r.u64();
  s.lr = r.f64();
  s.lr_scale = r.f64();
  s.best_metric = r.f64();
  s.epochs_since_best = r.u64();
  s.cooldown_left = r.u64();
  std::istringstream rng(r.bytes());
  rng >> s.rng;
  if (!r.done()) throw Error(ErrorKind::ManifestMismatch, "trailing bytes after checkpoint state");
  return s;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const std::string blob = serialize_state(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::PathError, "cannot write " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::PathError, "cannot open " + path.string());
  const std::string blob{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_state(blob);
}

}  // namespace crossclr
