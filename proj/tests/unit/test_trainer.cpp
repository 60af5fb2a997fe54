#include <filesystem>
#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "crossclr/trainer.hpp"
#include "helpers.hpp"

using namespace crossclr;
using testing_support::error_of;

namespace {

PairedEmbeddingDataset small_data(std::size_t n, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_pairs = n;
  s.n_clusters = 8;
  s.d_x = 12;
  s.d_y = 10;
  s.d_latent = 6;
  s.seed = seed;
  return generate_synthetic(s);
}

TrainConfig small_config(LossKind kind) {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 3;
  c.embed_dim = 8;
  c.queue_capacity = 64;
  c.loss = kind;
  c.seed = 5;
  c.lr = 1e-2;
  c.loss_config.tau = 0.1;
  return c;
}

std::vector<double> all_params(const TrainState& s) {
  std::vector<double> v;
  for (const EncoderParams* e : {&s.enc_x, &s.enc_y}) {
    const auto w = e->first.weight.values();
    v.insert(v.end(), w.begin(), w.end());
    v.insert(v.end(), e->first.bias.begin(), e->first.bias.end());
  }
  return v;
}

}  // namespace

TEST_CASE("encoder maps") {
  EncoderParams id{{Matrix(3, 3), std::vector<double>(3, 0.0)}, std::nullopt};
  for (std::size_t i = 0; i < 3; ++i) id.first.weight(i, i) = 1.0;
  const auto rows = EmbeddingBatch::from_rows({{0.6, 0.8, 0}, {0, 0, 1}});
  CHECK(encoder_forward(id, rows).data() == rows.data());

  EncoderParams constant{{Matrix(3, 3), {1.0, 0.0, 0.0}}, std::nullopt};
  const auto out = encoder_forward(constant, rows);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out.data()(i, 0) == 1.0);
    CHECK(out.data()(i, 1) == 0.0);
  }

  std::mt19937_64 rng(1);
  const auto enc = make_encoder(12, 5, 7, rng);
  CHECK(enc.second.has_value());
  CHECK(enc.parameter_count() == 12 * 7 + 7 + 7 * 5 + 5);
  const auto z = encoder_forward(enc, testing_support::random_batch(9, 12, rng));
  for (std::size_t i = 0; i < z.n(); ++i) CHECK(std::abs(l2_norm(z.row(i)) - 1.0) < 1e-9);
}

TEST_CASE("warmup schedule") {
  TrainConfig c;
  for (std::size_t e = 0; e < 4; ++e)
    CHECK(warmup_lr(c, e) == doctest::Approx(c.lr * (0.1 + 0.9 * static_cast<double>(e) / 4.0)));
  CHECK(warmup_lr(c, 4) == c.lr);
  CHECK(warmup_lr(c, 30) == c.lr);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const auto ds = small_data(32, 2);
  for (const auto kind : {LossKind::crossclr, LossKind::ntxent, LossKind::max_margin}) {
    TrainState s = init_train_state(small_config(kind), 12, 10);
    s.lr = 0.0;
    const auto before = all_params(s);
    train_step(s, EmbeddingBatch(ds.slice(0, 16).x), EmbeddingBatch(ds.slice(0, 16).y));
    CHECK(all_params(s) == before);
  }
}

TEST_CASE("steps are deterministic") {
  const auto ds = small_data(32, 3);
  const auto run = [&] {
    TrainState s = init_train_state(small_config(LossKind::crossclr), 12, 10);
    for (int k = 0; k < 2; ++k)
      train_step(s, EmbeddingBatch(ds.slice(16 * k, 16 * k + 16).x), EmbeddingBatch(ds.slice(16 * k, 16 * k + 16).y));
    return all_params(s);
  };
  CHECK(run() == run());
}

TEST_CASE("training reduces the loss") {
  const auto ds = small_data(64, 4);
  for (const auto kind : {LossKind::crossclr, LossKind::crossclr_batch, LossKind::clip}) {
    TrainConfig c = small_config(kind);
    c.hidden_dim = kind == LossKind::clip ? 16 : 0;
    c.loss_config.gamma = 0.95;
    TrainState s = init_train_state(c, 12, 10);
    s.lr = 5e-3;
    const EmbeddingBatch x(ds.slice(0, 16).x), y(ds.slice(0, 16).y);
    const double first = train_step(s, x, y).loss;
    double last = first;
    for (int k = 0; k < 199; ++k) last = train_step(s, x, y).loss;
    CHECK(last < first);
  }
}

TEST_CASE("fit, checkpoint and resume") {
  const auto ds = small_data(96, 6);
  const auto train = ds.slice(0, 64), val = ds.slice(64, 96);
  TrainConfig c = small_config(LossKind::crossclr);
  c.epochs = 0;
  CHECK(fit(c, train, val).log.empty());

  c.epochs = 4;
  const FitResult full = fit(c, train, val);
  CHECK(full.log.size() == 4);
  CHECK(full.log[0].steps == 4);
  CHECK(full.state.queue->capacity() == 64);

  TrainConfig half = c;
  half.epochs = 2;
  FitResult part = fit(half, train, val);
  const auto path = std::filesystem::temp_directory_path() / "crossclr_unit_resume.ckpt";
  save_checkpoint(part.state, path);
  TrainState resumed = load_checkpoint(path);
  CHECK(serialize_state(resumed) == serialize_state(part.state));
  resumed.config.epochs = 4;
  run_epochs(resumed, train, val, part.log);
  CHECK(all_params(resumed) == all_params(full.state));
  CHECK(part.log.back().train_loss == full.log.back().train_loss);
}

TEST_CASE("checkpoint guards") {
  CHECK(error_of([] { deserialize_state("JUNKJUNK"); }) == ErrorKind::BadMagic);
  TrainState s = init_train_state(small_config(LossKind::ntxent), 4, 4);
  std::string blob = serialize_state(s);
  CHECK(error_of([&] { deserialize_state(blob.substr(0, blob.size() / 2)); }) == ErrorKind::TruncatedFile);
  blob[4] = 9;
  CHECK(error_of([&] { deserialize_state(blob); }) == ErrorKind::VersionMismatch);
}

TEST_CASE("config JSON round trip and validation") {
  TrainConfig c = small_config(LossKind::crossclr_multipos);
  c.optimizer = OptimizerKind::sgd_momentum;
  c.loss_config.reduction = Reduction::literal_mean;
  const nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  c.batch_size = 1;
  CHECK(error_of([&] { c.validate(); }).has_value());
}
