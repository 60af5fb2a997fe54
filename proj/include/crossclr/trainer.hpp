#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crossclr/dataset.hpp"
#include "crossclr/embedding.hpp"
#include "crossclr/losses.hpp"
#include "crossclr/memory_queue.hpp"

namespace crossclr {

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Linear projection, optionally followed by GELU and a second linear layer.
/// Outputs are l2-normalized.
struct EncoderParams {
  DenseLayer first;
  std::optional<DenseLayer> second;

  std::size_t d_in() const { return first.weight.cols(); }
  std::size_t d_out() const { return second ? second->weight.rows() : first.weight.rows(); }
  std::size_t parameter_count() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias.
/// `hidden` = 0 gives a single layer.
EncoderParams make_encoder(std::size_t d_in, std::size_t d_out, std::size_t hidden,
                           std::mt19937_64& rng);

/// Projection before normalization (the loss normalizes internally).
Matrix encoder_project(const EncoderParams& params, const Matrix& inputs);

EmbeddingBatch encoder_forward(const EncoderParams& params, const EmbeddingBatch& batch);

enum class OptimizerKind { adam, sgd_momentum };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 40;
  double lr = 7e-4;
  std::size_t warmup_epochs = 4;
  std::size_t plateau_patience = 6;
  std::size_t plateau_cooldown = 4;
  double lr_decay_factor = 0.1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.56;  // SGD momentum, and Adam's beta1
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::crossclr;
  LossConfig loss_config = LossConfig::youcook2();
  std::size_t queue_capacity = 3000;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t steps = 0;
};

struct TrainState {
  TrainConfig config;
  EncoderParams enc_x;
  EncoderParams enc_y;
  OptimizerState optimizer;
  std::optional<MemoryQueue> queue;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double lr = 0.0;
  double lr_scale = 1.0;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;
  std::size_t cooldown_left = 0;
  std::mt19937_64 rng;
};

/// Fresh state: encoders initialized from the config seed. The queue is
/// created for LossKind::crossclr with capacity min(queue_capacity,
/// `samples_per_epoch`) so it never holds two copies of one training pair;
/// pass 0 to use queue_capacity as is.
TrainState init_train_state(const TrainConfig& config, std::size_t d_x, std::size_t d_y,
                            std::size_t samples_per_epoch = 0);

struct StepMetrics {
  double loss = 0.0;
  LossDiagnostics diagnostics;
};

/// One optimization step at state.lr: enqueue, encode, loss, backprop, update.
/// Throws NonFiniteLoss before touching the state when the loss or its
/// gradient is not finite.
StepMetrics train_step(TrainState& state, const EmbeddingBatch& x, const EmbeddingBatch& y);

/// Loss value and gradients for the configured kind on already-projected
/// (unnormalized) embeddings.
LossOutput evaluate_loss(const TrainState& state, const EmbeddingBatch& hx, const EmbeddingBatch& hy,
                         const EmbeddingBatch& in_x, const EmbeddingBatch& in_y);

/// Learning rate for `epoch` before plateau decay: linear warmup from lr/10.
double warmup_lr(const TrainConfig& config, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::size_t steps = 0;
  double val_r1_ab = 0.0, val_r5_ab = 0.0, val_r10_ab = 0.0;
  double val_r1_ba = 0.0, val_r5_ba = 0.0, val_r10_ba = 0.0;
  double val_metric = 0.0;  // R@1 A->B + R@1 B->A
};

void to_json(nlohmann::json& j, const EpochLog& e);

struct FitResult {
  TrainState state;
  std::vector<EpochLog> log;
};

FitResult fit(const TrainConfig& config, const PairedEmbeddingDataset& train,
              const PairedEmbeddingDataset& val);

/// Continues training from `state` until state.config.epochs, appending to
/// `log`.
void run_epochs(TrainState& state, const PairedEmbeddingDataset& train,
                const PairedEmbeddingDataset& val, std::vector<EpochLog>& log);

/// Encodes a whole dataset with the state's encoders.
std::pair<EmbeddingBatch, EmbeddingBatch> embed_dataset(const TrainState& state,
                                                        const PairedEmbeddingDataset& ds);

/// Versioned binary blob: "XCKP", u32 version, config JSON echo, then all
/// numeric state as little-endian f64 / u64.
std::string serialize_state(const TrainState& state);
TrainState deserialize_state(std::string_view blob);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace crossclr
