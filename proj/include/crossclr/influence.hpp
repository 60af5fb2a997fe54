#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "crossclr/embedding.hpp"

namespace crossclr {

/// How connectivity is compared against the pruning threshold.
///   absolute      score = C
///   max_relative  score = C / max(C)
enum class ThresholdMode { absolute, max_relative };

/// How connectivity is rescaled before exponentiation into weights.
///   none         c_hat = C
///   sum_to_one   c_hat = C / sum(C)
enum class WeightNorm { none, sum_to_one };

using Mask = std::vector<bool>;

struct InfluenceProfile {
  std::vector<double> connectivity;
  Mask influential;
  std::vector<double> weights;
  ThresholdMode normalization_mode = ThresholdMode::max_relative;
  WeightNorm weight_norm = WeightNorm::sum_to_one;
  double gamma = 0.9;
  double kappa = 0.0035;
};

/// Mean cosine similarity of each reference row to every target row.
///
/// With `exclude_self` the two batches must be the same set (same n); the
/// diagonal term is dropped and the divisor becomes n - 1.
std::vector<double> connectivity(const EmbeddingBatch& reference, const EmbeddingBatch& targets,
                                 bool exclude_self);

/// influential[i] = score(i) > gamma, strictly.
Mask influential_mask(std::span<const double> c, double gamma, ThresholdMode mode);

/// w_i = exp(c_hat_i / kappa). Throws WeightOverflow when an exponent
/// exceeds 700.
std::vector<double> sample_weights(std::span<const double> c, double kappa, WeightNorm norm);

/// Connectivity over the batch itself (self excluded), plus mask and weights.
InfluenceProfile influence_profile(const EmbeddingBatch& inputs, double gamma, double kappa,
                                   ThresholdMode mode, WeightNorm norm);

ThresholdMode parse_threshold_mode(std::string_view name);
WeightNorm parse_weight_norm(std::string_view name);
std::string_view to_string(ThresholdMode mode);
std::string_view to_string(WeightNorm norm);

}  // namespace crossclr
