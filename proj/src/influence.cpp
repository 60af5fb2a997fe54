#include "crossclr/influence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crossclr/errors.hpp"

namespace crossclr {

namespace {

constexpr double kDegenerate = 1e-12;
constexpr double kMaxExponent = 700.0;

}  // namespace

std::vector<double> connectivity(const EmbeddingBatch& reference, const EmbeddingBatch& targets,
                                 bool exclude_self) {
  if (reference.dim() != targets.dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                "connectivity between dim " + std::to_string(reference.dim()) + " and " +
                    std::to_string(targets.dim()));
  }
  if (exclude_self) {
    if (reference.n() != targets.n()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "self-excluded connectivity needs the same set on both sides");
    }
    if (reference.n() < 2) {
      throw Error(ErrorKind::DegenerateSelfExclusion, "need at least two samples");
    }
  }
  const EmbeddingBatch ref = reference.normalized() ? reference : l2_normalize(reference);
  const EmbeddingBatch tgt = targets.normalized() ? targets : l2_normalize(targets);

  // mean_j <r_i, t_j> = <r_i, sum_j t_j> / M; O((N + M) D) instead of O(N M D).
  const std::size_t d = tgt.dim();
  std::vector<double> total(d, 0.0);
  for (std::size_t j = 0; j < tgt.n(); ++j) {
    const auto t = tgt.row(j);
    for (std::size_t k = 0; k < d; ++k) total[k] += t[k];
  }

  std::vector<double> c(ref.n());
  const double m = static_cast<double>(tgt.n());
  for (std::size_t i = 0; i < ref.n(); ++i) {
    const double s = dot(ref.row(i), total);
    c[i] = exclude_self ? (s - dot(ref.row(i), ref.row(i))) / (m - 1.0) : s / m;
  }
  return c;
}

Mask influential_mask(std::span<const double> c, double gamma, ThresholdMode mode) {
  Mask mask(c.size(), false);
  if (c.empty()) return mask;
  double scale = 1.0;
  if (mode == ThresholdMode::max_relative) {
    const double max_c = *std::max_element(c.begin(), c.end());
    if (!(max_c > kDegenerate)) {
      throw Error(ErrorKind::DegenerateScores,
                  "max connectivity " + std::to_string(max_c) + " is not positive");
    }
    scale = max_c;
  }
  for (std::size_t i = 0; i < c.size(); ++i) mask[i] = (c[i] / scale) > gamma;
  return mask;
}

std::vector<double> sample_weights(std::span<const double> c, double kappa, WeightNorm norm) {
  if (!(kappa > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "kappa must be positive");
  }
  double scale = 1.0;
  if (norm == WeightNorm::sum_to_one) {
    double total = 0.0;
    for (double v : c) total += v;
    if (!(total > kDegenerate)) {
      throw Error(ErrorKind::DegenerateScores,
                  "connectivity sums to " + std::to_string(total));
    }
    scale = total;
  }
  std::vector<double> w(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double exponent = (c[i] / scale) / kappa;
    if (exponent > kMaxExponent) {
      throw Error(ErrorKind::WeightOverflow,
                  "exponent " + std::to_string(exponent) + " at sample " + std::to_string(i));
    }
    w[i] = std::exp(exponent);
  }
  return w;
}

InfluenceProfile influence_profile(const EmbeddingBatch& inputs, double gamma, double kappa,
                                   ThresholdMode mode, WeightNorm norm) {
  InfluenceProfile p;
  p.connectivity = connectivity(inputs, inputs, true);
  p.influential = influential_mask(p.connectivity, gamma, mode);
  p.weights = sample_weights(p.connectivity, kappa, norm);
  p.normalization_mode = mode;
  p.weight_norm = norm;
  p.gamma = gamma;
  p.kappa = kappa;
  return p;
}

ThresholdMode parse_threshold_mode(std::string_view name) {
  if (name == "absolute") return ThresholdMode::absolute;
  if (name == "max_relative") return ThresholdMode::max_relative;
  throw Error(ErrorKind::ConfigParseError, "unknown threshold mode '" + std::string(name) + "'");
}

WeightNorm parse_weight_norm(std::string_view name) {
  if (name == "none") return WeightNorm::none;
  if (name == "sum_to_one") return WeightNorm::sum_to_one;
  throw Error(ErrorKind::ConfigParseError, "unknown weight norm '" + std::string(name) + "'");
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::absolute ? "absolute" : "max_relative";
}

std::string_view to_string(WeightNorm norm) {
  return norm == WeightNorm::none ? "none" : "sum_to_one";
}

}  // namespace crossclr
