#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string_view>
#include <vector>

#include "crossclr/embedding.hpp"
#include "crossclr/influence.hpp"
#include "crossclr/memory_queue.hpp"

namespace crossclr {

enum class LossKind {
  crossclr,           // queue mode when a queue is available, batch mode otherwise
  crossclr_batch,
  crossclr_multipos,
  ntxent,
  clip,
  max_margin,
};

LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(LossKind kind);

/// How per-sample losses are reduced.
///   weighted_mean  sum_i w_i l_i / sum_i w_i
///   literal_mean   sum_i w_i l_i / N
enum class Reduction { weighted_mean, literal_mean };

Reduction parse_reduction(std::string_view name);
std::string_view to_string(Reduction r);

struct LossConfig {
  double tau = 0.03;
  double lambda_intra = 0.8;
  double gamma = 0.9;
  double kappa = 0.0035;
  ThresholdMode threshold_mode = ThresholdMode::max_relative;
  WeightNorm weight_norm = WeightNorm::sum_to_one;
  Reduction reduction = Reduction::weighted_mean;
  bool pruning_enabled = true;
  bool weighting_enabled = true;
  bool intra_enabled = true;
  double margin = 0.2;
  double beta = 0.15;
  std::size_t top_k = 2;
  // Queue fill below which pruning and weighting are disabled; 0 means
  // twice the batch size.
  std::size_t queue_min_fill = 0;

  static LossConfig youcook2();
  static LossConfig lsmdc();

  /// Effective intra-modality multiplier (0 when intra alignment is off).
  double effective_lambda() const { return intra_enabled ? lambda_intra : 0.0; }

  void validate() const;
};

struct LossDiagnostics {
  // Samples removed from the inter-modality negative sets (per batch row).
  Mask pruned_inter_x, pruned_inter_y;
  // Samples removed from the intra-modality negative sets (per batch row in
  // batch mode, per queue slot in queue mode).
  Mask pruned_intra_x, pruned_intra_y;
  std::vector<double> weights_x, weights_y;
  // Unreduced per-anchor losses (contrastive kinds).
  std::vector<double> per_sample_x, per_sample_y;
  std::size_t n_negatives_x = 0;
  std::size_t n_negatives_y = 0;
  bool cold_start = false;
  // Smallest |hinge argument| for piecewise-linear losses; +inf otherwise.
  double min_kink_distance = std::numeric_limits<double>::infinity();
};

/// Loss value and exact gradients.
///
/// Every loss l2-normalizes its embedding arguments internally, so grad_zx and
/// grad_zy are derivatives with respect to the matrices exactly as passed in
/// (for unit rows this is the gradient projected onto the sphere's tangent).
struct LossOutput {
  double value = 0.0;
  Matrix grad_zx;
  Matrix grad_zy;
  LossDiagnostics diagnostics;
};

/// In-batch CrossCLR: inter + intra negatives, influence pruning and
/// proximity weighting computed from the raw inputs `in_x`, `in_y`.
LossOutput crossclr_batch(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                          const EmbeddingBatch& in_x, const EmbeddingBatch& in_y,
                          const LossConfig& cfg);

/// Maps raw queued inputs into the joint space.
using Projector = std::function<EmbeddingBatch(const EmbeddingBatch&)>;

/// Queue CrossCLR. The queue must already hold the current batch as its
/// newest n entries. Intra-modality negatives are every queued sample except
/// the anchor's own slot, projected through `enc_x` / `enc_y` and treated as
/// constants. Connectivity is computed over the whole queue with the
/// sample's own slot excluded.
LossOutput crossclr_queue(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                          const EmbeddingBatch& in_x, const EmbeddingBatch& in_y,
                          const MemoryQueue& queue, const Projector& enc_x,
                          const Projector& enc_y, const LossConfig& cfg);

/// CrossCLR with extra positives: for anchor x_i the numerator gains
/// beta * sum over y_k, k among the top_k influential x samples most similar
/// to x_i in input space (and symmetrically for y anchors).
LossOutput crossclr_multipos(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                             const EmbeddingBatch& in_x, const EmbeddingBatch& in_y,
                             const LossConfig& cfg);

/// Symmetric NT-Xent: each anchor sees 2N - 2 negatives (both modalities).
LossOutput ntxent(const EmbeddingBatch& zx, const EmbeddingBatch& zy, double tau);

/// Symmetric InfoNCE with cross-modal negatives only.
LossOutput clip_symmetric(const EmbeddingBatch& zx, const EmbeddingBatch& zy, double tau);

/// Bidirectional hinge, averaged over both directions and all i != j.
LossOutput max_margin(const EmbeddingBatch& zx, const EmbeddingBatch& zy, double margin);

using LossClosure = std::function<LossOutput(const EmbeddingBatch&, const EmbeddingBatch&)>;

struct GradCheckOptions {
  double h = 1e-5;
  std::uint64_t seed = 0;
  std::size_t max_coords = 0;  // 0 checks every coordinate
};

/// Central differences against the analytic gradient. Returns
/// max |g_fd - g| / max(1, |g|) over the checked coordinates. Coordinates
/// whose perturbation passes within 10h of a hinge kink are skipped.
double finite_diff_check(const LossClosure& loss_fn, const EmbeddingBatch& zx,
                         const EmbeddingBatch& zy, const GradCheckOptions& options = {});

}  // namespace crossclr
