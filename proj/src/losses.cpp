#include "crossclr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "crossclr/errors.hpp"

namespace crossclr {

namespace {

// Unit rows plus the original norms, needed to pull gradients back through
// the normalization.
struct Normalized {
  Matrix unit;
  std::vector<double> norms;
};

Normalized normalize_rows(const EmbeddingBatch& b) {
  Normalized out{b.data(), std::vector<double>(b.n())};
  for (std::size_t i = 0; i < b.n(); ++i) {
    auto r = out.unit.row(i);
    const double norm = l2_norm(r);
    if (norm <= 1e-12) {
      throw Error(ErrorKind::ZeroVectorRow, "row " + std::to_string(i) + " has zero norm");
    }
    for (double& v : r) v /= norm;
    out.norms[i] = norm;
  }
  return out;
}

// d/dx of x/|x| applied to g: (g - <u, g> u) / |x|.
Matrix pull_back(const Normalized& n, const Matrix& grad_unit) {
  Matrix out(grad_unit.rows(), grad_unit.cols());
  for (std::size_t i = 0; i < grad_unit.rows(); ++i) {
    const auto u = n.unit.row(i);
    const auto g = grad_unit.row(i);
    const double radial = dot(u, g);
    auto o = out.row(i);
    for (std::size_t k = 0; k < g.size(); ++k) o[k] = (g[k] - radial * u[k]) / n.norms[i];
  }
  return out;
}

// out += G * B
void add_matmul(Matrix& out, const Matrix& g, const Matrix& b) {
  const std::size_t d = b.cols();
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t j = 0; j < g.cols(); ++j) {
      const double c = g(i, j);
      if (c == 0.0) continue;
      const double* bj = b.row(j).data();
      for (std::size_t k = 0; k < d; ++k) o[k] += c * bj[k];
    }
  }
}

// out += G^T * A
void add_matmul_tn(Matrix& out, const Matrix& g, const Matrix& a) {
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t j = 0; j < g.cols(); ++j) {
      const double c = g(i, j);
      if (c == 0.0) continue;
      double* o = out.row(j).data();
      for (std::size_t k = 0; k < d; ++k) o[k] += c * ai[k];
    }
  }
}

// A block of cosine scores between anchor rows and target rows, with the
// accumulated dL/dscore. A null target gradient marks the targets constant.
struct Block {
  const Matrix* anchors;
  const Matrix* targets;
  Matrix* anchor_grad;
  Matrix* target_grad;
  Matrix scores;
  Matrix coef;

  Block(const Matrix& a, const Matrix& t, Matrix* ga, Matrix* gt)
      : anchors(&a), targets(&t), anchor_grad(ga), target_grad(gt),
        scores(inner_products(a, t)), coef(a.rows(), t.rows()) {}

  void backprop() const {
    add_matmul(*anchor_grad, coef, *targets);
    if (target_grad != nullptr) add_matmul_tn(*target_grad, coef, *anchors);
  }
};

// One exponential term of a contrastive ratio: exp(score / tau + log_mult),
// present in the numerator, the denominator, or both.
struct Term {
  std::size_t block;
  std::size_t col;
  double log_mult;
  bool numerator;
  bool denominator;
};

// l = logsumexp(denominator logits) - logsumexp(numerator logits) for the
// anchor at `row`; adds scale * dl/dscore into the block coefficients.
double contrast_anchor(std::vector<Block>& blocks, std::size_t row, const std::vector<Term>& terms,
                       double tau, double scale) {
  std::vector<double> logits(terms.size());
  double max_num = -std::numeric_limits<double>::infinity();
  double max_den = max_num;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const Term& term = terms[t];
    logits[t] = blocks[term.block].scores(row, term.col) / tau + term.log_mult;
    if (term.numerator) max_num = std::max(max_num, logits[t]);
    if (term.denominator) max_den = std::max(max_den, logits[t]);
  }
  double sum_num = 0.0, sum_den = 0.0;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    if (terms[t].numerator) sum_num += std::exp(logits[t] - max_num);
    if (terms[t].denominator) sum_den += std::exp(logits[t] - max_den);
  }
  const double loss = (max_den + std::log(sum_den)) - (max_num + std::log(sum_num));
  if (scale != 0.0) {
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const Term& term = terms[t];
      double d = 0.0;
      if (term.denominator) d += std::exp(logits[t] - max_den) / sum_den;
      if (term.numerator) d -= std::exp(logits[t] - max_num) / sum_num;
      blocks[term.block].coef(row, term.col) += scale * d / tau;
    }
  }
  return loss;
}

void require_pair(const EmbeddingBatch& zx, const EmbeddingBatch& zy) {
  if (zx.n() != zy.n()) {
    throw Error(ErrorKind::DimensionMismatch,
                "batch sizes differ: " + std::to_string(zx.n()) + " vs " + std::to_string(zy.n()));
  }
  if (zx.dim() != zy.dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                "embedding dims differ: " + std::to_string(zx.dim()) + " vs " +
                    std::to_string(zy.dim()));
  }
  if (zx.n() < 2) throw Error(ErrorKind::BatchTooSmall, "need at least two pairs");
}

void require_inputs(const EmbeddingBatch& zx, const EmbeddingBatch& in_x, const EmbeddingBatch& in_y) {
  if (in_x.n() != zx.n() || in_y.n() != zx.n()) {
    throw Error(ErrorKind::DimensionMismatch, "input batches must have one row per pair");
  }
}

void require_tau(double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::NonPositiveTemperature, "tau = " + std::to_string(tau));
}

void require_finite(double value) {
  if (!std::isfinite(value)) throw Error(ErrorKind::NonFiniteLoss, "loss evaluated to non-finite");
}

// Per-anchor reduction factors (the 1/2 of (L_x + L_y)/2 included).
std::vector<double> reduction_scales(const std::vector<double>& w, Reduction r) {
  const double denom = r == Reduction::weighted_mean
                           ? std::accumulate(w.begin(), w.end(), 0.0)
                           : static_cast<double>(w.size());
  std::vector<double> s(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) s[i] = 0.5 * w[i] / denom;
  return s;
}

struct ModalityInfluence {
  Mask prune_inter;
  Mask prune_intra;
  Mask influential;
  std::vector<double> weights;
};

// Batch-mode influence for one modality. The influential mask is always
// computed when `need_mask` is set; pruning only uses it when enabled.
ModalityInfluence batch_influence(const EmbeddingBatch& inputs, const LossConfig& cfg, bool need_mask) {
  const std::size_t n = inputs.n();
  ModalityInfluence mi{Mask(n, false), Mask(n, false), Mask(n, false), std::vector<double>(n, 1.0)};
  const bool any = cfg.pruning_enabled || cfg.weighting_enabled || need_mask;
  if (!any) return mi;
  const auto c = connectivity(inputs, inputs, true);
  if (cfg.pruning_enabled || need_mask) mi.influential = influential_mask(c, cfg.gamma, cfg.threshold_mode);
  if (cfg.pruning_enabled) {
    mi.prune_inter = mi.influential;
    mi.prune_intra = mi.influential;
  }
  if (cfg.weighting_enabled) mi.weights = sample_weights(c, cfg.kappa, cfg.weight_norm);
  return mi;
}

// Indices k != i of influential samples ranked by input cosine to sample i,
// descending (ties to the lower index), truncated to top_k.
std::vector<std::size_t> extra_positives(const Matrix& input_cos, const Mask& influential,
                                         std::size_t i, std::size_t top_k) {
  std::vector<std::size_t> cand;
  for (std::size_t k = 0; k < influential.size(); ++k)
    if (k != i && influential[k]) cand.push_back(k);
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    return input_cos(i, a) > input_cos(i, b);
  });
  if (cand.size() > top_k) cand.resize(top_k);
  return cand;
}

struct Multipos {
  double log_beta;
  std::size_t top_k;
  Matrix input_cos_x, input_cos_y;
};

// Shared body of crossclr_batch and crossclr_multipos.
LossOutput crossclr_in_batch(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                             const EmbeddingBatch& in_x, const EmbeddingBatch& in_y,
                             const LossConfig& cfg, const Multipos* mp) {
  cfg.validate();
  require_pair(zx, zy);
  require_inputs(zx, in_x, in_y);
  const std::size_t n = zx.n();

  const auto ix = batch_influence(in_x, cfg, mp != nullptr);
  const auto iy = batch_influence(in_y, cfg, mp != nullptr);
  if (mp != nullptr) {
    const auto count = [](const Mask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), true)); };
    if (mp->top_k > count(ix.influential) || mp->top_k > count(iy.influential)) {
      throw Error(ErrorKind::KExceedsInfluentialSet,
                  "top_k = " + std::to_string(mp->top_k) + " but influential sets hold " +
                      std::to_string(count(ix.influential)) + " and " +
                      std::to_string(count(iy.influential)));
    }
  }

  const Normalized nx = normalize_rows(zx);
  const Normalized ny = normalize_rows(zy);
  Matrix gx(n, zx.dim()), gy(n, zy.dim());
  std::vector<Block> blocks;
  blocks.reserve(4);
  blocks.emplace_back(nx.unit, ny.unit, &gx, &gy);  // 0: x -> y
  blocks.emplace_back(nx.unit, nx.unit, &gx, &gx);  // 1: x -> x
  blocks.emplace_back(ny.unit, nx.unit, &gy, &gx);  // 2: y -> x
  blocks.emplace_back(ny.unit, ny.unit, &gy, &gy);  // 3: y -> y

  const double lambda = cfg.effective_lambda();
  const auto sx = reduction_scales(ix.weights, cfg.reduction);
  const auto sy = reduction_scales(iy.weights, cfg.reduction);

  LossOutput out;
  auto& diag = out.diagnostics;
  double value = 0.0;
  std::vector<Term> terms;
  const auto run_side = [&](std::size_t inter, std::size_t intra, const ModalityInfluence& mi,
                            const std::vector<double>& scales, const Matrix* input_cos,
                            std::size_t& n_neg, std::vector<double>& per_sample) {
    for (std::size_t i = 0; i < n; ++i) {
      terms.clear();
      terms.push_back({inter, i, 0.0, true, true});
      for (std::size_t k = 0; k < n; ++k)
        if (k != i && !mi.prune_inter[k]) terms.push_back({inter, k, 0.0, false, true});
      if (lambda > 0.0) {
        const double log_lambda = std::log(lambda);
        for (std::size_t k = 0; k < n; ++k)
          if (k != i && !mi.prune_intra[k]) terms.push_back({intra, k, log_lambda, false, true});
      }
      const std::size_t negatives = terms.size() - 1;
      if (negatives == 0) {
        throw Error(ErrorKind::InsufficientNegatives,
                    "pruning removed every negative for anchor " + std::to_string(i));
      }
      n_neg += negatives;
      if (mp != nullptr && std::isfinite(mp->log_beta)) {
        for (std::size_t k : extra_positives(*input_cos, mi.influential, i, mp->top_k))
          terms.push_back({inter, k, mp->log_beta, true, false});
      }
      per_sample.push_back(contrast_anchor(blocks, i, terms, cfg.tau, scales[i]));
      value += scales[i] * per_sample.back();
    }
  };
  run_side(0, 1, ix, sx, mp ? &mp->input_cos_x : nullptr, diag.n_negatives_x, diag.per_sample_x);
  run_side(2, 3, iy, sy, mp ? &mp->input_cos_y : nullptr, diag.n_negatives_y, diag.per_sample_y);
  require_finite(value);

  for (const Block& b : blocks) b.backprop();
  out.value = value;
  out.grad_zx = pull_back(nx, gx);
  out.grad_zy = pull_back(ny, gy);
  diag.pruned_inter_x = ix.prune_inter;
  diag.pruned_inter_y = iy.prune_inter;
  diag.pruned_intra_x = ix.prune_intra;
  diag.pruned_intra_y = iy.prune_intra;
  diag.weights_x = ix.weights;
  diag.weights_y = iy.weights;
  return out;
}

// Generic symmetric InfoNCE over in-batch blocks; `same_modality` adds the
// N - 1 same-modality negatives per anchor (NT-Xent).
LossOutput symmetric_infonce(const EmbeddingBatch& zx, const EmbeddingBatch& zy, double tau,
                             bool same_modality) {
  require_tau(tau);
  require_pair(zx, zy);
  const std::size_t n = zx.n();
  const Normalized nx = normalize_rows(zx);
  const Normalized ny = normalize_rows(zy);
  Matrix gx(n, zx.dim()), gy(n, zy.dim());
  std::vector<Block> blocks;
  blocks.reserve(4);
  blocks.emplace_back(nx.unit, ny.unit, &gx, &gy);
  blocks.emplace_back(ny.unit, nx.unit, &gy, &gx);
  if (same_modality) {
    blocks.emplace_back(nx.unit, nx.unit, &gx, &gx);
    blocks.emplace_back(ny.unit, ny.unit, &gy, &gy);
  }
  const double scale = 0.5 / static_cast<double>(n);
  double value = 0.0;
  std::vector<Term> terms;
  LossOutput out;
  for (std::size_t side = 0; side < 2; ++side) {
    for (std::size_t i = 0; i < n; ++i) {
      terms.clear();
      terms.push_back({side, i, 0.0, true, true});
      for (std::size_t k = 0; k < n; ++k)
        if (k != i) terms.push_back({side, k, 0.0, false, true});
      if (same_modality) {
        for (std::size_t k = 0; k < n; ++k)
          if (k != i) terms.push_back({side + 2, k, 0.0, false, true});
      }
      (side == 0 ? out.diagnostics.n_negatives_x : out.diagnostics.n_negatives_y) += terms.size() - 1;
      auto& per_sample = side == 0 ? out.diagnostics.per_sample_x : out.diagnostics.per_sample_y;
      per_sample.push_back(contrast_anchor(blocks, i, terms, tau, scale));
      value += scale * per_sample.back();
    }
  }
  require_finite(value);
  for (const Block& b : blocks) b.backprop();
  out.value = value;
  out.grad_zx = pull_back(nx, gx);
  out.grad_zy = pull_back(ny, gy);
  out.diagnostics.weights_x.assign(n, 1.0);
  out.diagnostics.weights_y.assign(n, 1.0);
  return out;
}

bool rows_equal(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

LossKind parse_loss_kind(std::string_view name) {
  if (name == "crossclr") return LossKind::crossclr;
  if (name == "crossclr_batch") return LossKind::crossclr_batch;
  if (name == "crossclr_multipos") return LossKind::crossclr_multipos;
  if (name == "ntxent") return LossKind::ntxent;
  if (name == "clip") return LossKind::clip;
  if (name == "max_margin") return LossKind::max_margin;
  throw Error(ErrorKind::ConfigParseError, "unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::crossclr: return "crossclr";
    case LossKind::crossclr_batch: return "crossclr_batch";
    case LossKind::crossclr_multipos: return "crossclr_multipos";
    case LossKind::ntxent: return "ntxent";
    case LossKind::clip: return "clip";
    case LossKind::max_margin: return "max_margin";
  }
  return "unknown";
}

Reduction parse_reduction(std::string_view name) {
  if (name == "weighted_mean") return Reduction::weighted_mean;
  if (name == "literal_mean") return Reduction::literal_mean;
  throw Error(ErrorKind::ConfigParseError, "unknown reduction '" + std::string(name) + "'");
}

std::string_view to_string(Reduction r) {
  return r == Reduction::weighted_mean ? "weighted_mean" : "literal_mean";
}

LossConfig LossConfig::youcook2() {
  LossConfig c;
  c.kappa = 0.0035;
  c.lambda_intra = 0.8;
  c.top_k = 2;
  c.beta = 0.15;
  return c;
}

LossConfig LossConfig::lsmdc() {
  LossConfig c;
  c.kappa = 0.0055;
  c.lambda_intra = 6.5;
  c.top_k = 5;
  c.beta = 0.2;
  return c;
}

void LossConfig::validate() const {
  require_tau(tau);
  if (!(lambda_intra >= 0.0) || !std::isfinite(lambda_intra))
    throw Error(ErrorKind::InvalidArgument, "lambda must be >= 0");
  if (!(kappa > 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be > 0");
  if (!std::isfinite(gamma)) throw Error(ErrorKind::InvalidArgument, "gamma must be finite");
  if (!(beta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be >= 0");
}

LossOutput crossclr_batch(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                          const EmbeddingBatch& in_x, const EmbeddingBatch& in_y,
                          const LossConfig& cfg) {
  return crossclr_in_batch(zx, zy, in_x, in_y, cfg, nullptr);
}

LossOutput crossclr_multipos(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                             const EmbeddingBatch& in_x, const EmbeddingBatch& in_y,
                             const LossConfig& cfg) {
  if (cfg.beta == 0.0 || cfg.top_k == 0) return crossclr_in_batch(zx, zy, in_x, in_y, cfg, nullptr);
  require_inputs(zx, in_x, in_y);
  Multipos mp{std::log(cfg.beta), cfg.top_k,
              cosine_similarity_matrix(in_x, in_x).scores,
              cosine_similarity_matrix(in_y, in_y).scores};
  return crossclr_in_batch(zx, zy, in_x, in_y, cfg, &mp);
}

LossOutput crossclr_queue(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                          const EmbeddingBatch& in_x, const EmbeddingBatch& in_y,
                          const MemoryQueue& queue, const Projector& enc_x,
                          const Projector& enc_y, const LossConfig& cfg) {
  cfg.validate();
  require_pair(zx, zy);
  require_inputs(zx, in_x, in_y);
  const std::size_t n = zx.n();
  auto [qx, qy] = queue.snapshot();
  const std::size_t m = qx.n();
  if (m < n) {
    throw Error(ErrorKind::QueueContractViolation, "queue holds fewer samples than the batch");
  }
  const std::size_t offset = m - n;  // slot of batch row i is offset + i
  for (std::size_t i = 0; i < n; ++i) {
    if (!rows_equal(qx.row(offset + i), in_x.row(i)) || !rows_equal(qy.row(offset + i), in_y.row(i))) {
      throw Error(ErrorKind::QueueContractViolation,
                  "the current batch must be the newest queue entries (row " + std::to_string(i) + ")");
    }
  }

  const std::size_t min_fill = cfg.queue_min_fill > 0 ? cfg.queue_min_fill : 2 * n;
  const bool cold = m < min_fill;
  const auto influence = [&](const EmbeddingBatch& q) {
    ModalityInfluence mi{Mask(n, false), Mask(m, false), Mask(n, false), std::vector<double>(n, 1.0)};
    if (cold || (!cfg.pruning_enabled && !cfg.weighting_enabled)) return mi;
    const auto c = connectivity(q, q, true);
    const std::vector<double> alpha(c.begin() + static_cast<std::ptrdiff_t>(offset), c.end());
    if (cfg.pruning_enabled) {
      mi.prune_intra = influential_mask(c, cfg.gamma, cfg.threshold_mode);
      mi.prune_inter = influential_mask(alpha, cfg.gamma, cfg.threshold_mode);
    }
    if (cfg.weighting_enabled) mi.weights = sample_weights(alpha, cfg.kappa, cfg.weight_norm);
    return mi;
  };
  const ModalityInfluence ix = influence(qx);
  const ModalityInfluence iy = influence(qy);

  const double lambda = cfg.effective_lambda();
  const Normalized nx = normalize_rows(zx);
  const Normalized ny = normalize_rows(zy);
  Matrix gx(n, zx.dim()), gy(n, zy.dim());

  const auto project = [&](const Projector& enc, const EmbeddingBatch& q) {
    EmbeddingBatch keys = enc(q);
    if (keys.n() != m || keys.dim() != zx.dim()) {
      throw Error(ErrorKind::DimensionMismatch, "projected queue has the wrong shape");
    }
    return keys.normalized() ? keys.data() : l2_normalize(keys).data();
  };
  Matrix kx, ky;
  if (lambda > 0.0) {
    kx = project(enc_x, qx);
    ky = project(enc_y, qy);
  }

  std::vector<Block> blocks;
  blocks.reserve(4);
  blocks.emplace_back(nx.unit, ny.unit, &gx, &gy);  // 0: x -> y (batch)
  blocks.emplace_back(ny.unit, nx.unit, &gy, &gx);  // 1: y -> x (batch)
  if (lambda > 0.0) {
    blocks.emplace_back(nx.unit, kx, &gx, nullptr);  // 2: x -> queued x keys
    blocks.emplace_back(ny.unit, ky, &gy, nullptr);  // 3: y -> queued y keys
  }

  const auto sx = reduction_scales(ix.weights, cfg.reduction);
  const auto sy = reduction_scales(iy.weights, cfg.reduction);
  LossOutput out;
  auto& diag = out.diagnostics;
  double value = 0.0;
  std::vector<Term> terms;
  const auto run_side = [&](std::size_t inter, std::size_t intra, const ModalityInfluence& mi,
                            const std::vector<double>& scales, std::size_t& n_neg,
                            std::vector<double>& per_sample) {
    for (std::size_t i = 0; i < n; ++i) {
      terms.clear();
      terms.push_back({inter, i, 0.0, true, true});
      for (std::size_t k = 0; k < n; ++k)
        if (k != i && !mi.prune_inter[k]) terms.push_back({inter, k, 0.0, false, true});
      if (lambda > 0.0) {
        const double log_lambda = std::log(lambda);
        for (std::size_t q = 0; q < m; ++q)
          if (q != offset + i && !mi.prune_intra[q]) terms.push_back({intra, q, log_lambda, false, true});
      }
      const std::size_t negatives = terms.size() - 1;
      if (negatives == 0) {
        throw Error(ErrorKind::InsufficientNegatives,
                    "pruning removed every negative for anchor " + std::to_string(i));
      }
      n_neg += negatives;
      per_sample.push_back(contrast_anchor(blocks, i, terms, cfg.tau, scales[i]));
      value += scales[i] * per_sample.back();
    }
  };
  run_side(0, 2, ix, sx, diag.n_negatives_x, diag.per_sample_x);
  run_side(1, 3, iy, sy, diag.n_negatives_y, diag.per_sample_y);
  require_finite(value);

  for (const Block& b : blocks) b.backprop();
  out.value = value;
  out.grad_zx = pull_back(nx, gx);
  out.grad_zy = pull_back(ny, gy);
  diag.pruned_inter_x = ix.prune_inter;
  diag.pruned_inter_y = iy.prune_inter;
  diag.pruned_intra_x = ix.prune_intra;
  diag.pruned_intra_y = iy.prune_intra;
  diag.weights_x = ix.weights;
  diag.weights_y = iy.weights;
  diag.cold_start = cold;
  return out;
}

LossOutput ntxent(const EmbeddingBatch& zx, const EmbeddingBatch& zy, double tau) {
  return symmetric_infonce(zx, zy, tau, true);
}

LossOutput clip_symmetric(const EmbeddingBatch& zx, const EmbeddingBatch& zy, double tau) {
  return symmetric_infonce(zx, zy, tau, false);
}

LossOutput max_margin(const EmbeddingBatch& zx, const EmbeddingBatch& zy, double margin) {
  require_pair(zx, zy);
  if (!std::isfinite(margin)) throw Error(ErrorKind::InvalidArgument, "margin must be finite");
  const std::size_t n = zx.n();
  const Normalized nx = normalize_rows(zx);
  const Normalized ny = normalize_rows(zy);
  const Matrix s = inner_products(nx.unit, ny.unit);
  Matrix coef(n, n);  // dL/ds_ij
  const double scale = 1.0 / (2.0 * static_cast<double>(n) * static_cast<double>(n - 1));
  double value = 0.0;
  double kink = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double forward = margin + s(i, j) - s(i, i);   // query x_i, negative y_j
      const double backward = margin + s(j, i) - s(i, i);  // query y_i, negative x_j
      kink = std::min({kink, std::abs(forward), std::abs(backward)});
      if (forward > 0.0) {
        value += scale * forward;
        coef(i, j) += scale;
        coef(i, i) -= scale;
      }
      if (backward > 0.0) {
        value += scale * backward;
        coef(j, i) += scale;
        coef(i, i) -= scale;
      }
    }
  }
  require_finite(value);
  Matrix gx(n, zx.dim()), gy(n, zy.dim());
  add_matmul(gx, coef, ny.unit);
  add_matmul_tn(gy, coef, nx.unit);
  LossOutput out;
  out.value = value;
  out.grad_zx = pull_back(nx, gx);
  out.grad_zy = pull_back(ny, gy);
  out.diagnostics.weights_x.assign(n, 1.0);
  out.diagnostics.weights_y.assign(n, 1.0);
  out.diagnostics.n_negatives_x = n * (n - 1);
  out.diagnostics.n_negatives_y = n * (n - 1);
  out.diagnostics.min_kink_distance = kink;
  return out;
}

double finite_diff_check(const LossClosure& loss_fn, const EmbeddingBatch& zx,
                         const EmbeddingBatch& zy, const GradCheckOptions& options) {
  const double h = options.h;
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw Error(ErrorKind::InvalidArgument, "step must lie in [1e-7, 1e-3]");
  }
  const LossOutput base = loss_fn(zx, zy);
  require_finite(base.value);

  struct Coord {
    bool is_x;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (std::size_t k = 0; k < zx.data().values().size(); ++k) coords.push_back({true, k});
  for (std::size_t k = 0; k < zy.data().values().size(); ++k) coords.push_back({false, k});
  if (options.max_coords > 0 && options.max_coords < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
  }

  const double kink_guard = 10.0 * h;
  double worst = 0.0;
  for (const Coord& c : coords) {
    const auto evaluate = [&](double delta) {
      Matrix x = zx.data(), y = zy.data();
      (c.is_x ? x : y).values()[c.index] += delta;
      LossOutput o = loss_fn(EmbeddingBatch(std::move(x)), EmbeddingBatch(std::move(y)));
      require_finite(o.value);
      return o;
    };
    const LossOutput plus = evaluate(h);
    const LossOutput minus = evaluate(-h);
    const double kink = std::min({base.diagnostics.min_kink_distance,
                                  plus.diagnostics.min_kink_distance,
                                  minus.diagnostics.min_kink_distance});
    if (kink < kink_guard) continue;
    const double fd = (plus.value - minus.value) / (2.0 * h);
    const double analytic = (c.is_x ? base.grad_zx : base.grad_zy).values()[c.index];
    worst = std::max(worst, std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)));
  }
  return worst;
}

}  // namespace crossclr
