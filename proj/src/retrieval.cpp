#include "crossclr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "crossclr/errors.hpp"

namespace crossclr {

namespace {

void mean_variance(const std::vector<double>& v, double& mean, double& variance) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  variance = 0.0;
  for (double x : v) variance += (x - mean) * (x - mean);
  variance /= static_cast<double>(v.size());
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::a_to_b ? "A->B" : "B->A"; }

RetrievalReport report_from_scores(const Matrix& scores, Direction direction,
                                   std::span<const std::size_t> ks) {
  const std::size_t n = scores.rows();
  if (n == 0 || scores.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "retrieval needs a square, non-empty score matrix");
  }
  if (ks.empty()) throw Error(ErrorKind::InvalidArgument, "no recall cutoffs requested");
  for (std::size_t k : ks) {
    if (k == 0 || k > n) {
      throw Error(ErrorKind::InvalidArgument, "recall cutoff " + std::to_string(k) + " outside [1, n]");
    }
  }
  RetrievalReport r;
  r.direction = direction;
  r.ranks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double own = scores(i, i);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && scores(i, j) >= own) ++rank;
    r.ranks[i] = rank;
  }
  for (std::size_t k : ks) {
    const auto hits = std::count_if(r.ranks.begin(), r.ranks.end(), [k](std::size_t x) { return x <= k; });
    r.recall_at[k] = static_cast<double>(hits) / static_cast<double>(n);
  }
  std::vector<std::size_t> sorted = r.ranks;
  std::sort(sorted.begin(), sorted.end());
  r.median_rank = static_cast<double>(sorted[(n - 1) / 2]);
  double total = 0.0;
  for (std::size_t x : r.ranks) total += static_cast<double>(x);
  r.mean_rank = total / static_cast<double>(n);
  return r;
}

std::pair<RetrievalReport, RetrievalReport> evaluate_retrieval(const EmbeddingBatch& zx,
                                                               const EmbeddingBatch& zy,
                                                               std::span<const std::size_t> ks) {
  if (zx.n() != zy.n()) throw Error(ErrorKind::DimensionMismatch, "query and gallery sizes differ");
  const SimilarityMatrix ab = cosine_similarity_matrix(zx, zy, Modality::x, Modality::y);
  return {report_from_scores(ab.scores, Direction::a_to_b, ks),
          report_from_scores(ab.scores.transpose(), Direction::b_to_a, ks)};
}

SimilarityHistogram similarity_histograms(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                                          std::size_t bins) {
  if (zx.n() != zy.n()) throw Error(ErrorKind::DimensionMismatch, "batch sizes differ");
  if (zx.n() < 2) throw Error(ErrorKind::BatchTooSmall, "need at least two pairs");
  if (bins < 2) throw Error(ErrorKind::InvalidArgument, "need at least two bins");
  const std::size_t n = zx.n();
  const Matrix s = cosine_similarity_matrix(zx, zy).scores;

  SimilarityHistogram h;
  h.positive_scores.reserve(n);
  h.negative_scores.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) (i == j ? h.positive_scores : h.negative_scores).push_back(s(i, j));

  h.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    h.bin_edges[b] = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
  const auto bin_of = [bins](double v) {
    const double t = (std::clamp(v, -1.0, 1.0) + 1.0) / 2.0 * static_cast<double>(bins);
    return std::min(static_cast<std::size_t>(t), bins - 1);
  };
  h.positive_counts.assign(bins, 0);
  h.negative_counts.assign(bins, 0);
  for (double v : h.positive_scores) ++h.positive_counts[bin_of(v)];
  for (double v : h.negative_scores) ++h.negative_counts[bin_of(v)];
  mean_variance(h.positive_scores, h.positive_mean, h.positive_variance);
  mean_variance(h.negative_scores, h.negative_mean, h.negative_variance);
  return h;
}

void to_json(nlohmann::json& j, const RetrievalReport& r) {
  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  j = {{"direction", std::string(to_string(r.direction))},
       {"r_at", recall},
       {"mdr", r.median_rank},
       {"mnr", r.mean_rank},
       {"ranks", r.ranks}};
}

void to_json(nlohmann::json& j, const SimilarityHistogram& h) {
  j = {{"bin_edges", h.bin_edges},
       {"positive_counts", h.positive_counts},
       {"negative_counts", h.negative_counts},
       {"positive_mean", h.positive_mean},
       {"positive_variance", h.positive_variance},
       {"negative_mean", h.negative_mean},
       {"negative_variance", h.negative_variance},
       {"n_positive", h.positive_scores.size()},
       {"n_negative", h.negative_scores.size()}};
}

}  // namespace crossclr
