#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crossclr/embedding.hpp"

namespace crossclr {

enum class Direction { a_to_b, b_to_a };

std::string_view to_string(Direction d);

struct RetrievalReport {
  Direction direction = Direction::a_to_b;
  std::map<std::size_t, double> recall_at;
  double median_rank = 0.0;  // lower median
  double mean_rank = 0.0;
  std::vector<std::size_t> ranks;  // 1-based
};

/// Ranks from a square score matrix whose rows are queries and whose diagonal
/// holds the correct matches. rank_i = 1 + #{j != i : s_ij >= s_ii}; ties are
/// counted against the query.
RetrievalReport report_from_scores(const Matrix& scores, Direction direction,
                                   std::span<const std::size_t> ks);

/// Cosine retrieval in both directions: (x queries over y, y queries over x).
std::pair<RetrievalReport, RetrievalReport> evaluate_retrieval(const EmbeddingBatch& zx,
                                                               const EmbeddingBatch& zy,
                                                               std::span<const std::size_t> ks);

struct SimilarityHistogram {
  std::vector<double> positive_scores;
  std::vector<double> negative_scores;
  std::vector<double> bin_edges;  // bins + 1 edges spanning [-1, 1]
  std::vector<std::size_t> positive_counts;
  std::vector<std::size_t> negative_counts;
  double positive_mean = 0.0, positive_variance = 0.0;
  double negative_mean = 0.0, negative_variance = 0.0;
};

SimilarityHistogram similarity_histograms(const EmbeddingBatch& zx, const EmbeddingBatch& zy,
                                          std::size_t bins);

void to_json(nlohmann::json& j, const RetrievalReport& r);
void to_json(nlohmann::json& j, const SimilarityHistogram& h);

}  // namespace crossclr
