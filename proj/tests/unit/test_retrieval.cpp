#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "crossclr/retrieval.hpp"
#include "helpers.hpp"

using namespace crossclr;

TEST_CASE("worked 3x3 example") {
  const Matrix s = Matrix::from_rows({{0.9, 0.1, 0.2}, {0.3, 0.8, 0.1}, {0.5, 0.6, 0.4}});
  const std::vector<std::size_t> ks = {1, 2, 3};
  const auto r = report_from_scores(s, Direction::a_to_b, ks);
  CHECK(r.ranks == std::vector<std::size_t>{1, 1, 3});
  CHECK(r.recall_at.at(1) == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall_at.at(3) == 1.0);
  CHECK(r.median_rank == 1.0);
  CHECK(r.mean_rank == doctest::Approx(5.0 / 3.0));

  const nlohmann::json j = r;
  CHECK(j.at("direction") == "A->B");
  CHECK(j.at("r_at").at("1") == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("identity retrieval") {
  const auto z = EmbeddingBatch::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const std::vector<std::size_t> ks = {1};
  const auto [ab, ba] = evaluate_retrieval(z, z, ks);
  CHECK(ab.recall_at.at(1) == 1.0);
  CHECK(ba.median_rank == 1.0);
  CHECK(ba.mean_rank == 1.0);
}

TEST_CASE("ties count against the query") {
  const Matrix s = Matrix::from_rows({{0.5, 0.5}, {0.2, 0.7}});
  const std::vector<std::size_t> ks = {1};
  CHECK(report_from_scores(s, Direction::a_to_b, ks).ranks == std::vector<std::size_t>{2, 1});
}

TEST_CASE("rank oracle, symmetry and monotone invariance") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<std::size_t> ks = {1, 5, 10};
  for (int trial = 0; trial < 10; ++trial) {
    Matrix s(40, 40);
    for (double& v : s.values()) v = std::round(u(rng) * 20.0) / 20.0;  // coarse grid forces ties
    const auto r = report_from_scores(s, Direction::a_to_b, ks);
    CHECK(r.ranks == oracle::ranks_by_sort(testing_support::rows_of(s)));
    Matrix t = s;
    for (double& v : t.values()) v = std::exp(3.0 * v);
    CHECK(report_from_scores(t, Direction::a_to_b, ks).ranks == r.ranks);
  }
  const auto zx = testing_support::random_batch(15, 4, rng), zy = testing_support::random_batch(15, 4, rng);
  const auto [ab, ba] = evaluate_retrieval(zx, zy, ks);
  const auto [ab2, ba2] = evaluate_retrieval(zy, zx, ks);
  CHECK(ab.ranks == ba2.ranks);
  CHECK(ba.ranks == ab2.ranks);
}

TEST_CASE("guards") {
  const std::vector<std::size_t> bad = {4};
  CHECK(testing_support::error_of([&] { report_from_scores(Matrix(3, 3), Direction::a_to_b, bad); }) ==
        ErrorKind::InvalidArgument);
  const std::vector<std::size_t> ok = {1};
  CHECK(testing_support::error_of([&] { report_from_scores(Matrix(3, 2), Direction::a_to_b, ok); }) ==
        ErrorKind::DimensionMismatch);
}

TEST_CASE("similarity histograms") {
  const auto z = EmbeddingBatch::from_rows({{1, 0}, {0, 1}});
  const auto h = similarity_histograms(z, z, 10);
  CHECK(h.positive_mean == 1.0);
  CHECK(h.positive_variance == 0.0);
  CHECK(h.negative_mean == 0.0);
  CHECK(h.positive_counts.back() == 2);
  CHECK(h.negative_counts[5] == 2);
  CHECK(h.bin_edges.size() == 11);
  std::size_t total = 0;
  for (auto c : h.negative_counts) total += c;
  CHECK(total == 2);
}
