#pragma once
// Shared fixtures for the unit and acceptance tests.

#include <optional>
#include <random>
#include <vector>

#include "crossclr/embedding.hpp"
#include "crossclr/errors.hpp"
#include "oracle.hpp"

namespace testing_support {

inline crossclr::Matrix random_matrix(std::size_t n, std::size_t d, std::mt19937_64& rng, double offset = 0.0,
                                      double sigma = 1.0) {
  std::normal_distribution<double> normal(0.0, sigma);
  crossclr::Matrix m(n, d);
  for (double& v : m.values()) v = offset + normal(rng);
  return m;
}

inline crossclr::EmbeddingBatch random_batch(std::size_t n, std::size_t d, std::mt19937_64& rng,
                                             double offset = 0.0, double sigma = 1.0) {
  return crossclr::EmbeddingBatch(random_matrix(n, d, rng, offset, sigma));
}

inline oracle::Rows rows_of(const crossclr::Matrix& m) {
  oracle::Rows r(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

inline oracle::Rows rows_of(const crossclr::EmbeddingBatch& b) { return rows_of(b.data()); }

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Kind of the crossclr::Error thrown by `fn`, or nullopt when it returns.
template <typename F>
std::optional<crossclr::ErrorKind> error_of(F&& fn) {
  try {
    fn();
  } catch (const crossclr::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace testing_support
