#include "crossclr/embedding.hpp"

#include <cmath>
#include <string>

#include "crossclr/errors.hpp"

namespace crossclr {

namespace {

constexpr double kZeroNorm = 1e-12;
constexpr double kUnitTolerance = 1e-9;

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorKind::InvalidShape,
                "matrix buffer holds " + std::to_string(data_.size()) +
                    " values, expected " + std::to_string(rows * cols));
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) {
      throw Error(ErrorKind::InvalidShape, "ragged rows at row " + std::to_string(i));
    }
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

EmbeddingBatch::EmbeddingBatch(Matrix data, bool normalized)
    : data_(std::move(data)), normalized_(normalized) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw Error(ErrorKind::InvalidShape,
                "embedding batch needs n >= 1 and dim >= 1, got " +
                    std::to_string(data_.rows()) + "x" + std::to_string(data_.cols()));
  }
  for (double v : data_.values()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "embedding entry is not finite");
  }
  if (normalized_) {
    for (std::size_t i = 0; i < n(); ++i) {
      if (std::abs(l2_norm(row(i)) - 1.0) > kUnitTolerance) {
        throw Error(ErrorKind::InvalidArgument,
                    "row " + std::to_string(i) + " flagged normalized but is not unit norm");
      }
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

EmbeddingBatch l2_normalize(const EmbeddingBatch& batch) {
  Matrix out = batch.data();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double norm = l2_norm(r);
    if (norm <= kZeroNorm) {
      throw Error(ErrorKind::ZeroVectorRow, "row " + std::to_string(i) + " has zero norm");
    }
    for (double& v : r) v /= norm;
  }
  return EmbeddingBatch(std::move(out), true);
}

Matrix inner_products(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch,
                std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  // Accumulate over k in ascending order with b stored column-major; the
  // inner loop runs over targets and vectorizes without reassociation.
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  const Matrix bt = b.transpose();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < d; ++k) {
      const double aik = ai[k];
      const double* bk = bt.row(k).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * bk[j];
    }
  }
  return out;
}

SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& a, const EmbeddingBatch& b,
                                          Modality row_source, Modality col_source) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                "similarity between dim " + std::to_string(a.dim()) + " and " +
                    std::to_string(b.dim()));
  }
  const EmbeddingBatch an = a.normalized() ? a : l2_normalize(a);
  const EmbeddingBatch bn = b.normalized() ? b : l2_normalize(b);
  return {inner_products(an.data(), bn.data()), row_source, col_source};
}

Matrix scaled_exp_sim(const SimilarityMatrix& s, double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorKind::NonPositiveTemperature, "tau = " + std::to_string(tau));
  }
  Matrix out = s.scores;
  for (double& v : out.values()) v = std::exp(v / tau);
  return out;
}

}  // namespace crossclr
