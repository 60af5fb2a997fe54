#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace crossclr {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Modality tag for the rows and columns of a similarity matrix.
enum class Modality { x, y };

/// N row vectors of one modality.
///
/// Construction validates shape (n >= 1, dim >= 1) and finiteness. The
/// `normalized` flag is only ever set by l2_normalize or after a check that
/// every row has unit norm within 1e-9.
class EmbeddingBatch {
 public:
  explicit EmbeddingBatch(Matrix data, bool normalized = false);

  static EmbeddingBatch from_rows(const std::vector<std::vector<double>>& rows) {
    return EmbeddingBatch(Matrix::from_rows(rows));
  }

  const Matrix& data() const noexcept { return data_; }
  std::size_t n() const noexcept { return data_.rows(); }
  std::size_t dim() const noexcept { return data_.cols(); }
  bool normalized() const noexcept { return normalized_; }
  std::span<const double> row(std::size_t i) const { return data_.row(i); }

 private:
  Matrix data_;
  bool normalized_;
};

struct SimilarityMatrix {
  Matrix scores;
  Modality row_source = Modality::x;
  Modality col_source = Modality::y;
};

/// Sequential left-to-right dot product. Every similarity in the library goes
/// through this summation order, so results are reproducible bit for bit.
double dot(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> a);

EmbeddingBatch l2_normalize(const EmbeddingBatch& batch);

/// Rows of `a` against rows of `b`; entry (i, j) equals dot(a_i, b_j)
/// bit for bit.
Matrix inner_products(const Matrix& a, const Matrix& b);

SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& a,
                                          const EmbeddingBatch& b,
                                          Modality row_source = Modality::x,
                                          Modality col_source = Modality::y);

/// Entrywise exp(score / tau).
Matrix scaled_exp_sim(const SimilarityMatrix& s, double tau);

}  // namespace crossclr
