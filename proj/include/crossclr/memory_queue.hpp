#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

#include "crossclr/embedding.hpp"

namespace crossclr {

/// Fixed-capacity FIFO of paired raw input embeddings.
///
/// Slots are a ring buffer; `snapshot` linearizes them oldest first. A pair
/// (x_k, y_k) always occupies the same slot index in both stores, so eviction
/// can never split a pair. Single writer; snapshots are independent copies.
class MemoryQueue {
 public:
  MemoryQueue(std::size_t capacity, std::size_t dim_x, std::size_t dim_y);

  /// Appends the batch; evicts exactly max(0, size + n - capacity) oldest pairs.
  void enqueue(const EmbeddingBatch& x, const EmbeddingBatch& y);

  /// Current contents in insertion order. Throws EmptyQueue when size() == 0.
  std::pair<EmbeddingBatch, EmbeddingBatch> snapshot() const;

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t dim_x() const noexcept { return x_store_.cols(); }
  std::size_t dim_y() const noexcept { return y_store_.cols(); }
  std::uint64_t total_enqueued() const noexcept { return total_enqueued_; }

 private:
  std::size_t capacity_;
  Matrix x_store_;
  Matrix y_store_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // oldest slot
  std::uint64_t total_enqueued_ = 0;
};

}  // namespace crossclr
