#include "crossclr/memory_queue.hpp"

#include <algorithm>
#include <string>

#include "crossclr/errors.hpp"

namespace crossclr {

MemoryQueue::MemoryQueue(std::size_t capacity, std::size_t dim_x, std::size_t dim_y)
    : capacity_(capacity), x_store_(capacity, dim_x), y_store_(capacity, dim_y) {
  if (capacity == 0 || dim_x == 0 || dim_y == 0) {
    throw Error(ErrorKind::InvalidShape, "queue capacity and dims must be positive");
  }
}

void MemoryQueue::enqueue(const EmbeddingBatch& x, const EmbeddingBatch& y) {
  if (x.n() != y.n()) {
    throw Error(ErrorKind::DimensionMismatch,
                "paired batches differ in size: " + std::to_string(x.n()) + " vs " +
                    std::to_string(y.n()));
  }
  if (x.n() > capacity_) {
    throw Error(ErrorKind::BatchLargerThanCapacity,
                std::to_string(x.n()) + " > " + std::to_string(capacity_));
  }
  if (x.dim() != dim_x() || y.dim() != dim_y()) {
    throw Error(ErrorKind::DimensionMismatch, "batch dims do not match the queue");
  }
  for (std::size_t i = 0; i < x.n(); ++i) {
    const std::size_t slot = (head_ + size_) % capacity_;
    std::ranges::copy(x.row(i), x_store_.row(slot).begin());
    std::ranges::copy(y.row(i), y_store_.row(slot).begin());
    if (size_ < capacity_) {
      ++size_;
    } else {
      head_ = (head_ + 1) % capacity_;
    }
  }
  total_enqueued_ += x.n();
}

std::pair<EmbeddingBatch, EmbeddingBatch> MemoryQueue::snapshot() const {
  if (size_ == 0) throw Error(ErrorKind::EmptyQueue, "snapshot of an empty queue");
  Matrix xs(size_, dim_x());
  Matrix ys(size_, dim_y());
  for (std::size_t k = 0; k < size_; ++k) {
    const std::size_t slot = (head_ + k) % capacity_;
    std::ranges::copy(x_store_.row(slot), xs.row(k).begin());
    std::ranges::copy(y_store_.row(slot), ys.row(k).begin());
  }
  return {EmbeddingBatch(std::move(xs)), EmbeddingBatch(std::move(ys))};
}

}  // namespace crossclr
