#include <deque>
#include <random>

#include <doctest.h>

#include "crossclr/memory_queue.hpp"
#include "helpers.hpp"

using namespace crossclr;
using testing_support::error_of;

namespace {

// Row r of the batch is (tag, -tag) for x and (tag, 2 tag, 3 tag) for y.
std::pair<EmbeddingBatch, EmbeddingBatch> tagged(std::vector<double> tags) {
  Matrix x(tags.size(), 2), y(tags.size(), 3);
  for (std::size_t r = 0; r < tags.size(); ++r) {
    x(r, 0) = tags[r];
    x(r, 1) = -tags[r];
    for (std::size_t k = 0; k < 3; ++k) y(r, k) = tags[r] * static_cast<double>(k + 1);
  }
  return {EmbeddingBatch(x), EmbeddingBatch(y)};
}

std::vector<double> tags_of(const MemoryQueue& q) {
  const auto [x, y] = q.snapshot();
  std::vector<double> out;
  for (std::size_t r = 0; r < x.n(); ++r) {
    CHECK(y.data()(r, 2) == 3.0 * x.data()(r, 0));  // pairs never split
    out.push_back(x.data()(r, 0));
  }
  return out;
}

}  // namespace

TEST_CASE("FIFO eviction") {
  MemoryQueue q(4, 2, 3);
  for (double base : {1.0, 3.0, 5.0}) {
    auto [x, y] = tagged({base, base + 1});
    q.enqueue(x, y);
  }
  CHECK(tags_of(q) == std::vector<double>{3, 4, 5, 6});

  MemoryQueue p(4, 2, 3);
  auto [x1, y1] = tagged({1, 2, 3});
  auto [x2, y2] = tagged({4, 5, 6});
  p.enqueue(x1, y1);
  p.enqueue(x2, y2);
  CHECK(tags_of(p) == std::vector<double>{3, 4, 5, 6});
  CHECK(p.total_enqueued() == 6);
}

TEST_CASE("queue guards") {
  MemoryQueue q(5, 2, 3);
  CHECK(error_of([&] { q.snapshot(); }) == ErrorKind::EmptyQueue);
  auto [x, y] = tagged({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(error_of([&] { q.enqueue(x, y); }) == ErrorKind::BatchLargerThanCapacity);
  auto [sx, sy] = tagged({1});
  CHECK(error_of([&] { q.enqueue(sy, sx); }) == ErrorKind::DimensionMismatch);
  auto [a, b] = tagged({1, 2});
  auto [c, d] = tagged({3});
  CHECK(error_of([&] { q.enqueue(a, d); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("snapshots are isolated") {
  MemoryQueue q(3, 2, 3);
  auto [x, y] = tagged({1, 2});
  q.enqueue(x, y);
  const auto before = q.snapshot();
  auto [x2, y2] = tagged({3, 4});
  q.enqueue(x2, y2);
  CHECK(before.first.n() == 2);
  CHECK(before.first.data()(0, 0) == 1.0);
  CHECK(tags_of(q) == std::vector<double>{2, 3, 4});
}

TEST_CASE("property: random sequences match a list model") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cap = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    MemoryQueue q(cap, 2, 3);
    std::deque<double> model;
    double next = 1.0;
    for (int op = 0; op < 50; ++op) {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(1, cap)(rng);
      std::vector<double> tags;
      for (std::size_t k = 0; k < n; ++k) tags.push_back(next++);
      auto [x, y] = tagged(tags);
      q.enqueue(x, y);
      for (double t : tags) model.push_back(t);
      while (model.size() > cap) model.pop_front();
      CHECK(q.size() == model.size());
    }
    CHECK(tags_of(q) == std::vector<double>(model.begin(), model.end()));
  }
}
