#include <cmath>
#include <random>

#include <doctest.h>

#include "crossclr/losses.hpp"
#include "helpers.hpp"

using namespace crossclr;
using testing_support::error_of;
using testing_support::random_batch;
using testing_support::rows_of;

namespace {

LossConfig plain(double tau, double lambda) {
  LossConfig c;
  c.tau = tau;
  c.lambda_intra = lambda;
  c.pruning_enabled = false;
  c.weighting_enabled = false;
  return c;
}

oracle::Params params_of(const LossConfig& c) {
  oracle::Params p;
  p.tau = c.tau;
  p.lambda = c.lambda_intra;
  p.gamma = c.gamma;
  p.kappa = c.kappa;
  p.max_relative = c.threshold_mode == ThresholdMode::max_relative;
  p.sum_to_one = c.weight_norm == WeightNorm::sum_to_one;
  p.weighted_mean = c.reduction == Reduction::weighted_mean;
  p.pruning = c.pruning_enabled;
  p.weighting = c.weighting_enabled;
  p.intra = c.intra_enabled;
  p.min_fill = c.queue_min_fill;
  return p;
}

const Projector kIdentity = [](const EmbeddingBatch& b) { return l2_normalize(b); };

}  // namespace

TEST_CASE("crossclr closed form") {
  const auto basis = EmbeddingBatch::from_rows({{1, 0}, {0, 1}});
  const auto out = crossclr_batch(basis, basis, basis, basis, plain(1.0, 1.0));
  CHECK(out.value == doctest::Approx(std::log(1.0 + 2.0 / std::exp(1.0))).epsilon(1e-12));
  CHECK(out.value == doctest::Approx(0.551445).epsilon(1e-6));
}

TEST_CASE("crossclr without intra, pruning and weighting equals clip") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto zx = random_batch(7, 5, rng), zy = random_batch(7, 5, rng);
    const auto in = random_batch(7, 4, rng, 0.5);
    const auto a = crossclr_batch(zx, zy, in, in, plain(0.1, 0.0));
    const auto b = clip_symmetric(zx, zy, 0.1);
    CHECK(std::abs(a.value - b.value) < 1e-12);
    for (std::size_t k = 0; k < a.grad_zx.values().size(); ++k)
      CHECK(std::abs(a.grad_zx.values()[k] - b.grad_zx.values()[k]) < 1e-12);
  }
}

TEST_CASE("gamma above every score prunes nothing") {
  std::mt19937_64 rng(2);
  const auto zx = random_batch(6, 4, rng), zy = random_batch(6, 4, rng);
  const auto in_x = random_batch(6, 3, rng, 0.5), in_y = random_batch(6, 3, rng, 0.5);
  LossConfig c = plain(0.2, 0.8);
  c.pruning_enabled = true;
  c.gamma = 1.5;
  const auto pruned = crossclr_batch(zx, zy, in_x, in_y, c);
  for (bool b : pruned.diagnostics.pruned_inter_x) CHECK_FALSE(b);
  for (bool b : pruned.diagnostics.pruned_intra_y) CHECK_FALSE(b);
  CHECK(pruned.value == crossclr_batch(zx, zy, in_x, in_y, plain(0.2, 0.8)).value);
}

TEST_CASE("crossclr_batch matches the oracle across flags") {
  std::mt19937_64 rng(3);
  for (int flags = 0; flags < 8; ++flags) {
    LossConfig c;
    c.tau = 0.1;
    c.pruning_enabled = flags & 1;
    c.weighting_enabled = flags & 2;
    c.intra_enabled = flags & 4;
    c.gamma = 0.8;
    for (const auto r : {Reduction::weighted_mean, Reduction::literal_mean}) {
      c.reduction = r;
      c.kappa = r == Reduction::literal_mean ? 0.05 : 0.0035;
      const auto zx = random_batch(8, 6, rng), zy = random_batch(8, 6, rng);
      const auto in_x = random_batch(8, 5, rng, 0.5), in_y = random_batch(8, 5, rng, 0.5);
      const double v = crossclr_batch(zx, zy, in_x, in_y, c).value;
      const double o = oracle::crossclr_batch(rows_of(zx), rows_of(zy), rows_of(in_x), rows_of(in_y), params_of(c));
      CHECK(testing_support::rel_diff(v, o) < 1e-10);
    }
  }
}

TEST_CASE("queue holding only the batch reproduces the batch loss") {
  std::mt19937_64 rng(4);
  const std::size_t n = 6;
  const auto in_x = random_batch(n, 5, rng, 0.5), in_y = random_batch(n, 5, rng, 0.5);
  const auto zx = l2_normalize(in_x), zy = l2_normalize(in_y);
  MemoryQueue q(16, 5, 5);
  q.enqueue(in_x, in_y);
  LossConfig c;
  c.tau = 0.1;
  c.gamma = 0.8;
  c.queue_min_fill = n;
  const auto a = crossclr_queue(zx, zy, in_x, in_y, q, kIdentity, kIdentity, c);
  const auto b = crossclr_batch(zx, zy, in_x, in_y, c);
  CHECK(std::abs(a.value - b.value) < 1e-12);
  CHECK_FALSE(a.diagnostics.cold_start);
}

TEST_CASE("queue loss against a single-loop oracle") {
  // capacity 8, batch 2, orthonormal inputs, identity encoders.
  Matrix basis(8, 8);
  for (std::size_t i = 0; i < 8; ++i) basis(i, i) = 1.0;
  MemoryQueue q(8, 8, 8);
  const EmbeddingBatch first(Matrix(6, 8, std::vector<double>(basis.values().begin(), basis.values().begin() + 48)));
  const EmbeddingBatch last(Matrix(2, 8, std::vector<double>(basis.values().begin() + 48, basis.values().end())));
  q.enqueue(first, first);
  q.enqueue(last, last);
  const auto [qx, qy] = q.snapshot();
  const LossConfig c = plain(1.0, 1.0);
  const auto out = crossclr_queue(last, last, last, last, q, kIdentity, kIdentity, c);
  const oracle::Rows ident = rows_of(basis);
  const double o = oracle::crossclr_queue(rows_of(last), rows_of(last), rows_of(qx), rows_of(qy), ident, ident,
                                          params_of(c));
  CHECK(std::abs(out.value - o) < 1e-12);
  // Each anchor: positive e, one inter negative, seven intra negatives at cosine 0.
  CHECK(out.value == doctest::Approx(std::log((std::exp(1.0) + 8.0) / std::exp(1.0))).epsilon(1e-12));
}

TEST_CASE("queue guards and cold start") {
  std::mt19937_64 rng(5);
  const auto in_x = random_batch(4, 3, rng, 0.5), in_y = random_batch(4, 3, rng, 0.5);
  const auto zx = l2_normalize(in_x), zy = l2_normalize(in_y);
  LossConfig c;
  c.tau = 0.1;

  MemoryQueue wrong(8, 3, 3);
  wrong.enqueue(random_batch(4, 3, rng), random_batch(4, 3, rng));
  CHECK(error_of([&] { crossclr_queue(zx, zy, in_x, in_y, wrong, kIdentity, kIdentity, c); }) ==
        ErrorKind::QueueContractViolation);

  MemoryQueue q(16, 3, 3);
  q.enqueue(in_x, in_y);
  const auto cold = crossclr_queue(zx, zy, in_x, in_y, q, kIdentity, kIdentity, c);
  CHECK(cold.diagnostics.cold_start);  // 4 < 2 * 4
  for (double w : cold.diagnostics.weights_x) CHECK(w == 1.0);

  // Positive inputs: every connectivity is above zero, so gamma = 0 prunes all.
  const auto pos = EmbeddingBatch::from_rows({{1, 0.2, 0.1}, {0.9, 0.3, 0.2}, {1, 0.1, 0.4}, {0.8, 0.5, 0.1}});
  MemoryQueue full(8, 3, 3);
  full.enqueue(pos, pos);
  c.gamma = 0.0;
  c.queue_min_fill = 1;
  CHECK(error_of([&] { crossclr_queue(zx, zy, pos, pos, full, kIdentity, kIdentity, c); }) ==
        ErrorKind::InsufficientNegatives);
}

TEST_CASE("queue oracle with prefilled history") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 5;
    MemoryQueue q(20, 4, 4);
    q.enqueue(random_batch(12, 4, rng, 0.5), random_batch(12, 4, rng, 0.5));
    const auto in_x = random_batch(n, 4, rng, 0.5), in_y = random_batch(n, 4, rng, 0.5);
    q.enqueue(in_x, in_y);
    const Matrix px = testing_support::random_matrix(6, 4, rng), py = testing_support::random_matrix(6, 4, rng);
    const Projector ex = [&](const EmbeddingBatch& b) { return l2_normalize(EmbeddingBatch(inner_products(b.data(), px))); };
    const Projector ey = [&](const EmbeddingBatch& b) { return l2_normalize(EmbeddingBatch(inner_products(b.data(), py))); };
    const auto zx = random_batch(n, 6, rng), zy = random_batch(n, 6, rng);
    LossConfig c;
    c.tau = 0.2;
    c.gamma = 0.85;
    c.pruning_enabled = trial & 1;
    c.weighting_enabled = trial & 2;
    c.intra_enabled = trial & 4;
    const double v = crossclr_queue(zx, zy, in_x, in_y, q, ex, ey, c).value;
    const auto [qx, qy] = q.snapshot();
    const double o = oracle::crossclr_queue(rows_of(zx), rows_of(zy), rows_of(qx), rows_of(qy), rows_of(px),
                                            rows_of(py), params_of(c));
    CHECK(testing_support::rel_diff(v, o) < 1e-10);
  }
}

TEST_CASE("multipos") {
  std::mt19937_64 rng(7);
  const auto zx = random_batch(6, 4, rng), zy = random_batch(6, 4, rng);
  const auto in_x = random_batch(6, 3, rng, 0.5), in_y = random_batch(6, 3, rng, 0.5);
  LossConfig c;
  c.tau = 0.1;
  c.gamma = 0.5;
  c.beta = 0.0;
  CHECK(std::abs(crossclr_multipos(zx, zy, in_x, in_y, c).value - crossclr_batch(zx, zy, in_x, in_y, c).value) <
        1e-12);

  c.beta = 0.2;
  c.top_k = 50;
  CHECK(error_of([&] { crossclr_multipos(zx, zy, in_x, in_y, c); }) == ErrorKind::KExceedsInfluentialSet);
}

TEST_CASE("multipos oracle: orthonormal batch with one influential duplicate") {
  // Rows 0 and 3 coincide in input space, so both are influential.
  const auto in = EmbeddingBatch::from_rows({{1, 0.1, 0.1, 0.1}, {0.1, 1, 0.1, 0.1}, {0.1, 0.1, 1, 0.1},
                                             {1, 0.1, 0.1, 0.1}});
  const auto z = EmbeddingBatch::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  LossConfig c = plain(0.5, 0.8);
  c.pruning_enabled = true;
  c.gamma = 0.9;
  c.beta = 0.3;
  c.top_k = 1;
  const auto out = crossclr_multipos(z, z, in, in, c);
  oracle::Params p = params_of(c);
  p.beta = 0.3;
  p.top_k = 1;
  const double o = oracle::crossclr_batch(rows_of(z), rows_of(z), rows_of(in), rows_of(in), p);
  CHECK(std::abs(out.value - o) < 1e-12);
  CHECK(out.diagnostics.pruned_inter_x == Mask{true, false, false, true});
}

TEST_CASE("baselines") {
  const auto basis = EmbeddingBatch::from_rows({{1, 0}, {0, 1}});
  CHECK(clip_symmetric(basis, basis, 1.0).value == doctest::Approx(0.313262).epsilon(1e-6));
  CHECK(ntxent(basis, basis, 1.0).value == doctest::Approx(std::log(1.0 + 2.0 / std::exp(1.0))).epsilon(1e-12));

  const auto same = EmbeddingBatch::from_rows({{1, 2}, {1, 2}, {1, 2}});
  CHECK(max_margin(same, same, 0.2).value == doctest::Approx(0.2).epsilon(1e-12));
  const auto far = max_margin(basis, basis, 0.5);
  CHECK(far.value == 0.0);
  for (double g : far.grad_zx.values()) CHECK(g == 0.0);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto zx = random_batch(7, 5, rng), zy = random_batch(7, 5, rng);
    CHECK(std::abs(ntxent(zx, zy, 0.1).value - oracle::infonce(rows_of(zx), rows_of(zy), 0.1, true)) < 1e-10);
    CHECK(std::abs(clip_symmetric(zx, zy, 0.1).value - oracle::infonce(rows_of(zx), rows_of(zy), 0.1, false)) <
          1e-10);
    CHECK(std::abs(max_margin(zx, zy, 0.3).value - oracle::max_margin(rows_of(zx), rows_of(zy), 0.3)) < 1e-12);
  }
}

TEST_CASE("argument guards") {
  const auto a = EmbeddingBatch::from_rows({{1, 0}, {0, 1}});
  const auto b = EmbeddingBatch::from_rows({{1, 0}, {0, 1}, {1, 1}});
  CHECK(error_of([&] { clip_symmetric(a, b, 0.1); }) == ErrorKind::DimensionMismatch);
  CHECK(error_of([&] { clip_symmetric(a, a, 0.0); }) == ErrorKind::NonPositiveTemperature);
  const auto one = EmbeddingBatch::from_rows({{1, 0}});
  CHECK(error_of([&] { ntxent(one, one, 0.1); }) == ErrorKind::BatchTooSmall);
  CHECK(error_of([] { parse_loss_kind("foo"); }) == ErrorKind::ConfigParseError);
}

TEST_CASE("finite differences") {
  std::mt19937_64 rng(9);
  const auto zx = random_batch(6, 8, rng), zy = random_batch(6, 8, rng);
  const auto in_x = random_batch(6, 5, rng, 1.0), in_y = random_batch(6, 5, rng, 1.0);
  LossConfig c;
  c.tau = 0.1;
  c.gamma = 0.8;
  const LossClosure full = [&](const EmbeddingBatch& a, const EmbeddingBatch& b) {
    return crossclr_batch(a, b, in_x, in_y, c);
  };
  CHECK(finite_diff_check(full, zx, zy) < 1e-4);
  const LossClosure clip = [](const EmbeddingBatch& a, const EmbeddingBatch& b) { return clip_symmetric(a, b, 0.1); };
  CHECK(finite_diff_check(clip, zx, zy) < 1e-5);
  const LossClosure constant = [](const EmbeddingBatch& a, const EmbeddingBatch&) {
    LossOutput o;
    o.value = 3.0;
    o.grad_zx = Matrix(a.n(), a.dim());
    o.grad_zy = Matrix(a.n(), a.dim());
    return o;
  };
  CHECK(finite_diff_check(constant, zx, zy) == 0.0);
  CHECK(error_of([&] { finite_diff_check(clip, zx, zy, {1e-2}); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("property: pruning never increases a per-sample loss") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto zx = random_batch(8, 4, rng), zy = random_batch(8, 4, rng);
    const auto in = random_batch(8, 3, rng, 0.5);
    LossConfig off = plain(0.2, 0.8), on = off;
    on.pruning_enabled = true;
    on.gamma = 0.9;
    const auto with = crossclr_batch(zx, zy, in, in, on).diagnostics;
    const auto without = crossclr_batch(zx, zy, in, in, off).diagnostics;
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(with.per_sample_x[i] <= without.per_sample_x[i]);
      CHECK(with.per_sample_y[i] <= without.per_sample_y[i]);
    }
  }
}
