#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "crossclr/dataset.hpp"
#include "crossclr/influence.hpp"
#include "helpers.hpp"

using namespace crossclr;
using testing_support::error_of;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("crossclr_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_pairs = 96;
  s.n_clusters = 4;
  s.d_x = 10;
  s.d_y = 7;
  s.d_latent = 5;
  s.seed = 17;
  return s;
}

}  // namespace

TEST_CASE("generator is deterministic and shaped") {
  const auto a = generate_synthetic(small_spec());
  const auto b = generate_synthetic(small_spec());
  CHECK(a == b);
  CHECK(a.x.rows() == 96);
  CHECK(a.x.cols() == 10);
  CHECK(a.y.cols() == 7);
  CHECK(a.cluster_id.size() == 96);
  auto other = small_spec();
  other.seed = 18;
  CHECK_FALSE(generate_synthetic(other) == a);
}

TEST_CASE("noise-free, overlap-free clusters") {
  auto s = small_spec();
  s.noise_sigma = 0.0;
  s.overlap = 0.0;
  const auto ds = generate_synthetic(s);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.size(); ++j) {
      if (ds.cluster_id[i] != ds.cluster_id[j]) continue;
      CHECK(std::equal(ds.x.row(i).begin(), ds.x.row(i).end(), ds.x.row(j).begin()));
    }
  }
  // Nearest neighbours agree across modalities.
  const auto rx = testing_support::rows_of(ds.x), ry = testing_support::rows_of(ds.y);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t bx = i == 0 ? 1 : 0, by = bx;
    for (std::size_t j = 0; j < ds.size(); ++j) {
      if (j == i) continue;
      if (oracle::cosine(rx[i], rx[j]) > oracle::cosine(rx[i], rx[bx])) bx = j;
      if (oracle::cosine(ry[i], ry[j]) > oracle::cosine(ry[i], ry[by])) by = j;
    }
    agree += ds.cluster_id[bx] == ds.cluster_id[by];
  }
  CHECK(static_cast<double>(agree) / static_cast<double>(ds.size()) >= 0.99);
}

TEST_CASE("full overlap makes everything influential") {
  SyntheticSpec s;  // default dimensions
  s.n_pairs = 256;
  s.overlap = 1.0;
  const auto ds = generate_synthetic(s);
  const EmbeddingBatch x(ds.x);
  const auto c = connectivity(x, x, true);
  CHECK(*std::min_element(c.begin(), c.end()) / *std::max_element(c.begin(), c.end()) > 0.9);
}

TEST_CASE("save and load round trip") {
  const fs::path dir = scratch("roundtrip");
  auto ds = generate_synthetic(small_spec());
  ds.splits["train"] = {0, 64};
  ds.splits["val"] = {64, 96};
  save_dataset(ds, dir / "data.json");
  CHECK(fs::exists(dir / "data.x.xemb"));
  const auto back = load_dataset(dir / "data.json");
  CHECK(back == ds);
  CHECK(back.split("val").size() == 32);
  CHECK(error_of([&] { back.split("missing"); }).has_value());
}

TEST_CASE("xemb guards") {
  const fs::path dir = scratch("guards");
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  write_xemb(dir / "m.xemb", m);
  CHECK(read_xemb(dir / "m.xemb") == m);
  CHECK(fs::file_size(dir / "m.xemb") == 16 + 6 * 4);

  fs::resize_file(dir / "m.xemb", 16 + 5 * 4 + 2);
  try {
    read_xemb(dir / "m.xemb");
    FAIL("truncated file accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TruncatedFile);
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  std::ofstream(dir / "bad.xemb", std::ios::binary) << "NOPE1234";
  CHECK(error_of([&] { read_xemb(dir / "bad.xemb"); }) == ErrorKind::BadMagic);
  CHECK(error_of([&] { read_xemb(dir / "absent.xemb"); }) == ErrorKind::PathError);
}

TEST_CASE("manifest count mismatch") {
  const fs::path dir = scratch("mismatch");
  auto ds = generate_synthetic(small_spec());
  save_dataset(ds, dir / "data.json");
  write_xemb(dir / "data.y.xemb", ds.slice(0, 95).y);
  CHECK(error_of([&] { load_dataset(dir / "data.json"); }) == ErrorKind::ManifestMismatch);
}

TEST_CASE("multi-file modality concatenation") {
  const fs::path dir = scratch("concat");
  write_xemb(dir / "a.xemb", Matrix::from_rows({{3, 4}, {1, 0}}));
  write_xemb(dir / "b.xemb", Matrix::from_rows({{0, 2}, {5, 0}}));
  write_xemb(dir / "y.xemb", Matrix::from_rows({{1}, {2}}));
  nlohmann::json manifest = {{"format", "crossclr-paired"},
                             {"version", 1},
                             {"count", 2},
                             {"modalities",
                              {{"a", {{"file", "a.xemb"}, {"dim", 2}}},
                               {"b", {{"file", "b.xemb"}, {"dim", 2}}},
                               {"t", {{"file", "y.xemb"}, {"dim", 1}}}}},
                             {"pairs", {{"x", {"a", "b"}}, {"y", {"t"}}}}};
  std::ofstream(dir / "m.json") << manifest.dump();
  const auto ds = load_dataset(dir / "m.json");
  CHECK(ds.x.cols() == 4);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(ds.x(0, 0) == doctest::Approx(0.6 * r));
  CHECK(ds.x(0, 3) == doctest::Approx(r));
  CHECK(ds.y(1, 0) == 2.0);  // a single file is passed through unchanged
}
