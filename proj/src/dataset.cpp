#include "crossclr/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "crossclr/errors.hpp"

namespace crossclr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'X', 'E', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& buf, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + b])) << (8 * b);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::PathError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void normalize_in_place(std::span<double> r) {
  const double norm = l2_norm(r);
  if (norm <= 1e-12) throw Error(ErrorKind::ZeroVectorRow, "cannot normalize a zero row");
  for (double& v : r) v /= norm;
}

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t i = begin; i < end; ++i) std::ranges::copy(m.row(i), out.row(i - begin).begin());
  return out;
}

}  // namespace

PairedEmbeddingDataset PairedEmbeddingDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw Error(ErrorKind::InvalidShape, "slice out of range");
  PairedEmbeddingDataset out;
  out.x = rows_of(x, begin, end);
  out.y = rows_of(y, begin, end);
  if (!cluster_id.empty())
    out.cluster_id.assign(cluster_id.begin() + static_cast<std::ptrdiff_t>(begin),
                          cluster_id.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

PairedEmbeddingDataset PairedEmbeddingDataset::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw Error(ErrorKind::InvalidArgument, "no split named '" + name + "'");
  return slice(it->second.begin, it->second.end);
}

void PairedEmbeddingDataset::validate() const {
  if (x.rows() != y.rows()) throw Error(ErrorKind::InvalidShape, "x and y row counts differ");
  if (!cluster_id.empty() && cluster_id.size() != x.rows())
    throw Error(ErrorKind::InvalidShape, "cluster labels do not match the pair count");
  for (const Matrix* m : {&x, &y})
    for (double v : m->values())
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "dataset holds a non-finite entry");
  for (const auto& [name, r] : splits)
    if (r.begin > r.end || r.end > x.rows())
      throw Error(ErrorKind::InvalidShape, "split '" + name + "' out of range");
}

PairedEmbeddingDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_clusters == 0 || spec.n_clusters > spec.n_pairs || spec.d_x < 2 || spec.d_y < 2 ||
      spec.d_latent < 2 || spec.noise_sigma < 0.0 || spec.overlap < 0.0 || spec.overlap > 1.0) {
    throw Error(ErrorKind::InvalidShape, "invalid synthetic dataset parameters");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dl = spec.d_latent;

  Matrix centers(spec.n_clusters, dl);
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (double& v : centers.row(c)) v = normal(rng);
    normalize_in_place(centers.row(c));
  }
  std::vector<double> mean(dl, 0.0);
  for (std::size_t c = 0; c < spec.n_clusters; ++c)
    for (std::size_t k = 0; k < dl; ++k) mean[k] += centers(c, k);
  normalize_in_place(mean);
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    auto r = centers.row(c);
    for (std::size_t k = 0; k < dl; ++k) r[k] = (1.0 - spec.overlap) * r[k] + spec.overlap * mean[k];
    normalize_in_place(r);
  }

  const auto random_map = [&](std::size_t d_out) {
    Matrix a(dl, d_out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dl));
    for (double& v : a.values()) v = normal(rng) * scale;
    return a;
  };
  const Matrix ax = random_map(spec.d_x);
  const Matrix ay = random_map(spec.d_y);

  PairedEmbeddingDataset ds;
  ds.cluster_id.resize(spec.n_pairs);
  for (std::size_t i = 0; i < spec.n_pairs; ++i)
    ds.cluster_id[i] = static_cast<std::int32_t>(i % spec.n_clusters);
  std::shuffle(ds.cluster_id.begin(), ds.cluster_id.end(), rng);

  ds.x = Matrix(spec.n_pairs, spec.d_x);
  ds.y = Matrix(spec.n_pairs, spec.d_y);
  std::vector<double> latent(dl);
  // Per-coordinate scale so the noise vector has expected squared norm sigma^2.
  const double noise_scale = spec.noise_sigma / std::sqrt(static_cast<double>(dl));
  for (std::size_t i = 0; i < spec.n_pairs; ++i) {
    const auto center = centers.row(static_cast<std::size_t>(ds.cluster_id[i]));
    for (std::size_t k = 0; k < dl; ++k) latent[k] = center[k] + noise_scale * normal(rng);
    for (auto [a, out] : {std::pair{&ax, &ds.x}, std::pair{&ay, &ds.y}}) {
      auto row = out->row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < dl; ++k) acc += latent[k] * (*a)(k, j);
        row[j] = static_cast<double>(static_cast<float>(acc));
      }
    }
  }
  ds.splits["all"] = {0, spec.n_pairs};
  return ds;
}

void write_xemb(const fs::path& path, const Matrix& m) {
  std::string buf(kMagic.begin(), kMagic.end());
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(m.rows()));
  put_u32(buf, static_cast<std::uint32_t>(m.cols()));
  buf.reserve(kHeaderBytes + 4 * m.values().size());
  for (double v : m.values()) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::PathError, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::PathError, "short write to " + path.string());
}

Matrix read_xemb(const fs::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 4) {
    throw Error(ErrorKind::TruncatedFile, path.string() + ": file ends at byte " + std::to_string(buf.size()) +
                                              " inside the header");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), buf.begin())) {
    throw Error(ErrorKind::BadMagic, path.string() + " is not an XEMB file");
  }
  if (buf.size() < kHeaderBytes) {
    throw Error(ErrorKind::TruncatedFile, path.string() + ": file ends at byte " + std::to_string(buf.size()) +
                                              " inside the header");
  }
  const std::uint32_t version = get_u32(buf, 4);
  if (version != kVersion) {
    throw Error(ErrorKind::VersionMismatch, path.string() + ": version " + std::to_string(version));
  }
  const std::size_t n = get_u32(buf, 8);
  const std::size_t d = get_u32(buf, 12);
  const std::size_t expected = kHeaderBytes + 4 * n * d;
  if (buf.size() < expected) {
    throw Error(ErrorKind::TruncatedFile, path.string() + ": expected " + std::to_string(expected) +
                                              " bytes, file ends at byte offset " +
                                              std::to_string(buf.size()));
  }
  if (buf.size() > expected) {
    throw Error(ErrorKind::ManifestMismatch, path.string() + ": trailing bytes after the payload");
  }
  Matrix m(n, d);
  auto values = m.values();
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<double>(std::bit_cast<float>(get_u32(buf, kHeaderBytes + 4 * i)));
  return m;
}

void save_dataset(const PairedEmbeddingDataset& ds, const fs::path& manifest_path) {
  ds.validate();
  const std::string stem = manifest_path.stem().string();
  const fs::path dir = manifest_path.parent_path();
  const std::string x_file = stem + ".x.xemb";
  const std::string y_file = stem + ".y.xemb";
  write_xemb(dir / x_file, ds.x);
  write_xemb(dir / y_file, ds.y);

  json manifest;
  manifest["format"] = "crossclr-paired-embeddings";
  manifest["version"] = kVersion;
  manifest["count"] = ds.size();
  manifest["modalities"] = {{"x", {{"file", x_file}, {"dim", ds.x.cols()}}},
                            {"y", {{"file", y_file}, {"dim", ds.y.cols()}}}};
  manifest["pairs"] = {{"x", json::array({"x"})}, {"y", json::array({"y"})}};
  json splits = json::object();
  for (const auto& [name, r] : ds.splits) splits[name] = {r.begin, r.end};
  manifest["splits"] = splits;
  if (!ds.cluster_id.empty()) manifest["cluster_id"] = ds.cluster_id;

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::PathError, "cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

PairedEmbeddingDataset load_dataset(const fs::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestMismatch, manifest_path.string() + ": " + e.what());
  }
  const fs::path dir = manifest_path.parent_path();
  try {
    if (manifest.at("version").get<std::uint32_t>() != kVersion) {
      throw Error(ErrorKind::VersionMismatch, "manifest version mismatch");
    }
    const std::size_t count = manifest.at("count").get<std::size_t>();

    std::map<std::string, Matrix> loaded;
    for (const auto& [name, entry] : manifest.at("modalities").items()) {
      Matrix m = read_xemb(dir / entry.at("file").get<std::string>());
      const std::size_t dim = entry.at("dim").get<std::size_t>();
      if (m.rows() != count || m.cols() != dim) {
        throw Error(ErrorKind::ManifestMismatch,
                    "modality '" + name + "': manifest says " + std::to_string(count) + "x" +
                        std::to_string(dim) + ", binary holds " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
      }
      loaded.emplace(name, std::move(m));
    }

    const auto combine = [&](const json& names) {
      const auto list = names.get<std::vector<std::string>>();
      if (list.empty()) throw Error(ErrorKind::ManifestMismatch, "empty modality list");
      for (const auto& n : list)
        if (!loaded.contains(n)) throw Error(ErrorKind::ManifestMismatch, "unknown modality '" + n + "'");
      if (list.size() == 1) return loaded.at(list.front());
      std::size_t total = 0;
      for (const auto& n : list) total += loaded.at(n).cols();
      Matrix out(count, total);
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t col = 0;
        for (const auto& n : list) {
          const Matrix& part = loaded.at(n);
          auto dst = out.row(i).subspan(col, part.cols());
          std::ranges::copy(part.row(i), dst.begin());
          normalize_in_place(dst);
          col += part.cols();
        }
        normalize_in_place(out.row(i));
      }
      return out;
    };

    PairedEmbeddingDataset ds;
    ds.x = combine(manifest.at("pairs").at("x"));
    ds.y = combine(manifest.at("pairs").at("y"));
    if (manifest.contains("splits")) {
      for (const auto& [name, r] : manifest.at("splits").items()) {
        const auto range = r.get<std::array<std::size_t, 2>>();
        ds.splits[name] = {range[0], range[1]};
      }
    }
    if (manifest.contains("cluster_id")) {
      ds.cluster_id = manifest.at("cluster_id").get<std::vector<std::int32_t>>();
      if (ds.cluster_id.size() != count) {
        throw Error(ErrorKind::ManifestMismatch, "cluster label count disagrees with the manifest");
      }
    }
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestMismatch, manifest_path.string() + ": " + e.what());
  }
}

}  // namespace crossclr
