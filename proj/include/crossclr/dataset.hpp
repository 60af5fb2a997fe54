#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crossclr/embedding.hpp"

namespace crossclr {

struct SplitRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
  friend bool operator==(const SplitRange&, const SplitRange&) = default;
};

/// Row i of x and row i of y form a positive pair.
struct PairedEmbeddingDataset {
  Matrix x;
  Matrix y;
  std::vector<std::int32_t> cluster_id;  // empty when unknown
  std::map<std::string, SplitRange> splits;

  std::size_t size() const { return x.rows(); }

  /// Rows of one named split as a standalone dataset (no split table).
  PairedEmbeddingDataset split(const std::string& name) const;

  /// Rows [begin, end).
  PairedEmbeddingDataset slice(std::size_t begin, std::size_t end) const;

  void validate() const;

  friend bool operator==(const PairedEmbeddingDataset&, const PairedEmbeddingDataset&) = default;
};

struct SyntheticSpec {
  std::size_t n_pairs = 2560;
  std::size_t n_clusters = 32;
  std::size_t d_x = 64;
  std::size_t d_y = 48;
  std::size_t d_latent = 16;
  double noise_sigma = 0.3;
  double overlap = 0.4;
  std::uint64_t seed = 0;
};

/// Clustered paired embeddings: latent = center + N(0, sigma^2 / d_latent I),
/// x = latent A_x,
/// y = latent A_y. `overlap` pulls the cluster centers toward their common
/// mean. Values are rounded to f32 so the dataset survives an XEMB round trip
/// bit for bit.
PairedEmbeddingDataset generate_synthetic(const SyntheticSpec& spec);

/// XEMB file: "XEMB", u32 version (1), u32 N, u32 D, N*D little-endian f32.
void write_xemb(const std::filesystem::path& path, const Matrix& m);
Matrix read_xemb(const std::filesystem::path& path);

/// Writes `<stem>.x.xemb`, `<stem>.y.xemb` and the JSON manifest at
/// `manifest_path` (the stem is the manifest file name without extension).
void save_dataset(const PairedEmbeddingDataset& ds, const std::filesystem::path& manifest_path);

/// Loads a manifest. Each side lists one or more modality files; several
/// files are combined by concatenating per-row l2-normalized blocks and
/// re-normalizing the result.
PairedEmbeddingDataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace crossclr
