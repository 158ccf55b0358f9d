#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "splicemix/augment.hpp"
#include "splicemix/label.hpp"
#include "splicemix/metrics.hpp"
#include "splicemix/tensor.hpp"

namespace splicemix::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// NPY
// ---------------------------------------------------------------------------

enum class DType { float32, uint8 };

/// C-order array with a little-endian payload, as stored in an NPY file.
struct NpyArray {
  DType dtype = DType::float32;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> payload;

  std::size_t count() const;
  static NpyArray from_floats(std::vector<std::size_t> shape, std::span<const float> values);
  static NpyArray from_uint8(std::vector<std::size_t> shape, std::span<const std::uint8_t> values);
  std::vector<float> to_floats() const;
  std::span<const std::uint8_t> to_uint8() const;

  bool operator==(const NpyArray&) const = default;
};

/// NPY format 1.0 bytes; header layout matches numpy's own writer.
std::vector<std::uint8_t> encode_npy(const NpyArray& array);
NpyArray decode_npy(std::span<const std::uint8_t> bytes);

void write_npy(const NpyArray& array, const fs::path& path);
NpyArray read_npy(const fs::path& path);

/// Stacks same-shaped tensors into a float32 [N, C, H, W] array.
NpyArray stack_images(std::span<const ImageTensor> images);
std::vector<ImageTensor> unstack_images(const NpyArray& array);
/// uint8 [N, K] multi-hot array.
NpyArray stack_labels(std::span<const MultiHotLabel> labels);
std::vector<MultiHotLabel> unstack_labels(const NpyArray& array);

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

/// Decodes an 8-bit PNG into [0, 1] samples: gray → 1 channel, color → 3
/// channels. Alpha is discarded. Throws FormatError for other bit depths.
ImageTensor decode_image(const fs::path& path);

/// Writes a 1- or 3-channel tensor as 8-bit PNG, clamping to [0, 1] and
/// rounding to the nearest level.
void encode_png(const ImageTensor& image, const fs::path& path);

/// Writes every mixed image of `batch` as mixed_NNNN.png; returns the paths.
std::vector<fs::path> encode_preview(const SplicedBatch& batch, const fs::path& dir);

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string image;
  std::vector<std::size_t> labels;
};

/// {"classes": [...], "entries": [{"image": "...", "labels": [...]}]}
struct Manifest {
  std::vector<std::string> classes;
  std::vector<ManifestEntry> entries;

  MultiHotLabel label(std::size_t entry) const;
  /// Throws FormatError naming the offending entry.
  void validate() const;
};

Manifest manifest_from_json(const nlohmann::json& doc);
nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest load_manifest(const fs::path& path);
void save_manifest(const Manifest& manifest, const fs::path& path);

/// Keys: grid_family ["RxC", ...], dropout_prob, mixed_frac, seed, and the
/// optional asymmetric_flip_prob, dropout_scope ("per_batch" | "per_image"),
/// cardinality ("clamp" | "strict"). Unknown keys are rejected.
AugConfig aug_config_from_json(const nlohmann::json& doc);
nlohmann::json aug_config_to_json(const AugConfig& cfg);
AugConfig load_aug_config(const fs::path& path);

nlohmann::json plan_to_json(const BatchPlan& plan);
BatchPlan plan_from_json(const nlohmann::json& doc);
/// 16 hex digits of FNV-1a over the compact plan JSON.
std::string plan_digest(const BatchPlan& plan);

/// MetricsReport as emitted by the eval command; values in percent.
nlohmann::json metrics_to_json(const metrics::MetricsReport& report);

nlohmann::json read_json(const fs::path& path);
/// Two-space indent plus trailing newline; output is byte-stable.
void write_json(const nlohmann::json& doc, const fs::path& path);

// ---------------------------------------------------------------------------
// Batch archive: images.npy, labels.npy, plan.json
// ---------------------------------------------------------------------------

struct BatchArchive {
  NpyArray images;  // float32 [N, C, H, W], regulars first
  NpyArray labels;  // uint8 [N, K]
  BatchPlan plan;

  std::size_t n_regular() const { return plan.batch_size; }
};

void write_batch_archive(const SplicedBatch& batch, const fs::path& dir);
BatchArchive read_batch_archive(const fs::path& dir);

}  // namespace splicemix::io
