#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpath/dataset.hpp"
#include "fpath/nn.hpp"
#include "fpath/path.hpp"

namespace fpath {

// All binary files are little-endian. Every file starts with a 4-byte ASCII
// magic followed by a u32 version.
//
// Feature dump ("FPTH", v1):
//   u32 magic, version, n_examples, K, L, dim_1 .. dim_L
//   u32 labels[n_examples]
//   u8  flags[n_examples]              0 = clean, 1 = adversarial
//   f32 payload, example-major then layer-major
//
// Centroid bank ("FPCB", v1):
//   u32 magic, version, K, L, dim_1 .. dim_L
//   u32 class_counts[K]
//   f64 centroids, class-major then layer-major
//
// Dataset ("FPDS", v1):
//   u32 magic, version, n_examples, K, dim
//   u32 labels[n_examples]
//   f64 inputs, example-major
//
// Network checkpoint ("FPNT", v1):
//   u32 magic, version, n_dims, dims[n_dims], n_taps, taps[n_taps]
//   per layer: f64 weights (row-major, out x in), then f64 biases

inline constexpr uint32_t kFormatVersion = 1;

enum class Origin : uint8_t { Clean = 0, Adversarial = 1 };

struct FeatureDump {
  uint32_t num_classes = 0;
  std::vector<uint32_t> layer_dims;
  std::vector<uint32_t> labels;
  std::vector<Origin> flags;
  // [example][layer][component]
  std::vector<std::vector<std::vector<float>>> features;

  size_t size() const { return labels.size(); }
  size_t num_layers() const { return layer_dims.size(); }
  size_t floats_per_example() const;
  void validate() const;

  /// Widens to double precision for the path mathematics.
  std::vector<FeaturePath> paths() const;
};

void write_dump(const FeatureDump& dump, const std::filesystem::path& dest);
FeatureDump read_dump(const std::filesystem::path& src);

void save_bank(const CentroidBank& bank, const std::filesystem::path& dest);
CentroidBank load_bank(const std::filesystem::path& src);

void save_dataset(const Dataset& data, const std::filesystem::path& dest);
Dataset load_dataset(const std::filesystem::path& src);

void save_net(const TapNet& net, const std::filesystem::path& dest);
TapNet load_net(const std::filesystem::path& src);

/// In-memory encoders, exposed for byte-level tests.
std::vector<uint8_t> encode_dump(const FeatureDump& dump);
FeatureDump decode_dump(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_bank(const CentroidBank& bank);
CentroidBank decode_bank(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_net(const TapNet& net);
TapNet decode_net(const std::vector<uint8_t>& bytes);

/// 64-bit FNV-1a, printed as 16 hex digits. Used to fingerprint outputs in
/// manifests, not for security.
std::string digest(const std::vector<uint8_t>& bytes);
std::string digest(const std::string& text);

/// Writes to a sibling temporary and renames over `dest`.
void write_file_atomic(const std::filesystem::path& dest, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::filesystem::path& src);

}  // namespace fpath
