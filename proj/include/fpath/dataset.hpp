#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fpath {

/// Labeled input vectors sharing one dimension.
struct Dataset {
  int dim = 0;
  int num_classes = 0;
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;

  size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> input(size_t i) const { return inputs[i]; }

  /// Throws on ragged inputs, out-of-range labels or non-finite values.
  void validate() const;
};

struct SynthParams {
  int num_classes = 10;
  int dim = 20;
  int train_per_class = 500;
  int calib_per_class = 100;
  int test_per_class = 100;
  double separation = 6.0;
  // Raw coordinates are mapped through 1/(1+exp(-x/squash_scale)).
  double squash_scale = 2.0;
  uint64_t seed = 7;
};

struct SynthSplits {
  Dataset train;
  Dataset calib;
  Dataset test;
};

/// Unit-covariance Gaussian blobs with means on the signed coordinate axes,
/// scaled so every pair of means is at least `separation` apart, then squashed
/// coordinate-wise into (0, 1). At most 2*dim classes fit this packing.
SynthSplits synth_blobs(const SynthParams& params);

/// Class means in raw (pre-squash) coordinates.
std::vector<std::vector<double>> blob_means(const SynthParams& params);

}  // namespace fpath
