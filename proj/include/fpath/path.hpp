#pragma once

#include <optional>
#include <span>
#include <vector>

namespace fpath {

/// One example's tapped features, shallowest layer first.
struct FeaturePath {
  std::vector<std::vector<double>> layers;
  std::optional<int> label;

  int length() const { return static_cast<int>(layers.size()); }
};

/// Per-class, per-layer unit-norm centroids of training features.
class CentroidBank {
 public:
  CentroidBank() = default;

  /// Validates shapes and that every centroid has unit norm within `norm_tol`.
  CentroidBank(std::vector<int> layer_dims, std::vector<std::vector<std::vector<double>>> centroids,
               std::vector<int> class_counts, double norm_tol = 1e-9);

  int num_classes() const { return static_cast<int>(centroids_.size()); }
  int num_layers() const { return static_cast<int>(layer_dims_.size()); }
  const std::vector<int>& layer_dims() const { return layer_dims_; }
  const std::vector<int>& class_counts() const { return class_counts_; }

  std::span<const double> centroid(int cls, int layer) const { return centroids_[cls][layer]; }

  /// Throws ShapeError unless the path matches the bank's layer dims.
  void check_path(const FeaturePath& path) const;

 private:
  std::vector<int> layer_dims_;
  // [class][layer][component]
  std::vector<std::vector<std::vector<double>>> centroids_;
  std::vector<int> class_counts_;
};

/// Mean feature per class and layer, L2-normalized.
CentroidBank compute_centroids(std::span<const FeaturePath> paths, int num_classes);

/// Cosine of the angle between `feature` and `direction`; 0 when either is zero.
double cosine_similarity(std::span<const double> feature, std::span<const double> direction);

/// s_c^l for every layer l of `path` against class `cls`.
std::vector<double> similarity_path(const FeaturePath& path, const CentroidBank& bank, int cls);

struct SimilarityProfile {
  // [class][layer]
  std::vector<std::vector<double>> per_layer;
  // Weighted sum over layers, per class.
  std::vector<double> aggregated;
  std::vector<double> weights;
};

/// Per-layer similarities for all classes plus S_c = sum_l w_l s_c^l.
SimilarityProfile similarity_profile(const FeaturePath& path, const CentroidBank& bank,
                                     std::span<const double> weights);

/// Equal weights over the layers set in `mask`, zero elsewhere.
std::vector<double> equal_weights(const std::vector<bool>& mask);

/// Per-layer within/between scatter ratio of normalized features. Small values
/// mean the layer's classes have collapsed onto their centroids.
std::vector<double> pfc_variability(std::span<const FeaturePath> paths, const CentroidBank& bank);

/// Index of the class whose centroid is most similar at `layer`. Ties go to
/// the smaller class index.
int nearest_centroid(const FeaturePath& path, const CentroidBank& bank, int layer);

}  // namespace fpath
