#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fpath/path.hpp"

namespace fpath {

struct DetectorConfig {
  // Layers contributing to S_max; empty means all layers.
  std::vector<bool> layer_mask;
  int histogram_bins = 256;
  std::optional<double> threshold_override;

  std::vector<bool> resolved_mask(int num_layers) const;
};

enum class Verdict { Clean, Adversarial };

struct DetectionVerdict {
  double s_max = 0.0;
  double threshold = 0.0;
  Verdict verdict = Verdict::Clean;
  int argmax_class = 0;
};

struct MaxSimilarity {
  double value = 0.0;
  int cls = 0;
};

/// Max over classes of the equal-weighted similarity over masked layers.
MaxSimilarity s_max(const FeaturePath& path, const CentroidBank& bank, const DetectorConfig& cfg);

/// Otsu threshold over a `bins`-bin histogram spanning [min, max]. Candidates
/// are the interior bin edges; a score s falls below threshold t iff s < t.
/// Ties in between-class variance resolve to the smaller edge.
double calibrate_threshold(std::span<const double> scores, int bins);

/// S_max < threshold is adversarial; equality is clean.
DetectionVerdict detect(const FeaturePath& path, const CentroidBank& bank, double threshold,
                        const DetectorConfig& cfg);

/// Keeps layers whose variability ratio is >= cutoff. If none survive, only
/// the layer with the largest ratio is kept.
std::vector<bool> auto_layer_mask(std::span<const double> variability, double cutoff = 0.1);

}  // namespace fpath
