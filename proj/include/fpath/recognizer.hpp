#pragma once

#include <span>
#include <vector>

#include "fpath/detector.hpp"
#include "fpath/nn.hpp"
#include "fpath/path.hpp"

namespace fpath {

struct LayerAccuracyReport {
  std::vector<double> clean_accuracy;
  std::vector<double> adversarial_accuracy;
  std::vector<int> clean_correct;
  std::vector<int> adversarial_correct;
  int clean_total = 0;
  int adversarial_total = 0;
};

struct VotingConfig {
  // Tap indices, strictly increasing.
  std::vector<int> selected_layers;
  // One per selected layer; empty means all 1.
  std::vector<double> weights;

  void validate(int num_layers) const;
  double weight(size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
};

/// Nearest-centroid accuracy of every layer, per pool. Either pool may be
/// empty, but not both; an empty pool reports zero accuracies.
LayerAccuracyReport layer_accuracy(std::span<const FeaturePath> clean,
                                   std::span<const FeaturePath> adversarial,
                                   const CentroidBank& bank);

/// Top `count` layers by adversarial accuracy, deeper layer first on ties,
/// returned in depth order.
VotingConfig select_layers(const LayerAccuracyReport& report, int count);

/// Weighted vote of per-layer nearest-centroid predictions. Tied top scores
/// resolve to the deepest selected layer whose prediction is among the tie.
int vote(const FeaturePath& path, const CentroidBank& bank, const VotingConfig& cfg);

/// Vote over precomputed per-layer predictions (indexed by tap).
int vote_predictions(std::span<const int> layer_predictions, const VotingConfig& cfg);

struct Recognition {
  int label = 0;
  DetectionVerdict detection;
};

/// Detect, then route: clean goes to the network's argmax, adversarial to the
/// layer vote.
Recognition recognize(std::span<const double> input, const TapNet& net, const CentroidBank& bank,
                      double threshold, const DetectorConfig& det_cfg,
                      const VotingConfig& vote_cfg);

}  // namespace fpath
