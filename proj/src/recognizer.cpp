#include "fpath/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "fpath/error.hpp"

namespace fpath {

void VotingConfig::validate(int num_layers) const {
  if (selected_layers.empty()) throw InvalidArgument("voting needs at least one selected layer");
  for (size_t i = 0; i < selected_layers.size(); ++i) {
    const int l = selected_layers[i];
    if (l < 0 || l >= num_layers) {
      throw InvalidArgument("selected layer " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_layers) + ")");
    }
    if (i > 0 && l <= selected_layers[i - 1]) {
      throw InvalidArgument("selected layers must be strictly increasing");
    }
  }
  if (!weights.empty()) {
    if (weights.size() != selected_layers.size()) {
      throw ShapeError("voting weights must match the selected layers");
    }
    for (double w : weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("voting weights must be positive");
    }
  }
}

namespace {

void count_pool(std::span<const FeaturePath> pool, const CentroidBank& bank,
                std::vector<int>& correct) {
  correct.assign(bank.num_layers(), 0);
  for (size_t i = 0; i < pool.size(); ++i) {
    const FeaturePath& p = pool[i];
    if (!p.label || *p.label < 0 || *p.label >= bank.num_classes()) {
      throw InvalidArgument("path " + std::to_string(i) + " lacks a valid label");
    }
    bank.check_path(p);
    for (int l = 0; l < bank.num_layers(); ++l) {
      if (nearest_centroid(p, bank, l) == *p.label) ++correct[l];
    }
  }
}

std::vector<double> rates(const std::vector<int>& correct, int total) {
  std::vector<double> r(correct.size(), 0.0);
  if (total == 0) return r;
  for (size_t l = 0; l < correct.size(); ++l) {
    r[l] = static_cast<double>(correct[l]) / static_cast<double>(total);
  }
  return r;
}

}  // namespace

LayerAccuracyReport layer_accuracy(std::span<const FeaturePath> clean,
                                   std::span<const FeaturePath> adversarial,
                                   const CentroidBank& bank) {
  if (clean.empty() && adversarial.empty()) {
    throw InvalidArgument("layer accuracy needs a nonempty pool");
  }
  LayerAccuracyReport r;
  count_pool(clean, bank, r.clean_correct);
  count_pool(adversarial, bank, r.adversarial_correct);
  r.clean_total = static_cast<int>(clean.size());
  r.adversarial_total = static_cast<int>(adversarial.size());
  r.clean_accuracy = rates(r.clean_correct, r.clean_total);
  r.adversarial_accuracy = rates(r.adversarial_correct, r.adversarial_total);
  return r;
}

VotingConfig select_layers(const LayerAccuracyReport& report, int count) {
  const int L = static_cast<int>(report.adversarial_accuracy.size());
  if (count < 1 || count > L) {
    throw InvalidArgument("cannot select " + std::to_string(count) + " of " + std::to_string(L) +
                          " layers");
  }
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double aa = report.adversarial_accuracy[a];
    const double ab = report.adversarial_accuracy[b];
    if (aa != ab) return aa > ab;
    return a > b;
  });
  VotingConfig cfg;
  cfg.selected_layers.assign(order.begin(), order.begin() + count);
  std::sort(cfg.selected_layers.begin(), cfg.selected_layers.end());
  return cfg;
}

int vote_predictions(std::span<const int> layer_predictions, const VotingConfig& cfg) {
  cfg.validate(static_cast<int>(layer_predictions.size()));
  std::map<int, double> score;
  double total_weight = 0.0;
  for (size_t i = 0; i < cfg.selected_layers.size(); ++i) {
    score[layer_predictions[cfg.selected_layers[i]]] += cfg.weight(i);
    total_weight += cfg.weight(i);
  }
  double top = 0.0;
  for (const auto& [cls, s] : score) top = std::max(top, s);
  // Weighted sums of the same weights in a different order can differ in the
  // last bit; treat those as ties.
  const double tol = 1e-12 * total_weight;
  for (size_t i = cfg.selected_layers.size(); i-- > 0;) {
    const int pred = layer_predictions[cfg.selected_layers[i]];
    if (score[pred] >= top - tol) return pred;
  }
  return layer_predictions[cfg.selected_layers.back()];
}

int vote(const FeaturePath& path, const CentroidBank& bank, const VotingConfig& cfg) {
  bank.check_path(path);
  cfg.validate(bank.num_layers());
  std::vector<int> preds(bank.num_layers(), -1);
  for (int l : cfg.selected_layers) preds[l] = nearest_centroid(path, bank, l);
  return vote_predictions(preds, cfg);
}

Recognition recognize(std::span<const double> input, const TapNet& net, const CentroidBank& bank,
                      double threshold, const DetectorConfig& det_cfg,
                      const VotingConfig& vote_cfg) {
  const ForwardTrace t = forward(net, input);
  FeaturePath path{t.tapped_features, std::nullopt};
  Recognition r;
  r.detection = detect(path, bank, threshold, det_cfg);
  r.label = r.detection.verdict == Verdict::Clean ? t.predicted_class() : vote(path, bank, vote_cfg);
  return r;
}

}  // namespace fpath
