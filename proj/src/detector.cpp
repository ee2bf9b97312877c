#include "fpath/detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpath/error.hpp"

namespace fpath {

std::vector<bool> DetectorConfig::resolved_mask(int num_layers) const {
  if (layer_mask.empty()) return std::vector<bool>(num_layers, true);
  if (static_cast<int>(layer_mask.size()) != num_layers) {
    throw ShapeError("layer mask has " + std::to_string(layer_mask.size()) + " entries, path has " +
                     std::to_string(num_layers) + " layers");
  }
  if (std::none_of(layer_mask.begin(), layer_mask.end(), [](bool b) { return b; })) {
    throw InvalidArgument("layer mask excludes every layer");
  }
  return layer_mask;
}

MaxSimilarity s_max(const FeaturePath& path, const CentroidBank& bank, const DetectorConfig& cfg) {
  const std::vector<bool> mask = cfg.resolved_mask(bank.num_layers());
  const SimilarityProfile prof = similarity_profile(path, bank, equal_weights(mask));
  MaxSimilarity best{prof.aggregated[0], 0};
  for (int c = 1; c < bank.num_classes(); ++c) {
    if (prof.aggregated[c] > best.value) best = {prof.aggregated[c], c};
  }
  return best;
}

double calibrate_threshold(std::span<const double> scores, int bins) {
  if (bins < 2) throw InvalidArgument("histogram needs at least 2 bins");
  if (scores.empty()) throw InvalidArgument("no scores to calibrate on");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("threshold calibration scores must be finite");
  }
  const auto [min_it, max_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *min_it;
  const double hi = *max_it;
  if (!(hi > lo)) {
    throw DegenerateError("all scores are identical; no threshold separates them");
  }

  auto edge = [&](int i) { return lo + (hi - lo) * static_cast<double>(i) / bins; };
  const double width = (hi - lo) / bins;

  std::vector<long long> count(bins, 0);
  std::vector<double> sum(bins, 0.0);
  for (double s : scores) {
    int b = static_cast<int>(std::floor((s - lo) / width));
    b = std::clamp(b, 0, bins - 1);
    // Align bin membership with the strict comparison s < edge used by detect.
    while (b > 0 && s < edge(b)) --b;
    while (b < bins - 1 && s >= edge(b + 1)) ++b;
    ++count[b];
    sum[b] += s;
  }

  const double n = static_cast<double>(scores.size());
  double total_sum = 0.0;
  for (double v : sum) total_sum += v;

  long long below_count = 0;
  double below_sum = 0.0;
  double best_var = -1.0;
  int best_edge = 1;
  for (int i = 1; i < bins; ++i) {
    below_count += count[i - 1];
    below_sum += sum[i - 1];
    const long long above_count = static_cast<long long>(scores.size()) - below_count;
    double var = 0.0;
    if (below_count > 0 && above_count > 0) {
      const double w0 = static_cast<double>(below_count) / n;
      const double w1 = static_cast<double>(above_count) / n;
      const double m0 = below_sum / static_cast<double>(below_count);
      const double m1 = (total_sum - below_sum) / static_cast<double>(above_count);
      var = w0 * w1 * (m0 - m1) * (m0 - m1);
    }
    if (var > best_var) {
      best_var = var;
      best_edge = i;
    }
  }
  return edge(best_edge);
}

DetectionVerdict detect(const FeaturePath& path, const CentroidBank& bank, double threshold,
                        const DetectorConfig& cfg) {
  if (!std::isfinite(threshold)) throw InvalidArgument("threshold must be finite");
  const MaxSimilarity m = s_max(path, bank, cfg);
  DetectionVerdict v;
  v.s_max = m.value;
  v.argmax_class = m.cls;
  v.threshold = threshold;
  v.verdict = m.value < threshold ? Verdict::Adversarial : Verdict::Clean;
  return v;
}

std::vector<bool> auto_layer_mask(std::span<const double> variability, double cutoff) {
  std::vector<bool> mask(variability.size(), false);
  if (variability.empty()) return mask;
  bool any = false;
  for (size_t l = 0; l < variability.size(); ++l) {
    mask[l] = variability[l] >= cutoff;
    any = any || mask[l];
  }
  if (!any) {
    const auto best = std::max_element(variability.begin(), variability.end());
    mask[static_cast<size_t>(best - variability.begin())] = true;
  }
  return mask;
}

}  // namespace fpath
