#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpath/dataset.hpp"
#include "fpath/nn.hpp"

namespace fpath {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int iterations = 20;
  double box_lo = 0.0;
  double box_hi = 1.0;
  bool random_start = false;
  uint64_t rng_seed = 0;

  /// Throws on invalid values; returns a warning when step_size > epsilon.
  std::optional<std::string> validate() const;
};

struct AdversarialBatch {
  std::vector<std::vector<double>> originals;
  std::vector<std::vector<double>> perturbed;
  std::vector<int> labels;
  std::vector<bool> success;

  double success_rate() const;
  /// The perturbed inputs as a dataset with the original labels.
  Dataset as_dataset(int num_classes) const;
};

/// L-infinity PGD: x <- clip_box(clip_eps(x + step * sign(grad))). Returns
/// the post-step iterate with the highest loss; iterate 0 is the clean input
/// (or a uniform draw in the ball when random_start is set).
std::vector<double> pgd_attack(const TapNet& net, std::span<const double> input, int label,
                               const AttackConfig& cfg);

/// One PGD step of size epsilon.
std::vector<double> fgsm_attack(const TapNet& net, std::span<const double> input, int label,
                                double epsilon, double box_lo = 0.0, double box_hi = 1.0);

/// Attacks every example in order. Example i uses seed rng_seed + i for its
/// random start, so results do not depend on evaluation order.
AdversarialBatch attack_dataset(const TapNet& net, const Dataset& data, const AttackConfig& cfg);

}  // namespace fpath
