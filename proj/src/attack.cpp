#include "fpath/attack.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpath/error.hpp"
#include "fpath/rng.hpp"
#include "parallel.hpp"

namespace fpath {

std::optional<std::string> AttackConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    throw InvalidArgument("epsilon must be finite and nonnegative");
  }
  if (!std::isfinite(step_size) || step_size <= 0.0) {
    throw InvalidArgument("step_size must be finite and positive");
  }
  if (iterations <= 0) throw InvalidArgument("iterations must be positive");
  if (!std::isfinite(box_lo) || !std::isfinite(box_hi) || box_lo > box_hi) {
    throw InvalidArgument("input box must be a finite closed interval");
  }
  if (step_size > epsilon) {
    return "step_size " + std::to_string(step_size) + " exceeds epsilon " +
           std::to_string(epsilon);
  }
  return std::nullopt;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<double> pgd_impl(const TapNet& net, std::span<const double> input, int label,
                             const AttackConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw ShapeError("attack input has dim " + std::to_string(input.size()) +
                     ", network expects " + std::to_string(net.input_dim()));
  }
  for (double v : input) {
    if (!(v >= cfg.box_lo && v <= cfg.box_hi)) {
      throw InvalidArgument("attack input lies outside the input box");
    }
  }
  const std::vector<double> original(input.begin(), input.end());
  if (cfg.epsilon == 0.0) return original;

  const size_t n = original.size();
  std::vector<double> lo(n), hi(n);
  for (size_t k = 0; k < n; ++k) {
    lo[k] = std::max(cfg.box_lo, original[k] - cfg.epsilon);
    hi[k] = std::min(cfg.box_hi, original[k] + cfg.epsilon);
  }

  std::vector<double> x = original;
  if (cfg.random_start) {
    Rng rng(seed);
    for (size_t k = 0; k < n; ++k) {
      x[k] = std::clamp(original[k] + rng.uniform(-cfg.epsilon, cfg.epsilon), lo[k], hi[k]);
    }
  }

  std::vector<double> best;
  double best_loss = -INFINITY;
  for (int it = 0; it < cfg.iterations; ++it) {
    const LossAndGrad lg = loss_and_input_grad(net, x, label);
    if (!lg.grad.input.allFinite()) {
      throw NumericError("non-finite input gradient at PGD iteration " + std::to_string(it));
    }
    for (size_t k = 0; k < n; ++k) {
      x[k] = std::clamp(x[k] + cfg.step_size * sign(lg.grad.input(static_cast<Eigen::Index>(k))),
                        lo[k], hi[k]);
    }
    const double loss = cross_entropy(forward(net, x).logits, label);
    if (best.empty() || loss > best_loss) {
      best_loss = loss;
      best = x;
    }
  }
  return best;
}

}  // namespace

std::vector<double> pgd_attack(const TapNet& net, std::span<const double> input, int label,
                               const AttackConfig& cfg) {
  return pgd_impl(net, input, label, cfg, cfg.rng_seed);
}

std::vector<double> fgsm_attack(const TapNet& net, std::span<const double> input, int label,
                                double epsilon, double box_lo, double box_hi) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  // PGD requires a positive step; at epsilon 0 the feasible set is a point anyway.
  cfg.step_size = epsilon > 0.0 ? epsilon : 1.0;
  cfg.iterations = 1;
  cfg.box_lo = box_lo;
  cfg.box_hi = box_hi;
  return pgd_attack(net, input, label, cfg);
}

double AdversarialBatch::success_rate() const {
  if (success.empty()) return 0.0;
  const auto hits = std::count(success.begin(), success.end(), true);
  return static_cast<double>(hits) / static_cast<double>(success.size());
}

Dataset AdversarialBatch::as_dataset(int num_classes) const {
  Dataset d;
  d.num_classes = num_classes;
  d.dim = perturbed.empty() ? 0 : static_cast<int>(perturbed.front().size());
  d.inputs = perturbed;
  d.labels = labels;
  return d;
}

AdversarialBatch attack_dataset(const TapNet& net, const Dataset& data, const AttackConfig& cfg) {
  if (data.empty()) throw InvalidArgument("cannot attack an empty dataset");
  const size_t n = data.size();
  AdversarialBatch batch;
  batch.originals.resize(n);
  batch.perturbed.resize(n);
  batch.labels = data.labels;
  std::vector<char> fooled(n, 0);
  detail::parallel_for(n, [&](size_t i) {
    try {
      batch.perturbed[i] = pgd_impl(net, data.input(i), data.labels[i], cfg, cfg.rng_seed + i);
    } catch (const Error& e) {
      throw Error(e.kind(), "example " + std::to_string(i) + ": " + e.what());
    }
    fooled[i] = forward(net, batch.perturbed[i]).predicted_class() != data.labels[i];
    batch.originals[i].assign(data.input(i).begin(), data.input(i).end());
  });
  batch.success.assign(fooled.begin(), fooled.end());
  return batch;
}

}  // namespace fpath
