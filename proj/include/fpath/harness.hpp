#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpath/attack.hpp"
#include "fpath/dataset.hpp"
#include "fpath/detector.hpp"
#include "fpath/io.hpp"
#include "fpath/nn.hpp"
#include "fpath/path.hpp"
#include "fpath/recognizer.hpp"

namespace fpath {

/// Runs the net over every example and packs the tapped features.
FeatureDump extract_dump(const TapNet& net, const Dataset& data, Origin origin);

/// Feature paths straight from the net in double precision.
std::vector<FeaturePath> extract_paths(const TapNet& net, const Dataset& data);

std::vector<double> s_max_scores(std::span<const FeaturePath> paths, const CentroidBank& bank,
                                 const DetectorConfig& cfg);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<int> clean_counts;
  std::vector<int> adversarial_counts;
};

/// Shared equal-width histogram of two score pools over their joint range.
Histogram score_histogram(std::span<const double> clean, std::span<const double> adversarial,
                          int bins);

struct BaselineRow {
  std::string method;
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
};

struct MetricsReport {
  int n_clean = 0;
  int n_adversarial = 0;

  double clean_accuracy = 0.0;        // standard model
  double adversarial_accuracy = 0.0;  // standard model

  double threshold = 0.0;
  std::vector<bool> layer_mask;
  std::vector<int> selected_layers;

  double detection_rate_adversarial = 0.0;  // TPR
  double detection_rate_clean = 0.0;        // TNR
  double balanced_detection_accuracy = 0.0;

  double pipeline_clean_accuracy = 0.0;
  double pipeline_adversarial_accuracy = 0.0;
  // Vote applied to every adversarial example, bypassing detection.
  double vote_adversarial_accuracy_all = 0.0;

  LayerAccuracyReport layers;
  Histogram histogram;
  std::vector<BaselineRow> baselines;

  double runtime_seconds = 0.0;

  /// Throws if a rate leaves [0,1], counts disagree, or routing arithmetic is
  /// violated.
  void check_invariants() const;

  /// Everything except runtime, for bit-exact comparison.
  nlohmann::json metrics_json() const;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);

  std::string histogram_csv() const;
  std::string layers_csv() const;
  std::string baselines_csv() const;
};

struct EvalSettings {
  double threshold = 0.0;
  DetectorConfig detector;
  VotingConfig voting;
};

MetricsReport evaluate(const TapNet& net, const CentroidBank& bank, const EvalSettings& settings,
                       const Dataset& clean_test, const Dataset& adversarial_test);

struct SweepRow {
  std::vector<int> layers;
  double pipeline_adversarial_accuracy = 0.0;
  double pipeline_clean_accuracy = 0.0;
  double vote_adversarial_accuracy_all = 0.0;
};

/// Every subset of `candidates` with at least `min_size` layers, evaluated as
/// the voting set. Rejects when the subset count exceeds `max_subsets`.
std::vector<SweepRow> layer_sweep(const TapNet& net, const CentroidBank& bank,
                                  const EvalSettings& settings, const Dataset& clean_test,
                                  const Dataset& adversarial_test, std::vector<int> candidates,
                                  int min_size = 2, int max_subsets = 4096);

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);

/// {"threshold", "layer_mask" (null = all), "selected_layers", "weights",
///  "histogram_bins"}
nlohmann::json settings_to_json(const EvalSettings& settings);
EvalSettings settings_from_json(const nlohmann::json& j);

nlohmann::json synth_params_to_json(const SynthParams& p);
SynthParams synth_params_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& t);
TrainConfig train_config_from_json(const nlohmann::json& j);
/// {"epsilon", "step_size", "iterations", "box": [lo, hi], "random_start", "rng_seed"}
nlohmann::json attack_config_to_json(const AttackConfig& a);
AttackConfig attack_config_from_json(const nlohmann::json& j);

enum class CalibrationPool { Calibration, Test };

struct ExperimentConfig {
  SynthParams data;
  std::vector<int> hidden_layers = {64, 64, 64, 64};
  std::vector<int> tap_points;  // empty: every hidden layer
  uint64_t init_seed = 11;
  TrainConfig train;

  AttackConfig attack;
  // When non-empty, the smallest epsilon whose calibration-split standard
  // adversarial accuracy falls below target_adversarial_accuracy is used.
  std::vector<double> epsilon_sweep;
  double target_adversarial_accuracy = 0.10;
  // step_size = epsilon * step_ratio when the epsilon comes from the sweep.
  double step_ratio = 0.25;

  int histogram_bins = 256;
  std::optional<std::vector<bool>> layer_mask;
  double pfc_cutoff = 0.1;
  std::optional<double> threshold_override;
  CalibrationPool calibration_pool = CalibrationPool::Calibration;
  int vote_layers = 1;

  bool adversarial_training_baseline = false;

  static ExperimentConfig toy_defaults();
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ExperimentResult {
  ExperimentConfig config;
  double epsilon = 0.0;
  std::vector<double> variability;
  MetricsReport report;
  TapNet net;
  CentroidBank bank;

  /// Config, derived settings and metrics.
  nlohmann::json manifest() const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct Reproduction {
  bool identical = false;
  nlohmann::json manifest;
};

/// Re-executes a manifest in memory (outputs are not rewritten) and compares
/// its metrics bit-for-bit. Works for "run" and every stage in stage_names().
Reproduction reproduce(const nlohmann::json& manifest);

/// Epsilon sweep on `data`: smallest candidate meeting the target, or the
/// largest candidate if none does.
double choose_epsilon(const TapNet& net, const Dataset& data, const AttackConfig& base,
                      std::span<const double> candidates, double target_accuracy,
                      double step_ratio);

}  // namespace fpath
