#include "fpath/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <string>

#include "fpath/error.hpp"
#include "parallel.hpp"

namespace fpath {

using nlohmann::json;

FeatureDump extract_dump(const TapNet& net, const Dataset& data, Origin origin) {
  data.validate();
  FeatureDump d;
  d.num_classes = static_cast<uint32_t>(net.num_classes());
  for (int dim : net.tap_dims()) d.layer_dims.push_back(static_cast<uint32_t>(dim));
  d.labels.assign(data.labels.begin(), data.labels.end());
  d.flags.assign(data.size(), origin);
  d.features.resize(data.size());
  detail::parallel_for(data.size(), [&](size_t i) {
    const ForwardTrace t = forward(net, data.input(i));
    for (const auto& f : t.tapped_features) d.features[i].emplace_back(f.begin(), f.end());
  });
  return d;
}

std::vector<FeaturePath> extract_paths(const TapNet& net, const Dataset& data) {
  std::vector<FeaturePath> out(data.size());
  detail::parallel_for(data.size(), [&](size_t i) {
    out[i] = {forward(net, data.input(i)).tapped_features, data.labels[i]};
  });
  return out;
}

std::vector<double> s_max_scores(std::span<const FeaturePath> paths, const CentroidBank& bank,
                                 const DetectorConfig& cfg) {
  std::vector<double> s;
  s.reserve(paths.size());
  for (const auto& p : paths) s.push_back(s_max(p, bank, cfg).value);
  return s;
}

Histogram score_histogram(std::span<const double> clean, std::span<const double> adversarial,
                          int bins) {
  if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
  Histogram h;
  h.clean_counts.assign(bins, 0);
  h.adversarial_counts.assign(bins, 0);
  double lo = INFINITY, hi = -INFINITY;
  for (double s : clean) lo = std::min(lo, s), hi = std::max(hi, s);
  for (double s : adversarial) lo = std::min(lo, s), hi = std::max(hi, s);
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (!(hi > lo)) hi = lo + 1.0;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / bins);
  auto bin_of = [&](double s) {
    const int b = static_cast<int>(std::floor((s - lo) / (hi - lo) * bins));
    return std::clamp(b, 0, bins - 1);
  };
  for (double s : clean) ++h.clean_counts[bin_of(s)];
  for (double s : adversarial) ++h.adversarial_counts[bin_of(s)];
  return h;
}

// ---------------------------------------------------------------------------
// MetricsReport

namespace {

json layer_report_json(const LayerAccuracyReport& r) {
  return {{"clean_accuracy", r.clean_accuracy},
          {"adversarial_accuracy", r.adversarial_accuracy},
          {"clean_correct", r.clean_correct},
          {"adversarial_correct", r.adversarial_correct},
          {"clean_total", r.clean_total},
          {"adversarial_total", r.adversarial_total}};
}

LayerAccuracyReport layer_report_from_json(const json& j) {
  LayerAccuracyReport r;
  j.at("clean_accuracy").get_to(r.clean_accuracy);
  j.at("adversarial_accuracy").get_to(r.adversarial_accuracy);
  j.at("clean_correct").get_to(r.clean_correct);
  j.at("adversarial_correct").get_to(r.adversarial_correct);
  j.at("clean_total").get_to(r.clean_total);
  j.at("adversarial_total").get_to(r.adversarial_total);
  return r;
}

void check_rate(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw NumericError(std::string(name) + " = " + std::to_string(v) + " lies outside [0, 1]");
  }
}

}  // namespace

void MetricsReport::check_invariants() const {
  check_rate(clean_accuracy, "clean_accuracy");
  check_rate(adversarial_accuracy, "adversarial_accuracy");
  check_rate(detection_rate_adversarial, "detection_rate_adversarial");
  check_rate(detection_rate_clean, "detection_rate_clean");
  check_rate(balanced_detection_accuracy, "balanced_detection_accuracy");
  check_rate(pipeline_clean_accuracy, "pipeline_clean_accuracy");
  check_rate(pipeline_adversarial_accuracy, "pipeline_adversarial_accuracy");
  check_rate(vote_adversarial_accuracy_all, "vote_adversarial_accuracy_all");
  for (double v : layers.clean_accuracy) check_rate(v, "layer clean accuracy");
  for (double v : layers.adversarial_accuracy) check_rate(v, "layer adversarial accuracy");
  if (layers.clean_total != n_clean || layers.adversarial_total != n_adversarial) {
    throw NumericError("layer report totals disagree with pool sizes");
  }
  long long hc = 0, ha = 0;
  for (int c : histogram.clean_counts) hc += c;
  for (int c : histogram.adversarial_counts) ha += c;
  if (hc != n_clean || ha != n_adversarial) {
    throw NumericError("histogram counts disagree with pool sizes");
  }
  // Examples both passed as clean and classified correctly by the model are
  // routed to the model, so pipeline accuracy cannot fall below this overlap.
  const double routed_floor = detection_rate_clean + clean_accuracy - 1.0;
  if (pipeline_clean_accuracy < routed_floor - 1e-12) {
    throw NumericError("pipeline clean accuracy " + std::to_string(pipeline_clean_accuracy) +
                       " below routing floor " + std::to_string(routed_floor));
  }
}

json MetricsReport::metrics_json() const {
  json baseline_rows = json::array();
  for (const auto& b : baselines) {
    baseline_rows.push_back({{"method", b.method},
                             {"clean_accuracy", b.clean_accuracy},
                             {"adversarial_accuracy", b.adversarial_accuracy}});
  }
  std::vector<int> mask_ints(layer_mask.begin(), layer_mask.end());
  return {{"n_clean", n_clean},
          {"n_adversarial", n_adversarial},
          {"clean_accuracy", clean_accuracy},
          {"adversarial_accuracy", adversarial_accuracy},
          {"threshold", threshold},
          {"layer_mask", mask_ints},
          {"selected_layers", selected_layers},
          {"detection_rate_adversarial", detection_rate_adversarial},
          {"detection_rate_clean", detection_rate_clean},
          {"balanced_detection_accuracy", balanced_detection_accuracy},
          {"pipeline_clean_accuracy", pipeline_clean_accuracy},
          {"pipeline_adversarial_accuracy", pipeline_adversarial_accuracy},
          {"vote_adversarial_accuracy_all", vote_adversarial_accuracy_all},
          {"layers", layer_report_json(layers)},
          {"histogram",
           {{"edges", histogram.edges},
            {"clean_counts", histogram.clean_counts},
            {"adversarial_counts", histogram.adversarial_counts}}},
          {"baselines", baseline_rows}};
}

json MetricsReport::to_json() const {
  json j = metrics_json();
  j["runtime_seconds"] = runtime_seconds;
  return j;
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport r;
  j.at("n_clean").get_to(r.n_clean);
  j.at("n_adversarial").get_to(r.n_adversarial);
  j.at("clean_accuracy").get_to(r.clean_accuracy);
  j.at("adversarial_accuracy").get_to(r.adversarial_accuracy);
  j.at("threshold").get_to(r.threshold);
  for (int m : j.at("layer_mask").get<std::vector<int>>()) r.layer_mask.push_back(m != 0);
  j.at("selected_layers").get_to(r.selected_layers);
  j.at("detection_rate_adversarial").get_to(r.detection_rate_adversarial);
  j.at("detection_rate_clean").get_to(r.detection_rate_clean);
  j.at("balanced_detection_accuracy").get_to(r.balanced_detection_accuracy);
  j.at("pipeline_clean_accuracy").get_to(r.pipeline_clean_accuracy);
  j.at("pipeline_adversarial_accuracy").get_to(r.pipeline_adversarial_accuracy);
  j.at("vote_adversarial_accuracy_all").get_to(r.vote_adversarial_accuracy_all);
  r.layers = layer_report_from_json(j.at("layers"));
  const json& h = j.at("histogram");
  h.at("edges").get_to(r.histogram.edges);
  h.at("clean_counts").get_to(r.histogram.clean_counts);
  h.at("adversarial_counts").get_to(r.histogram.adversarial_counts);
  for (const auto& b : j.at("baselines")) {
    r.baselines.push_back({b.at("method").get<std::string>(), b.at("clean_accuracy").get<double>(),
                           b.at("adversarial_accuracy").get<double>()});
  }
  if (j.contains("runtime_seconds")) j.at("runtime_seconds").get_to(r.runtime_seconds);
  return r;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string MetricsReport::histogram_csv() const {
  std::ostringstream os;
  os << "bin,lower,upper,clean,adversarial\n";
  for (size_t b = 0; b + 1 < histogram.edges.size(); ++b) {
    os << b << ',' << fmt(histogram.edges[b]) << ',' << fmt(histogram.edges[b + 1]) << ','
       << histogram.clean_counts[b] << ',' << histogram.adversarial_counts[b] << '\n';
  }
  return os.str();
}

std::string MetricsReport::layers_csv() const {
  std::ostringstream os;
  os << "layer,clean_accuracy,adversarial_accuracy,in_mask,selected\n";
  for (size_t l = 0; l < layers.clean_accuracy.size(); ++l) {
    const bool in_mask = l < layer_mask.size() && layer_mask[l];
    const bool selected = std::find(selected_layers.begin(), selected_layers.end(),
                                    static_cast<int>(l)) != selected_layers.end();
    os << l << ',' << fmt(layers.clean_accuracy[l]) << ',' << fmt(layers.adversarial_accuracy[l])
       << ',' << in_mask << ',' << selected << '\n';
  }
  return os.str();
}

std::string MetricsReport::baselines_csv() const {
  std::ostringstream os;
  os << "method,clean_accuracy,adversarial_accuracy\n";
  for (const auto& b : baselines) {
    os << b.method << ',' << fmt(b.clean_accuracy) << ',' << fmt(b.adversarial_accuracy) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

// Everything evaluation needs from one example, computed with a single forward.
struct Scored {
  int label = 0;
  int net_prediction = 0;
  double s_max = 0.0;
  bool flagged = false;
  std::vector<int> layer_predictions;
  FeaturePath path;
};

std::vector<Scored> score_pool(const TapNet& net, const CentroidBank& bank,
                               const EvalSettings& settings, const Dataset& data) {
  std::vector<Scored> out(data.size());
  detail::parallel_for(data.size(), [&](size_t i) {
    const ForwardTrace t = forward(net, data.input(i));
    Scored s;
    s.label = data.labels[i];
    s.net_prediction = t.predicted_class();
    s.path = {t.tapped_features, data.labels[i]};
    bank.check_path(s.path);
    s.s_max = fpath::s_max(s.path, bank, settings.detector).value;
    s.flagged = s.s_max < settings.threshold;
    s.layer_predictions.resize(bank.num_layers());
    for (int l = 0; l < bank.num_layers(); ++l) {
      s.layer_predictions[l] = nearest_centroid(s.path, bank, l);
    }
    out[i] = std::move(s);
  });
  return out;
}

double fraction(long long hits, size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

struct PoolOutcome {
  double pipeline = 0.0;
  double vote_all = 0.0;
};

PoolOutcome route_pool(const std::vector<Scored>& pool, const VotingConfig& voting) {
  long long pipeline = 0, vote_all = 0;
  for (const auto& s : pool) {
    const int voted = vote_predictions(s.layer_predictions, voting);
    const int routed = s.flagged ? voted : s.net_prediction;
    pipeline += routed == s.label;
    vote_all += voted == s.label;
  }
  return {fraction(pipeline, pool.size()), fraction(vote_all, pool.size())};
}

void check_settings(const CentroidBank& bank, const EvalSettings& settings) {
  if (!std::isfinite(settings.threshold)) throw InvalidArgument("threshold must be finite");
  settings.detector.resolved_mask(bank.num_layers());
  settings.voting.validate(bank.num_layers());
}

}  // namespace

MetricsReport evaluate(const TapNet& net, const CentroidBank& bank, const EvalSettings& settings,
                       const Dataset& clean_test, const Dataset& adversarial_test) {
  const auto t0 = std::chrono::steady_clock::now();
  if (clean_test.empty() || adversarial_test.empty()) {
    throw InvalidArgument("evaluation needs nonempty clean and adversarial pools");
  }
  if (net.path_length() != bank.num_layers()) {
    throw ShapeError("network taps " + std::to_string(net.path_length()) +
                     " layers but the centroid bank has " + std::to_string(bank.num_layers()));
  }
  check_settings(bank, settings);

  const auto clean = score_pool(net, bank, settings, clean_test);
  const auto adv = score_pool(net, bank, settings, adversarial_test);

  MetricsReport r;
  r.n_clean = static_cast<int>(clean.size());
  r.n_adversarial = static_cast<int>(adv.size());
  r.threshold = settings.threshold;
  r.layer_mask = settings.detector.resolved_mask(bank.num_layers());
  r.selected_layers = settings.voting.selected_layers;

  long long clean_ok = 0, adv_ok = 0, clean_passed = 0, adv_flagged = 0;
  for (const auto& s : clean) {
    clean_ok += s.net_prediction == s.label;
    clean_passed += !s.flagged;
  }
  for (const auto& s : adv) {
    adv_ok += s.net_prediction == s.label;
    adv_flagged += s.flagged;
  }
  r.clean_accuracy = fraction(clean_ok, clean.size());
  r.adversarial_accuracy = fraction(adv_ok, adv.size());
  r.detection_rate_clean = fraction(clean_passed, clean.size());
  r.detection_rate_adversarial = fraction(adv_flagged, adv.size());
  r.balanced_detection_accuracy = 0.5 * (r.detection_rate_clean + r.detection_rate_adversarial);

  const PoolOutcome clean_route = route_pool(clean, settings.voting);
  const PoolOutcome adv_route = route_pool(adv, settings.voting);
  r.pipeline_clean_accuracy = clean_route.pipeline;
  r.pipeline_adversarial_accuracy = adv_route.pipeline;
  r.vote_adversarial_accuracy_all = adv_route.vote_all;

  std::vector<FeaturePath> clean_paths, adv_paths;
  std::vector<double> clean_scores, adv_scores;
  for (const auto& s : clean) clean_paths.push_back(s.path), clean_scores.push_back(s.s_max);
  for (const auto& s : adv) adv_paths.push_back(s.path), adv_scores.push_back(s.s_max);
  r.layers = layer_accuracy(clean_paths, adv_paths, bank);
  r.histogram = score_histogram(clean_scores, adv_scores, settings.detector.histogram_bins);

  r.baselines.push_back({"standard", r.clean_accuracy, r.adversarial_accuracy});
  r.baselines.push_back({"layer-wise feature paths", r.pipeline_clean_accuracy,
                         r.pipeline_adversarial_accuracy});

  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.check_invariants();
  return r;
}

std::vector<SweepRow> layer_sweep(const TapNet& net, const CentroidBank& bank,
                                  const EvalSettings& settings, const Dataset& clean_test,
                                  const Dataset& adversarial_test, std::vector<int> candidates,
                                  int min_size, int max_subsets) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (int c : candidates) {
    if (c < 0 || c >= bank.num_layers()) {
      throw InvalidArgument("candidate layer " + std::to_string(c) + " outside [0, " +
                            std::to_string(bank.num_layers()) + ")");
    }
  }
  if (min_size < 1) min_size = 1;
  const int n = static_cast<int>(candidates.size());
  if (n > 30) throw InvalidArgument("too many candidate layers for an exhaustive sweep");

  std::vector<std::vector<int>> subsets;
  long long count = 0;
  for (int size = min_size; size <= n; ++size) {
    // C(n, size)
    long long c = 1;
    for (int k = 1; k <= size; ++k) c = c * (n - size + k) / k;
    count += c;
  }
  if (count > max_subsets) {
    throw InvalidArgument("layer sweep would evaluate " + std::to_string(count) +
                          " subsets, cap is " + std::to_string(max_subsets));
  }
  for (int size = min_size; size <= n; ++size) {
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + size, true);
    do {
      std::vector<int> s;
      for (int i = 0; i < n; ++i) {
        if (pick[i]) s.push_back(candidates[i]);
      }
      subsets.push_back(std::move(s));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  if (subsets.empty()) return {};

  EvalSettings probe = settings;
  probe.voting = {{subsets.front()}, {}};
  check_settings(bank, probe);
  const auto clean = score_pool(net, bank, probe, clean_test);
  const auto adv = score_pool(net, bank, probe, adversarial_test);

  std::vector<SweepRow> rows;
  for (auto& s : subsets) {
    VotingConfig v{s, {}};
    const PoolOutcome c = route_pool(clean, v);
    const PoolOutcome a = route_pool(adv, v);
    rows.push_back({std::move(s), a.pipeline, c.pipeline, a.vote_all});
  }
  return rows;
}

json sweep_to_json(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"layers", r.layers},
                   {"pipeline_adversarial_accuracy", r.pipeline_adversarial_accuracy},
                   {"pipeline_clean_accuracy", r.pipeline_clean_accuracy},
                   {"vote_adversarial_accuracy_all", r.vote_adversarial_accuracy_all}});
  }
  return out;
}

json settings_to_json(const EvalSettings& s) {
  json j;
  j["threshold"] = s.threshold;
  j["layer_mask"] = s.detector.layer_mask.empty()
                        ? json(nullptr)
                        : json(std::vector<int>(s.detector.layer_mask.begin(),
                                                s.detector.layer_mask.end()));
  j["selected_layers"] = s.voting.selected_layers;
  j["weights"] = s.voting.weights;
  j["histogram_bins"] = s.detector.histogram_bins;
  return j;
}

EvalSettings settings_from_json(const json& j) {
  EvalSettings s;
  j.at("threshold").get_to(s.threshold);
  if (j.contains("layer_mask") && !j.at("layer_mask").is_null()) {
    for (int v : j.at("layer_mask").get<std::vector<int>>()) s.detector.layer_mask.push_back(v != 0);
  }
  j.at("selected_layers").get_to(s.voting.selected_layers);
  if (j.contains("weights")) j.at("weights").get_to(s.voting.weights);
  if (j.contains("histogram_bins")) j.at("histogram_bins").get_to(s.detector.histogram_bins);
  return s;
}

// ---------------------------------------------------------------------------
// Experiment

ExperimentConfig ExperimentConfig::toy_defaults() {
  ExperimentConfig c;
  c.epsilon_sweep = {1.0 / 255, 2.0 / 255, 4.0 / 255, 6.0 / 255, 8.0 / 255, 12.0 / 255,
                     16.0 / 255, 24.0 / 255, 32.0 / 255, 48.0 / 255, 64.0 / 255};
  return c;
}

void ExperimentConfig::validate() const {
  if (hidden_layers.empty()) throw InvalidArgument("at least one hidden layer is required");
  for (int h : hidden_layers) {
    if (h <= 0) throw InvalidArgument("hidden layer widths must be positive");
  }
  train.validate();
  attack.validate();
  for (double e : epsilon_sweep) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw InvalidArgument("sweep epsilons must be finite");
  }
  if (!(step_ratio > 0.0)) throw InvalidArgument("step_ratio must be positive");
  if (histogram_bins < 2) throw InvalidArgument("histogram_bins must be at least 2");
  if (vote_layers < 1) throw InvalidArgument("vote_layers must be positive");
}

json synth_params_to_json(const SynthParams& p) {
  return {{"num_classes", p.num_classes},         {"dim", p.dim},
          {"train_per_class", p.train_per_class}, {"calib_per_class", p.calib_per_class},
          {"test_per_class", p.test_per_class},   {"separation", p.separation},
          {"squash_scale", p.squash_scale},       {"seed", p.seed}};
}

SynthParams synth_params_from_json(const json& d) {
  SynthParams p;
  d.at("num_classes").get_to(p.num_classes);
  d.at("dim").get_to(p.dim);
  d.at("train_per_class").get_to(p.train_per_class);
  d.at("calib_per_class").get_to(p.calib_per_class);
  d.at("test_per_class").get_to(p.test_per_class);
  d.at("separation").get_to(p.separation);
  d.at("squash_scale").get_to(p.squash_scale);
  d.at("seed").get_to(p.seed);
  return p;
}

json train_config_to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},   {"batch_size", t.batch_size},
          {"epochs", t.epochs},               {"lr_drop_epochs", t.lr_drop_epochs},
          {"lr_drop_factor", t.lr_drop_factor}, {"rng_seed", t.rng_seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig t;
  j.at("learning_rate").get_to(t.learning_rate);
  j.at("momentum").get_to(t.momentum);
  j.at("weight_decay").get_to(t.weight_decay);
  j.at("batch_size").get_to(t.batch_size);
  j.at("epochs").get_to(t.epochs);
  j.at("lr_drop_epochs").get_to(t.lr_drop_epochs);
  j.at("lr_drop_factor").get_to(t.lr_drop_factor);
  j.at("rng_seed").get_to(t.rng_seed);
  return t;
}

json attack_config_to_json(const AttackConfig& a) {
  return {{"epsilon", a.epsilon},       {"step_size", a.step_size},
          {"iterations", a.iterations}, {"box", {a.box_lo, a.box_hi}},
          {"random_start", a.random_start}, {"rng_seed", a.rng_seed}};
}

AttackConfig attack_config_from_json(const json& j) {
  AttackConfig a;
  j.at("epsilon").get_to(a.epsilon);
  j.at("step_size").get_to(a.step_size);
  j.at("iterations").get_to(a.iterations);
  a.box_lo = j.at("box").at(0).get<double>();
  a.box_hi = j.at("box").at(1).get<double>();
  j.at("random_start").get_to(a.random_start);
  j.at("rng_seed").get_to(a.rng_seed);
  return a;
}

namespace {

std::vector<int> mask_ints(const std::vector<bool>& m) { return {m.begin(), m.end()}; }

std::vector<bool> mask_from_json(const json& j) {
  std::vector<bool> m;
  for (int v : j.get<std::vector<int>>()) m.push_back(v != 0);
  return m;
}

}  // namespace

json ExperimentConfig::to_json() const {
  json j;
  j["data"] = synth_params_to_json(data);
  j["network"] = {{"hidden_layers", hidden_layers}, {"tap_points", tap_points},
                  {"init_seed", init_seed}};
  j["train"] = train_config_to_json(train);
  j["attack"] = attack_config_to_json(attack);
  j["epsilon_sweep"] = epsilon_sweep;
  j["target_adversarial_accuracy"] = target_adversarial_accuracy;
  j["step_ratio"] = step_ratio;
  j["detector"] = {{"histogram_bins", histogram_bins},
                   {"layer_mask", layer_mask ? json(mask_ints(*layer_mask)) : json(nullptr)},
                   {"pfc_cutoff", pfc_cutoff},
                   {"threshold_override",
                    threshold_override ? json(*threshold_override) : json(nullptr)},
                   {"calibration_pool",
                    calibration_pool == CalibrationPool::Test ? "test" : "calibration"}};
  j["voting"] = {{"layers", vote_layers}};
  j["adversarial_training_baseline"] = adversarial_training_baseline;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.data = synth_params_from_json(j.at("data"));
  const json& n = j.at("network");
  n.at("hidden_layers").get_to(c.hidden_layers);
  n.at("tap_points").get_to(c.tap_points);
  n.at("init_seed").get_to(c.init_seed);
  c.train = train_config_from_json(j.at("train"));
  c.attack = attack_config_from_json(j.at("attack"));
  j.at("epsilon_sweep").get_to(c.epsilon_sweep);
  j.at("target_adversarial_accuracy").get_to(c.target_adversarial_accuracy);
  j.at("step_ratio").get_to(c.step_ratio);
  const json& det = j.at("detector");
  det.at("histogram_bins").get_to(c.histogram_bins);
  if (!det.at("layer_mask").is_null()) c.layer_mask = mask_from_json(det.at("layer_mask"));
  det.at("pfc_cutoff").get_to(c.pfc_cutoff);
  if (!det.at("threshold_override").is_null()) {
    c.threshold_override = det.at("threshold_override").get<double>();
  }
  const std::string pool = det.at("calibration_pool").get<std::string>();
  if (pool == "test") {
    c.calibration_pool = CalibrationPool::Test;
  } else if (pool == "calibration") {
    c.calibration_pool = CalibrationPool::Calibration;
  } else {
    throw InvalidArgument("calibration_pool must be \"calibration\" or \"test\", got \"" + pool + "\"");
  }
  j.at("voting").at("layers").get_to(c.vote_layers);
  j.at("adversarial_training_baseline").get_to(c.adversarial_training_baseline);
  return c;
}

double choose_epsilon(const TapNet& net, const Dataset& data, const AttackConfig& base,
                      std::span<const double> candidates, double target_accuracy,
                      double step_ratio) {
  if (candidates.empty()) throw InvalidArgument("epsilon sweep has no candidates");
  std::vector<double> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  for (double eps : sorted) {
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    cfg.step_size = eps > 0.0 ? eps * step_ratio : base.step_size;
    const AdversarialBatch b = attack_dataset(net, data, cfg);
    if (1.0 - b.success_rate() < target_accuracy) return eps;
  }
  return sorted.back();
}

json ExperimentResult::manifest() const {
  const double step = config.epsilon_sweep.empty() ? config.attack.step_size
                                                  : epsilon * config.step_ratio;
  json derived = {{"epsilon", epsilon},
                  {"step_size", step},
                  {"threshold", report.threshold},
                  {"layer_mask", mask_ints(report.layer_mask)},
                  {"selected_layers", report.selected_layers},
                  {"variability", variability}};
  return {{"format", "fpath-manifest"},
          {"version", 1},
          {"command", "run"},
          {"config", config.to_json()},
          {"derived", derived},
          {"metrics", report.metrics_json()},
          {"runtime_seconds", report.runtime_seconds}};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;

  const SynthSplits splits = synth_blobs(cfg.data);
  if (splits.calib.empty() && cfg.calibration_pool == CalibrationPool::Calibration) {
    throw InvalidArgument("calibration pool requested but calib_per_class is 0");
  }
  if (splits.test.empty()) throw InvalidArgument("test_per_class must be positive");

  std::vector<int> dims{cfg.data.dim};
  dims.insert(dims.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  dims.push_back(cfg.data.num_classes);
  std::vector<int> taps = cfg.tap_points;
  if (taps.empty()) {
    for (size_t i = 0; i < cfg.hidden_layers.size(); ++i) taps.push_back(static_cast<int>(i));
  }
  TapNet net(dims, taps, cfg.init_seed);
  train(net, splits.train, cfg.train);

  const Dataset& calib_clean =
      cfg.calibration_pool == CalibrationPool::Test ? splits.test : splits.calib;

  AttackConfig atk = cfg.attack;
  if (!cfg.epsilon_sweep.empty()) {
    atk.epsilon = choose_epsilon(net, calib_clean, cfg.attack, cfg.epsilon_sweep,
                                 cfg.target_adversarial_accuracy, cfg.step_ratio);
    atk.step_size = atk.epsilon > 0.0 ? atk.epsilon * cfg.step_ratio : cfg.attack.step_size;
  }
  res.epsilon = atk.epsilon;

  const Dataset test_adv = attack_dataset(net, splits.test, atk).as_dataset(cfg.data.num_classes);
  AttackConfig calib_atk = atk;
  calib_atk.rng_seed = atk.rng_seed + splits.test.size();
  const Dataset calib_adv = cfg.calibration_pool == CalibrationPool::Test
                                ? test_adv
                                : attack_dataset(net, calib_clean, calib_atk)
                                      .as_dataset(cfg.data.num_classes);

  const auto train_paths = extract_paths(net, splits.train);
  CentroidBank bank = compute_centroids(train_paths, cfg.data.num_classes);
  res.variability = pfc_variability(train_paths, bank);

  DetectorConfig det;
  det.histogram_bins = cfg.histogram_bins;
  det.layer_mask = cfg.layer_mask ? *cfg.layer_mask : auto_layer_mask(res.variability, cfg.pfc_cutoff);
  det.threshold_override = cfg.threshold_override;

  const auto cal_clean_paths = extract_paths(net, calib_clean);
  const auto cal_adv_paths = extract_paths(net, calib_adv);
  double tau;
  if (cfg.threshold_override) {
    tau = *cfg.threshold_override;
  } else {
    std::vector<double> scores = s_max_scores(cal_clean_paths, bank, det);
    const auto adv_scores = s_max_scores(cal_adv_paths, bank, det);
    scores.insert(scores.end(), adv_scores.begin(), adv_scores.end());
    tau = calibrate_threshold(scores, cfg.histogram_bins);
  }

  const LayerAccuracyReport cal_layers = layer_accuracy(cal_clean_paths, cal_adv_paths, bank);
  const VotingConfig voting =
      select_layers(cal_layers, std::min(cfg.vote_layers, bank.num_layers()));

  EvalSettings settings{tau, det, voting};
  res.report = evaluate(net, bank, settings, splits.test, test_adv);

  if (cfg.adversarial_training_baseline) {
    TapNet robust(dims, taps, cfg.init_seed);
    AttackConfig train_atk = atk;
    train(robust, splits.train, cfg.train,
          [&train_atk](const TapNet& n, std::span<const double> x, int y) {
            return pgd_attack(n, x, y, train_atk);
          });
    const Dataset robust_adv =
        attack_dataset(robust, splits.test, atk).as_dataset(cfg.data.num_classes);
    res.report.baselines.insert(res.report.baselines.begin() + 1,
                                {"adversarial training", accuracy(robust, splits.test),
                                 accuracy(robust, robust_adv)});
  }

  res.net = std::move(net);
  res.bank = std::move(bank);
  res.report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace fpath
