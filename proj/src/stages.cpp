#include "fpath/stages.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <string>

#include "fpath/error.hpp"
#include "fpath/harness.hpp"
#include "parallel.hpp"

namespace fpath {

using json = nlohmann::json;

namespace {

// Rejects keys the defaults do not know, so a typo never silently falls back
// to a default. Objects are checked recursively.
void check_keys(const json& given, const json& defaults, const std::string& where) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!defaults.contains(it.key())) {
      throw InvalidArgument("unknown config key \"" + where + it.key() + "\"");
    }
    const json& d = defaults.at(it.key());
    if (it->is_object() && d.is_object()) check_keys(*it, d, where + it.key() + ".");
  }
}

// Like merge_patch, but an explicit null is kept as a value ("use the
// automatic choice") rather than deleting the key.
void merge_over(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge_over(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

bool present(const json& j, const char* key) { return j.contains(key) && !j.at(key).is_null(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<uint8_t> text_bytes(const std::string& s) { return {s.begin(), s.end()}; }

json attack_defaults() {
  json a = attack_config_to_json(AttackConfig{});
  a["step_size"] = nullptr;  // epsilon * step_ratio
  a["step_ratio"] = 0.25;
  return a;
}

// Resolves a stage attack object; a null step_size follows the epsilon.
AttackConfig attack_from_stage(const json& j) {
  json full = j;
  const double eps = j.at("epsilon").get<double>();
  if (j.at("step_size").is_null()) {
    full["step_size"] = eps > 0.0 ? eps * j.at("step_ratio").get<double>() : AttackConfig{}.step_size;
  }
  return attack_config_from_json(full);
}

json network_defaults() {
  return {{"hidden_layers", ExperimentConfig{}.hidden_layers},
          {"tap_points", json::array()},
          {"init_seed", ExperimentConfig{}.init_seed}};
}

json override_defaults() {
  return {{"threshold", nullptr}, {"layer_mask", nullptr}, {"selected_layers", nullptr}};
}

const std::map<std::string, std::function<json()>>& defaults_table() {
  static const std::map<std::string, std::function<json()>> table = {
      {"synth-data", [] { return synth_params_to_json(SynthParams{}); }},
      {"train",
       [] { return json{{"network", network_defaults()}, {"train", train_config_to_json({})}}; }},
      {"adv-train",
       [] {
         return json{{"network", network_defaults()},
                     {"train", train_config_to_json({})},
                     {"attack", attack_defaults()}};
       }},
      {"attack",
       [] {
         json j = attack_defaults();
         j["epsilon_sweep"] = json::array();
         j["target_adversarial_accuracy"] = 0.10;
         return j;
       }},
      {"extract", [] { return json{{"origin", "clean"}}; }},
      {"centroids", [] { return json{{"pfc_cutoff", 0.1}}; }},
      {"calibrate",
       [] {
         return json{{"histogram_bins", 256}, {"layer_mask", nullptr}, {"pfc_cutoff", 0.1},
                     {"vote_layers", ExperimentConfig{}.vote_layers}, {"threshold", nullptr}};
       }},
      {"detect", override_defaults},
      {"recognize", override_defaults},
      {"eval", override_defaults},
      {"layer-sweep",
       [] {
         json j = override_defaults();
         j["candidates"] = nullptr;
         j["min_size"] = 2;
         j["max_subsets"] = 4096;
         return j;
       }},
      {"report", [] { return json::object(); }},
      {"run", [] { return ExperimentConfig::toy_defaults().to_json(); }},
  };
  return table;
}

std::vector<bool> to_mask(const json& j) {
  std::vector<bool> m;
  for (int v : j.get<std::vector<int>>()) m.push_back(v != 0);
  return m;
}

std::vector<int> mask_ints(const std::vector<bool>& m) { return {m.begin(), m.end()}; }

// Inputs are read once: bytes feed both the digest and the decoder.
class Stage {
 public:
  Stage(const json& request, bool write)
      : command_(request.at("command").get<std::string>()), write_(write) {
    const auto& table = defaults_table();
    const auto it = table.find(command_);
    if (it == table.end()) throw InvalidArgument("unknown stage \"" + command_ + "\"");
    config_ = it->second();
    if (request.contains("config") && !request.at("config").is_null()) {
      const json& patch = request.at("config");
      if (!patch.is_object()) throw InvalidArgument("stage config must be a JSON object");
      check_keys(patch, config_, "");
      merge_over(config_, patch);
    }
    inputs_ = request.value("inputs", json::object());
    outputs_ = request.value("outputs", json::object());
    if (!inputs_.is_object() || !outputs_.is_object()) {
      throw InvalidArgument("stage inputs and outputs must be JSON objects");
    }
  }

  const std::string& command() const { return command_; }
  const json& config() const { return config_; }
  json& metrics() { return metrics_; }

  // Declares the roles a stage understands; anything else is a typo.
  void roles(std::initializer_list<const char*> in, std::initializer_list<const char*> out) {
    check_roles(inputs_, in, "input");
    check_roles(outputs_, out, "output");
  }

  bool has_input(const char* role) const { return inputs_.contains(role); }

  std::vector<uint8_t> input_bytes(const char* role) {
    if (!inputs_.contains(role)) {
      throw InvalidArgument("stage \"" + command_ + "\" needs input \"" + role + "\"");
    }
    const std::string path = inputs_.at(role).get<std::string>();
    std::vector<uint8_t> bytes = read_file(path);
    input_digests_[role] = digest(bytes);
    return bytes;
  }

  json input_json(const char* role) {
    const auto bytes = input_bytes(role);
    try {
      return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
      throw FormatError("input \"" + std::string(role) + "\" is not valid JSON: " + e.what());
    }
  }

  // Records the artifact digest and writes it when a path was given.
  void emit(const char* role, const std::vector<uint8_t>& bytes) {
    metrics_[std::string(role) + "_digest"] = digest(bytes);
    write_only(role, bytes);
  }

  void write_only(const char* role, const std::vector<uint8_t>& bytes) {
    if (write_ && outputs_.contains(role)) {
      write_file_atomic(outputs_.at(role).get<std::string>(), bytes);
    }
  }

  json manifest(double seconds) const {
    return {{"format", "fpath-manifest"},
            {"version", 1},
            {"command", command_},
            {"inputs", inputs_},
            {"input_digests", input_digests_},
            {"outputs", outputs_},
            {"config", config_},
            {"metrics", metrics_},
            {"runtime_seconds", seconds}};
  }

 private:
  void check_roles(const json& given, std::initializer_list<const char*> known,
                   const char* what) const {
    for (auto it = given.begin(); it != given.end(); ++it) {
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
        throw InvalidArgument("stage \"" + command_ + "\" has no " + what + " \"" + it.key() +
                              "\"");
      }
      if (!it->is_string()) {
        throw InvalidArgument(std::string(what) + " \"" + it.key() + "\" must be a path string");
      }
    }
  }

  std::string command_;
  bool write_;
  json config_;
  json inputs_;
  json outputs_;
  json input_digests_ = json::object();
  json metrics_ = json::object();
};

EvalSettings load_settings(Stage& st) {
  EvalSettings s = settings_from_json(st.input_json("settings"));
  const json& c = st.config();
  if (present(c, "threshold")) s.threshold = c.at("threshold").get<double>();
  if (present(c, "layer_mask")) s.detector.layer_mask = to_mask(c.at("layer_mask"));
  if (present(c, "selected_layers")) {
    s.voting.selected_layers = c.at("selected_layers").get<std::vector<int>>();
    s.voting.weights.clear();
  }
  return s;
}

TapNet build_net(const json& network, const Dataset& data) {
  std::vector<int> dims{data.dim};
  for (int h : network.at("hidden_layers").get<std::vector<int>>()) dims.push_back(h);
  if (dims.size() < 2) throw InvalidArgument("at least one hidden layer is required");
  dims.push_back(data.num_classes);
  std::vector<int> taps = network.at("tap_points").get<std::vector<int>>();
  if (taps.empty()) {
    for (size_t i = 0; i + 2 < dims.size(); ++i) taps.push_back(static_cast<int>(i));  // all hidden
  }
  return TapNet(dims, taps, network.at("init_seed").get<uint64_t>());
}

void stage_synth(Stage& st) {
  st.roles({}, {"train", "calib", "test"});
  const SynthSplits s = synth_blobs(synth_params_from_json(st.config()));
  st.metrics()["train_size"] = s.train.size();
  st.metrics()["calib_size"] = s.calib.size();
  st.metrics()["test_size"] = s.test.size();
  st.emit("train", encode_dataset(s.train));
  st.emit("calib", encode_dataset(s.calib));
  st.emit("test", encode_dataset(s.test));
}

void stage_train(Stage& st, bool adversarial) {
  st.roles({"data"}, {"net"});
  const Dataset data = decode_dataset(st.input_bytes("data"));
  const json& c = st.config();
  TapNet net = build_net(c.at("network"), data);
  const TrainConfig tc = train_config_from_json(c.at("train"));
  TrainStats stats;
  if (adversarial) {
    const AttackConfig atk = attack_from_stage(c.at("attack"));
    stats = train(net, data, tc, [&atk](const TapNet& n, std::span<const double> x, int y) {
      return pgd_attack(n, x, y, atk);
    });
  } else {
    stats = train(net, data, tc);
  }
  st.metrics()["final_loss"] = stats.final_epoch_loss;
  st.metrics()["train_accuracy"] = accuracy(net, data);
  st.emit("net", encode_net(net));
}

void stage_attack(Stage& st) {
  st.roles({"net", "data"}, {"adversarial"});
  const TapNet net = decode_net(st.input_bytes("net"));
  const Dataset data = decode_dataset(st.input_bytes("data"));
  const json& c = st.config();
  AttackConfig atk = attack_from_stage(c);
  const auto sweep = c.at("epsilon_sweep").get<std::vector<double>>();
  if (!sweep.empty()) {
    const double ratio = c.at("step_ratio").get<double>();
    atk.epsilon = choose_epsilon(net, data, atk, sweep,
                                 c.at("target_adversarial_accuracy").get<double>(), ratio);
    if (atk.epsilon > 0.0) atk.step_size = atk.epsilon * ratio;
  }
  const AdversarialBatch batch = attack_dataset(net, data, atk);
  const Dataset adv = batch.as_dataset(data.num_classes);
  json& m = st.metrics();
  m["epsilon"] = atk.epsilon;
  m["step_size"] = atk.step_size;
  m["success_rate"] = batch.success_rate();
  m["clean_accuracy"] = accuracy(net, data);
  m["adversarial_accuracy"] = accuracy(net, adv);
  if (auto warn = atk.validate()) m["warning"] = *warn;
  st.emit("adversarial", encode_dataset(adv));
}

void stage_extract(Stage& st) {
  st.roles({"net", "data"}, {"dump"});
  const TapNet net = decode_net(st.input_bytes("net"));
  const Dataset data = decode_dataset(st.input_bytes("data"));
  const std::string origin = st.config().at("origin").get<std::string>();
  if (origin != "clean" && origin != "adversarial") {
    throw InvalidArgument("origin must be \"clean\" or \"adversarial\", got \"" + origin + "\"");
  }
  const FeatureDump dump =
      extract_dump(net, data, origin == "clean" ? Origin::Clean : Origin::Adversarial);
  st.metrics()["n_examples"] = dump.size();
  st.metrics()["layer_dims"] = dump.layer_dims;
  st.emit("dump", encode_dump(dump));
}

void stage_centroids(Stage& st) {
  st.roles({"dump"}, {"bank"});
  const FeatureDump dump = decode_dump(st.input_bytes("dump"));
  const auto paths = dump.paths();
  const CentroidBank bank = compute_centroids(paths, static_cast<int>(dump.num_classes));
  const auto var = pfc_variability(paths, bank);
  st.metrics()["class_counts"] = bank.class_counts();
  st.metrics()["variability"] = var;
  st.metrics()["auto_layer_mask"] =
      mask_ints(auto_layer_mask(var, st.config().at("pfc_cutoff").get<double>()));
  st.emit("bank", encode_bank(bank));
}

void stage_calibrate(Stage& st) {
  st.roles({"bank", "clean", "adversarial", "train"}, {"settings"});
  const CentroidBank bank = decode_bank(st.input_bytes("bank"));
  const auto clean = decode_dump(st.input_bytes("clean")).paths();
  const auto adv = decode_dump(st.input_bytes("adversarial")).paths();
  const json& c = st.config();

  EvalSettings s;
  s.detector.histogram_bins = c.at("histogram_bins").get<int>();
  if (present(c, "layer_mask")) {
    s.detector.layer_mask = to_mask(c.at("layer_mask"));
  } else if (st.has_input("train")) {
    const auto train_paths = decode_dump(st.input_bytes("train")).paths();
    const auto var = pfc_variability(train_paths, bank);
    st.metrics()["variability"] = var;
    s.detector.layer_mask = auto_layer_mask(var, c.at("pfc_cutoff").get<double>());
  }
  const std::vector<bool> mask = s.detector.resolved_mask(bank.num_layers());

  if (present(c, "threshold")) {
    s.threshold = c.at("threshold").get<double>();
  } else {
    std::vector<double> scores = s_max_scores(clean, bank, s.detector);
    const auto adv_scores = s_max_scores(adv, bank, s.detector);
    scores.insert(scores.end(), adv_scores.begin(), adv_scores.end());
    s.threshold = calibrate_threshold(scores, s.detector.histogram_bins);
  }
  const LayerAccuracyReport layers = layer_accuracy(clean, adv, bank);
  s.voting = select_layers(layers, std::min(c.at("vote_layers").get<int>(), bank.num_layers()));

  json& m = st.metrics();
  m["threshold"] = s.threshold;
  m["layer_mask"] = mask_ints(mask);
  m["selected_layers"] = s.voting.selected_layers;
  m["layer_clean_accuracy"] = layers.clean_accuracy;
  m["layer_adversarial_accuracy"] = layers.adversarial_accuracy;
  st.emit("settings", text_bytes(settings_to_json(s).dump(2) + "\n"));
}

void stage_detect(Stage& st) {
  st.roles({"bank", "dump", "settings"}, {"verdicts"});
  const CentroidBank bank = decode_bank(st.input_bytes("bank"));
  const FeatureDump dump = decode_dump(st.input_bytes("dump"));
  const EvalSettings s = load_settings(st);
  const auto paths = dump.paths();
  std::vector<DetectionVerdict> v(paths.size());
  detail::parallel_for(paths.size(),
                       [&](size_t i) { v[i] = detect(paths[i], bank, s.threshold, s.detector); });

  std::string csv = "index,label,origin,s_max,argmax_class,verdict\n";
  size_t flagged = 0, adv_total = 0, adv_flagged = 0, clean_flagged = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    const bool is_adv = v[i].verdict == Verdict::Adversarial;
    const bool from_adv = dump.flags[i] == Origin::Adversarial;
    flagged += is_adv;
    adv_total += from_adv;
    (from_adv ? adv_flagged : clean_flagged) += is_adv;
    csv += std::to_string(i) + "," + std::to_string(dump.labels[i]) + "," +
           (from_adv ? "adversarial" : "clean") + "," + fmt(v[i].s_max) + "," +
           std::to_string(v[i].argmax_class) + "," + (is_adv ? "adversarial" : "clean") + "\n";
  }
  json& m = st.metrics();
  m["n_examples"] = v.size();
  m["threshold"] = s.threshold;
  m["flagged_adversarial"] = flagged;
  m["flagged_rate"] = v.empty() ? 0.0 : static_cast<double>(flagged) / v.size();
  const size_t clean_total = v.size() - adv_total;
  m["detection_rate_adversarial"] =
      adv_total ? json(static_cast<double>(adv_flagged) / adv_total) : json(nullptr);
  m["detection_rate_clean"] =
      clean_total ? json(1.0 - static_cast<double>(clean_flagged) / clean_total) : json(nullptr);
  st.emit("verdicts", text_bytes(csv));
}

void stage_recognize(Stage& st) {
  st.roles({"net", "bank", "data", "settings"}, {"predictions"});
  const TapNet net = decode_net(st.input_bytes("net"));
  const CentroidBank bank = decode_bank(st.input_bytes("bank"));
  const Dataset data = decode_dataset(st.input_bytes("data"));
  const EvalSettings s = load_settings(st);
  s.voting.validate(bank.num_layers());
  std::vector<Recognition> r(data.size());
  detail::parallel_for(data.size(), [&](size_t i) {
    r[i] = recognize(data.input(i), net, bank, s.threshold, s.detector, s.voting);
  });
  std::string csv = "index,label,prediction,s_max,verdict\n";
  size_t correct = 0, flagged = 0;
  for (size_t i = 0; i < r.size(); ++i) {
    const bool is_adv = r[i].detection.verdict == Verdict::Adversarial;
    correct += r[i].label == data.labels[i];
    flagged += is_adv;
    csv += std::to_string(i) + "," + std::to_string(data.labels[i]) + "," +
           std::to_string(r[i].label) + "," + fmt(r[i].detection.s_max) + "," +
           (is_adv ? "adversarial" : "clean") + "\n";
  }
  json& m = st.metrics();
  m["n_examples"] = r.size();
  m["accuracy"] = r.empty() ? 0.0 : static_cast<double>(correct) / r.size();
  m["flagged_adversarial"] = flagged;
  st.emit("predictions", text_bytes(csv));
}

struct EvalInputs {
  TapNet net;
  CentroidBank bank;
  Dataset clean, adversarial;
  EvalSettings settings;
};

EvalInputs load_eval(Stage& st) {
  EvalInputs in;
  in.net = decode_net(st.input_bytes("net"));
  in.bank = decode_bank(st.input_bytes("bank"));
  in.clean = decode_dataset(st.input_bytes("clean"));
  in.adversarial = decode_dataset(st.input_bytes("adversarial"));
  in.settings = load_settings(st);
  return in;
}

void emit_tables(Stage& st, const MetricsReport& r) {
  st.emit("histogram", text_bytes(r.histogram_csv()));
  st.emit("layers", text_bytes(r.layers_csv()));
  st.emit("baselines", text_bytes(r.baselines_csv()));
}

void stage_eval(Stage& st) {
  st.roles({"net", "bank", "clean", "adversarial", "settings"},
           {"report", "histogram", "layers", "baselines"});
  const EvalInputs in = load_eval(st);
  const MetricsReport r = evaluate(in.net, in.bank, in.settings, in.clean, in.adversarial);
  st.metrics() = r.metrics_json();
  // The report carries the runtime, so it is written but not fingerprinted.
  st.write_only("report", text_bytes(r.to_json().dump(2) + "\n"));
  emit_tables(st, r);
}

void stage_sweep(Stage& st) {
  st.roles({"net", "bank", "clean", "adversarial", "settings"}, {"table"});
  const EvalInputs in = load_eval(st);
  const json& c = st.config();
  std::vector<int> candidates;
  if (present(c, "candidates")) {
    candidates = c.at("candidates").get<std::vector<int>>();
  } else {
    for (int l = 0; l < in.bank.num_layers(); ++l) candidates.push_back(l);
  }
  const auto rows = layer_sweep(in.net, in.bank, in.settings, in.clean, in.adversarial, candidates,
                                c.at("min_size").get<int>(), c.at("max_subsets").get<int>());
  const json table = sweep_to_json(rows);
  st.metrics()["rows"] = table;
  st.emit("table", text_bytes(table.dump(2) + "\n"));
}

void stage_report(Stage& st) {
  st.roles({"report"}, {"histogram", "layers", "baselines"});
  emit_tables(st, MetricsReport::from_json(st.input_json("report")));
}

json stage_run(Stage& st, bool write, const json& outputs) {
  const ExperimentResult res = run_experiment(ExperimentConfig::from_json(st.config()));
  json m = res.manifest();
  m["inputs"] = json::object();
  m["outputs"] = outputs;
  if (write) {
    if (outputs.contains("net")) save_net(res.net, outputs.at("net").get<std::string>());
    if (outputs.contains("bank")) save_bank(res.bank, outputs.at("bank").get<std::string>());
    if (outputs.contains("report")) {
      write_file_atomic(outputs.at("report").get<std::string>(),
                        text_bytes(res.report.to_json().dump(2) + "\n"));
    }
  }
  return m;
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "synth-data", "train",     "adv-train",   "attack", "extract", "centroids", "calibrate",
      "detect",     "recognize", "eval",        "layer-sweep", "report", "run"};
  return names;
}

json stage_default_config(const std::string& command) {
  const auto& table = defaults_table();
  const auto it = table.find(command);
  if (it == table.end()) throw InvalidArgument("unknown stage \"" + command + "\"");
  return it->second();
}

json run_stage(const json& request, bool write_outputs) {
  if (!request.is_object() || !request.contains("command")) {
    throw InvalidArgument("stage request must be an object with a \"command\"");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Stage st(request, write_outputs);
  const std::string& cmd = st.command();
  if (cmd == "run") {
    st.roles({}, {"net", "bank", "report"});
    return stage_run(st, write_outputs, request.value("outputs", json::object()));
  }
  if (cmd == "synth-data") stage_synth(st);
  else if (cmd == "train") stage_train(st, false);
  else if (cmd == "adv-train") stage_train(st, true);
  else if (cmd == "attack") stage_attack(st);
  else if (cmd == "extract") stage_extract(st);
  else if (cmd == "centroids") stage_centroids(st);
  else if (cmd == "calibrate") stage_calibrate(st);
  else if (cmd == "detect") stage_detect(st);
  else if (cmd == "recognize") stage_recognize(st);
  else if (cmd == "eval") stage_eval(st);
  else if (cmd == "layer-sweep") stage_sweep(st);
  else if (cmd == "report") stage_report(st);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st.manifest(secs);
}

Reproduction reproduce(const json& manifest) {
  if (!manifest.is_object() || manifest.value("format", "") != "fpath-manifest") {
    throw InvalidArgument("not an fpath manifest");
  }
  const std::string command = manifest.at("command").get<std::string>();
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    throw InvalidArgument("manifest command \"" + command + "\" cannot be reproduced");
  }
  json request = {{"command", command},
                  {"inputs", manifest.value("inputs", json::object())},
                  {"outputs", manifest.value("outputs", json::object())},
                  {"config", manifest.at("config")}};
  Reproduction out;
  out.manifest = run_stage(request, false);
  out.identical = out.manifest.at("metrics") == manifest.at("metrics");
  return out;
}

}  // namespace fpath
