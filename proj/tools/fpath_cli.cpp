// Command-line front end. Every subcommand is one pipeline stage executed
// through the C API; the CLI only maps flags onto a stage request and writes
// the returned manifest.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fpath/fpath.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Role {
  Role(std::string n, std::string h, std::string file = "", bool req = true)
      : name(std::move(n)), help(std::move(h)), default_file(std::move(file)), required(req) {}
  // CSV tables get a -csv suffix so --layers stays free for layer lists.
  std::string flag() const {
    return default_file.ends_with(".csv") && name != "verdicts" && name != "predictions"
               ? name + "-csv"
               : name;
  }
  std::string name;
  std::string help;
  std::string default_file;  // outputs only
  bool required;             // inputs only
};

struct StageSpec {
  std::string name;
  std::string help;
  std::vector<Role> inputs;
  std::vector<Role> outputs;
};

const std::vector<StageSpec>& stage_specs() {
  static const std::vector<StageSpec> specs = {
      {"synth-data", "Generate the synthetic train/calib/test splits", {},
       {{"train", "training split", "train.fpds"},
        {"calib", "calibration split", "calib.fpds"},
        {"test", "test split", "test.fpds"}}},
      {"train", "Train a tapped network", {{"data", "training dataset"}},
       {{"net", "network checkpoint", "net.fpnt"}}},
      {"adv-train", "Train on PGD examples (adversarial-training baseline)",
       {{"data", "training dataset"}}, {{"net", "network checkpoint", "net_adv.fpnt"}}},
      {"attack", "L-inf PGD against every example", {{"net", "checkpoint"}, {"data", "dataset"}},
       {{"adversarial", "perturbed dataset", "adversarial.fpds"}}},
      {"extract", "Tap features into a dump", {{"net", "checkpoint"}, {"data", "dataset"}},
       {{"dump", "feature dump", "features.fpth"}}},
      {"centroids", "Class centroid bank from a training dump", {{"dump", "training dump"}},
       {{"bank", "centroid bank", "bank.fpcb"}}},
      {"calibrate", "Threshold, layer mask and voting layers",
       {{"bank", "centroid bank"},
        {"clean", "clean calibration dump"},
        {"adversarial", "adversarial calibration dump"},
        {"train", "training dump (enables the automatic layer mask)", "", false}},
       {{"settings", "settings JSON", "settings.json"}}},
      {"detect", "Flag adversarial examples in a dump",
       {{"bank", "centroid bank"}, {"dump", "feature dump"}, {"settings", "settings JSON"}},
       {{"verdicts", "verdict CSV", "verdicts.csv"}}},
      {"recognize", "Detect and recognize every input",
       {{"net", "checkpoint"}, {"bank", "centroid bank"}, {"data", "dataset"},
        {"settings", "settings JSON"}},
       {{"predictions", "prediction CSV", "predictions.csv"}}},
      {"eval", "Full metrics report on clean and adversarial test sets",
       {{"net", "checkpoint"}, {"bank", "centroid bank"}, {"clean", "clean test set"},
        {"adversarial", "adversarial test set"}, {"settings", "settings JSON"}},
       {{"report", "report JSON", "report.json"},
        {"histogram", "histogram CSV", "histogram.csv"},
        {"layers", "per-layer CSV", "layers.csv"},
        {"baselines", "baseline CSV", "baselines.csv"}}},
      {"layer-sweep", "Evaluate every voting subset",
       {{"net", "checkpoint"}, {"bank", "centroid bank"}, {"clean", "clean test set"},
        {"adversarial", "adversarial test set"}, {"settings", "settings JSON"}},
       {{"table", "sweep table JSON", "layer_sweep.json"}}},
      {"report", "CSV tables from a report JSON", {{"report", "report JSON"}},
       {{"histogram", "histogram CSV", "histogram.csv"},
        {"layers", "per-layer CSV", "layers.csv"},
        {"baselines", "baseline CSV", "baselines.csv"}}},
      {"run", "End-to-end toy experiment", {},
       {{"net", "network checkpoint", "net.fpnt"},
        {"bank", "centroid bank", "bank.fpcb"},
        {"report", "report JSON", "report.json"}}},
  };
  return specs;
}

// Owns a string returned by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { fp_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Failure {
  fp_status status;
  std::string message;
};

void check(fp_status s) {
  if (s != FP_OK) throw Failure{s, fp_last_error()};
}

// Sets a dotted key path inside a JSON object.
void set_path(json& j, const std::string& dotted, json value) {
  json* cur = &j;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur->contains(parts[i])) (*cur)[parts[i]] = json::object();
    cur = &(*cur)[parts[i]];
  }
  (*cur)[parts.back()] = std::move(value);
}

// "k=v" where v is JSON; bare words are taken as strings.
void apply_set(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("--set", "expected key=value, got \"" + assignment + "\"");
  }
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  set_path(config, key, std::move(value));
}

std::vector<int> parse_ints(const std::string& list, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected a comma-separated list of integers");
    }
  }
  return out;
}

void write_text(const fs::path& dest, const std::string& text) {
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  const fs::path tmp = dest.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Failure{FP_ERR_IO, "cannot write " + tmp.string()};
  }
  fs::rename(tmp, dest);
}

std::string read_text(const fs::path& src) {
  std::ifstream in(src, std::ios::binary);
  if (!in) throw Failure{FP_ERR_IO, "cannot open " + src.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path default_out_dir() {
  const char* env = std::getenv("FPATH_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

// Flag values shared by the stage subcommands. Each stage maps the ones it
// understands onto its config keys.
struct Common {
  std::map<std::string, std::string> paths;
  std::string out_dir;
  std::string manifest;
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<double> epsilon, threshold;
  std::optional<int> iterations, bins, epochs, vote_layers;
  std::optional<uint64_t> seed;
  std::string layers, mask, origin;
  bool quiet = false;
};

json build_config(const std::string& stage, const Common& c) {
  json cfg = json::object();
  if (!c.config_file.empty()) cfg = json::parse(read_text(c.config_file));
  const bool uses_settings = stage == "detect" || stage == "recognize" || stage == "eval" ||
                             stage == "layer-sweep";
  if (c.seed) {
    if (stage == "synth-data") set_path(cfg, "seed", *c.seed);
    if (stage == "train" || stage == "adv-train") set_path(cfg, "train.rng_seed", *c.seed);
    if (stage == "attack") set_path(cfg, "rng_seed", *c.seed);
    if (stage == "run") set_path(cfg, "data.seed", *c.seed);
  }
  if (c.epsilon) {
    if (stage == "attack") set_path(cfg, "epsilon", *c.epsilon);
    if (stage == "adv-train") set_path(cfg, "attack.epsilon", *c.epsilon);
    if (stage == "run") {
      set_path(cfg, "attack.epsilon", *c.epsilon);
      set_path(cfg, "attack.step_size", *c.epsilon / 4);
      set_path(cfg, "epsilon_sweep", json::array());
    }
  }
  if (c.iterations) {
    if (stage == "attack") set_path(cfg, "iterations", *c.iterations);
    if (stage == "adv-train" || stage == "run") set_path(cfg, "attack.iterations", *c.iterations);
  }
  if (c.epochs && (stage == "train" || stage == "adv-train" || stage == "run")) {
    set_path(cfg, "train.epochs", *c.epochs);
  }
  if (c.threshold) {
    if (stage == "calibrate" || uses_settings) set_path(cfg, "threshold", *c.threshold);
    if (stage == "run") set_path(cfg, "detector.threshold_override", *c.threshold);
  }
  if (c.bins) {
    if (stage == "calibrate") set_path(cfg, "histogram_bins", *c.bins);
    if (stage == "run") set_path(cfg, "detector.histogram_bins", *c.bins);
  }
  if (c.vote_layers) {
    if (stage == "calibrate") set_path(cfg, "vote_layers", *c.vote_layers);
    if (stage == "run") set_path(cfg, "voting.layers", *c.vote_layers);
  }
  if (!c.mask.empty()) {
    const auto m = parse_ints(c.mask, "--mask");
    if (stage == "calibrate" || uses_settings) set_path(cfg, "layer_mask", m);
    if (stage == "run") set_path(cfg, "detector.layer_mask", m);
  }
  if (!c.layers.empty()) {
    const auto l = parse_ints(c.layers, "--layers");
    set_path(cfg, stage == "layer-sweep" ? "candidates" : "selected_layers", l);
  }
  if (!c.origin.empty()) set_path(cfg, "origin", c.origin);
  for (const auto& s : c.sets) apply_set(cfg, s);
  return cfg;
}

int run_stage_command(const StageSpec& spec, const Common& c) {
  const fs::path out_dir = c.out_dir.empty() ? default_out_dir() : fs::path(c.out_dir);
  json inputs = json::object(), outputs = json::object();
  for (const auto& r : spec.inputs) {
    const auto it = c.paths.find(r.name);
    if (it != c.paths.end() && !it->second.empty()) {
      inputs[r.name] = fs::absolute(it->second).lexically_normal().string();
    }
  }
  for (const auto& r : spec.outputs) {
    const auto it = c.paths.find(r.name);
    const fs::path p = it != c.paths.end() && !it->second.empty() ? fs::path(it->second)
                                                                 : out_dir / r.default_file;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    outputs[r.name] = fs::absolute(p).lexically_normal().string();
  }
  const json request = {{"command", spec.name},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"config", build_config(spec.name, c)}};
  LibString manifest;
  check(fp_run_stage(request.dump().c_str(), &manifest.p));
  const json m = json::parse(manifest.str());
  const fs::path manifest_path =
      c.manifest.empty() ? out_dir / (spec.name + ".manifest.json") : fs::path(c.manifest);
  write_text(manifest_path, m.dump(2) + "\n");
  if (!c.quiet) std::cout << m.at("metrics").dump(2) << "\n";
  std::cerr << spec.name << ": manifest written to " << manifest_path.string() << "\n";
  return 0;
}

int reproduce_command(const std::string& manifest_path, const std::string& out, bool quiet) {
  const std::string text = read_text(manifest_path);
  int identical = 0;
  LibString again;
  check(fp_reproduce(text.c_str(), &identical, &again.p));
  if (!out.empty()) write_text(out, again.str() + "\n");
  if (!quiet) std::cout << json::parse(again.str()).at("metrics").dump(2) << "\n";
  std::cout << (identical ? "reproduced: metrics identical" : "NOT reproduced: metrics differ")
            << "\n";
  return identical ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise feature-path adversarial detection and recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fp_version()));

  Common common;
  std::map<std::string, CLI::App*> subs;
  for (const auto& spec : stage_specs()) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    subs[spec.name] = sub;
    for (const auto& r : spec.inputs) {
      auto* opt = sub->add_option("--" + r.flag(), common.paths[r.name], "input: " + r.help);
      if (r.required) opt->required();
    }
    for (const auto& r : spec.outputs) {
      sub->add_option("--" + r.flag(), common.paths[r.name],
                      "output: " + r.help + " (default <out-dir>/" + r.default_file + ")");
    }
    sub->add_option("--out-dir", common.out_dir,
                    "directory for default outputs (default $FPATH_OUT_DIR or .)");
    sub->add_option("--manifest", common.manifest,
                    "manifest path (default <out-dir>/" + spec.name + ".manifest.json)");
    sub->add_option("--config", common.config_file, "JSON file merged over the stage defaults");
    sub->add_option("--set", common.sets, "config override key.path=JSON (repeatable)");
    sub->add_flag("-q,--quiet", common.quiet, "do not print metrics");

    const std::string& n = spec.name;
    const bool settings_user = n == "detect" || n == "recognize" || n == "eval" || n == "layer-sweep";
    if (n == "synth-data" || n == "train" || n == "adv-train" || n == "attack" || n == "run") {
      sub->add_option("--seed", common.seed, "random seed");
    }
    if (n == "attack" || n == "adv-train" || n == "run") {
      sub->add_option("--epsilon", common.epsilon, "L-inf radius")->check(CLI::NonNegativeNumber);
      sub->add_option("--iterations", common.iterations, "PGD iterations")->check(CLI::PositiveNumber);
    }
    if (n == "train" || n == "adv-train" || n == "run") {
      sub->add_option("--epochs", common.epochs, "training epochs")->check(CLI::PositiveNumber);
    }
    if (n == "calibrate" || settings_user || n == "run") {
      sub->add_option("--threshold", common.threshold, "detection threshold override");
      sub->add_option("--mask", common.mask, "layer mask for S_max, e.g. 1,1,0,1");
    }
    if (n == "calibrate" || n == "run") {
      sub->add_option("--bins", common.bins, "histogram bins for the threshold")
          ->check(CLI::Range(2, 1 << 20));
      sub->add_option("--vote-layers", common.vote_layers, "number of voting layers")
          ->check(CLI::PositiveNumber);
    }
    if (settings_user) {
      sub->add_option("--layers", common.layers,
                      n == "layer-sweep" ? "candidate layers, e.g. 0,1,3"
                                         : "voting layers, e.g. 0,2");
    }
    if (n == "extract") {
      sub->add_option("--origin", common.origin, "clean or adversarial")
          ->check(CLI::IsMember({"clean", "adversarial"}));
    }
  }

  std::string manifest_in, manifest_out;
  bool quiet = false;
  CLI::App* rep = app.add_subcommand("reproduce", "Re-run a manifest and compare metrics");
  rep->add_option("manifest", manifest_in, "manifest JSON")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--out", manifest_out, "where to write the new manifest");
  rep->add_flag("-q,--quiet", quiet, "do not print metrics");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rep->parsed()) return reproduce_command(manifest_in, manifest_out, quiet);
    for (const auto& spec : stage_specs()) {
      if (subs.at(spec.name)->parsed()) return run_stage_command(spec, common);
    }
  } catch (const Failure& f) {
    std::cerr << "error (" << fp_status_name(f.status) << "): " << f.message << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
