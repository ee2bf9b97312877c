#include "fpath/fpath.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "fpath/attack.hpp"
#include "fpath/error.hpp"
#include "fpath/harness.hpp"
#include "fpath/io.hpp"
#include "fpath/stages.hpp"

struct fp_dataset {
  fpath::Dataset value;
};
struct fp_net {
  fpath::TapNet value;
};
struct fp_dump {
  fpath::FeatureDump value;
};
struct fp_bank {
  fpath::CentroidBank value;
};

namespace {

thread_local std::string g_last_error;

fp_status status_of(fpath::ErrorKind kind) {
  switch (kind) {
    case fpath::ErrorKind::InvalidArgument: return FP_ERR_INVALID_ARGUMENT;
    case fpath::ErrorKind::Shape: return FP_ERR_SHAPE;
    case fpath::ErrorKind::Numeric: return FP_ERR_NUMERIC;
    case fpath::ErrorKind::Degenerate: return FP_ERR_DEGENERATE;
    case fpath::ErrorKind::Format: return FP_ERR_FORMAT;
    case fpath::ErrorKind::Io: return FP_ERR_IO;
  }
  return FP_ERR_INTERNAL;
}

template <typename F>
fp_status guarded(F&& body) {
  try {
    body();
    return FP_OK;
  } catch (const fpath::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return FP_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FP_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw fpath::InvalidArgument(std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

fpath::TrainConfig to_cpp(const fp_train_config& c) {
  fpath::TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.momentum = c.momentum;
  t.weight_decay = c.weight_decay;
  t.batch_size = static_cast<int>(c.batch_size);
  t.epochs = static_cast<int>(c.epochs);
  t.lr_drop_epochs.clear();
  if (c.num_lr_drops > 0) require(c.lr_drop_epochs, "lr_drop_epochs");
  for (size_t i = 0; i < c.num_lr_drops; ++i) {
    t.lr_drop_epochs.push_back(static_cast<int>(c.lr_drop_epochs[i]));
  }
  t.lr_drop_factor = c.lr_drop_factor;
  t.rng_seed = c.rng_seed;
  return t;
}

fpath::AttackConfig to_cpp(const fp_attack_config& c) {
  fpath::AttackConfig a;
  a.epsilon = c.epsilon;
  a.step_size = c.step_size;
  a.iterations = static_cast<int>(c.iterations);
  a.box_lo = c.box_lo;
  a.box_hi = c.box_hi;
  a.random_start = c.random_start != 0;
  a.rng_seed = c.rng_seed;
  return a;
}

std::vector<bool> to_mask(const uint8_t* mask, size_t n) {
  if (mask == nullptr) return {};
  std::vector<bool> m(n);
  for (size_t i = 0; i < n; ++i) m[i] = mask[i] != 0;
  return m;
}

void check_layers(size_t given, size_t expected) {
  if (given != expected) {
    throw fpath::ShapeError("expected " + std::to_string(expected) + " layers, got " +
                            std::to_string(given));
  }
}

void check_count(size_t given, size_t expected) {
  if (given != expected) {
    throw fpath::ShapeError("output buffer holds " + std::to_string(given) + " entries, need " +
                            std::to_string(expected));
  }
}

const uint32_t kDefaultDrops[] = {25, 35};

}  // namespace

extern "C" {

const char* fp_version(void) { return "1.0.0"; }

const char* fp_last_error(void) { return g_last_error.c_str(); }

const char* fp_status_name(fp_status status) {
  switch (status) {
    case FP_OK: return "ok";
    case FP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FP_ERR_SHAPE: return "shape error";
    case FP_ERR_NUMERIC: return "numeric error";
    case FP_ERR_DEGENERATE: return "degenerate input";
    case FP_ERR_FORMAT: return "format error";
    case FP_ERR_IO: return "i/o error";
    case FP_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void fp_string_free(char* s) { std::free(s); }

// ---- datasets --------------------------------------------------------------

void fp_synth_params_default(fp_synth_params* p) {
  if (p == nullptr) return;
  const fpath::SynthParams d;
  p->num_classes = static_cast<uint32_t>(d.num_classes);
  p->dim = static_cast<uint32_t>(d.dim);
  p->train_per_class = static_cast<uint32_t>(d.train_per_class);
  p->calib_per_class = static_cast<uint32_t>(d.calib_per_class);
  p->test_per_class = static_cast<uint32_t>(d.test_per_class);
  p->separation = d.separation;
  p->squash_scale = d.squash_scale;
  p->seed = d.seed;
}

fp_status fp_dataset_synth(const fp_synth_params* params, fp_dataset** train, fp_dataset** calib,
                           fp_dataset** test) {
  return guarded([&] {
    require(params, "params");
    fpath::SynthParams p;
    p.num_classes = static_cast<int>(params->num_classes);
    p.dim = static_cast<int>(params->dim);
    p.train_per_class = static_cast<int>(params->train_per_class);
    p.calib_per_class = static_cast<int>(params->calib_per_class);
    p.test_per_class = static_cast<int>(params->test_per_class);
    p.separation = params->separation;
    p.squash_scale = params->squash_scale;
    p.seed = params->seed;
    fpath::SynthSplits s = fpath::synth_blobs(p);
    if (train) *train = new fp_dataset{std::move(s.train)};
    if (calib) *calib = new fp_dataset{std::move(s.calib)};
    if (test) *test = new fp_dataset{std::move(s.test)};
  });
}

fp_status fp_dataset_load(const char* path, fp_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new fp_dataset{fpath::load_dataset(path)};
  });
}

fp_status fp_dataset_save(const fp_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    fpath::save_dataset(data->value, path);
  });
}

size_t fp_dataset_size(const fp_dataset* d) { return d ? d->value.size() : 0; }
uint32_t fp_dataset_dim(const fp_dataset* d) { return d ? static_cast<uint32_t>(d->value.dim) : 0; }
uint32_t fp_dataset_num_classes(const fp_dataset* d) {
  return d ? static_cast<uint32_t>(d->value.num_classes) : 0;
}
void fp_dataset_free(fp_dataset* d) { delete d; }

// ---- network ---------------------------------------------------------------

void fp_train_config_default(fp_train_config* c) {
  if (c == nullptr) return;
  const fpath::TrainConfig d;
  c->learning_rate = d.learning_rate;
  c->momentum = d.momentum;
  c->weight_decay = d.weight_decay;
  c->batch_size = static_cast<uint32_t>(d.batch_size);
  c->epochs = static_cast<uint32_t>(d.epochs);
  c->lr_drop_epochs = kDefaultDrops;
  c->num_lr_drops = 2;
  c->lr_drop_factor = d.lr_drop_factor;
  c->rng_seed = d.rng_seed;
}

void fp_attack_config_default(fp_attack_config* c) {
  if (c == nullptr) return;
  const fpath::AttackConfig d;
  c->epsilon = d.epsilon;
  c->step_size = d.step_size;
  c->iterations = static_cast<uint32_t>(d.iterations);
  c->box_lo = d.box_lo;
  c->box_hi = d.box_hi;
  c->random_start = d.random_start ? 1 : 0;
  c->rng_seed = d.rng_seed;
}

fp_status fp_net_create(const uint32_t* layer_dims, size_t num_dims, const uint32_t* taps,
                        size_t num_taps, uint64_t seed, fp_net** out) {
  return guarded([&] {
    require(layer_dims, "layer_dims");
    require(out, "out");
    if (num_taps > 0) require(taps, "taps");
    std::vector<int> dims(layer_dims, layer_dims + num_dims);
    std::vector<int> t(taps, taps + num_taps);
    *out = new fp_net{fpath::TapNet(std::move(dims), std::move(t), seed)};
  });
}

fp_status fp_net_load(const char* path, fp_net** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new fp_net{fpath::load_net(path)};
  });
}

fp_status fp_net_save(const fp_net* net, const char* path) {
  return guarded([&] {
    require(net, "net");
    require(path, "path");
    fpath::save_net(net->value, path);
  });
}

void fp_net_free(fp_net* net) { delete net; }
uint32_t fp_net_num_taps(const fp_net* n) { return n ? static_cast<uint32_t>(n->value.path_length()) : 0; }
uint32_t fp_net_num_classes(const fp_net* n) {
  return n ? static_cast<uint32_t>(n->value.num_classes()) : 0;
}

fp_status fp_net_train(fp_net* net, const fp_dataset* data, const fp_train_config* cfg,
                       double* final_loss) {
  return guarded([&] {
    require(net, "net");
    require(data, "data");
    require(cfg, "cfg");
    // Train a copy so a failure leaves the caller's network untouched.
    fpath::TapNet work = net->value;
    const auto stats = fpath::train(work, data->value, to_cpp(*cfg));
    net->value = std::move(work);
    if (final_loss) *final_loss = stats.final_epoch_loss;
  });
}

fp_status fp_net_adv_train(fp_net* net, const fp_dataset* data, const fp_train_config* cfg,
                           const fp_attack_config* attack, double* final_loss) {
  return guarded([&] {
    require(net, "net");
    require(data, "data");
    require(cfg, "cfg");
    require(attack, "attack");
    const fpath::AttackConfig atk = to_cpp(*attack);
    atk.validate();
    fpath::TapNet work = net->value;
    const auto stats = fpath::train(work, data->value, to_cpp(*cfg),
                                    [&atk](const fpath::TapNet& n, std::span<const double> x, int y) {
                                      return fpath::pgd_attack(n, x, y, atk);
                                    });
    net->value = std::move(work);
    if (final_loss) *final_loss = stats.final_epoch_loss;
  });
}

fp_status fp_net_accuracy(const fp_net* net, const fp_dataset* data, double* acc) {
  return guarded([&] {
    require(net, "net");
    require(data, "data");
    require(acc, "accuracy");
    *acc = fpath::accuracy(net->value, data->value);
  });
}

fp_status fp_net_predict(const fp_net* net, const double* input, size_t dim, uint32_t* label) {
  return guarded([&] {
    require(net, "net");
    require(input, "input");
    require(label, "label");
    *label = static_cast<uint32_t>(
        fpath::forward(net->value, std::span<const double>(input, dim)).predicted_class());
  });
}

// ---- attacks ---------------------------------------------------------------

fp_status fp_pgd_attack(const fp_net* net, const double* input, size_t dim, uint32_t label,
                        const fp_attack_config* cfg, double* out) {
  return guarded([&] {
    require(net, "net");
    require(input, "input");
    require(cfg, "cfg");
    require(out, "out");
    const auto adv = fpath::pgd_attack(net->value, std::span<const double>(input, dim),
                                       static_cast<int>(label), to_cpp(*cfg));
    std::copy(adv.begin(), adv.end(), out);
  });
}

fp_status fp_attack_dataset(const fp_net* net, const fp_dataset* data, const fp_attack_config* cfg,
                            fp_dataset** adversarial, double* success_rate) {
  return guarded([&] {
    require(net, "net");
    require(data, "data");
    require(cfg, "cfg");
    require(adversarial, "adversarial");
    const auto batch = fpath::attack_dataset(net->value, data->value, to_cpp(*cfg));
    if (success_rate) *success_rate = batch.success_rate();
    *adversarial = new fp_dataset{batch.as_dataset(data->value.num_classes)};
  });
}

fp_status fp_choose_epsilon(const fp_net* net, const fp_dataset* data, const fp_attack_config* base,
                            const double* candidates, size_t num_candidates,
                            double target_accuracy, double step_ratio, double* epsilon) {
  return guarded([&] {
    require(net, "net");
    require(data, "data");
    require(base, "base");
    require(candidates, "candidates");
    require(epsilon, "epsilon");
    *epsilon = fpath::choose_epsilon(net->value, data->value, to_cpp(*base),
                                     std::span<const double>(candidates, num_candidates),
                                     target_accuracy, step_ratio);
  });
}

// ---- dumps -----------------------------------------------------------------

fp_status fp_extract(const fp_net* net, const fp_dataset* data, int adversarial, fp_dump** out) {
  return guarded([&] {
    require(net, "net");
    require(data, "data");
    require(out, "out");
    *out = new fp_dump{fpath::extract_dump(
        net->value, data->value, adversarial ? fpath::Origin::Adversarial : fpath::Origin::Clean)};
  });
}

fp_status fp_dump_load(const char* path, fp_dump** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new fp_dump{fpath::read_dump(path)};
  });
}

fp_status fp_dump_save(const fp_dump* dump, const char* path) {
  return guarded([&] {
    require(dump, "dump");
    require(path, "path");
    fpath::write_dump(dump->value, path);
  });
}

size_t fp_dump_size(const fp_dump* d) { return d ? d->value.size() : 0; }
uint32_t fp_dump_num_layers(const fp_dump* d) {
  return d ? static_cast<uint32_t>(d->value.num_layers()) : 0;
}
uint32_t fp_dump_num_classes(const fp_dump* d) { return d ? d->value.num_classes : 0; }
void fp_dump_free(fp_dump* d) { delete d; }

// ---- banks -----------------------------------------------------------------

fp_status fp_bank_build(const fp_dump* train, uint32_t num_classes, fp_bank** out) {
  return guarded([&] {
    require(train, "train");
    require(out, "out");
    const auto paths = train->value.paths();
    *out = new fp_bank{fpath::compute_centroids(paths, static_cast<int>(num_classes))};
  });
}

fp_status fp_bank_load(const char* path, fp_bank** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new fp_bank{fpath::load_bank(path)};
  });
}

fp_status fp_bank_save(const fp_bank* bank, const char* path) {
  return guarded([&] {
    require(bank, "bank");
    require(path, "path");
    fpath::save_bank(bank->value, path);
  });
}

uint32_t fp_bank_num_layers(const fp_bank* b) { return b ? static_cast<uint32_t>(b->value.num_layers()) : 0; }
uint32_t fp_bank_num_classes(const fp_bank* b) {
  return b ? static_cast<uint32_t>(b->value.num_classes()) : 0;
}
void fp_bank_free(fp_bank* b) { delete b; }

fp_status fp_pfc_variability(const fp_bank* bank, const fp_dump* train, double* out,
                             size_t num_layers) {
  return guarded([&] {
    require(bank, "bank");
    require(train, "train");
    require(out, "out");
    check_layers(num_layers, static_cast<size_t>(bank->value.num_layers()));
    const auto paths = train->value.paths();
    const auto r = fpath::pfc_variability(paths, bank->value);
    std::copy(r.begin(), r.end(), out);
  });
}

// ---- detection -------------------------------------------------------------

fp_status fp_auto_layer_mask(const double* variability, size_t num_layers, double cutoff,
                             uint8_t* mask) {
  return guarded([&] {
    require(variability, "variability");
    require(mask, "mask");
    const auto m = fpath::auto_layer_mask(std::span<const double>(variability, num_layers), cutoff);
    for (size_t i = 0; i < num_layers; ++i) mask[i] = m[i] ? 1 : 0;
  });
}

fp_status fp_smax_scores(const fp_bank* bank, const fp_dump* dump, const uint8_t* mask,
                         size_t num_layers, double* scores, size_t num_scores) {
  return guarded([&] {
    require(bank, "bank");
    require(dump, "dump");
    require(scores, "scores");
    check_count(num_scores, dump->value.size());
    fpath::DetectorConfig cfg;
    if (mask) check_layers(num_layers, static_cast<size_t>(bank->value.num_layers()));
    cfg.layer_mask = to_mask(mask, num_layers);
    const auto paths = dump->value.paths();
    const auto s = fpath::s_max_scores(paths, bank->value, cfg);
    std::copy(s.begin(), s.end(), scores);
  });
}

fp_status fp_calibrate_threshold(const double* scores, size_t n, uint32_t bins, double* threshold) {
  return guarded([&] {
    require(scores, "scores");
    require(threshold, "threshold");
    *threshold = fpath::calibrate_threshold(std::span<const double>(scores, n), static_cast<int>(bins));
  });
}

fp_status fp_detect(const fp_bank* bank, const fp_dump* dump, const uint8_t* mask,
                    size_t num_layers, double threshold, uint8_t* verdicts, double* scores,
                    size_t n) {
  return guarded([&] {
    require(bank, "bank");
    require(dump, "dump");
    require(verdicts, "verdicts");
    check_count(n, dump->value.size());
    fpath::DetectorConfig cfg;
    if (mask) check_layers(num_layers, static_cast<size_t>(bank->value.num_layers()));
    cfg.layer_mask = to_mask(mask, num_layers);
    const auto paths = dump->value.paths();
    for (size_t i = 0; i < paths.size(); ++i) {
      const auto v = fpath::detect(paths[i], bank->value, threshold, cfg);
      verdicts[i] = v.verdict == fpath::Verdict::Adversarial ? 1 : 0;
      if (scores) scores[i] = v.s_max;
    }
  });
}

// ---- recognition -----------------------------------------------------------

fp_status fp_layer_accuracy(const fp_bank* bank, const fp_dump* dump, double* acc,
                            size_t num_layers) {
  return guarded([&] {
    require(bank, "bank");
    require(dump, "dump");
    require(acc, "accuracy");
    check_layers(num_layers, static_cast<size_t>(bank->value.num_layers()));
    const auto paths = dump->value.paths();
    const auto r = fpath::layer_accuracy(paths, {}, bank->value);
    std::copy(r.clean_accuracy.begin(), r.clean_accuracy.end(), acc);
  });
}

fp_status fp_select_layers(const double* acc, size_t num_layers, uint32_t count,
                           uint32_t* selected) {
  return guarded([&] {
    require(acc, "accuracy");
    require(selected, "selected");
    fpath::LayerAccuracyReport r;
    r.adversarial_accuracy.assign(acc, acc + num_layers);
    const auto cfg = fpath::select_layers(r, static_cast<int>(count));
    for (size_t i = 0; i < cfg.selected_layers.size(); ++i) {
      selected[i] = static_cast<uint32_t>(cfg.selected_layers[i]);
    }
  });
}

fp_status fp_vote(const fp_bank* bank, const fp_dump* dump, const uint32_t* selected,
                  const double* weights, size_t num_selected, uint32_t* labels, size_t n) {
  return guarded([&] {
    require(bank, "bank");
    require(dump, "dump");
    require(selected, "selected");
    require(labels, "labels");
    check_count(n, dump->value.size());
    fpath::VotingConfig cfg;
    cfg.selected_layers.assign(selected, selected + num_selected);
    if (weights) cfg.weights.assign(weights, weights + num_selected);
    const auto paths = dump->value.paths();
    for (size_t i = 0; i < paths.size(); ++i) {
      labels[i] = static_cast<uint32_t>(fpath::vote(paths[i], bank->value, cfg));
    }
  });
}

fp_status fp_recognize(const fp_net* net, const fp_bank* bank, const fp_dataset* data,
                       const uint8_t* mask, size_t num_layers, double threshold,
                       const uint32_t* selected, size_t num_selected, uint32_t* labels,
                       uint8_t* verdicts, size_t n) {
  return guarded([&] {
    require(net, "net");
    require(bank, "bank");
    require(data, "data");
    require(selected, "selected");
    require(labels, "labels");
    check_count(n, data->value.size());
    fpath::DetectorConfig det;
    if (mask) check_layers(num_layers, static_cast<size_t>(bank->value.num_layers()));
    det.layer_mask = to_mask(mask, num_layers);
    fpath::VotingConfig vote;
    vote.selected_layers.assign(selected, selected + num_selected);
    for (size_t i = 0; i < data->value.size(); ++i) {
      const auto r = fpath::recognize(data->value.input(i), net->value, bank->value, threshold,
                                      det, vote);
      labels[i] = static_cast<uint32_t>(r.label);
      if (verdicts) verdicts[i] = r.detection.verdict == fpath::Verdict::Adversarial ? 1 : 0;
    }
  });
}

// ---- harness ---------------------------------------------------------------

fp_status fp_evaluate(const fp_net* net, const fp_bank* bank, const fp_dataset* clean,
                      const fp_dataset* adversarial, const char* settings_json,
                      char** report_json) {
  return guarded([&] {
    require(net, "net");
    require(bank, "bank");
    require(clean, "clean");
    require(adversarial, "adversarial");
    require(settings_json, "settings_json");
    require(report_json, "report_json");
    const auto settings = fpath::settings_from_json(nlohmann::json::parse(settings_json));
    const auto r = fpath::evaluate(net->value, bank->value, settings, clean->value, adversarial->value);
    *report_json = dup_string(r.to_json().dump(2));
  });
}

fp_status fp_layer_sweep(const fp_net* net, const fp_bank* bank, const fp_dataset* clean,
                         const fp_dataset* adversarial, const char* settings_json,
                         const uint32_t* candidates, size_t num_candidates, uint32_t min_size,
                         uint32_t max_subsets, char** table_json) {
  return guarded([&] {
    require(net, "net");
    require(bank, "bank");
    require(clean, "clean");
    require(adversarial, "adversarial");
    require(settings_json, "settings_json");
    require(table_json, "table_json");
    if (num_candidates > 0) require(candidates, "candidates");
    const auto settings = fpath::settings_from_json(nlohmann::json::parse(settings_json));
    const auto rows = fpath::layer_sweep(
        net->value, bank->value, settings, clean->value, adversarial->value,
        std::vector<int>(candidates, candidates + num_candidates), static_cast<int>(min_size),
        static_cast<int>(max_subsets));
    *table_json = dup_string(fpath::sweep_to_json(rows).dump(2));
  });
}

fp_status fp_experiment_default_config(char** config_json) {
  return guarded([&] {
    require(config_json, "config_json");
    *config_json = dup_string(fpath::ExperimentConfig::toy_defaults().to_json().dump(2));
  });
}

fp_status fp_experiment_run(const char* config_json, char** manifest_json, fp_net** net_out,
                            fp_bank** bank_out) {
  return guarded([&] {
    require(config_json, "config_json");
    require(manifest_json, "manifest_json");
    auto cfg = fpath::ExperimentConfig::from_json(nlohmann::json::parse(config_json));
    auto res = fpath::run_experiment(cfg);
    *manifest_json = dup_string(res.manifest().dump(2));
    if (net_out) *net_out = new fp_net{std::move(res.net)};
    if (bank_out) *bank_out = new fp_bank{std::move(res.bank)};
  });
}

fp_status fp_reproduce(const char* manifest_json, int* identical, char** new_manifest_json) {
  return guarded([&] {
    require(manifest_json, "manifest_json");
    require(identical, "identical");
    const auto rep = fpath::reproduce(nlohmann::json::parse(manifest_json));
    *identical = rep.identical ? 1 : 0;
    if (new_manifest_json) *new_manifest_json = dup_string(rep.manifest.dump(2));
  });
}

fp_status fp_run_stage(const char* request_json, char** manifest_json) {
  return guarded([&] {
    require(request_json, "request_json");
    require(manifest_json, "manifest_json");
    *manifest_json = dup_string(fpath::run_stage(nlohmann::json::parse(request_json)).dump(2));
  });
}

fp_status fp_stage_names(char** names_json) {
  return guarded([&] {
    require(names_json, "names_json");
    *names_json = dup_string(nlohmann::json(fpath::stage_names()).dump());
  });
}

fp_status fp_stage_default_config(const char* command, char** config_json) {
  return guarded([&] {
    require(command, "command");
    require(config_json, "config_json");
    *config_json = dup_string(fpath::stage_default_config(command).dump(2));
  });
}

fp_status fp_report_csv(const char* report_json, const char* kind, char** csv) {
  return guarded([&] {
    require(report_json, "report_json");
    require(kind, "kind");
    require(csv, "csv");
    const auto r = fpath::MetricsReport::from_json(nlohmann::json::parse(report_json));
    const std::string k = kind;
    if (k == "histogram") {
      *csv = dup_string(r.histogram_csv());
    } else if (k == "layers") {
      *csv = dup_string(r.layers_csv());
    } else if (k == "baselines") {
      *csv = dup_string(r.baselines_csv());
    } else {
      throw fpath::InvalidArgument("unknown CSV kind \"" + k + "\"");
    }
  });
}

}  // extern "C"
