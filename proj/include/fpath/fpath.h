/*
 * C interface to the feature-path library.
 *
 * All objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns an fp_status; on
 * failure fp_last_error() describes the problem for the calling thread until
 * the next failing call on that thread. Strings returned through char** are
 * heap-allocated and released with fp_string_free.
 */
#ifndef FPATH_FPATH_H
#define FPATH_FPATH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FPATH_BUILDING_LIBRARY)
#    define FPATH_API __declspec(dllexport)
#  else
#    define FPATH_API __declspec(dllimport)
#  endif
#else
#  define FPATH_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fp_status {
  FP_OK = 0,
  FP_ERR_INVALID_ARGUMENT = 1,
  FP_ERR_SHAPE = 2,
  FP_ERR_NUMERIC = 3,
  FP_ERR_DEGENERATE = 4,
  FP_ERR_FORMAT = 5,
  FP_ERR_IO = 6,
  FP_ERR_INTERNAL = 7
} fp_status;

typedef struct fp_dataset fp_dataset;
typedef struct fp_net fp_net;
typedef struct fp_dump fp_dump;
typedef struct fp_bank fp_bank;

FPATH_API const char* fp_version(void);
FPATH_API const char* fp_last_error(void);
FPATH_API const char* fp_status_name(fp_status status);
FPATH_API void fp_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

typedef struct fp_synth_params {
  uint32_t num_classes;
  uint32_t dim;
  uint32_t train_per_class;
  uint32_t calib_per_class;
  uint32_t test_per_class;
  double separation;
  double squash_scale;
  uint64_t seed;
} fp_synth_params;

/* Fills the toy defaults (10 classes, dim 20, 500/100/100 per class). */
FPATH_API void fp_synth_params_default(fp_synth_params* params);

/* Any output pointer may be NULL to discard that split. */
FPATH_API fp_status fp_dataset_synth(const fp_synth_params* params, fp_dataset** train,
                                     fp_dataset** calib, fp_dataset** test);
FPATH_API fp_status fp_dataset_load(const char* path, fp_dataset** out);
FPATH_API fp_status fp_dataset_save(const fp_dataset* data, const char* path);
FPATH_API size_t fp_dataset_size(const fp_dataset* data);
FPATH_API uint32_t fp_dataset_dim(const fp_dataset* data);
FPATH_API uint32_t fp_dataset_num_classes(const fp_dataset* data);
FPATH_API void fp_dataset_free(fp_dataset* data);

/* ---- network ----------------------------------------------------------- */

typedef struct fp_train_config {
  double learning_rate;
  double momentum;
  double weight_decay;
  uint32_t batch_size;
  uint32_t epochs;
  const uint32_t* lr_drop_epochs;
  size_t num_lr_drops;
  double lr_drop_factor;
  uint64_t rng_seed;
} fp_train_config;

typedef struct fp_attack_config {
  double epsilon;
  double step_size;
  uint32_t iterations;
  double box_lo;
  double box_hi;
  int random_start;
  uint64_t rng_seed;
} fp_attack_config;

/* Defaults point lr_drop_epochs at static storage. */
FPATH_API void fp_train_config_default(fp_train_config* cfg);
FPATH_API void fp_attack_config_default(fp_attack_config* cfg);

/* layer_dims = input, hidden..., classes. taps index hidden layers. */
FPATH_API fp_status fp_net_create(const uint32_t* layer_dims, size_t num_dims,
                                  const uint32_t* taps, size_t num_taps, uint64_t seed,
                                  fp_net** out);
FPATH_API fp_status fp_net_load(const char* path, fp_net** out);
FPATH_API fp_status fp_net_save(const fp_net* net, const char* path);
FPATH_API void fp_net_free(fp_net* net);
FPATH_API uint32_t fp_net_num_taps(const fp_net* net);
FPATH_API uint32_t fp_net_num_classes(const fp_net* net);

/* final_loss may be NULL. */
FPATH_API fp_status fp_net_train(fp_net* net, const fp_dataset* data, const fp_train_config* cfg,
                                 double* final_loss);
/* Every training example is replaced by its PGD perturbation under `attack`. */
FPATH_API fp_status fp_net_adv_train(fp_net* net, const fp_dataset* data,
                                     const fp_train_config* cfg, const fp_attack_config* attack,
                                     double* final_loss);
FPATH_API fp_status fp_net_accuracy(const fp_net* net, const fp_dataset* data, double* accuracy);
FPATH_API fp_status fp_net_predict(const fp_net* net, const double* input, size_t dim,
                                   uint32_t* label);

/* ---- attacks ----------------------------------------------------------- */

FPATH_API fp_status fp_pgd_attack(const fp_net* net, const double* input, size_t dim,
                                  uint32_t label, const fp_attack_config* cfg, double* out);
/* success_rate may be NULL. */
FPATH_API fp_status fp_attack_dataset(const fp_net* net, const fp_dataset* data,
                                      const fp_attack_config* cfg, fp_dataset** adversarial,
                                      double* success_rate);
/* Smallest candidate epsilon driving accuracy below target (step = eps * step_ratio). */
FPATH_API fp_status fp_choose_epsilon(const fp_net* net, const fp_dataset* data,
                                      const fp_attack_config* base, const double* candidates,
                                      size_t num_candidates, double target_accuracy,
                                      double step_ratio, double* epsilon);

/* ---- feature dumps ----------------------------------------------------- */

FPATH_API fp_status fp_extract(const fp_net* net, const fp_dataset* data, int adversarial,
                               fp_dump** out);
FPATH_API fp_status fp_dump_load(const char* path, fp_dump** out);
FPATH_API fp_status fp_dump_save(const fp_dump* dump, const char* path);
FPATH_API size_t fp_dump_size(const fp_dump* dump);
FPATH_API uint32_t fp_dump_num_layers(const fp_dump* dump);
FPATH_API uint32_t fp_dump_num_classes(const fp_dump* dump);
FPATH_API void fp_dump_free(fp_dump* dump);

/* ---- centroid banks ---------------------------------------------------- */

FPATH_API fp_status fp_bank_build(const fp_dump* train, uint32_t num_classes, fp_bank** out);
FPATH_API fp_status fp_bank_load(const char* path, fp_bank** out);
FPATH_API fp_status fp_bank_save(const fp_bank* bank, const char* path);
FPATH_API uint32_t fp_bank_num_layers(const fp_bank* bank);
FPATH_API uint32_t fp_bank_num_classes(const fp_bank* bank);
FPATH_API void fp_bank_free(fp_bank* bank);

/* out receives one ratio per layer. */
FPATH_API fp_status fp_pfc_variability(const fp_bank* bank, const fp_dump* train, double* out,
                                       size_t num_layers);

/* ---- detection --------------------------------------------------------- */

/* mask: one byte per layer (nonzero = included), or NULL for all layers. */
FPATH_API fp_status fp_auto_layer_mask(const double* variability, size_t num_layers,
                                       double cutoff, uint8_t* mask);
FPATH_API fp_status fp_smax_scores(const fp_bank* bank, const fp_dump* dump, const uint8_t* mask,
                                   size_t num_layers, double* scores, size_t num_scores);
FPATH_API fp_status fp_calibrate_threshold(const double* scores, size_t n, uint32_t bins,
                                           double* threshold);
/* verdicts[i] = 1 when example i is flagged adversarial (S_max < threshold). */
FPATH_API fp_status fp_detect(const fp_bank* bank, const fp_dump* dump, const uint8_t* mask,
                              size_t num_layers, double threshold, uint8_t* verdicts,
                              double* scores, size_t n);

/* ---- recognition ------------------------------------------------------- */

/* Per-layer nearest-centroid accuracy on a dump. */
FPATH_API fp_status fp_layer_accuracy(const fp_bank* bank, const fp_dump* dump, double* accuracy,
                                      size_t num_layers);
/* Top `count` layers by accuracy, deeper first on ties, written in depth order. */
FPATH_API fp_status fp_select_layers(const double* accuracy, size_t num_layers, uint32_t count,
                                     uint32_t* selected);
/* weights may be NULL for equal weights. */
FPATH_API fp_status fp_vote(const fp_bank* bank, const fp_dump* dump, const uint32_t* selected,
                            const double* weights, size_t num_selected, uint32_t* labels, size_t n);
FPATH_API fp_status fp_recognize(const fp_net* net, const fp_bank* bank, const fp_dataset* data,
                                 const uint8_t* mask, size_t num_layers, double threshold,
                                 const uint32_t* selected, size_t num_selected, uint32_t* labels,
                                 uint8_t* verdicts, size_t n);

/* ---- harness ----------------------------------------------------------- */

/*
 * settings_json: {"threshold": t, "layer_mask": [..] | null,
 *                 "selected_layers": [..], "weights": [..] (optional),
 *                 "histogram_bins": n}
 * report_json receives the metrics report.
 */
FPATH_API fp_status fp_evaluate(const fp_net* net, const fp_bank* bank, const fp_dataset* clean,
                                const fp_dataset* adversarial, const char* settings_json,
                                char** report_json);
FPATH_API fp_status fp_layer_sweep(const fp_net* net, const fp_bank* bank, const fp_dataset* clean,
                                   const fp_dataset* adversarial, const char* settings_json,
                                   const uint32_t* candidates, size_t num_candidates,
                                   uint32_t min_size, uint32_t max_subsets, char** table_json);

/* Toy experiment defaults as a JSON config. */
FPATH_API fp_status fp_experiment_default_config(char** config_json);
/* Runs the full protocol; manifest_json receives config, derived settings and
 * metrics. net_out / bank_out may be NULL. */
FPATH_API fp_status fp_experiment_run(const char* config_json, char** manifest_json,
                                      fp_net** net_out, fp_bank** bank_out);
/* Re-runs any manifest in memory and compares metrics bit-for-bit. */
FPATH_API fp_status fp_reproduce(const char* manifest_json, int* identical,
                                 char** new_manifest_json);
/* Executes one pipeline stage from a JSON request
 *   {"command", "inputs": {role: path}, "outputs": {role: path}, "config": {...}}
 * and writes its outputs. manifest_json receives the stage manifest. */
FPATH_API fp_status fp_run_stage(const char* request_json, char** manifest_json);
/* Stage names (JSON array) and a stage's default config (JSON object). */
FPATH_API fp_status fp_stage_names(char** names_json);
FPATH_API fp_status fp_stage_default_config(const char* command, char** config_json);
/* CSV sidecars from a report: kind is "histogram", "layers" or "baselines". */
FPATH_API fp_status fp_report_csv(const char* report_json, const char* kind, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* FPATH_FPATH_H */
