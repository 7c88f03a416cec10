/*
 * greenleaf - lightweight CNN training, evaluation and efficiency profiling.
 *
 * C API over the core library: opaque handles, integer status codes, and a
 * thread-local error message. Every function that can fail returns gl_status;
 * on failure gl_last_error() describes what went wrong. Handles are created
 * by gl_*_build/scan/... calls and released with the matching gl_*_free.
 * Strings returned through char** out-parameters are heap copies; release
 * them with gl_string_free. Strings returned as const char* stay owned by the
 * handle (or are static) and must not be freed.
 */

#ifndef GREENLEAF_H
#define GREENLEAF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gl_status {
    GL_OK = 0,
    GL_ERR_ARGUMENT = 1, /* bad arguments, shapes, hyperparameters, configuration */
    GL_ERR_IO = 2,       /* filesystem or decode failure */
    GL_ERR_RUNTIME = 3,  /* diverged training or another runtime failure */
} gl_status;

typedef struct gl_model gl_model;
typedef struct gl_dataset gl_dataset;
typedef struct gl_history gl_history;
typedef struct gl_report gl_report;

const char* gl_version(void);

/* Message for the most recent failing call on this thread. */
const char* gl_last_error(void);

void gl_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Models                                                              */
/* ------------------------------------------------------------------ */

/*
 * arch: "efficientnet_b0" | "mobilenet_v2" | "shufflenet".
 * width_scale scales every stage width (1.0 = published table); resolution is
 * the square input extent; trainable_base 0 freezes everything but the head.
 */
gl_status gl_model_build(const char* arch, int num_classes, double width_scale, int resolution,
                         uint64_t seed, int trainable_base, gl_model** out);
void gl_model_free(gl_model* model);

const char* gl_model_name(const gl_model* model);
int gl_model_num_classes(const gl_model* model);
int gl_model_resolution(const gl_model* model);

/* Trainable elements only; batch-norm running statistics excluded. */
gl_status gl_model_parameter_count(const gl_model* model, int64_t* out);

/* Multiply-adds x2 over conv and dense layers at the build resolution. */
gl_status gl_model_flops(const gl_model* model, int64_t* out);

/*
 * GLW1 container: 4-byte magic "GLW1", then per tensor (little endian):
 * u32 name length, name bytes, u32 rank, u32 dims[rank], f32 values.
 * Loading matches tensors by name and dims and fails on any mismatch.
 */
gl_status gl_model_save_weights(const gl_model* model, const char* path);
gl_status gl_model_load_weights(gl_model* model, const char* path);

/*
 * Single-image inference. probs may be NULL; otherwise probs_len must equal
 * the class count and receives the softmax distribution.
 */
gl_status gl_model_predict_image(gl_model* model, const char* image_path, int* predicted_class,
                                 double* probs, size_t probs_len);

/* ------------------------------------------------------------------ */
/* Datasets                                                            */
/* ------------------------------------------------------------------ */

/*
 * Scans root with one class per immediate subdirectory, taken in
 * lexicographic order; indexes .jpg/.jpeg/.png files. Other files are
 * skipped and counted.
 */
gl_status gl_dataset_scan(const char* root, gl_dataset** out);

/* JSON index files: {"class_names": [...], "records": [{path, class_id}]}. */
gl_status gl_dataset_load_index(const char* json_path, gl_dataset** out);
gl_status gl_dataset_save_index(const gl_dataset* dataset, const char* json_path);

/* Seeded downsampling without replacement to the minimum class count. */
gl_status gl_dataset_balance(const gl_dataset* dataset, uint64_t seed, gl_dataset** out);

/* Per-class split with round(count * val_fraction) validation records. */
gl_status gl_dataset_split(const gl_dataset* dataset, double val_fraction, uint64_t seed,
                           gl_dataset** train_out, gl_dataset** val_out);

void gl_dataset_free(gl_dataset* dataset);

int gl_dataset_num_classes(const gl_dataset* dataset);
int64_t gl_dataset_size(const gl_dataset* dataset);
int gl_dataset_skipped_files(const gl_dataset* dataset);
const char* gl_dataset_class_name(const gl_dataset* dataset, int class_id);
const char* gl_dataset_record_path(const gl_dataset* dataset, int64_t record);
int gl_dataset_record_class(const gl_dataset* dataset, int64_t record);
gl_status gl_dataset_class_counts(const gl_dataset* dataset, int64_t* counts, size_t len);

/* Deterministic 4-class colored-noise PNG fixture for tests and demos. */
gl_status gl_fixture_generate(const char* dir, int per_class, int size, uint64_t seed);

/* ------------------------------------------------------------------ */
/* Training                                                            */
/* ------------------------------------------------------------------ */

/*
 * config_json keys (all optional, unknown keys rejected):
 *   learning_rate, max_epochs, batch_size, patience, early_stop, l2_lambda,
 *   beta1, beta2, eps, seed,
 *   augment: {enabled, rotation_deg, zoom, width_shift, height_shift, shear,
 *             horizontal_flip}
 * verbose != 0 prints one line per epoch to stdout.
 */
gl_status gl_train(gl_model* model, const gl_dataset* train_set, const gl_dataset* val_set,
                   const char* config_json, int verbose, gl_history** out);

void gl_history_free(gl_history* history);
int gl_history_epochs(const gl_history* history);
int gl_history_best_epoch(const gl_history* history);

/* "max_epochs" or "early_stop" */
const char* gl_history_stop_reason(const gl_history* history);

gl_status gl_history_row(const gl_history* history, int epoch, double* train_loss,
                         double* train_acc, double* val_loss, double* val_acc);

/* CSV: epoch,train_loss,train_acc,val_loss,val_acc with 6-significant-digit reals. */
gl_status gl_history_save_csv(const gl_history* history, const char* path);

/*
 * One independent seeded run per grid entry. Writes curve_lr<value>.csv per
 * run and sweep_summary.csv (lr,best_val_acc,best_epoch,stopped_epoch,
 * stop_reason) under out_dir; a diverging run is recorded as "diverged" and
 * the sweep continues.
 */
gl_status gl_sweep(const char* arch, const gl_dataset* train_set, const gl_dataset* val_set,
                   int num_classes, double width_scale, int resolution, const char* config_json,
                   const double* grid, size_t grid_len, const char* out_dir, int verbose);

/* ------------------------------------------------------------------ */
/* Evaluation                                                          */
/* ------------------------------------------------------------------ */

/*
 * Eval-mode pass over every record without augmentation; argmax prediction
 * with the lowest index winning ties. Undecodable files are counted in the
 * report and skipped.
 */
gl_status gl_evaluate(gl_model* model, const gl_dataset* dataset, int batch_size, gl_report** out);

void gl_report_free(gl_report* report);
double gl_report_accuracy(const gl_report* report);
double gl_report_macro_precision(const gl_report* report);
double gl_report_macro_recall(const gl_report* report);
double gl_report_macro_f_measure(const gl_report* report);
int64_t gl_report_samples(const gl_report* report);
int gl_report_decode_failures(const gl_report* report);

/* Versioned JSON document with class names, the confusion matrix, per-class
 * and macro metrics, accuracy, and sample accounting. */
gl_status gl_report_to_json(const gl_report* report, char** json_out);
gl_status gl_report_save_json(const gl_report* report, const char* path);

/* ------------------------------------------------------------------ */
/* Profiling                                                           */
/* ------------------------------------------------------------------ */

/*
 * Renders a profile table for the given rows, optionally merged with the
 * built-in published reference rows (VGG16, Xception, ResNet50, GhostNet,
 * ModLeafNet). Rows are sorted by descending parameter count and the energy
 * column is the parameter count relative to the largest row, rounded half-up
 * to two decimals. csv_out and text_out may each be NULL.
 */
gl_status gl_profile(const char* const* names, const int64_t* parameters, const int64_t* flops,
                     size_t n, int include_reference_rows, char** csv_out, char** text_out);

/* ------------------------------------------------------------------ */
/* Augmentation preview                                                */
/* ------------------------------------------------------------------ */

/*
 * Writes `count` augmented copies of an image as PNG files aug_000.png ... to
 * out_dir. augment_json uses the same keys as the "augment" training object
 * (minus "enabled"); NULL applies the default ranges.
 */
gl_status gl_augment_preview(const char* image_path, const char* augment_json, int count,
                             uint64_t seed, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GREENLEAF_H */
