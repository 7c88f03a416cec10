#include "greenleaf.h"

#include <cstdio>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "core/eval.hpp"
#include "core/profile_report.hpp"
#include "core/train.hpp"

using namespace greenleaf;

struct gl_model {
    ModelGraph graph;
};
struct gl_dataset {
    DatasetIndex index;
};
struct gl_history {
    TrainingHistory history;
};
struct gl_report {
    EvalReport report;
};

namespace {

thread_local std::string g_last_error;

gl_status status_of(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::io:
        case ErrorKind::decode:
            return GL_ERR_IO;
        case ErrorKind::diverged:
            return GL_ERR_RUNTIME;
        default:
            return GL_ERR_ARGUMENT;
    }
}

template <typename Fn>
gl_status guarded(Fn&& fn) {
    try {
        fn();
        return GL_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return GL_ERR_RUNTIME;
    }
}

gl_status invalid(const std::string& msg) {
    g_last_error = msg;
    return GL_ERR_ARGUMENT;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                         const char* where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) fail(ErrorKind::configuration, where, ": unknown key '", key, "'");
    }
}

AugmentationConfig parse_augment_json(const nlohmann::json& j, bool* enabled) {
    reject_unknown_keys(j,
                        {"enabled", "rotation_deg", "zoom", "width_shift", "height_shift", "shear",
                         "horizontal_flip"},
                        "augment config");
    AugmentationConfig cfg;
    if (enabled) *enabled = j.value("enabled", true);
    cfg.rotation_deg = j.value("rotation_deg", cfg.rotation_deg);
    cfg.zoom = j.value("zoom", cfg.zoom);
    cfg.width_shift = j.value("width_shift", cfg.width_shift);
    cfg.height_shift = j.value("height_shift", cfg.height_shift);
    cfg.shear = j.value("shear", cfg.shear);
    cfg.horizontal_flip = j.value("horizontal_flip", cfg.horizontal_flip);
    validate_augmentation_config(cfg);
    return cfg;
}

FitOptions parse_train_json(const char* config_json, int verbose) {
    FitOptions opts;
    if (config_json && *config_json) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::configuration, "train config: invalid JSON: ", e.what());
        }
        reject_unknown_keys(j,
                            {"learning_rate", "max_epochs", "batch_size", "patience", "early_stop",
                             "l2_lambda", "beta1", "beta2", "eps", "seed", "augment"},
                            "train config");
        TrainConfig& cfg = opts.config;
        try {
            cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
            cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
            cfg.batch_size = j.value("batch_size", cfg.batch_size);
            cfg.patience = j.value("patience", cfg.patience);
            cfg.early_stop = j.value("early_stop", cfg.early_stop);
            cfg.l2_lambda = j.value("l2_lambda", cfg.l2_lambda);
            cfg.beta1 = j.value("beta1", cfg.beta1);
            cfg.beta2 = j.value("beta2", cfg.beta2);
            cfg.eps = j.value("eps", cfg.eps);
            cfg.seed = j.value("seed", cfg.seed);
            if (j.contains("augment")) {
                bool enabled = true;
                const AugmentationConfig aug = parse_augment_json(j["augment"], &enabled);
                if (enabled) opts.augment = aug;
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::configuration, "train config: bad value type: ", e.what());
        }
    }
    validate_train_config(opts.config);
    if (verbose)
        opts.epoch_callback = [](int epoch, const TrainingHistory& h) {
            std::printf("epoch %4d  train_loss %.6g  train_acc %.4f  val_loss %.6g  val_acc %.4f\n",
                        epoch, h.train_loss.back(), h.train_acc.back(), h.val_loss.back(),
                        h.val_acc.back());
            std::fflush(stdout);
        };
    return opts;
}

} // namespace

extern "C" {

const char* gl_version(void) { return "0.1.0"; }

const char* gl_last_error(void) { return g_last_error.c_str(); }

void gl_string_free(char* s) { std::free(s); }

/* ---------------------------- models ------------------------------ */

gl_status gl_model_build(const char* arch, int num_classes, double width_scale, int resolution,
                         uint64_t seed, int trainable_base, gl_model** out) {
    if (!arch || !out) return invalid("gl_model_build: arch and out must be non-null");
    return guarded([&] {
        BuildOptions opts;
        opts.num_classes = num_classes;
        opts.width_scale = width_scale;
        opts.resolution = resolution;
        opts.seed = seed;
        opts.trainable_base = trainable_base != 0;
        *out = new gl_model{build_model(arch, opts)};
    });
}

void gl_model_free(gl_model* model) { delete model; }

const char* gl_model_name(const gl_model* model) { return model->graph.name().c_str(); }
int gl_model_num_classes(const gl_model* model) { return model->graph.num_classes(); }
int gl_model_resolution(const gl_model* model) { return model->graph.input_resolution(); }

gl_status gl_model_parameter_count(const gl_model* model, int64_t* out) {
    if (!model || !out) return invalid("gl_model_parameter_count: null argument");
    *out = model->graph.parameter_count();
    return GL_OK;
}

gl_status gl_model_flops(const gl_model* model, int64_t* out) {
    if (!model || !out) return invalid("gl_model_flops: null argument");
    *out = model->graph.flops();
    return GL_OK;
}

gl_status gl_model_save_weights(const gl_model* model, const char* path) {
    if (!model || !path) return invalid("gl_model_save_weights: null argument");
    return guarded([&] { model->graph.save_weights(path); });
}

gl_status gl_model_load_weights(gl_model* model, const char* path) {
    if (!model || !path) return invalid("gl_model_load_weights: null argument");
    return guarded([&] { model->graph.load_weights(path); });
}

gl_status gl_model_predict_image(gl_model* model, const char* image_path, int* predicted_class,
                                 double* probs, size_t probs_len) {
    if (!model || !image_path || !predicted_class)
        return invalid("gl_model_predict_image: null argument");
    const int k = model->graph.num_classes();
    if (probs && probs_len != static_cast<size_t>(k))
        return invalid(concat("gl_model_predict_image: probs_len ", probs_len,
                              " does not match the class count ", k));
    return guarded([&] {
        Tensor image = load_and_resize(image_path, model->graph.input_resolution());
        Tensor logits = model->graph.forward(nullptr, image, Mode::eval);
        const std::vector<int> target = {0};
        auto r = softmax_cross_entropy(nullptr, logits, target);
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (logits.at(0, j, 0, 0) > logits.at(0, best, 0, 0)) best = j;
        *predicted_class = best;
        if (probs)
            for (int j = 0; j < k; ++j) probs[j] = r.probs.at(0, j, 0, 0);
    });
}

/* ---------------------------- datasets ---------------------------- */

gl_status gl_dataset_scan(const char* root, gl_dataset** out) {
    if (!root || !out) return invalid("gl_dataset_scan: null argument");
    return guarded([&] { *out = new gl_dataset{scan_dataset(root)}; });
}

gl_status gl_dataset_load_index(const char* json_path, gl_dataset** out) {
    if (!json_path || !out) return invalid("gl_dataset_load_index: null argument");
    return guarded([&] { *out = new gl_dataset{load_index_json(json_path)}; });
}

gl_status gl_dataset_save_index(const gl_dataset* dataset, const char* json_path) {
    if (!dataset || !json_path) return invalid("gl_dataset_save_index: null argument");
    return guarded([&] { save_index_json(dataset->index, json_path); });
}

gl_status gl_dataset_balance(const gl_dataset* dataset, uint64_t seed, gl_dataset** out) {
    if (!dataset || !out) return invalid("gl_dataset_balance: null argument");
    return guarded([&] { *out = new gl_dataset{balance_downsample(dataset->index, seed)}; });
}

gl_status gl_dataset_split(const gl_dataset* dataset, double val_fraction, uint64_t seed,
                           gl_dataset** train_out, gl_dataset** val_out) {
    if (!dataset || !train_out || !val_out) return invalid("gl_dataset_split: null argument");
    return guarded([&] {
        auto [train, val] = stratified_split(dataset->index, val_fraction, seed);
        *train_out = new gl_dataset{std::move(train)};
        *val_out = new gl_dataset{std::move(val)};
    });
}

void gl_dataset_free(gl_dataset* dataset) { delete dataset; }

int gl_dataset_num_classes(const gl_dataset* dataset) {
    return static_cast<int>(dataset->index.class_names.size());
}

int64_t gl_dataset_size(const gl_dataset* dataset) {
    return static_cast<int64_t>(dataset->index.records.size());
}

int gl_dataset_skipped_files(const gl_dataset* dataset) { return dataset->index.skipped_files; }

const char* gl_dataset_class_name(const gl_dataset* dataset, int class_id) {
    if (class_id < 0 || class_id >= static_cast<int>(dataset->index.class_names.size()))
        return nullptr;
    return dataset->index.class_names[static_cast<std::size_t>(class_id)].c_str();
}

const char* gl_dataset_record_path(const gl_dataset* dataset, int64_t record) {
    if (record < 0 || record >= static_cast<int64_t>(dataset->index.records.size())) return nullptr;
    return dataset->index.records[static_cast<std::size_t>(record)].path.c_str();
}

int gl_dataset_record_class(const gl_dataset* dataset, int64_t record) {
    if (record < 0 || record >= static_cast<int64_t>(dataset->index.records.size())) return -1;
    return dataset->index.records[static_cast<std::size_t>(record)].class_id;
}

gl_status gl_dataset_class_counts(const gl_dataset* dataset, int64_t* counts, size_t len) {
    if (!dataset || !counts) return invalid("gl_dataset_class_counts: null argument");
    if (len != dataset->index.class_names.size())
        return invalid(concat("gl_dataset_class_counts: len ", len, " does not match ",
                              dataset->index.class_names.size(), " classes"));
    const auto per_class = dataset->index.per_class_counts();
    for (std::size_t i = 0; i < per_class.size(); ++i) counts[i] = per_class[i];
    return GL_OK;
}

gl_status gl_fixture_generate(const char* dir, int per_class, int size, uint64_t seed) {
    if (!dir) return invalid("gl_fixture_generate: null dir");
    return guarded([&] { make_synthetic_fixture(dir, per_class, size, seed); });
}

/* ---------------------------- training ---------------------------- */

gl_status gl_train(gl_model* model, const gl_dataset* train_set, const gl_dataset* val_set,
                   const char* config_json, int verbose, gl_history** out) {
    if (!model || !train_set || !val_set || !out) return invalid("gl_train: null argument");
    return guarded([&] {
        const FitOptions opts = parse_train_json(config_json, verbose);
        *out = new gl_history{fit(model->graph, train_set->index, val_set->index, opts)};
    });
}

void gl_history_free(gl_history* history) { delete history; }

int gl_history_epochs(const gl_history* history) { return history->history.stopped_epoch; }
int gl_history_best_epoch(const gl_history* history) { return history->history.best_epoch; }

const char* gl_history_stop_reason(const gl_history* history) {
    return to_string(history->history.stop_reason);
}

gl_status gl_history_row(const gl_history* history, int epoch, double* train_loss,
                         double* train_acc, double* val_loss, double* val_acc) {
    if (!history) return invalid("gl_history_row: null history");
    if (epoch < 1 || epoch > history->history.stopped_epoch)
        return invalid(concat("gl_history_row: epoch ", epoch, " outside [1,",
                              history->history.stopped_epoch, "]"));
    const std::size_t i = static_cast<std::size_t>(epoch - 1);
    if (train_loss) *train_loss = history->history.train_loss[i];
    if (train_acc) *train_acc = history->history.train_acc[i];
    if (val_loss) *val_loss = history->history.val_loss[i];
    if (val_acc) *val_acc = history->history.val_acc[i];
    return GL_OK;
}

gl_status gl_history_save_csv(const gl_history* history, const char* path) {
    if (!history || !path) return invalid("gl_history_save_csv: null argument");
    return guarded([&] { write_history_csv(history->history, path); });
}

gl_status gl_sweep(const char* arch, const gl_dataset* train_set, const gl_dataset* val_set,
                   int num_classes, double width_scale, int resolution, const char* config_json,
                   const double* grid, size_t grid_len, const char* out_dir, int verbose) {
    if (!arch || !train_set || !val_set || !grid || !out_dir)
        return invalid("gl_sweep: null argument");
    return guarded([&] {
        const FitOptions opts = parse_train_json(config_json, verbose);
        BuildOptions build;
        build.num_classes = num_classes;
        build.width_scale = width_scale;
        build.resolution = resolution;
        lr_sweep(arch, build, std::vector<double>(grid, grid + grid_len), train_set->index,
                 val_set->index, opts, out_dir);
    });
}

/* --------------------------- evaluation --------------------------- */

gl_status gl_evaluate(gl_model* model, const gl_dataset* dataset, int batch_size, gl_report** out) {
    if (!model || !dataset || !out) return invalid("gl_evaluate: null argument");
    return guarded([&] { *out = new gl_report{evaluate(model->graph, dataset->index, batch_size)}; });
}

void gl_report_free(gl_report* report) { delete report; }

double gl_report_accuracy(const gl_report* report) { return report->report.accuracy; }
double gl_report_macro_precision(const gl_report* report) { return report->report.macro_precision; }
double gl_report_macro_recall(const gl_report* report) { return report->report.macro_recall; }
double gl_report_macro_f_measure(const gl_report* report) { return report->report.macro_f_measure; }
int64_t gl_report_samples(const gl_report* report) { return report->report.samples_evaluated; }
int gl_report_decode_failures(const gl_report* report) { return report->report.decode_failures; }

gl_status gl_report_to_json(const gl_report* report, char** json_out) {
    if (!report || !json_out) return invalid("gl_report_to_json: null argument");
    return guarded([&] {
        *json_out = dup_string(report_to_json(report->report));
        if (!*json_out) fail(ErrorKind::io, "gl_report_to_json: allocation failed");
    });
}

gl_status gl_report_save_json(const gl_report* report, const char* path) {
    if (!report || !path) return invalid("gl_report_save_json: null argument");
    return guarded([&] { save_report_json(report->report, path); });
}

/* --------------------------- profiling ---------------------------- */

gl_status gl_profile(const char* const* names, const int64_t* parameters, const int64_t* flops,
                     size_t n, int include_reference_rows, char** csv_out, char** text_out) {
    if (n > 0 && (!names || !parameters)) return invalid("gl_profile: null rows");
    return guarded([&] {
        std::vector<ProfileRow> rows;
        for (size_t i = 0; i < n; ++i) {
            ProfileRow row;
            row.model = names[i];
            row.parameters = parameters[i];
            row.flops = flops ? flops[i] : 0;
            rows.push_back(std::move(row));
        }
        const ProfileTable table = profile_report(std::move(rows), include_reference_rows != 0);
        if (csv_out) {
            *csv_out = dup_string(profile_to_csv(table));
            if (!*csv_out) fail(ErrorKind::io, "gl_profile: allocation failed");
        }
        if (text_out) {
            *text_out = dup_string(profile_to_text(table));
            if (!*text_out) fail(ErrorKind::io, "gl_profile: allocation failed");
        }
    });
}

/* ---------------------- augmentation preview ---------------------- */

gl_status gl_augment_preview(const char* image_path, const char* augment_json, int count,
                             uint64_t seed, const char* out_dir) {
    if (!image_path || !out_dir) return invalid("gl_augment_preview: null argument");
    if (count < 1) return invalid("gl_augment_preview: count must be >= 1");
    return guarded([&] {
        AugmentationConfig cfg;
        if (augment_json && *augment_json) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(augment_json);
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::configuration, "augment config: invalid JSON: ", e.what());
            }
            cfg = parse_augment_json(j, nullptr);
        }
        const Tensor image = image_to_tensor(decode_image(image_path));
        std::filesystem::create_directories(out_dir);
        const Rng master(seed);
        for (int i = 0; i < count; ++i) {
            const Tensor augmented = augment(image, cfg, master.derive(static_cast<std::uint64_t>(i)));
            char name[32];
            std::snprintf(name, sizeof name, "aug_%03d.png", i);
            encode_png((std::filesystem::path(out_dir) / name).string(), tensor_to_image(augmented));
        }
    });
}

} // extern "C"
