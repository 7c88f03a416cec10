// greenleaf command line: train / sweep / eval / profile / augment / fixture
// workflows over the shared library's C API.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "greenleaf.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
    int exit_code;
    std::string message;
};

[[noreturn]] void die(int code, const std::string& message) { throw CliError{code, message}; }

void check(gl_status status, const std::string& what) {
    if (status == GL_OK) return;
    const int code = status == GL_ERR_RUNTIME ? 2 : 1;
    die(code, what + ": " + gl_last_error());
}

struct RunConfig {
    std::string subcommand;
    std::string arch;
    std::string dataset;
    std::string out_dir = "runs/out";
    std::string weights;
    std::string image;
    int num_classes = 0;  // 0 = infer from the dataset
    int resolution = 224;
    double width_scale = 1.0;
    std::uint64_t seed = 42;
    double val_fraction = 0.2;
    bool balance = true;
    bool trainable_base = true;

    double learning_rate = 1e-4;
    int max_epochs = 200;
    int batch_size = 32;
    int patience = 15;
    bool early_stop = true;
    double l2_lambda = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool augment_enabled = true;
    double rotation_deg = 30.0;
    double zoom = 0.15;
    double width_shift = 0.2;
    double height_shift = 0.2;
    double shear = 0.15;
    bool horizontal_flip = true;

    bool include_reference_rows = false;
    std::vector<double> grid = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
    int count = 8;      // augment previews
    int per_class = 8;  // fixture images per class
    int size = 64;      // fixture image extent
};

std::uint64_t env_seed_default() {
    if (const char* env = std::getenv("GREENLEAF_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return static_cast<std::uint64_t>(v);
        die(1, std::string("GREENLEAF_SEED is not an unsigned integer: ") + env);
    }
    return 42;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) die(1, "config " + where + ": unknown key '" + key + "'");
    }
}

void load_config_file(const std::string& path, RunConfig& cfg) {
    std::ifstream is(path);
    if (!is) die(1, "cannot open config file " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        die(1, "config " + path + " is not valid JSON: " + e.what());
    }
    try {
        reject_unknown(j,
                       {"subcommand", "arch", "dataset", "out_dir", "weights", "image",
                        "num_classes", "resolution", "width_scale", "seed", "val_fraction",
                        "balance", "trainable_base", "train", "augment", "profile", "grid",
                        "count", "per_class", "size"},
                       "(top level)");
        cfg.arch = j.value("arch", cfg.arch);
        cfg.dataset = j.value("dataset", cfg.dataset);
        cfg.out_dir = j.value("out_dir", cfg.out_dir);
        cfg.weights = j.value("weights", cfg.weights);
        cfg.image = j.value("image", cfg.image);
        cfg.num_classes = j.value("num_classes", cfg.num_classes);
        cfg.resolution = j.value("resolution", cfg.resolution);
        cfg.width_scale = j.value("width_scale", cfg.width_scale);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
        cfg.balance = j.value("balance", cfg.balance);
        cfg.trainable_base = j.value("trainable_base", cfg.trainable_base);
        cfg.grid = j.value("grid", cfg.grid);
        cfg.count = j.value("count", cfg.count);
        cfg.per_class = j.value("per_class", cfg.per_class);
        cfg.size = j.value("size", cfg.size);
        if (j.contains("train")) {
            const json& t = j["train"];
            reject_unknown(t,
                           {"learning_rate", "max_epochs", "batch_size", "patience", "early_stop",
                            "l2_lambda", "beta1", "beta2", "eps"},
                           "train");
            cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
            cfg.max_epochs = t.value("max_epochs", cfg.max_epochs);
            cfg.batch_size = t.value("batch_size", cfg.batch_size);
            cfg.patience = t.value("patience", cfg.patience);
            cfg.early_stop = t.value("early_stop", cfg.early_stop);
            cfg.l2_lambda = t.value("l2_lambda", cfg.l2_lambda);
            cfg.beta1 = t.value("beta1", cfg.beta1);
            cfg.beta2 = t.value("beta2", cfg.beta2);
            cfg.eps = t.value("eps", cfg.eps);
        }
        if (j.contains("augment")) {
            const json& a = j["augment"];
            reject_unknown(a,
                           {"enabled", "rotation_deg", "zoom", "width_shift", "height_shift",
                            "shear", "horizontal_flip"},
                           "augment");
            cfg.augment_enabled = a.value("enabled", cfg.augment_enabled);
            cfg.rotation_deg = a.value("rotation_deg", cfg.rotation_deg);
            cfg.zoom = a.value("zoom", cfg.zoom);
            cfg.width_shift = a.value("width_shift", cfg.width_shift);
            cfg.height_shift = a.value("height_shift", cfg.height_shift);
            cfg.shear = a.value("shear", cfg.shear);
            cfg.horizontal_flip = a.value("horizontal_flip", cfg.horizontal_flip);
        }
        if (j.contains("profile")) {
            const json& p = j["profile"];
            reject_unknown(p, {"include_reference_rows"}, "profile");
            cfg.include_reference_rows = p.value("include_reference_rows", cfg.include_reference_rows);
        }
    } catch (const json::exception& e) {
        die(1, "config " + path + " has a bad value type: " + e.what());
    }
}

json config_to_json(const RunConfig& cfg) {
    json j;
    j["subcommand"] = cfg.subcommand;
    j["arch"] = cfg.arch;
    j["dataset"] = cfg.dataset;
    j["out_dir"] = cfg.out_dir;
    j["weights"] = cfg.weights;
    j["image"] = cfg.image;
    j["num_classes"] = cfg.num_classes;
    j["resolution"] = cfg.resolution;
    j["width_scale"] = cfg.width_scale;
    j["seed"] = cfg.seed;
    j["val_fraction"] = cfg.val_fraction;
    j["balance"] = cfg.balance;
    j["trainable_base"] = cfg.trainable_base;
    j["train"] = {{"learning_rate", cfg.learning_rate}, {"max_epochs", cfg.max_epochs},
                  {"batch_size", cfg.batch_size},       {"patience", cfg.patience},
                  {"early_stop", cfg.early_stop},       {"l2_lambda", cfg.l2_lambda},
                  {"beta1", cfg.beta1},                 {"beta2", cfg.beta2},
                  {"eps", cfg.eps}};
    j["augment"] = {{"enabled", cfg.augment_enabled},
                    {"rotation_deg", cfg.rotation_deg},
                    {"zoom", cfg.zoom},
                    {"width_shift", cfg.width_shift},
                    {"height_shift", cfg.height_shift},
                    {"shear", cfg.shear},
                    {"horizontal_flip", cfg.horizontal_flip}};
    j["profile"] = {{"include_reference_rows", cfg.include_reference_rows}};
    j["grid"] = cfg.grid;
    j["count"] = cfg.count;
    j["per_class"] = cfg.per_class;
    j["size"] = cfg.size;
    return j;
}

void write_snapshot(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const fs::path path = fs::path(cfg.out_dir) / "config.json";
    std::ofstream os(path);
    if (!os) die(1, "cannot write " + path.string());
    os << config_to_json(cfg).dump(2) << "\n";
}

std::string train_config_json(const RunConfig& cfg, bool with_augment) {
    json j;
    j["learning_rate"] = cfg.learning_rate;
    j["max_epochs"] = cfg.max_epochs;
    j["batch_size"] = cfg.batch_size;
    j["patience"] = cfg.patience;
    j["early_stop"] = cfg.early_stop;
    j["l2_lambda"] = cfg.l2_lambda;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["eps"] = cfg.eps;
    j["seed"] = cfg.seed;
    if (with_augment)
        j["augment"] = {{"enabled", cfg.augment_enabled},
                        {"rotation_deg", cfg.rotation_deg},
                        {"zoom", cfg.zoom},
                        {"width_shift", cfg.width_shift},
                        {"height_shift", cfg.height_shift},
                        {"shear", cfg.shear},
                        {"horizontal_flip", cfg.horizontal_flip}};
    return j.dump();
}

std::string augment_config_json(const RunConfig& cfg) {
    json j = {{"rotation_deg", cfg.rotation_deg}, {"zoom", cfg.zoom},
              {"width_shift", cfg.width_shift},   {"height_shift", cfg.height_shift},
              {"shear", cfg.shear},               {"horizontal_flip", cfg.horizontal_flip}};
    return j.dump();
}

struct DatasetHandle {
    gl_dataset* ptr = nullptr;
    ~DatasetHandle() { gl_dataset_free(ptr); }
};
struct ModelHandle {
    gl_model* ptr = nullptr;
    ~ModelHandle() { gl_model_free(ptr); }
};
struct HistoryHandle {
    gl_history* ptr = nullptr;
    ~HistoryHandle() { gl_history_free(ptr); }
};
struct ReportHandle {
    gl_report* ptr = nullptr;
    ~ReportHandle() { gl_report_free(ptr); }
};

void open_dataset(const std::string& path, DatasetHandle& out) {
    if (path.empty()) die(1, "no dataset given (use --dataset)");
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
        check(gl_dataset_load_index(path.c_str(), &out.ptr), "loading index " + path);
    else
        check(gl_dataset_scan(path.c_str(), &out.ptr), "scanning dataset " + path);
}

int resolve_classes(const RunConfig& cfg, const DatasetHandle& data) {
    if (cfg.num_classes > 0) return cfg.num_classes;
    return gl_dataset_num_classes(data.ptr);
}

void build_model_checked(const RunConfig& cfg, int num_classes, ModelHandle& out) {
    if (cfg.arch.empty()) die(1, "no architecture given (use --arch)");
    check(gl_model_build(cfg.arch.c_str(), num_classes, cfg.width_scale, cfg.resolution, cfg.seed,
                         cfg.trainable_base ? 1 : 0, &out.ptr),
          "building " + cfg.arch);
}

void prepare_train_val(const RunConfig& cfg, DatasetHandle& train, DatasetHandle& val) {
    DatasetHandle full;
    open_dataset(cfg.dataset, full);
    DatasetHandle balanced;
    const gl_dataset* source = full.ptr;
    if (cfg.balance) {
        check(gl_dataset_balance(full.ptr, cfg.seed, &balanced.ptr), "balancing dataset");
        source = balanced.ptr;
    }
    check(gl_dataset_split(source, cfg.val_fraction, cfg.seed, &train.ptr, &val.ptr),
          "splitting dataset");
    const fs::path out(cfg.out_dir);
    check(gl_dataset_save_index(train.ptr, (out / "train_index.json").string().c_str()),
          "writing train index");
    check(gl_dataset_save_index(val.ptr, (out / "val_index.json").string().c_str()),
          "writing val index");
}

int cmd_train(const RunConfig& cfg) {
    write_snapshot(cfg);
    DatasetHandle train, val;
    prepare_train_val(cfg, train, val);
    std::printf("train records: %" PRId64 "  val records: %" PRId64 "\n",
                gl_dataset_size(train.ptr), gl_dataset_size(val.ptr));

    ModelHandle model;
    build_model_checked(cfg, resolve_classes(cfg, train), model);
    if (!cfg.weights.empty())
        check(gl_model_load_weights(model.ptr, cfg.weights.c_str()), "loading " + cfg.weights);
    int64_t params = 0;
    gl_model_parameter_count(model.ptr, &params);
    std::printf("%s: %" PRId64 " trainable parameters\n", gl_model_name(model.ptr), params);

    HistoryHandle history;
    check(gl_train(model.ptr, train.ptr, val.ptr, train_config_json(cfg, true).c_str(), 1,
                   &history.ptr),
          "training");
    const fs::path out(cfg.out_dir);
    check(gl_history_save_csv(history.ptr, (out / "history.csv").string().c_str()),
          "writing history.csv");
    check(gl_model_save_weights(model.ptr, (out / "model.glw").string().c_str()),
          "writing model.glw");

    ReportHandle report;
    check(gl_evaluate(model.ptr, val.ptr, cfg.batch_size, &report.ptr), "evaluating");
    check(gl_report_save_json(report.ptr, (out / "report.json").string().c_str()),
          "writing report.json");
    std::printf("stopped after %d epochs (%s), best epoch %d\n", gl_history_epochs(history.ptr),
                gl_history_stop_reason(history.ptr), gl_history_best_epoch(history.ptr));
    std::printf("validation accuracy %.4f  macro-F %.4f\n", gl_report_accuracy(report.ptr),
                gl_report_macro_f_measure(report.ptr));
    std::printf("artifacts in %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    if (cfg.grid.empty()) die(1, "empty learning-rate grid");
    write_snapshot(cfg);
    DatasetHandle train, val;
    prepare_train_val(cfg, train, val);
    if (cfg.arch.empty()) die(1, "no architecture given (use --arch)");
    check(gl_sweep(cfg.arch.c_str(), train.ptr, val.ptr, resolve_classes(cfg, train),
                   cfg.width_scale, cfg.resolution, train_config_json(cfg, true).c_str(),
                   cfg.grid.data(), cfg.grid.size(), cfg.out_dir.c_str(), 1),
          "sweeping");
    std::printf("wrote %zu learning-curve files and sweep_summary.csv to %s\n", cfg.grid.size(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    write_snapshot(cfg);
    DatasetHandle data;
    open_dataset(cfg.dataset, data);
    ModelHandle model;
    build_model_checked(cfg, resolve_classes(cfg, data), model);
    if (cfg.weights.empty()) die(1, "no weight file given (use --weights)");
    check(gl_model_load_weights(model.ptr, cfg.weights.c_str()), "loading " + cfg.weights);

    ReportHandle report;
    check(gl_evaluate(model.ptr, data.ptr, cfg.batch_size, &report.ptr), "evaluating");
    const fs::path out(cfg.out_dir);
    check(gl_report_save_json(report.ptr, (out / "report.json").string().c_str()),
          "writing report.json");
    char* json_text = nullptr;
    check(gl_report_to_json(report.ptr, &json_text), "rendering report");
    std::printf("%s\n", json_text);
    gl_string_free(json_text);
    if (gl_report_decode_failures(report.ptr) > 0)
        std::fprintf(stderr, "warning: %d records could not be decoded\n",
                     gl_report_decode_failures(report.ptr));
    return 0;
}

int cmd_profile(const RunConfig& cfg) {
    write_snapshot(cfg);
    std::vector<std::string> archs;
    if (cfg.arch.empty() || cfg.arch == "all") {
        archs = {"efficientnet_b0", "mobilenet_v2", "shufflenet"};
    } else {
        std::string rest = cfg.arch;
        while (!rest.empty()) {
            const std::size_t comma = rest.find(',');
            archs.push_back(rest.substr(0, comma));
            rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
        }
    }
    const int classes = cfg.num_classes > 0 ? cfg.num_classes : 4;

    std::vector<std::string> names;
    std::vector<int64_t> params, flops;
    for (const std::string& arch : archs) {
        RunConfig one = cfg;
        one.arch = arch;
        ModelHandle model;
        build_model_checked(one, classes, model);
        int64_t p = 0, f = 0;
        check(gl_model_parameter_count(model.ptr, &p), "counting " + arch);
        check(gl_model_flops(model.ptr, &f), "estimating flops of " + arch);
        names.push_back(arch);
        params.push_back(p);
        flops.push_back(f);
    }
    std::vector<const char*> name_ptrs;
    for (const std::string& n : names) name_ptrs.push_back(n.c_str());
    char* csv = nullptr;
    char* text = nullptr;
    check(gl_profile(name_ptrs.data(), params.data(), flops.data(), name_ptrs.size(),
                     cfg.include_reference_rows ? 1 : 0, &csv, &text),
          "profiling");
    std::printf("%s", text);
    const fs::path out(cfg.out_dir);
    std::ofstream os(out / "profile.csv");
    if (!os) die(1, "cannot write " + (out / "profile.csv").string());
    os << csv;
    gl_string_free(csv);
    gl_string_free(text);
    std::printf("wrote %s\n", (out / "profile.csv").string().c_str());
    return 0;
}

int cmd_augment(const RunConfig& cfg) {
    write_snapshot(cfg);
    std::string image = cfg.image;
    if (image.empty()) {
        if (cfg.dataset.empty()) die(1, "augment needs --image or --dataset");
        DatasetHandle data;
        open_dataset(cfg.dataset, data);
        if (gl_dataset_size(data.ptr) == 0) die(1, "dataset has no records");
        image = gl_dataset_record_path(data.ptr, 0);
    }
    check(gl_augment_preview(image.c_str(), augment_config_json(cfg).c_str(), cfg.count, cfg.seed,
                             cfg.out_dir.c_str()),
          "augmenting " + image);
    std::printf("wrote %d augmented samples of %s to %s\n", cfg.count, image.c_str(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_fixture(const RunConfig& cfg) {
    check(gl_fixture_generate(cfg.out_dir.c_str(), cfg.per_class, cfg.size, cfg.seed),
          "generating fixture");
    write_snapshot(cfg);
    std::printf("wrote 4x%d synthetic images (%dpx) to %s\n", cfg.per_class, cfg.size,
                cfg.out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    cfg.seed = env_seed_default();
    const RunConfig defaults = cfg;

    CLI::App app{"greenleaf: lightweight CNN training, evaluation and efficiency profiling"};
    app.require_subcommand(1);
    std::string config_file;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "JSON config file (flags override it)");
        sub->add_option("--arch", cfg.arch, "efficientnet_b0 | mobilenet_v2 | shufflenet");
        sub->add_option("--dataset", cfg.dataset, "dataset directory or index .json");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--seed", cfg.seed, "global seed (default from GREENLEAF_SEED)");
        sub->add_option("--num-classes", cfg.num_classes, "class count (0 = infer from dataset)");
        sub->add_option("--resolution", cfg.resolution, "input resolution");
        sub->add_option("--width-scale", cfg.width_scale, "channel width multiplier");
        return sub;
    };
    auto add_train_flags = [&](CLI::App* sub) {
        sub->add_option("--lr", cfg.learning_rate, "learning rate");
        sub->add_option("--max-epochs", cfg.max_epochs, "epoch budget");
        sub->add_option("--batch-size", cfg.batch_size, "batch size");
        sub->add_option("--patience", cfg.patience, "early-stopping patience");
        sub->add_flag("--early-stop,!--no-early-stop", cfg.early_stop, "toggle early stopping");
        sub->add_option("--l2", cfg.l2_lambda, "L2 regularization lambda");
        sub->add_option("--val-fraction", cfg.val_fraction, "validation fraction");
        sub->add_flag("--balance,!--no-balance", cfg.balance, "downsample classes to equal counts");
        sub->add_flag("--augment,!--no-augment", cfg.augment_enabled, "toggle train-time augmentation");
        sub->add_flag("--trainable-base,!--freeze-base", cfg.trainable_base,
                      "train the backbone or only the head");
        sub->add_option("--weights", cfg.weights, "initial weight file (GLW1)");
    };

    CLI::App* train = add_common(app.add_subcommand("train", "train one model and write artifacts"));
    add_train_flags(train);

    CLI::App* sweep = add_common(
        app.add_subcommand("sweep", "train once per learning rate and summarize"));
    add_train_flags(sweep);
    sweep->add_option("--grid", cfg.grid, "learning rates to try")->delimiter(',');

    CLI::App* eval = add_common(app.add_subcommand("eval", "evaluate a weight file on a dataset"));
    eval->add_option("--weights", cfg.weights, "weight file (GLW1)");
    eval->add_option("--batch-size", cfg.batch_size, "batch size");

    CLI::App* profile =
        add_common(app.add_subcommand("profile", "parameter/flops/energy table"));
    profile->add_flag("--include-reference-rows", cfg.include_reference_rows,
                      "add published comparison models");

    CLI::App* augment = add_common(app.add_subcommand("augment", "write augmented sample images"));
    augment->add_option("--image", cfg.image, "image to augment (default: first dataset record)");
    augment->add_option("--count", cfg.count, "number of samples");
    augment->add_option("--rotation", cfg.rotation_deg, "rotation range, degrees");
    augment->add_option("--zoom", cfg.zoom, "zoom range");
    augment->add_option("--width-shift", cfg.width_shift, "width shift range");
    augment->add_option("--height-shift", cfg.height_shift, "height shift range");
    augment->add_option("--shear", cfg.shear, "shear range");
    augment->add_flag("--flip,!--no-flip", cfg.horizontal_flip, "toggle horizontal flip");

    CLI::App* fixture =
        add_common(app.add_subcommand("fixture", "generate the synthetic 4-class dataset"));
    fixture->add_option("--per-class", cfg.per_class, "images per class");
    fixture->add_option("--size", cfg.size, "image extent in pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (!config_file.empty()) {
            // precedence: flags > file > defaults. Re-apply any flag the user
            // actually passed on top of the file values.
            RunConfig flag_values = cfg;
            cfg = defaults;
            load_config_file(config_file, cfg);
            CLI::App* sub = app.get_subcommands().front();
            auto reapply = [&](const char* name, auto member) {
                const CLI::Option* opt = sub->get_option_no_throw(name);
                if (opt && opt->count() > 0) cfg.*member = flag_values.*member;
            };
            reapply("--arch", &RunConfig::arch);
            reapply("--dataset", &RunConfig::dataset);
            reapply("--out", &RunConfig::out_dir);
            reapply("--seed", &RunConfig::seed);
            reapply("--num-classes", &RunConfig::num_classes);
            reapply("--resolution", &RunConfig::resolution);
            reapply("--width-scale", &RunConfig::width_scale);
            reapply("--lr", &RunConfig::learning_rate);
            reapply("--max-epochs", &RunConfig::max_epochs);
            reapply("--batch-size", &RunConfig::batch_size);
            reapply("--patience", &RunConfig::patience);
            reapply("--early-stop", &RunConfig::early_stop);
            reapply("--l2", &RunConfig::l2_lambda);
            reapply("--val-fraction", &RunConfig::val_fraction);
            reapply("--balance", &RunConfig::balance);
            reapply("--augment", &RunConfig::augment_enabled);
            reapply("--trainable-base", &RunConfig::trainable_base);
            reapply("--weights", &RunConfig::weights);
            reapply("--grid", &RunConfig::grid);
            reapply("--image", &RunConfig::image);
            reapply("--count", &RunConfig::count);
            reapply("--rotation", &RunConfig::rotation_deg);
            reapply("--zoom", &RunConfig::zoom);
            reapply("--width-shift", &RunConfig::width_shift);
            reapply("--height-shift", &RunConfig::height_shift);
            reapply("--shear", &RunConfig::shear);
            reapply("--flip", &RunConfig::horizontal_flip);
            reapply("--include-reference-rows", &RunConfig::include_reference_rows);
            reapply("--per-class", &RunConfig::per_class);
            reapply("--size", &RunConfig::size);
        }

        if (train->parsed()) cfg.subcommand = "train";
        if (sweep->parsed()) cfg.subcommand = "sweep";
        if (eval->parsed()) cfg.subcommand = "eval";
        if (profile->parsed()) cfg.subcommand = "profile";
        if (augment->parsed()) cfg.subcommand = "augment";
        if (fixture->parsed()) cfg.subcommand = "fixture";

        if (cfg.subcommand == "train") return cmd_train(cfg);
        if (cfg.subcommand == "sweep") return cmd_sweep(cfg);
        if (cfg.subcommand == "eval") return cmd_eval(cfg);
        if (cfg.subcommand == "profile") return cmd_profile(cfg);
        if (cfg.subcommand == "augment") return cmd_augment(cfg);
        if (cfg.subcommand == "fixture") return cmd_fixture(cfg);
        die(1, "no subcommand selected");
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.message.c_str());
        return e.exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
}
