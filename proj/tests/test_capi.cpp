#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "greenleaf.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("version and error strings are always available") {
    CHECK(gl_version() != nullptr);
    CHECK(gl_last_error() != nullptr);
}

TEST_CASE("model lifecycle and parameter counts through the C surface") {
    gl_model* model = nullptr;
    REQUIRE(gl_model_build("shufflenet", 4, 0.25, 64, 11, 1, &model) == GL_OK);
    REQUIRE(model);
    CHECK(std::string(gl_model_name(model)) == "shufflenet");
    CHECK(gl_model_num_classes(model) == 4);
    CHECK(gl_model_resolution(model) == 64);
    int64_t params = 0, flops = 0;
    CHECK(gl_model_parameter_count(model, &params) == GL_OK);
    CHECK(gl_model_flops(model, &flops) == GL_OK);
    CHECK(params > 0);
    CHECK(flops > 0);
    gl_model_free(model);

    gl_model* bad = nullptr;
    CHECK(gl_model_build("resnet50", 4, 1.0, 224, 1, 1, &bad) == GL_ERR_ARGUMENT);
    CHECK(bad == nullptr);
    CHECK(std::string(gl_last_error()).find("resnet50") != std::string::npos);
}

TEST_CASE("default builds hit the published parameter bands via the C API") {
    const struct {
        const char* arch;
        int64_t lo, hi;
    } cases[] = {
        {"efficientnet_b0", 5'100'000, 5'700'000},
        {"mobilenet_v2", 3'100'000, 3'900'000},
        {"shufflenet", 1'100'000, 1'700'000},
    };
    for (const auto& c : cases) {
        gl_model* model = nullptr;
        REQUIRE(gl_model_build(c.arch, 4, 1.0, 224, 1, 1, &model) == GL_OK);
        int64_t params = 0;
        CHECK(gl_model_parameter_count(model, &params) == GL_OK);
        CHECK(params >= c.lo);
        CHECK(params <= c.hi);
        gl_model_free(model);
    }
}

TEST_CASE("dataset pipeline: fixture, scan, balance, split, index io") {
    TempDir dir("greenleaf_capi_data");
    const std::string root = (dir.path / "fix").string();
    REQUIRE(gl_fixture_generate(root.c_str(), 5, 16, 3) == GL_OK);

    gl_dataset* full = nullptr;
    REQUIRE(gl_dataset_scan(root.c_str(), &full) == GL_OK);
    CHECK(gl_dataset_num_classes(full) == 4);
    CHECK(gl_dataset_size(full) == 20);
    CHECK(gl_dataset_skipped_files(full) == 0);
    CHECK(std::string(gl_dataset_class_name(full, 0)) == "class_a");
    CHECK(gl_dataset_class_name(full, 9) == nullptr);
    CHECK(gl_dataset_record_class(full, 0) == 0);
    CHECK(gl_dataset_record_path(full, 0) != nullptr);

    int64_t counts[4] = {};
    REQUIRE(gl_dataset_class_counts(full, counts, 4) == GL_OK);
    for (const int64_t c : counts) CHECK(c == 5);
    CHECK(gl_dataset_class_counts(full, counts, 3) == GL_ERR_ARGUMENT);

    gl_dataset* balanced = nullptr;
    REQUIRE(gl_dataset_balance(full, 1, &balanced) == GL_OK);
    CHECK(gl_dataset_size(balanced) == 20);

    gl_dataset* train = nullptr;
    gl_dataset* val = nullptr;
    REQUIRE(gl_dataset_split(balanced, 0.2, 1, &train, &val) == GL_OK);
    CHECK(gl_dataset_size(train) == 16);
    CHECK(gl_dataset_size(val) == 4);

    const std::string index_path = (dir.path / "train.json").string();
    REQUIRE(gl_dataset_save_index(train, index_path.c_str()) == GL_OK);
    gl_dataset* reloaded = nullptr;
    REQUIRE(gl_dataset_load_index(index_path.c_str(), &reloaded) == GL_OK);
    CHECK(gl_dataset_size(reloaded) == 16);

    gl_dataset* missing = nullptr;
    CHECK(gl_dataset_scan((dir.path / "nope").string().c_str(), &missing) == GL_ERR_IO);

    gl_dataset_free(full);
    gl_dataset_free(balanced);
    gl_dataset_free(train);
    gl_dataset_free(val);
    gl_dataset_free(reloaded);
}

TEST_CASE("train, history accessors, weights, evaluate, predict through the C surface") {
    TempDir dir("greenleaf_capi_train");
    const std::string root = (dir.path / "fix").string();
    REQUIRE(gl_fixture_generate(root.c_str(), 4, 32, 5) == GL_OK);
    gl_dataset* data = nullptr;
    REQUIRE(gl_dataset_scan(root.c_str(), &data) == GL_OK);

    gl_model* model = nullptr;
    REQUIRE(gl_model_build("shufflenet", 4, 0.25, 32, 7, 1, &model) == GL_OK);

    const char* config = R"({"learning_rate": 1e-3, "max_epochs": 2, "batch_size": 8,
                             "seed": 9, "augment": {"enabled": false}})";
    gl_history* history = nullptr;
    REQUIRE(gl_train(model, data, data, config, 0, &history) == GL_OK);
    CHECK(gl_history_epochs(history) == 2);
    CHECK(gl_history_best_epoch(history) >= 1);
    CHECK(std::string(gl_history_stop_reason(history)) == "max_epochs");
    double tl = 0, ta = 0, vl = 0, va = 0;
    REQUIRE(gl_history_row(history, 1, &tl, &ta, &vl, &va) == GL_OK);
    CHECK(tl > 0);
    CHECK(gl_history_row(history, 3, &tl, &ta, &vl, &va) == GL_ERR_ARGUMENT);
    const std::string csv_path = (dir.path / "history.csv").string();
    REQUIRE(gl_history_save_csv(history, csv_path.c_str()) == GL_OK);
    CHECK(fs::exists(csv_path));

    // unknown config keys are rejected
    gl_history* rejected = nullptr;
    CHECK(gl_train(model, data, data, R"({"lr": 1})", 0, &rejected) == GL_ERR_ARGUMENT);
    CHECK(std::string(gl_last_error()).find("lr") != std::string::npos);
    CHECK(gl_train(model, data, data, "{nope", 0, &rejected) == GL_ERR_ARGUMENT);

    const std::string weights = (dir.path / "model.glw").string();
    REQUIRE(gl_model_save_weights(model, weights.c_str()) == GL_OK);
    gl_model* twin = nullptr;
    REQUIRE(gl_model_build("shufflenet", 4, 0.25, 32, 999, 1, &twin) == GL_OK);
    REQUIRE(gl_model_load_weights(twin, weights.c_str()) == GL_OK);

    gl_model* mismatched = nullptr;
    REQUIRE(gl_model_build("mobilenet_v2", 4, 0.25, 32, 1, 1, &mismatched) == GL_OK);
    CHECK(gl_model_load_weights(mismatched, weights.c_str()) == GL_ERR_IO);

    gl_report* report = nullptr;
    REQUIRE(gl_evaluate(twin, data, 8, &report) == GL_OK);
    CHECK(gl_report_samples(report) == 16);
    CHECK(gl_report_decode_failures(report) == 0);
    CHECK(gl_report_accuracy(report) >= 0.0);
    CHECK(gl_report_accuracy(report) <= 1.0);
    char* json_text = nullptr;
    REQUIRE(gl_report_to_json(report, &json_text) == GL_OK);
    const auto doc = nlohmann::json::parse(json_text);
    CHECK(doc["schema_version"] == 1);
    CHECK(doc["samples_evaluated"] == 16);
    gl_string_free(json_text);
    const std::string report_path = (dir.path / "report.json").string();
    REQUIRE(gl_report_save_json(report, report_path.c_str()) == GL_OK);
    CHECK(fs::exists(report_path));

    int predicted = -1;
    double probs[4] = {};
    REQUIRE(gl_model_predict_image(twin, gl_dataset_record_path(data, 0), &predicted, probs, 4) ==
            GL_OK);
    CHECK(predicted >= 0);
    CHECK(predicted < 4);
    double sum = 0;
    for (const double p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(gl_model_predict_image(twin, "no_such_file.png", &predicted, nullptr, 0) == GL_ERR_IO);

    gl_report_free(report);
    gl_model_free(model);
    gl_model_free(twin);
    gl_model_free(mismatched);
    gl_history_free(history);
    gl_dataset_free(data);
}

TEST_CASE("sweep writes curves and a summary through the C surface") {
    TempDir dir("greenleaf_capi_sweep");
    const std::string root = (dir.path / "fix").string();
    REQUIRE(gl_fixture_generate(root.c_str(), 2, 32, 5) == GL_OK);
    gl_dataset* data = nullptr;
    REQUIRE(gl_dataset_scan(root.c_str(), &data) == GL_OK);

    const double grid[] = {1e-2, 1e-3};
    const std::string out = (dir.path / "sweep").string();
    const char* config = R"({"max_epochs": 1, "batch_size": 8, "augment": {"enabled": false}})";
    REQUIRE(gl_sweep("shufflenet", data, data, 4, 0.25, 32, config, grid, 2, out.c_str(), 0) ==
            GL_OK);
    CHECK(fs::exists(fs::path(out) / "sweep_summary.csv"));
    CHECK(fs::exists(fs::path(out) / "curve_lr0.01.csv"));
    CHECK(fs::exists(fs::path(out) / "curve_lr0.001.csv"));
    gl_dataset_free(data);
}

TEST_CASE("augment preview writes the requested number of images") {
    TempDir dir("greenleaf_capi_aug");
    const std::string root = (dir.path / "fix").string();
    REQUIRE(gl_fixture_generate(root.c_str(), 1, 24, 8) == GL_OK);
    gl_dataset* data = nullptr;
    REQUIRE(gl_dataset_scan(root.c_str(), &data) == GL_OK);
    const std::string image = gl_dataset_record_path(data, 0);

    const std::string out = (dir.path / "aug").string();
    REQUIRE(gl_augment_preview(image.c_str(), nullptr, 5, 3, out.c_str()) == GL_OK);
    int files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(out)) ++files;
    CHECK(files == 5);

    CHECK(gl_augment_preview(image.c_str(), R"({"bogus": 1})", 2, 3, out.c_str()) ==
          GL_ERR_ARGUMENT);
    CHECK(gl_augment_preview(image.c_str(), R"({"zoom": 2.0})", 2, 3, out.c_str()) ==
          GL_ERR_ARGUMENT);
    gl_dataset_free(data);
}

TEST_CASE("profile reproduces the published energy column via the C surface") {
    const char* names[] = {"EfficientNet-B0", "MobileNetV2", "ShuffleNet"};
    const int64_t params[] = {5'400'000, 3'500'000, 1'400'000};
    char* csv = nullptr;
    char* text = nullptr;
    REQUIRE(gl_profile(names, params, nullptr, 3, 1, &csv, &text) == GL_OK);
    const std::string table(csv);
    CHECK(table.find("VGG16,138000000,0,1.00") != std::string::npos);
    CHECK(table.find("Xception,27300000,0,0.20") != std::string::npos);
    CHECK(table.find("ResNet50,25000000,0,0.18") != std::string::npos);
    CHECK(table.find("EfficientNet-B0,5400000,0,0.04") != std::string::npos);
    CHECK(table.find("GhostNet,5200000,0,0.04") != std::string::npos);
    CHECK(table.find("MobileNetV2,3500000,0,0.03") != std::string::npos);
    CHECK(table.find("ShuffleNet,1400000,0,0.01") != std::string::npos);
    CHECK(table.find("ModLeafNet,1300000,0,0.01") != std::string::npos);
    CHECK(std::string(text).find("1.00") != std::string::npos);
    gl_string_free(csv);
    gl_string_free(text);

    CHECK(gl_profile(nullptr, nullptr, nullptr, 0, 0, &csv, &text) == GL_ERR_ARGUMENT);
}
