#include "eval.hpp"

#include <fstream>

#include <json.hpp>

namespace greenleaf {

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 int num_classes, std::vector<std::string> class_names) {
    if (predictions.size() != labels.size())
        fail(ErrorKind::dimension, "confusion_matrix: ", predictions.size(), " predictions vs ",
             labels.size(), " labels");
    if (num_classes < 1)
        fail(ErrorKind::parameter, "confusion_matrix: need at least one class");
    ConfusionMatrix cm;
    if (class_names.empty())
        for (int i = 0; i < num_classes; ++i) cm.class_names.push_back(concat("class_", i));
    else if (static_cast<int>(class_names.size()) == num_classes)
        cm.class_names = std::move(class_names);
    else
        fail(ErrorKind::dimension, "confusion_matrix: ", class_names.size(), " names for ",
             num_classes, " classes");
    cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            fail(ErrorKind::argument, "confusion_matrix: label ", labels[i], " outside [0,",
                 num_classes, ")");
        if (predictions[i] < 0 || predictions[i] >= num_classes)
            fail(ErrorKind::argument, "confusion_matrix: prediction ", predictions[i],
                 " outside [0,", num_classes, ")");
        cm.at(labels[i], predictions[i])++;
    }
    return cm;
}

EvalReport metrics_from_confusion(const ConfusionMatrix& cm) {
    const int k = cm.k();
    if (k < 1) fail(ErrorKind::argument, "metrics_from_confusion: empty matrix");
    const std::int64_t total = cm.total();
    if (total <= 0) fail(ErrorKind::argument, "metrics_from_confusion: matrix counts no samples");

    EvalReport report;
    report.matrix = cm;
    report.samples_evaluated = total;

    std::int64_t trace = 0;
    for (int c = 0; c < k; ++c) {
        const std::int64_t tp = cm.at(c, c);
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const std::int64_t fp = col - tp;
        const std::int64_t fn = row - tp;
        ClassMetrics m;
        if (tp + fp == 0) {
            report.zero_division = true;
        } else {
            m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        }
        if (tp + fn == 0) {
            report.zero_division = true;
        } else {
            m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        }
        m.f_measure = m.precision + m.recall > 0
                          ? 2.0 * m.recall * m.precision / (m.recall + m.precision)
                          : 0.0;
        report.per_class.push_back(m);
        trace += tp;
    }
    report.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    for (const ClassMetrics& m : report.per_class) {
        report.macro_precision += m.precision / k;
        report.macro_recall += m.recall / k;
        report.macro_f_measure += m.f_measure / k;
    }
    return report;
}

EvalReport evaluate(ModelGraph& model, const DatasetIndex& dataset, int batch_size) {
    if (dataset.records.empty()) fail(ErrorKind::dataset, "evaluate: empty dataset");
    if (batch_size < 1) fail(ErrorKind::parameter, "evaluate: batch size must be >= 1");
    const int k = model.num_classes();
    const int res = model.input_resolution();

    std::vector<int> predictions, labels;
    int failures = 0;

    std::vector<Tensor> pending_images;
    std::vector<int> pending_labels;
    auto flush = [&] {
        if (pending_images.empty()) return;
        Tensor batch(Shape{static_cast<int>(pending_images.size()), 3, res, res});
        const std::int64_t sample = 3LL * res * res;
        for (std::size_t i = 0; i < pending_images.size(); ++i)
            std::copy(pending_images[i].data(), pending_images[i].data() + sample,
                      batch.data() + static_cast<std::int64_t>(i) * sample);
        Tensor logits = model.forward(nullptr, batch, Mode::eval);
        for (std::size_t i = 0; i < pending_images.size(); ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (logits.at(static_cast<int>(i), j, 0, 0) >
                    logits.at(static_cast<int>(i), best, 0, 0))
                    best = j;
            predictions.push_back(best);
            labels.push_back(pending_labels[i]);
        }
        pending_images.clear();
        pending_labels.clear();
    };

    for (const DatasetRecord& rec : dataset.records) {
        try {
            pending_images.push_back(load_and_resize(rec.path, res));
            pending_labels.push_back(rec.class_id);
        } catch (const Error&) {
            ++failures;
            continue;
        }
        if (static_cast<int>(pending_images.size()) == batch_size) flush();
    }
    flush();

    if (predictions.empty())
        fail(ErrorKind::dataset, "evaluate: no record could be decoded (", failures, " failures)");
    EvalReport report = metrics_from_confusion(
        confusion_matrix(predictions, labels, k, dataset.class_names));
    report.decode_failures = failures;
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["class_names"] = report.matrix.class_names;
    auto matrix = nlohmann::json::array();
    for (int r = 0; r < report.matrix.k(); ++r) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < report.matrix.k(); ++c) row.push_back(report.matrix.at(r, c));
        matrix.push_back(row);
    }
    j["confusion_matrix"] = matrix;
    auto per_class = nlohmann::json::array();
    for (int c = 0; c < report.matrix.k(); ++c)
        per_class.push_back({{"name", report.matrix.class_names[static_cast<std::size_t>(c)]},
                             {"precision", report.per_class[static_cast<std::size_t>(c)].precision},
                             {"recall", report.per_class[static_cast<std::size_t>(c)].recall},
                             {"f_measure", report.per_class[static_cast<std::size_t>(c)].f_measure}});
    j["per_class"] = per_class;
    j["accuracy"] = report.accuracy;
    j["macro_precision"] = report.macro_precision;
    j["macro_recall"] = report.macro_recall;
    j["macro_f_measure"] = report.macro_f_measure;
    j["samples_evaluated"] = report.samples_evaluated;
    j["decode_failures"] = report.decode_failures;
    j["zero_division_warning"] = report.zero_division;
    return j.dump(2);
}

void save_report_json(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write report ", path);
    os << report_to_json(report) << "\n";
    if (!os) fail(ErrorKind::io, "failed writing report ", path);
}

} // namespace greenleaf
