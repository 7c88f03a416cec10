#pragma once

#include "dataset.hpp"
#include "model.hpp"

namespace greenleaf {

// K x K counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::int64_t> counts;

    int k() const { return static_cast<int>(class_names.size()); }
    std::int64_t& at(int true_class, int predicted) {
        return counts[static_cast<std::size_t>(true_class) * class_names.size() +
                      static_cast<std::size_t>(predicted)];
    }
    std::int64_t at(int true_class, int predicted) const {
        return counts[static_cast<std::size_t>(true_class) * class_names.size() +
                      static_cast<std::size_t>(predicted)];
    }
    std::int64_t total() const {
        std::int64_t t = 0;
        for (const std::int64_t c : counts) t += c;
        return t;
    }
};

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 int num_classes, std::vector<std::string> class_names = {});

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f_measure = 0;
};

struct EvalReport {
    ConfusionMatrix matrix;
    std::vector<ClassMetrics> per_class;
    double accuracy = 0;
    double macro_precision = 0;
    double macro_recall = 0;
    double macro_f_measure = 0;
    std::int64_t samples_evaluated = 0;
    int decode_failures = 0;
    bool zero_division = false;  // an empty class produced a 0/0 ratio, defined as 0
};

// One-vs-rest per class: precision TP/(TP+FP), recall TP/(TP+FN), F the
// harmonic mean; accuracy trace/total; macro metrics are the unweighted class
// means. 0/0 ratios are defined as 0 and flagged.
EvalReport metrics_from_confusion(const ConfusionMatrix& cm);

// Eval-mode pass over every record, no augmentation, argmax with the lowest
// index winning ties. Undecodable records are counted and skipped.
EvalReport evaluate(ModelGraph& model, const DatasetIndex& dataset, int batch_size = 32);

std::string report_to_json(const EvalReport& report);
void save_report_json(const EvalReport& report, const std::string& path);

} // namespace greenleaf
