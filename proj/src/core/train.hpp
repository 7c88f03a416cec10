#pragma once

#include <functional>
#include <optional>

#include "dataset.hpp"
#include "model.hpp"

namespace greenleaf {

struct AdamHyper {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update on a flat tensor:
//   m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2,
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps)
// with bias corrections mhat = m/(1-b1^t), vhat = v/(1-b2^t). t counts this
// step (>= 1).
void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
               std::span<double> v, std::int64_t t, const AdamHyper& hp);

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Param*> params, AdamHyper hp);
    void step();
    std::int64_t steps() const { return t_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    std::vector<Param*> params_;
    std::vector<Moments> moments_;
    AdamHyper hp_;
    std::int64_t t_ = 0;
};

// data_loss + lambda * sum over conv/dense kernels of sum(theta^2); biases
// and batch-norm parameters are exempt. With lambda 0 the loss is returned
// untouched.
Tensor regularized_loss(Tape* tape, Tensor data_loss, std::span<Param* const> params,
                        double lambda);

// True iff the last `patience` entries each failed to strictly improve the
// running best.
bool should_stop(std::span<const double> val_losses, int patience);

struct TrainConfig {
    double learning_rate = 1e-4;
    int max_epochs = 200;
    int batch_size = 32;
    int patience = 15;
    bool early_stop = true;
    double l2_lambda = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

enum class StopReason { max_epochs, early_stop };

const char* to_string(StopReason reason);

struct TrainingHistory {
    std::vector<double> train_loss, train_acc, val_loss, val_acc;
    int stopped_epoch = 0;
    StopReason stop_reason = StopReason::max_epochs;
    int best_epoch = 0;  // 1-based epoch of the minimal validation loss
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(int epoch, TrainingHistory partial)
        : Error(ErrorKind::diverged,
                concat("training diverged at epoch ", epoch, ": non-finite loss")),
          epoch(epoch),
          history(std::move(partial)) {}
    int epoch;
    TrainingHistory history;
};

struct FitOptions {
    TrainConfig config;
    std::optional<AugmentationConfig> augment;
    // Test seam: maps the computed validation loss to the recorded one.
    std::function<double(int epoch, double val_loss)> val_loss_hook;
    // Progress reporting; called after each epoch with the history so far.
    std::function<void(int epoch, const TrainingHistory&)> epoch_callback;
};

// Epoch loop per the training protocol: shuffled train pass (dropout and
// batch statistics active, L2-regularized loss, Adam updates), full eval-mode
// validation pass, early stop on `patience` non-improving epochs with the
// best-epoch weights restored.
TrainingHistory fit(ModelGraph& model, const DatasetIndex& train_set, const DatasetIndex& val_set,
                    const FitOptions& opts);

// Eval-mode mean cross entropy and accuracy over a dataset.
std::pair<double, double> evaluate_loss_acc(ModelGraph& model, const DatasetIndex& dataset,
                                            int batch_size);

void write_history_csv(const TrainingHistory& history, const std::string& path);

struct SweepRun {
    double lr = 0;
    TrainingHistory history;
    std::string stop_reason;  // max_epochs | early_stop | diverged
    double best_val_acc = 0;
    int best_epoch = 0;
    std::string curve_file;
};

struct SweepResult {
    std::vector<SweepRun> runs;
    std::string summary_file;
};

// Independent seeded run per learning rate; each writes
// curve_lr<value>.csv and one row of sweep_summary.csv under out_dir.
// A diverging run is recorded and the sweep continues.
SweepResult lr_sweep(const std::string& arch, const BuildOptions& build,
                     const std::vector<double>& grid, const DatasetIndex& train_set,
                     const DatasetIndex& val_set, const FitOptions& base_opts,
                     const std::string& out_dir);

} // namespace greenleaf
