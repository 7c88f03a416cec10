#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace greenleaf {

void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
               std::span<double> v, std::int64_t t, const AdamHyper& hp) {
    if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
        fail(ErrorKind::dimension, "adam_step: parameter/gradient/state sizes disagree (",
             param.size(), "/", grad.size(), "/", m.size(), "/", v.size(), ")");
    if (t < 1) fail(ErrorKind::parameter, "adam_step: step count must be >= 1, got ", t);
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grad[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= hp.learning_rate * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, AdamHyper hp)
    : params_(std::move(params)), hp_(hp) {
    moments_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::size_t n = static_cast<std::size_t>(params_[i]->value.size());
        moments_[i].m.assign(n, 0.0);
        moments_[i].v.assign(n, 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Param* p = params_[i];
        if (!p->value.requires_grad()) continue;
        static const std::vector<double> kEmpty;
        const std::vector<double>& grad = p->value.has_grad() ? p->value.grad() : kEmpty;
        std::vector<double> zeros;
        const std::vector<double>* g = &grad;
        if (grad.empty()) {
            zeros.assign(static_cast<std::size_t>(p->value.size()), 0.0);
            g = &zeros;
        }
        adam_step(std::span<double>(p->value.values()), std::span<const double>(*g),
                  std::span<double>(moments_[i].m), std::span<double>(moments_[i].v), t_, hp_);
    }
}

Tensor regularized_loss(Tape* tape, Tensor data_loss, std::span<Param* const> params,
                        double lambda) {
    if (lambda < 0.0)
        fail(ErrorKind::parameter, "regularized_loss: lambda must be >= 0, got ", lambda);
    if (lambda == 0.0) return data_loss;
    Tensor penalty;
    for (Param* p : params) {
        if (!p->is_weight || !p->value.requires_grad()) continue;
        Tensor sq = sum_squares(tape, p->value);
        penalty = penalty.defined() ? add(tape, penalty, sq) : sq;
    }
    if (!penalty.defined()) return data_loss;
    return add(tape, data_loss, scalar_mul(tape, penalty, lambda));
}

bool should_stop(std::span<const double> val_losses, int patience) {
    if (patience < 1) fail(ErrorKind::parameter, "should_stop: patience must be >= 1");
    double best = std::numeric_limits<double>::infinity();
    int streak = 0;
    for (const double v : val_losses) {
        if (v < best) {
            best = v;
            streak = 0;
        } else {
            ++streak;
        }
    }
    return streak >= patience;
}

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0)
        fail(ErrorKind::parameter, "train config: learning rate must be > 0, got ",
             cfg.learning_rate);
    if (cfg.max_epochs < 1)
        fail(ErrorKind::parameter, "train config: max_epochs must be >= 1, got ", cfg.max_epochs);
    if (cfg.batch_size < 1)
        fail(ErrorKind::parameter, "train config: batch size must be >= 1, got ", cfg.batch_size);
    if (cfg.patience < 1)
        fail(ErrorKind::parameter, "train config: patience must be >= 1, got ", cfg.patience);
    if (cfg.l2_lambda < 0.0)
        fail(ErrorKind::parameter, "train config: l2 lambda must be >= 0, got ", cfg.l2_lambda);
}

const char* to_string(StopReason reason) {
    return reason == StopReason::early_stop ? "early_stop" : "max_epochs";
}

namespace {

int argmax_row(const Tensor& logits, int row, int k) {
    int best = 0;
    for (int j = 1; j < k; ++j)
        if (logits.at(row, j, 0, 0) > logits.at(row, best, 0, 0)) best = j;  // lowest index wins ties
    return best;
}

} // namespace

std::pair<double, double> evaluate_loss_acc(ModelGraph& model, const DatasetIndex& dataset,
                                            int batch_size) {
    const int k = model.num_classes();
    double loss_sum = 0.0;
    std::int64_t correct = 0, seen = 0;
    std::vector<std::size_t> ids;
    for (std::size_t start = 0; start < dataset.records.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(dataset.records.size(), start + static_cast<std::size_t>(batch_size));
        ids.clear();
        for (std::size_t i = start; i < end; ++i) ids.push_back(i);
        Batch batch = load_batch(dataset, ids, model.input_resolution(), nullptr, 0, 0);
        Tensor logits = model.forward(nullptr, batch.images, Mode::eval);
        auto r = softmax_cross_entropy(nullptr, logits, batch.labels);
        loss_sum += r.loss.item() * static_cast<double>(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i)
            correct += argmax_row(logits, static_cast<int>(i), k) == batch.labels[i] ? 1 : 0;
        seen += static_cast<std::int64_t>(ids.size());
    }
    if (seen == 0) fail(ErrorKind::dataset, "evaluate_loss_acc: empty dataset");
    return {loss_sum / static_cast<double>(seen), static_cast<double>(correct) / static_cast<double>(seen)};
}

TrainingHistory fit(ModelGraph& model, const DatasetIndex& train_set, const DatasetIndex& val_set,
                    const FitOptions& opts) {
    const TrainConfig& cfg = opts.config;
    validate_train_config(cfg);
    if (opts.augment) validate_augmentation_config(*opts.augment);
    if (train_set.records.empty()) fail(ErrorKind::dataset, "fit: training set is empty");
    if (val_set.records.empty()) fail(ErrorKind::dataset, "fit: validation set is empty");

    const AdamHyper hp{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps};
    std::vector<Param*> trainable;
    for (Param* p : model.parameters())
        if (p->value.requires_grad()) trainable.push_back(p);
    AdamOptimizer optimizer(trainable, hp);
    const Rng dropout_master = Rng(cfg.seed).derive("dropout");
    const AugmentationConfig* aug = opts.augment ? &*opts.augment : nullptr;
    const int k = model.num_classes();

    TrainingHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    ModelSnapshot best_snapshot;
    bool stopped_early = false;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double loss_sum = 0.0;
        std::int64_t correct = 0, seen = 0;
        Rng dropout_rng = dropout_master.derive(static_cast<std::uint64_t>(epoch));
        for (const auto& ids : epoch_batches(train_set, cfg.batch_size, cfg.seed, epoch)) {
            Batch batch = load_batch(train_set, ids, model.input_resolution(), aug, cfg.seed, epoch);
            Tape tape;
            Tensor logits = model.forward(&tape, batch.images, Mode::train, &dropout_rng);
            auto sce = softmax_cross_entropy(&tape, logits, batch.labels);
            Tensor total =
                regularized_loss(&tape, sce.loss, std::span<Param* const>(trainable), cfg.l2_lambda);
            if (!std::isfinite(total.item())) {
                history.stopped_epoch = epoch - 1;
                throw TrainingDiverged(epoch, std::move(history));
            }
            model.zero_grads();
            tape.backward(total);
            optimizer.step();
            loss_sum += total.item() * static_cast<double>(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i)
                correct += argmax_row(logits, static_cast<int>(i), k) == batch.labels[i] ? 1 : 0;
            seen += static_cast<std::int64_t>(ids.size());
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(seen));
        history.train_acc.push_back(static_cast<double>(correct) / static_cast<double>(seen));

        auto [val_loss, val_acc] = evaluate_loss_acc(model, val_set, cfg.batch_size);
        if (opts.val_loss_hook) val_loss = opts.val_loss_hook(epoch, val_loss);
        if (!std::isfinite(val_loss)) {
            history.stopped_epoch = epoch - 1;
            throw TrainingDiverged(epoch, std::move(history));
        }
        history.val_loss.push_back(val_loss);
        history.val_acc.push_back(val_acc);
        history.stopped_epoch = epoch;

        if (val_loss < best_val) {
            best_val = val_loss;
            history.best_epoch = epoch;
            best_snapshot = model.snapshot();
        }
        if (opts.epoch_callback) opts.epoch_callback(epoch, history);
        if (cfg.early_stop && should_stop(history.val_loss, cfg.patience)) {
            stopped_early = true;
            break;
        }
    }

    history.stop_reason = stopped_early ? StopReason::early_stop : StopReason::max_epochs;
    if (stopped_early) model.restore(best_snapshot);
    return history;
}

void write_history_csv(const TrainingHistory& history, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write history csv ", path);
    os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    char row[256];
    for (int e = 0; e < history.stopped_epoch; ++e) {
        std::snprintf(row, sizeof row, "%d,%.6g,%.6g,%.6g,%.6g\n", e + 1,
                      history.train_loss[static_cast<std::size_t>(e)],
                      history.train_acc[static_cast<std::size_t>(e)],
                      history.val_loss[static_cast<std::size_t>(e)],
                      history.val_acc[static_cast<std::size_t>(e)]);
        os << row;
    }
    if (!os) fail(ErrorKind::io, "failed writing history csv ", path);
}

SweepResult lr_sweep(const std::string& arch, const BuildOptions& build,
                     const std::vector<double>& grid, const DatasetIndex& train_set,
                     const DatasetIndex& val_set, const FitOptions& base_opts,
                     const std::string& out_dir) {
    if (grid.empty()) fail(ErrorKind::parameter, "lr_sweep: empty learning-rate grid");
    std::filesystem::create_directories(out_dir);

    SweepResult result;
    const Rng seeder(base_opts.config.seed);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        SweepRun run;
        run.lr = grid[i];

        FitOptions opts = base_opts;
        opts.config.learning_rate = grid[i];
        opts.config.seed = seeder.derive(i).seed();
        BuildOptions build_opts = build;
        build_opts.seed = opts.config.seed;

        ModelGraph model = build_model(arch, build_opts);
        try {
            run.history = fit(model, train_set, val_set, opts);
            run.stop_reason = to_string(run.history.stop_reason);
        } catch (const TrainingDiverged& e) {
            run.history = e.history;
            run.stop_reason = "diverged";
        }
        if (!run.history.val_acc.empty()) {
            const auto best =
                std::max_element(run.history.val_acc.begin(), run.history.val_acc.end());
            run.best_val_acc = *best;
        }
        run.best_epoch = run.history.best_epoch;

        char name[64];
        std::snprintf(name, sizeof name, "curve_lr%g.csv", grid[i]);
        run.curve_file = (std::filesystem::path(out_dir) / name).string();
        write_history_csv(run.history, run.curve_file);
        result.runs.push_back(std::move(run));
    }

    result.summary_file = (std::filesystem::path(out_dir) / "sweep_summary.csv").string();
    std::ofstream os(result.summary_file);
    if (!os) fail(ErrorKind::io, "cannot write sweep summary ", result.summary_file);
    os << "lr,best_val_acc,best_epoch,stopped_epoch,stop_reason\n";
    char row[192];
    for (const SweepRun& run : result.runs) {
        std::snprintf(row, sizeof row, "%g,%.6g,%d,%d,%s\n", run.lr, run.best_val_acc,
                      run.best_epoch, run.history.stopped_epoch, run.stop_reason.c_str());
        os << row;
    }
    if (!os) fail(ErrorKind::io, "failed writing sweep summary ", result.summary_file);
    return result;
}

} // namespace greenleaf
