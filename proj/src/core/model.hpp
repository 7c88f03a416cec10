#pragma once

#include <map>
#include <optional>
#include <string>

#include "blocks.hpp"

namespace greenleaf {

// The classifier head appended after every backbone: dense -> relu -> dropout
// -> dense -> relu -> dense(num_classes).
struct HeadConfig {
    int fc1_units = 128;
    double dropout_rate = 0.3;
    int fc2_units = 128;
    double l2_lambda = 1e-4;
};

void validate_head_config(const HeadConfig& cfg);

struct BuildOptions {
    int num_classes = 4;
    HeadConfig head;
    double width_scale = 1.0;
    int resolution = 224;
    std::uint64_t seed = 0;
    bool trainable_base = true;
};

struct ModelSnapshot {
    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> buffers;
};

// An ordered stack of layers with named parameters. Forward maps a
// (N,3,R,R) batch to (N,num_classes,1,1) logits.
class ModelGraph {
public:
    ModelGraph(std::string name, int num_classes, int resolution, double width_scale,
               std::vector<LayerPtr> layers);

    const std::string& name() const { return name_; }
    int num_classes() const { return num_classes_; }
    int input_resolution() const { return resolution_; }
    double width_scale() const { return width_scale_; }

    Tensor forward(Tape* tape, const Tensor& batch, Mode mode, Rng* dropout_rng = nullptr);

    std::vector<Param*>& parameters() { return params_; }
    std::vector<NamedBuffer>& buffers() { return buffers_; }
    const std::vector<LayerPtr>& layers() const { return layers_; }

    // Trainable elements only; batch-norm running statistics are excluded.
    std::int64_t parameter_count() const;

    // Multiply-adds x2 over conv and dense layers at the build resolution.
    std::int64_t flops() const;

    // Verifies that consecutive layers agree on channel widths and that
    // parameter names are unique.
    void audit_wiring() const;

    void zero_grads();
    ModelSnapshot snapshot() const;
    void restore(const ModelSnapshot& snap);

    // Marks every parameter outside the head as frozen (or trainable again).
    void set_trainable_base(bool trainable);

    void save_weights(const std::string& path) const;
    void load_weights(const std::string& path);

private:
    std::string name_;
    int num_classes_;
    int resolution_;
    double width_scale_;
    std::vector<LayerPtr> layers_;
    std::vector<Param*> params_;
    std::vector<NamedBuffer> buffers_;
};

std::vector<LayerPtr> attach_head(int feature_dim, const HeadConfig& cfg, int num_classes,
                                  Rng& rng);

std::int64_t head_parameter_count(int feature_dim, const HeadConfig& cfg, int num_classes);

// arch: efficientnet_b0 | mobilenet_v2 | shufflenet
ModelGraph build_model(const std::string& arch, const BuildOptions& opts);

std::vector<std::string> known_architectures();

inline std::int64_t count_parameters(const ModelGraph& m) { return m.parameter_count(); }

} // namespace greenleaf
