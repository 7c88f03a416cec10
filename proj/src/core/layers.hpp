#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ops.hpp"

namespace greenleaf {

// A named trainable tensor. `logical_dims` is the rank/shape written to weight
// files (conv weights rank 4, dense weights rank 2, vectors rank 1); in memory
// everything is a 4-D tensor.
struct Param {
    std::string name;
    Tensor value;
    std::vector<int> logical_dims;
    bool is_weight = false;  // true for conv/dense kernels: the L2 penalty applies
};

// Non-trainable per-layer statistics (batch-norm running estimates). Saved to
// weight files, excluded from parameter counts.
struct NamedBuffer {
    std::string name;
    std::vector<double>* values = nullptr;
};

struct LayerCost {
    std::int64_t flops = 0;
    int out_h = 0;
    int out_w = 0;
};

class Layer {
public:
    virtual ~Layer() = default;
    Layer(const Layer&) = delete;
    Layer& operator=(const Layer&) = delete;

    virtual Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) = 0;
    virtual void collect(std::vector<Param*>&, std::vector<NamedBuffer>&) {}
    virtual int in_channels() const = 0;
    virtual int out_channels() const = 0;
    // Multiply-adds x2 for the parametric layers, zero for normalization,
    // activations and pooling; spatial extents are threaded through.
    virtual LayerCost cost(int h, int w) const = 0;
    virtual const char* kind() const = 0;
    virtual std::vector<const Layer*> children() const { return {}; }

protected:
    Layer() = default;
};

using LayerPtr = std::unique_ptr<Layer>;

double he_uniform_limit(std::int64_t fan_in);
double xavier_uniform_limit(std::int64_t fan_in, std::int64_t fan_out);

class Conv2dLayer final : public Layer {
public:
    Conv2dLayer(std::string name, int in_c, int out_c, int kernel, int stride, int pad, int groups,
                bool with_bias, Rng& rng);

    Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) override;
    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>&) override;
    int in_channels() const override { return in_c_; }
    int out_channels() const override { return out_c_; }
    LayerCost cost(int h, int w) const override;
    const char* kind() const override { return "conv2d"; }

    const Conv2dSpec& spec() const { return spec_; }
    int kernel() const { return kernel_; }

private:
    int in_c_, out_c_, kernel_;
    Conv2dSpec spec_;
    Param weight_;
    Param bias_;  // undefined tensor when the layer has no bias
};

class BatchNormLayer final : public Layer {
public:
    BatchNormLayer(std::string name, int channels, double eps = 1e-5, double momentum = 0.1);

    Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) override;
    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) override;
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int h, int w) const override { return {0, h, w}; }
    const char* kind() const override { return "batch_norm"; }

    BatchNormState& state() { return state_; }

private:
    std::string name_;
    int channels_;
    double eps_, momentum_;
    Param gamma_, beta_;
    BatchNormState state_;
};

class ActivationLayer final : public Layer {
public:
    ActivationLayer(int channels, Act act) : channels_(channels), act_(act) {}
    Tensor forward(Tape* tape, const Tensor& x, Mode, Rng*) override {
        return activation(tape, x, act_);
    }
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int h, int w) const override { return {0, h, w}; }
    const char* kind() const override { return "activation"; }
    Act act() const { return act_; }

private:
    int channels_;
    Act act_;
};

class MaxPoolLayer final : public Layer {
public:
    MaxPoolLayer(int channels, int k, int stride, int pad)
        : channels_(channels), k_(k), stride_(stride), pad_(pad) {}
    Tensor forward(Tape* tape, const Tensor& x, Mode, Rng*) override {
        return max_pool2d(tape, x, k_, stride_, pad_);
    }
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int h, int w) const override {
        return {0, (h + 2 * pad_ - k_) / stride_ + 1, (w + 2 * pad_ - k_) / stride_ + 1};
    }
    const char* kind() const override { return "max_pool"; }

private:
    int channels_, k_, stride_, pad_;
};

class AvgPoolLayer final : public Layer {
public:
    AvgPoolLayer(int channels, int k, int stride, int pad)
        : channels_(channels), k_(k), stride_(stride), pad_(pad) {}
    Tensor forward(Tape* tape, const Tensor& x, Mode, Rng*) override {
        return avg_pool2d(tape, x, k_, stride_, pad_);
    }
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int h, int w) const override {
        return {0, (h + 2 * pad_ - k_) / stride_ + 1, (w + 2 * pad_ - k_) / stride_ + 1};
    }
    const char* kind() const override { return "avg_pool"; }

private:
    int channels_, k_, stride_, pad_;
};

class GlobalAvgPoolLayer final : public Layer {
public:
    explicit GlobalAvgPoolLayer(int channels) : channels_(channels) {}
    Tensor forward(Tape* tape, const Tensor& x, Mode, Rng*) override {
        return global_avg_pool(tape, x);
    }
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int, int) const override { return {0, 1, 1}; }
    const char* kind() const override { return "global_avg_pool"; }

private:
    int channels_;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(std::string name, int in_f, int out_f, Rng& rng);

    Tensor forward(Tape* tape, const Tensor& x, Mode, Rng*) override;
    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>&) override;
    int in_channels() const override { return in_f_; }
    int out_channels() const override { return out_f_; }
    LayerCost cost(int, int) const override {
        return {2LL * in_f_ * out_f_, 1, 1};
    }
    const char* kind() const override { return "dense"; }

private:
    int in_f_, out_f_;
    Param weight_, bias_;
};

class DropoutLayer final : public Layer {
public:
    DropoutLayer(int channels, double rate);
    Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) override;
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int h, int w) const override { return {0, h, w}; }
    const char* kind() const override { return "dropout"; }
    double rate() const { return rate_; }

private:
    int channels_;
    double rate_;
};

} // namespace greenleaf
