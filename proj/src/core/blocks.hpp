#pragma once

#include "layers.hpp"

namespace greenleaf {

// Reshape (g, C/g) -> transpose -> flatten over the channel axis: the channel
// at (group r, slot s) moves to index s*g + r. Pure permutation.
Tensor channel_shuffle(Tape* tape, const Tensor& x, int groups);

struct BlockConfig {
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;        // 1 or 2
    double expansion = 1;  // t >= 1
    int groups = 1;
    int kernel = 3;
    double se_ratio = 0;   // 0 disables squeeze-excite
};

void validate_block_config(const BlockConfig& cfg);

class ChannelShuffleLayer final : public Layer {
public:
    ChannelShuffleLayer(int channels, int groups) : channels_(channels), groups_(groups) {
        if (channels % groups != 0)
            fail(ErrorKind::configuration, "channel_shuffle: channel axis ", channels,
                 " not divisible by groups ", groups);
    }
    Tensor forward(Tape* tape, const Tensor& x, Mode, Rng*) override {
        return channel_shuffle(tape, x, groups_);
    }
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int h, int w) const override { return {0, h, w}; }
    const char* kind() const override { return "channel_shuffle"; }
    int groups() const { return groups_; }

private:
    int channels_, groups_;
};

// Base for blocks assembled from primitive layers: children run strictly in
// sequence unless the subclass overrides forward.
class CompositeLayer : public Layer {
public:
    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) override {
        for (auto& l : layers_) l->collect(params, buffers);
    }
    std::vector<const Layer*> children() const override {
        std::vector<const Layer*> out;
        out.reserve(layers_.size());
        for (const auto& l : layers_) out.push_back(l.get());
        return out;
    }

protected:
    Tensor run_chain(Tape* tape, Tensor x, Mode mode, Rng* rng) {
        for (auto& l : layers_) x = l->forward(tape, x, mode, rng);
        return x;
    }
    LayerCost chain_cost(int h, int w) const {
        LayerCost total{0, h, w};
        for (const auto& l : layers_) {
            const LayerCost c = l->cost(total.out_h, total.out_w);
            total.flops += c.flops;
            total.out_h = c.out_h;
            total.out_w = c.out_w;
        }
        return total;
    }
    std::vector<LayerPtr> layers_;
};

// Depthwise KxK convolution (one filter per channel) followed by a pointwise
// 1x1 mixing convolution, each with batch norm and activation.
class DepthwiseSeparableBlock final : public CompositeLayer {
public:
    DepthwiseSeparableBlock(const std::string& name, int in_c, int out_c, int kernel, int stride,
                            Act act, Rng& rng);
    Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) override {
        return run_chain(tape, x, mode, rng);
    }
    int in_channels() const override { return in_c_; }
    int out_channels() const override { return out_c_; }
    LayerCost cost(int h, int w) const override { return chain_cost(h, w); }
    const char* kind() const override { return "depthwise_separable"; }

private:
    int in_c_, out_c_;
};

// Pooled per-channel gate: global average -> reduce -> swish -> expand ->
// sigmoid -> rescale the input.
class SqueezeExciteBlock final : public CompositeLayer {
public:
    SqueezeExciteBlock(const std::string& name, int channels, int reduced, Rng& rng);
    static int reduced_width(int channels, double se_ratio);

    Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) override;
    int in_channels() const override { return channels_; }
    int out_channels() const override { return channels_; }
    LayerCost cost(int h, int w) const override {
        const LayerCost inner = chain_cost(h, w);
        return {inner.flops, h, w};
    }
    const char* kind() const override { return "squeeze_excite"; }

private:
    int channels_;
};

// Expand 1x1 -> depthwise KxK -> project 1x1 with a linear bottleneck (no
// activation after the projection) and an identity skip when stride is 1 and
// the channel count is preserved. se_ratio > 0 inserts a squeeze-excite gate
// on the expanded features, reduced relative to the block input width.
class InvertedResidualBlock final : public CompositeLayer {
public:
    InvertedResidualBlock(const std::string& name, const BlockConfig& cfg, Act act, Rng& rng);

    Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) override;
    int in_channels() const override { return cfg_.in_channels; }
    int out_channels() const override { return cfg_.out_channels; }
    LayerCost cost(int h, int w) const override { return chain_cost(h, w); }
    const char* kind() const override { return "inverted_residual"; }

    bool has_residual() const { return residual_; }
    int hidden_channels() const { return hidden_; }

private:
    BlockConfig cfg_;
    int hidden_;
    bool residual_;
};

// Grouped 1x1 -> shuffle -> depthwise 3x3 -> grouped 1x1. Stride 1 adds the
// input back; stride 2 concatenates a 3x3/2 average-pooled copy of the input.
// Both variants end in relu.
class ShuffleUnitBlock final : public CompositeLayer {
public:
    // first_conv_groups lets the opening stage use an ungrouped first 1x1
    // when the input width is too small to split.
    ShuffleUnitBlock(const std::string& name, const BlockConfig& cfg, int first_conv_groups,
                     Rng& rng);

    Tensor forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) override;
    int in_channels() const override { return cfg_.in_channels; }
    int out_channels() const override { return cfg_.out_channels; }
    LayerCost cost(int h, int w) const override;
    const char* kind() const override { return "shuffle_unit"; }

    int bottleneck_channels() const { return mid_; }

private:
    BlockConfig cfg_;
    int mid_;
};

struct ScalingCoefficients {
    double alpha = 1.2;   // depth
    double beta = 1.1;    // width
    double gamma = 1.15;  // resolution
    double phi = 0.0;
};

struct ScaledDims {
    std::vector<int> depths;
    std::vector<int> widths;
    int resolution = 0;
};

// Nearest multiple of `divisor`, floored at `divisor`, bumped up one step if
// rounding lost more than 10% of the unrounded value.
int round_channels(double v, int divisor = 8);

// Depth scales by ceil(d * alpha^phi), width by round_channels(w * beta^phi),
// resolution by round(r * gamma^phi). Requires alpha*beta^2*gamma^2 within 5%
// of 2.
ScaledDims compound_scale(const ScalingCoefficients& coeffs, const std::vector<int>& base_depths,
                          const std::vector<int>& base_widths, int base_resolution);

} // namespace greenleaf
