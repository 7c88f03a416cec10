#include "blocks.hpp"

#include <cmath>
#include <cstring>

namespace greenleaf {

Tensor channel_shuffle(Tape* tape, const Tensor& x, int groups) {
    const Shape xs = x.shape();
    if (groups < 1)
        fail(ErrorKind::configuration, "channel_shuffle: groups must be >= 1, got ", groups);
    if (xs.c % groups != 0)
        fail(ErrorKind::configuration, "channel_shuffle: channel axis ", xs.c,
             " not divisible by groups ", groups);
    if (groups == 1) return x;

    const int per_group = xs.c / groups;
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    Tensor y(xs, x.requires_grad());
    for (int n = 0; n < xs.n; ++n)
        for (int r = 0; r < groups; ++r)
            for (int s = 0; s < per_group; ++s) {
                const int src = r * per_group + s;
                const int dst = s * groups + r;
                std::memcpy(y.data() + (static_cast<std::int64_t>(n) * xs.c + dst) * plane,
                            x.data() + (static_cast<std::int64_t>(n) * xs.c + src) * plane,
                            sizeof(double) * static_cast<std::size_t>(plane));
            }
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, groups, per_group, plane](const Tensor& out) mutable {
            const Shape xs = xc.shape();
            for (int n = 0; n < xs.n; ++n)
                for (int r = 0; r < groups; ++r)
                    for (int s = 0; s < per_group; ++s) {
                        const int src = r * per_group + s;
                        const int dst = s * groups + r;
                        double* gx = xc.grad().data() +
                                     (static_cast<std::int64_t>(n) * xs.c + src) * plane;
                        const double* gy = out.grad().data() +
                                           (static_cast<std::int64_t>(n) * xs.c + dst) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) gx[i] += gy[i];
                    }
        });
    }
    return y;
}

void validate_block_config(const BlockConfig& cfg) {
    if (cfg.stride != 1 && cfg.stride != 2)
        fail(ErrorKind::configuration, "block: stride must be 1 or 2, got ", cfg.stride);
    if (cfg.in_channels < 1 || cfg.out_channels < 1)
        fail(ErrorKind::configuration, "block: channel counts must be positive, got ",
             cfg.in_channels, "->", cfg.out_channels);
    if (cfg.expansion < 1.0)
        fail(ErrorKind::configuration, "block: expansion must be >= 1, got ", cfg.expansion);
    if (cfg.groups < 1)
        fail(ErrorKind::configuration, "block: groups must be >= 1, got ", cfg.groups);
    if (cfg.se_ratio < 0.0 || cfg.se_ratio > 1.0)
        fail(ErrorKind::configuration, "block: se_ratio must lie in [0,1], got ", cfg.se_ratio);
}

DepthwiseSeparableBlock::DepthwiseSeparableBlock(const std::string& name, int in_c, int out_c,
                                                 int kernel, int stride, Act act, Rng& rng)
    : in_c_(in_c), out_c_(out_c) {
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".dw", in_c, in_c, kernel, stride,
                                                    kernel / 2, in_c, false, rng));
    layers_.push_back(std::make_unique<BatchNormLayer>(name + ".dw_bn", in_c));
    layers_.push_back(std::make_unique<ActivationLayer>(in_c, act));
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".pw", in_c, out_c, 1, 1, 0, 1, false, rng));
    layers_.push_back(std::make_unique<BatchNormLayer>(name + ".pw_bn", out_c));
    layers_.push_back(std::make_unique<ActivationLayer>(out_c, act));
}

int SqueezeExciteBlock::reduced_width(int channels, double se_ratio) {
    return std::max(1, static_cast<int>(std::lround(channels * se_ratio)));
}

SqueezeExciteBlock::SqueezeExciteBlock(const std::string& name, int channels, int reduced, Rng& rng)
    : channels_(channels) {
    if (reduced < 1)
        fail(ErrorKind::configuration, "squeeze_excite: reduced width must be >= 1, got ", reduced);
    layers_.push_back(std::make_unique<GlobalAvgPoolLayer>(channels));
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".reduce", channels, reduced, 1, 1, 0, 1,
                                                    true, rng));
    layers_.push_back(std::make_unique<ActivationLayer>(reduced, Act::swish));
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".expand", reduced, channels, 1, 1, 0, 1,
                                                    true, rng));
    layers_.push_back(std::make_unique<ActivationLayer>(channels, Act::sigmoid));
}

Tensor SqueezeExciteBlock::forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) {
    Tensor gate = run_chain(tape, x, mode, rng);
    return scale_channels(tape, x, gate);
}

InvertedResidualBlock::InvertedResidualBlock(const std::string& name, const BlockConfig& cfg,
                                             Act act, Rng& rng)
    : cfg_(cfg) {
    validate_block_config(cfg);
    hidden_ = static_cast<int>(std::lround(cfg.expansion * cfg.in_channels));
    residual_ = cfg.stride == 1 && cfg.in_channels == cfg.out_channels;

    if (hidden_ != cfg.in_channels) {
        layers_.push_back(std::make_unique<Conv2dLayer>(name + ".expand", cfg.in_channels, hidden_,
                                                        1, 1, 0, 1, false, rng));
        layers_.push_back(std::make_unique<BatchNormLayer>(name + ".expand_bn", hidden_));
        layers_.push_back(std::make_unique<ActivationLayer>(hidden_, act));
    }
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".dw", hidden_, hidden_, cfg.kernel,
                                                    cfg.stride, cfg.kernel / 2, hidden_, false, rng));
    layers_.push_back(std::make_unique<BatchNormLayer>(name + ".dw_bn", hidden_));
    layers_.push_back(std::make_unique<ActivationLayer>(hidden_, act));
    if (cfg.se_ratio > 0.0) {
        const int reduced = SqueezeExciteBlock::reduced_width(cfg.in_channels, cfg.se_ratio);
        layers_.push_back(std::make_unique<SqueezeExciteBlock>(name + ".se", hidden_, reduced, rng));
    }
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".project", hidden_, cfg.out_channels, 1,
                                                    1, 0, 1, false, rng));
    // linear bottleneck: no activation after the projection
    layers_.push_back(std::make_unique<BatchNormLayer>(name + ".project_bn", cfg.out_channels));
}

Tensor InvertedResidualBlock::forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) {
    Tensor y = run_chain(tape, x, mode, rng);
    if (residual_) y = add(tape, x, y);
    return y;
}

ShuffleUnitBlock::ShuffleUnitBlock(const std::string& name, const BlockConfig& cfg,
                                   int first_conv_groups, Rng& rng)
    : cfg_(cfg) {
    validate_block_config(cfg);
    const int g = cfg.groups;
    const int branch_out = cfg.stride == 2 ? cfg.out_channels - cfg.in_channels : cfg.out_channels;
    if (branch_out < 1)
        fail(ErrorKind::configuration, name, ": stride-2 unit needs out_channels ",
             cfg.out_channels, " > in_channels ", cfg.in_channels);
    mid_ = cfg.out_channels / 4;
    if (cfg.out_channels % 4 != 0 || mid_ % g != 0 || branch_out % g != 0)
        fail(ErrorKind::configuration, name, ": width ", cfg.out_channels,
             " incompatible with bottleneck/4 and groups ", g);
    if (first_conv_groups != 1 && first_conv_groups != g)
        fail(ErrorKind::configuration, name, ": first conv groups must be 1 or ", g);
    if (cfg.in_channels % first_conv_groups != 0)
        fail(ErrorKind::configuration, name, ": input width ", cfg.in_channels,
             " not divisible by first conv groups ", first_conv_groups);

    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".gconv1", cfg.in_channels, mid_, 1, 1,
                                                    0, first_conv_groups, false, rng));
    layers_.push_back(std::make_unique<BatchNormLayer>(name + ".gconv1_bn", mid_));
    layers_.push_back(std::make_unique<ActivationLayer>(mid_, Act::relu));
    layers_.push_back(std::make_unique<ChannelShuffleLayer>(mid_, g));
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".dw", mid_, mid_, 3, cfg.stride, 1,
                                                    mid_, false, rng));
    layers_.push_back(std::make_unique<BatchNormLayer>(name + ".dw_bn", mid_));
    layers_.push_back(std::make_unique<Conv2dLayer>(name + ".gconv2", mid_, branch_out, 1, 1, 0, g,
                                                    false, rng));
    layers_.push_back(std::make_unique<BatchNormLayer>(name + ".gconv2_bn", branch_out));
}

Tensor ShuffleUnitBlock::forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) {
    Tensor branch = run_chain(tape, x, mode, rng);
    Tensor joined;
    if (cfg_.stride == 1) {
        joined = add(tape, x, branch);
    } else {
        Tensor pooled = avg_pool2d(tape, x, 3, 2, 1);
        joined = concat_channels(tape, pooled, branch);
    }
    return activation(tape, joined, Act::relu);
}

LayerCost ShuffleUnitBlock::cost(int h, int w) const {
    const LayerCost branch = chain_cost(h, w);
    return {branch.flops, branch.out_h, branch.out_w};
}

int round_channels(double v, int divisor) {
    int rounded = std::max(divisor, static_cast<int>(v + divisor / 2.0) / divisor * divisor);
    if (static_cast<double>(rounded) < 0.9 * v) rounded += divisor;
    return rounded;
}

ScaledDims compound_scale(const ScalingCoefficients& coeffs, const std::vector<int>& base_depths,
                          const std::vector<int>& base_widths, int base_resolution) {
    if (coeffs.alpha < 1.0 || coeffs.beta < 1.0 || coeffs.gamma < 1.0)
        fail(ErrorKind::parameter, "compound_scale: coefficients must be >= 1");
    if (coeffs.phi < 0.0)
        fail(ErrorKind::parameter, "compound_scale: phi must be >= 0, got ", coeffs.phi);
    const double budget = coeffs.alpha * coeffs.beta * coeffs.beta * coeffs.gamma * coeffs.gamma;
    if (budget < 1.9 || budget > 2.1)
        fail(ErrorKind::parameter, "compound_scale: alpha*beta^2*gamma^2 = ", budget,
             " violates the doubling constraint (must be within 5% of 2)");
    for (const int d : base_depths)
        if (d < 1) fail(ErrorKind::parameter, "compound_scale: base depths must be positive");
    for (const int w : base_widths)
        if (w < 1) fail(ErrorKind::parameter, "compound_scale: base widths must be positive");
    if (base_resolution < 1)
        fail(ErrorKind::parameter, "compound_scale: base resolution must be positive");

    ScaledDims out;
    if (coeffs.phi == 0.0) {  // multipliers are exactly 1: bases pass through untouched
        out.depths = base_depths;
        out.widths = base_widths;
        out.resolution = base_resolution;
        return out;
    }

    const double depth_mult = std::pow(coeffs.alpha, coeffs.phi);
    const double width_mult = std::pow(coeffs.beta, coeffs.phi);
    const double res_mult = std::pow(coeffs.gamma, coeffs.phi);

    out.depths.reserve(base_depths.size());
    for (const int d : base_depths)
        out.depths.push_back(static_cast<int>(std::ceil(d * depth_mult - 1e-9)));
    out.widths.reserve(base_widths.size());
    for (const int w : base_widths) out.widths.push_back(round_channels(w * width_mult));
    out.resolution = static_cast<int>(std::lround(base_resolution * res_mult));
    return out;
}

} // namespace greenleaf
