#include "layers.hpp"

#include <cmath>

namespace greenleaf {

double he_uniform_limit(std::int64_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

double xavier_uniform_limit(std::int64_t fan_in, std::int64_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {
void fill_uniform(Tensor& t, double limit, Rng& rng) {
    for (auto& v : t.values()) v = rng.uniform(-limit, limit);
}
} // namespace

Conv2dLayer::Conv2dLayer(std::string name, int in_c, int out_c, int kernel, int stride, int pad,
                         int groups, bool with_bias, Rng& rng)
    : in_c_(in_c), out_c_(out_c), kernel_(kernel) {
    if (in_c % groups != 0 || out_c % groups != 0)
        fail(ErrorKind::configuration, name, ": channels (", in_c, "->", out_c,
             ") not divisible by groups ", groups);
    spec_ = Conv2dSpec{stride, pad, groups};
    weight_.name = name + ".weight";
    weight_.value = Tensor(Shape{out_c, in_c / groups, kernel, kernel}, true);
    weight_.logical_dims = {out_c, in_c / groups, kernel, kernel};
    weight_.is_weight = true;
    fill_uniform(weight_.value, he_uniform_limit(static_cast<std::int64_t>(in_c / groups) * kernel * kernel), rng);
    if (with_bias) {
        bias_.name = name + ".bias";
        bias_.value = Tensor(Shape{1, out_c, 1, 1}, true);
        bias_.logical_dims = {out_c};
    }
}

Tensor Conv2dLayer::forward(Tape* tape, const Tensor& x, Mode, Rng*) {
    return conv2d(tape, x, weight_.value, bias_.value.defined() ? &bias_.value : nullptr, spec_);
}

void Conv2dLayer::collect(std::vector<Param*>& params, std::vector<NamedBuffer>&) {
    params.push_back(&weight_);
    if (bias_.value.defined()) params.push_back(&bias_);
}

LayerCost Conv2dLayer::cost(int h, int w) const {
    const int oh = (h + 2 * spec_.pad - kernel_) / spec_.stride + 1;
    const int ow = (w + 2 * spec_.pad - kernel_) / spec_.stride + 1;
    const std::int64_t flops = 2LL * kernel_ * kernel_ * (in_c_ / spec_.groups) * out_c_ * oh * ow;
    return {flops, oh, ow};
}

BatchNormLayer::BatchNormLayer(std::string name, int channels, double eps, double momentum)
    : name_(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum) {
    gamma_.name = name_ + ".gamma";
    gamma_.value = Tensor::full(Shape{1, channels, 1, 1}, 1.0, true);
    gamma_.logical_dims = {channels};
    beta_.name = name_ + ".beta";
    beta_.value = Tensor(Shape{1, channels, 1, 1}, true);
    beta_.logical_dims = {channels};
    state_.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
    state_.running_var.assign(static_cast<std::size_t>(channels), 1.0);
}

Tensor BatchNormLayer::forward(Tape* tape, const Tensor& x, Mode mode, Rng*) {
    return batch_norm2d(tape, x, gamma_.value, beta_.value, state_, eps_, momentum_, mode);
}

void BatchNormLayer::collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) {
    params.push_back(&gamma_);
    params.push_back(&beta_);
    buffers.push_back({name_ + ".running_mean", &state_.running_mean});
    buffers.push_back({name_ + ".running_var", &state_.running_var});
}

DenseLayer::DenseLayer(std::string name, int in_f, int out_f, Rng& rng) : in_f_(in_f), out_f_(out_f) {
    weight_.name = name + ".weight";
    weight_.value = Tensor(Shape{in_f, out_f, 1, 1}, true);
    weight_.logical_dims = {in_f, out_f};
    weight_.is_weight = true;
    fill_uniform(weight_.value, xavier_uniform_limit(in_f, out_f), rng);
    bias_.name = name + ".bias";
    bias_.value = Tensor(Shape{1, out_f, 1, 1}, true);
    bias_.logical_dims = {out_f};
}

Tensor DenseLayer::forward(Tape* tape, const Tensor& x, Mode, Rng*) {
    return dense(tape, x, weight_.value, &bias_.value);
}

void DenseLayer::collect(std::vector<Param*>& params, std::vector<NamedBuffer>&) {
    params.push_back(&weight_);
    params.push_back(&bias_);
}

DropoutLayer::DropoutLayer(int channels, double rate) : channels_(channels), rate_(rate) {
    if (rate < 0.0 || rate >= 1.0)
        fail(ErrorKind::parameter, "dropout layer: rate must lie in [0,1), got ", rate);
}

Tensor DropoutLayer::forward(Tape* tape, const Tensor& x, Mode mode, Rng* rng) {
    if (mode == Mode::eval || rate_ == 0.0) return x;
    if (!rng) fail(ErrorKind::argument, "dropout layer: train-mode forward needs an RNG stream");
    return dropout(tape, x, rate_, mode, *rng);
}

} // namespace greenleaf
