#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace greenleaf {

namespace {

int conv_out_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

bool wants_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t && t->requires_grad()) return true;
    return false;
}

} // namespace

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor* bias,
              const Conv2dSpec& spec) {
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    const int g = spec.groups;
    if (spec.stride < 1) fail(ErrorKind::parameter, "conv2d: stride must be >= 1, got ", spec.stride);
    if (spec.pad < 0) fail(ErrorKind::parameter, "conv2d: pad must be >= 0, got ", spec.pad);
    if (g < 1) fail(ErrorKind::parameter, "conv2d: groups must be >= 1, got ", g);
    if (xs.c % g != 0)
        fail(ErrorKind::dimension, "conv2d: input channel axis ", xs.c, " not divisible by groups ", g);
    if (ws.n % g != 0)
        fail(ErrorKind::dimension, "conv2d: output channel axis ", ws.n, " not divisible by groups ", g);
    if (ws.c != xs.c / g)
        fail(ErrorKind::dimension, "conv2d: weight input-channel axis is ", ws.c,
             " but input has ", xs.c / g, " channels per group (C=", xs.c, ", groups=", g, ")");
    if (bias && (bias->shape().c != ws.n || bias->size() != ws.n))
        fail(ErrorKind::dimension, "conv2d: bias channel axis ", bias->shape().c,
             " does not match output channels ", ws.n);

    const int oh = conv_out_extent(xs.h, spec.pad, ws.h, spec.stride);
    const int ow = conv_out_extent(xs.w, spec.pad, ws.w, spec.stride);
    if (oh <= 0 || ow <= 0)
        fail(ErrorKind::dimension, "conv2d: kernel ", ws.h, "x", ws.w, " with pad ", spec.pad,
             " exceeds input extent ", xs.h, "x", xs.w);

    const int cout = ws.n, cin_pg = ws.c, kh = ws.h, kw = ws.w;
    const int ocpg = cout / g;
    const int stride = spec.stride, pad = spec.pad;

    Tensor y(Shape{xs.n, cout, oh, ow}, wants_grad({&x, &w, bias}));
    const double* xd = x.data();
    const double* wd = w.data();
    const double* bd = bias ? bias->data() : nullptr;
    double* yd = y.data();

    const std::int64_t x_plane = static_cast<std::int64_t>(xs.h) * xs.w;
    const std::int64_t y_plane = static_cast<std::int64_t>(oh) * ow;
    const std::int64_t nco = static_cast<std::int64_t>(xs.n) * cout;

#pragma omp parallel for schedule(static)
    for (std::int64_t idx = 0; idx < nco; ++idx) {
        const int n = static_cast<int>(idx / cout);
        const int oc = static_cast<int>(idx % cout);
        const int gi = oc / ocpg;
        const double* wbase = wd + static_cast<std::int64_t>(oc) * cin_pg * kh * kw;
        const double b = bd ? bd[oc] : 0.0;
        double* yrow = yd + (static_cast<std::int64_t>(n) * cout + oc) * y_plane;
        for (int oy = 0; oy < oh; ++oy) {
            const int ih0 = oy * stride - pad;
            const int kh_lo = std::max(0, -ih0);
            const int kh_hi = std::min(kh, xs.h - ih0);
            for (int ox = 0; ox < ow; ++ox) {
                const int iw0 = ox * stride - pad;
                const int kw_lo = std::max(0, -iw0);
                const int kw_hi = std::min(kw, xs.w - iw0);
                double acc = b;
                for (int ic = 0; ic < cin_pg; ++ic) {
                    const double* xplane =
                        xd + (static_cast<std::int64_t>(n) * xs.c + gi * cin_pg + ic) * x_plane;
                    const double* wplane = wbase + static_cast<std::int64_t>(ic) * kh * kw;
                    for (int ky = kh_lo; ky < kh_hi; ++ky) {
                        const double* xrow = xplane + static_cast<std::int64_t>(ih0 + ky) * xs.w + iw0;
                        const double* wrow = wplane + static_cast<std::int64_t>(ky) * kw;
                        for (int kx = kw_lo; kx < kw_hi; ++kx) acc += xrow[kx] * wrow[kx];
                    }
                }
                yrow[static_cast<std::int64_t>(oy) * ow + ox] = acc;
            }
        }
    }

    if (tape && y.requires_grad()) {
        Tensor xc = x, wc = w;
        Tensor bc = bias ? *bias : Tensor();
        Conv2dSpec sp = spec;
        tape->record(y, [xc, wc, bc, sp](const Tensor& out) mutable {
            const Shape xs = xc.shape(), ws = wc.shape(), ys = out.shape();
            const int g = sp.groups, cout = ws.n, cin_pg = ws.c, kh = ws.h, kw = ws.w;
            const int ocpg = cout / g;
            const std::int64_t x_plane = static_cast<std::int64_t>(xs.h) * xs.w;
            const std::int64_t y_plane = static_cast<std::int64_t>(ys.h) * ys.w;
            const double* gy = out.grad().data();
            const double* xd = xc.data();
            const double* wd = wc.data();

            if (xc.requires_grad()) {
                double* gx = xc.grad().data();
#pragma omp parallel for schedule(static)
                for (int n = 0; n < xs.n; ++n) {
                    for (int oc = 0; oc < cout; ++oc) {
                        const int gi = oc / ocpg;
                        const double* wbase = wd + static_cast<std::int64_t>(oc) * cin_pg * kh * kw;
                        const double* gyrow = gy + (static_cast<std::int64_t>(n) * cout + oc) * y_plane;
                        for (int oy = 0; oy < ys.h; ++oy) {
                            const int ih0 = oy * sp.stride - sp.pad;
                            const int kh_lo = std::max(0, -ih0);
                            const int kh_hi = std::min(kh, xs.h - ih0);
                            for (int ox = 0; ox < ys.w; ++ox) {
                                const int iw0 = ox * sp.stride - sp.pad;
                                const int kw_lo = std::max(0, -iw0);
                                const int kw_hi = std::min(kw, xs.w - iw0);
                                const double go = gyrow[static_cast<std::int64_t>(oy) * ys.w + ox];
                                if (go == 0.0) continue;
                                for (int ic = 0; ic < cin_pg; ++ic) {
                                    double* gxplane =
                                        gx + (static_cast<std::int64_t>(n) * xs.c + gi * cin_pg + ic) *
                                                 x_plane;
                                    const double* wplane = wbase + static_cast<std::int64_t>(ic) * kh * kw;
                                    for (int ky = kh_lo; ky < kh_hi; ++ky) {
                                        double* gxrow =
                                            gxplane + static_cast<std::int64_t>(ih0 + ky) * xs.w + iw0;
                                        const double* wrow = wplane + static_cast<std::int64_t>(ky) * kw;
                                        for (int kx = kw_lo; kx < kw_hi; ++kx)
                                            gxrow[kx] += go * wrow[kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (wc.requires_grad()) {
                double* gw = wc.grad().data();
#pragma omp parallel for schedule(static)
                for (int oc = 0; oc < cout; ++oc) {
                    const int gi = oc / ocpg;
                    double* gwbase = gw + static_cast<std::int64_t>(oc) * cin_pg * kh * kw;
                    for (int n = 0; n < xs.n; ++n) {
                        const double* gyrow = gy + (static_cast<std::int64_t>(n) * cout + oc) * y_plane;
                        for (int oy = 0; oy < ys.h; ++oy) {
                            const int ih0 = oy * sp.stride - sp.pad;
                            const int kh_lo = std::max(0, -ih0);
                            const int kh_hi = std::min(kh, xs.h - ih0);
                            for (int ox = 0; ox < ys.w; ++ox) {
                                const int iw0 = ox * sp.stride - sp.pad;
                                const int kw_lo = std::max(0, -iw0);
                                const int kw_hi = std::min(kw, xs.w - iw0);
                                const double go = gyrow[static_cast<std::int64_t>(oy) * ys.w + ox];
                                if (go == 0.0) continue;
                                for (int ic = 0; ic < cin_pg; ++ic) {
                                    const double* xplane =
                                        xd + (static_cast<std::int64_t>(n) * xs.c + gi * cin_pg + ic) *
                                                 x_plane;
                                    double* gwplane = gwbase + static_cast<std::int64_t>(ic) * kh * kw;
                                    for (int ky = kh_lo; ky < kh_hi; ++ky) {
                                        const double* xrow =
                                            xplane + static_cast<std::int64_t>(ih0 + ky) * xs.w + iw0;
                                        double* gwrow = gwplane + static_cast<std::int64_t>(ky) * kw;
                                        for (int kx = kw_lo; kx < kw_hi; ++kx)
                                            gwrow[kx] += go * xrow[kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (bc.defined() && bc.requires_grad()) {
                double* gb = bc.grad().data();
                for (int n = 0; n < xs.n; ++n)
                    for (int oc = 0; oc < cout; ++oc) {
                        const double* gyrow = gy + (static_cast<std::int64_t>(n) * cout + oc) * y_plane;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < y_plane; ++i) acc += gyrow[i];
                        gb[oc] += acc;
                    }
            }
        });
    }
    return y;
}

Tensor batch_norm2d(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, double eps, double momentum, Mode mode) {
    const Shape xs = x.shape();
    const int c = xs.c;
    if (eps <= 0.0) fail(ErrorKind::parameter, "batch_norm2d: eps must be > 0, got ", eps);
    if (gamma.size() != c || beta.size() != c)
        fail(ErrorKind::dimension, "batch_norm2d: gamma/beta length ", gamma.size(), "/",
             beta.size(), " does not match channel axis ", c);
    if (static_cast<int>(state.running_mean.size()) != c ||
        static_cast<int>(state.running_var.size()) != c)
        fail(ErrorKind::dimension, "batch_norm2d: running stats length does not match channels ", c);

    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    const std::int64_t per_channel = static_cast<std::int64_t>(xs.n) * plane;
    if (per_channel <= 0)
        fail(ErrorKind::dimension, "batch_norm2d: empty input of shape ", xs.str());

    std::vector<double> mean(c), invstd(c);
    if (mode == Mode::train) {
        for (int ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (int n = 0; n < xs.n; ++n) {
                const double* row = x.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) s += row[i];
            }
            const double m = s / static_cast<double>(per_channel);
            double sq = 0.0;
            for (int n = 0; n < xs.n; ++n) {
                const double* row = x.data() + (static_cast<std::int64_t>(n) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const double d = row[i] - m;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(per_channel);
            mean[ch] = m;
            invstd[ch] = 1.0 / std::sqrt(var + eps);
            state.running_mean[ch] = (1.0 - momentum) * state.running_mean[ch] + momentum * m;
            state.running_var[ch] = (1.0 - momentum) * state.running_var[ch] + momentum * var;
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[ch] = state.running_mean[ch];
            invstd[ch] = 1.0 / std::sqrt(state.running_var[ch] + eps);
        }
    }

    Tensor y(xs, wants_grad({&x, &gamma, &beta}));
    const double* xd = x.data();
    double* yd = y.data();
    for (int n = 0; n < xs.n; ++n)
        for (int ch = 0; ch < c; ++ch) {
            const double g = gamma.data()[ch], b = beta.data()[ch];
            const double m = mean[ch], is = invstd[ch];
            const double* xrow = xd + (static_cast<std::int64_t>(n) * c + ch) * plane;
            double* yrow = yd + (static_cast<std::int64_t>(n) * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) yrow[i] = g * (xrow[i] - m) * is + b;
        }

    if (tape && y.requires_grad()) {
        Tensor xc = x, gc = gamma, bc = beta;
        const bool train = mode == Mode::train;
        tape->record(y, [xc, gc, bc, mean, invstd, train, per_channel, plane, c](const Tensor& out) mutable {
            const Shape xs = xc.shape();
            const double* gy = out.grad().data();
            const double* xd = xc.data();
            const double m_count = static_cast<double>(per_channel);

            for (int ch = 0; ch < c; ++ch) {
                const double g = gc.data()[ch];
                const double mu = mean[ch], is = invstd[ch];
                double sum_gy = 0.0, sum_gy_xhat = 0.0;
                for (int n = 0; n < xs.n; ++n) {
                    const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const double go = gy[base + i];
                        sum_gy += go;
                        sum_gy_xhat += go * (xd[base + i] - mu) * is;
                    }
                }
                if (gc.requires_grad()) gc.grad()[ch] += sum_gy_xhat;
                if (bc.requires_grad()) bc.grad()[ch] += sum_gy;
                if (xc.requires_grad()) {
                    double* gx = xc.grad().data();
                    if (train) {
                        const double k1 = sum_gy / m_count;
                        const double k2 = sum_gy_xhat / m_count;
                        for (int n = 0; n < xs.n; ++n) {
                            const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
                            for (std::int64_t i = 0; i < plane; ++i) {
                                const double xhat = (xd[base + i] - mu) * is;
                                gx[base + i] += g * is * (gy[base + i] - k1 - xhat * k2);
                            }
                        }
                    } else {
                        for (int n = 0; n < xs.n; ++n) {
                            const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
                            for (std::int64_t i = 0; i < plane; ++i)
                                gx[base + i] += g * is * gy[base + i];
                        }
                    }
                }
            }
        });
    }
    return y;
}

Tensor activation(Tape* tape, const Tensor& x, Act kind) {
    Tensor y(x.shape(), x.requires_grad());
    const double* xd = x.data();
    double* yd = y.data();
    const std::int64_t n = x.size();
    switch (kind) {
        case Act::relu:
            for (std::int64_t i = 0; i < n; ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
            break;
        case Act::relu6:
            for (std::int64_t i = 0; i < n; ++i) yd[i] = std::clamp(xd[i], 0.0, 6.0);
            break;
        case Act::sigmoid:
            for (std::int64_t i = 0; i < n; ++i) yd[i] = 1.0 / (1.0 + std::exp(-xd[i]));
            break;
        case Act::swish:
            for (std::int64_t i = 0; i < n; ++i) yd[i] = xd[i] / (1.0 + std::exp(-xd[i]));
            break;
    }
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, kind, n](const Tensor& out) mutable {
            const double* gy = out.grad().data();
            const double* xd = xc.data();
            double* gx = xc.grad().data();
            switch (kind) {
                case Act::relu:
                    for (std::int64_t i = 0; i < n; ++i)
                        if (xd[i] > 0.0) gx[i] += gy[i];
                    break;
                case Act::relu6:
                    for (std::int64_t i = 0; i < n; ++i)
                        if (xd[i] > 0.0 && xd[i] < 6.0) gx[i] += gy[i];
                    break;
                case Act::sigmoid:
                    for (std::int64_t i = 0; i < n; ++i) {
                        const double s = 1.0 / (1.0 + std::exp(-xd[i]));
                        gx[i] += gy[i] * s * (1.0 - s);
                    }
                    break;
                case Act::swish:
                    for (std::int64_t i = 0; i < n; ++i) {
                        const double s = 1.0 / (1.0 + std::exp(-xd[i]));
                        gx[i] += gy[i] * s * (1.0 + xd[i] * (1.0 - s));
                    }
                    break;
            }
        });
    }
    return y;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
    const Shape xs = x.shape();
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    if (plane <= 0)
        fail(ErrorKind::dimension, "global_avg_pool: empty spatial extent in shape ", xs.str());
    Tensor y(Shape{xs.n, xs.c, 1, 1}, x.requires_grad());
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c) {
            const double* row = x.data() + (static_cast<std::int64_t>(n) * xs.c + c) * plane;
            double s = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) s += row[i];
            y.at(n, c, 0, 0) = s / static_cast<double>(plane);
        }
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, plane](const Tensor& out) mutable {
            const Shape xs = xc.shape();
            double* gx = xc.grad().data();
            const double inv = 1.0 / static_cast<double>(plane);
            for (int n = 0; n < xs.n; ++n)
                for (int c = 0; c < xs.c; ++c) {
                    const double go = out.grad()[static_cast<std::size_t>(n) * xs.c + c] * inv;
                    double* row = gx + (static_cast<std::int64_t>(n) * xs.c + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) row[i] += go;
                }
        });
    }
    return y;
}

Tensor avg_pool2d(Tape* tape, const Tensor& x, int k, int stride, int pad) {
    const Shape xs = x.shape();
    if (k < 1 || stride < 1 || pad < 0)
        fail(ErrorKind::parameter, "avg_pool2d: bad window k=", k, " stride=", stride, " pad=", pad);
    const int oh = conv_out_extent(xs.h, pad, k, stride);
    const int ow = conv_out_extent(xs.w, pad, k, stride);
    if (oh <= 0 || ow <= 0)
        fail(ErrorKind::dimension, "avg_pool2d: window exceeds input extent ", xs.str());
    Tensor y(Shape{xs.n, xs.c, oh, ow}, x.requires_grad());
    const double inv = 1.0 / (static_cast<double>(k) * k);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double s = 0.0;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy >= 0 && iy < xs.h && ix >= 0 && ix < xs.w)
                                s += x.at(n, c, iy, ix);
                        }
                    y.at(n, c, oy, ox) = s * inv;
                }
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, k, stride, pad, inv](const Tensor& out) mutable {
            const Shape xs = xc.shape();
            const Shape ys = out.shape();
            for (int n = 0; n < xs.n; ++n)
                for (int c = 0; c < xs.c; ++c)
                    for (int oy = 0; oy < ys.h; ++oy)
                        for (int ox = 0; ox < ys.w; ++ox) {
                            const double go = out.grad()[static_cast<std::size_t>(
                                                  ((static_cast<std::int64_t>(n) * ys.c + c) * ys.h + oy) *
                                                      ys.w +
                                                  ox)] *
                                              inv;
                            if (go == 0.0) continue;
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx) {
                                    const int iy = oy * stride - pad + ky;
                                    const int ix = ox * stride - pad + kx;
                                    if (iy >= 0 && iy < xs.h && ix >= 0 && ix < xs.w)
                                        xc.grad()[static_cast<std::size_t>(
                                            ((static_cast<std::int64_t>(n) * xs.c + c) * xs.h + iy) *
                                                xs.w +
                                            ix)] += go;
                                }
                        }
        });
    }
    return y;
}

Tensor max_pool2d(Tape* tape, const Tensor& x, int k, int stride, int pad) {
    const Shape xs = x.shape();
    if (k < 1 || stride < 1 || pad < 0)
        fail(ErrorKind::parameter, "max_pool2d: bad window k=", k, " stride=", stride, " pad=", pad);
    const int oh = conv_out_extent(xs.h, pad, k, stride);
    const int ow = conv_out_extent(xs.w, pad, k, stride);
    if (oh <= 0 || ow <= 0)
        fail(ErrorKind::dimension, "max_pool2d: window exceeds input extent ", xs.str());
    Tensor y(Shape{xs.n, xs.c, oh, ow}, x.requires_grad());
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(y.size()), -1);
    std::size_t oi = 0;
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++oi) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::int64_t best_idx = -1;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                            const std::int64_t idx =
                                ((static_cast<std::int64_t>(n) * xs.c + c) * xs.h + iy) * xs.w + ix;
                            if (x.data()[idx] > best) {
                                best = x.data()[idx];
                                best_idx = idx;
                            }
                        }
                    // all-padding window: defined as zero
                    y.data()[oi] = best_idx >= 0 ? best : 0.0;
                    argmax[oi] = best_idx;
                }
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, argmax](const Tensor& out) mutable {
            for (std::size_t i = 0; i < argmax.size(); ++i)
                if (argmax[i] >= 0) xc.grad()[static_cast<std::size_t>(argmax[i])] += out.grad()[i];
        });
    }
    return y;
}

Tensor dense(Tape* tape, const Tensor& x, const Tensor& w, const Tensor* bias) {
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    if (xs.h != 1 || xs.w != 1)
        fail(ErrorKind::dimension, "dense: expected flat input (N,F,1,1), got ", xs.str());
    if (ws.h != 1 || ws.w != 1)
        fail(ErrorKind::dimension, "dense: expected weight (F,M,1,1), got ", ws.str());
    const int f = ws.n, m = ws.c;
    if (xs.c != f)
        fail(ErrorKind::dimension, "dense: input feature axis ", xs.c,
             " does not match weight rows ", f);
    if (bias && bias->size() != m)
        fail(ErrorKind::dimension, "dense: bias length ", bias->size(),
             " does not match output axis ", m);

    Tensor y(Shape{xs.n, m, 1, 1}, wants_grad({&x, &w, bias}));
    const double* xd = x.data();
    const double* wd = w.data();
    double* yd = y.data();
    for (int n = 0; n < xs.n; ++n) {
        double* yrow = yd + static_cast<std::int64_t>(n) * m;
        if (bias)
            std::memcpy(yrow, bias->data(), sizeof(double) * static_cast<std::size_t>(m));
        else
            std::fill(yrow, yrow + m, 0.0);
        const double* xrow = xd + static_cast<std::int64_t>(n) * f;
        for (int fi = 0; fi < f; ++fi) {
            const double xv = xrow[fi];
            if (xv == 0.0) continue;
            const double* wrow = wd + static_cast<std::int64_t>(fi) * m;
            for (int mi = 0; mi < m; ++mi) yrow[mi] += xv * wrow[mi];
        }
    }
    if (tape && y.requires_grad()) {
        Tensor xc = x, wc = w;
        Tensor bc = bias ? *bias : Tensor();
        tape->record(y, [xc, wc, bc, f, m](const Tensor& out) mutable {
            const int n = xc.shape().n;
            const double* gy = out.grad().data();
            if (xc.requires_grad()) {
                double* gx = xc.grad().data();
                const double* wd = wc.data();
                for (int ni = 0; ni < n; ++ni)
                    for (int fi = 0; fi < f; ++fi) {
                        const double* wrow = wd + static_cast<std::int64_t>(fi) * m;
                        const double* gyrow = gy + static_cast<std::int64_t>(ni) * m;
                        double acc = 0.0;
                        for (int mi = 0; mi < m; ++mi) acc += gyrow[mi] * wrow[mi];
                        gx[static_cast<std::int64_t>(ni) * f + fi] += acc;
                    }
            }
            if (wc.requires_grad()) {
                double* gw = wc.grad().data();
                const double* xd = xc.data();
                for (int ni = 0; ni < n; ++ni) {
                    const double* xrow = xd + static_cast<std::int64_t>(ni) * f;
                    const double* gyrow = gy + static_cast<std::int64_t>(ni) * m;
                    for (int fi = 0; fi < f; ++fi) {
                        const double xv = xrow[fi];
                        if (xv == 0.0) continue;
                        double* gwrow = gw + static_cast<std::int64_t>(fi) * m;
                        for (int mi = 0; mi < m; ++mi) gwrow[mi] += xv * gyrow[mi];
                    }
                }
            }
            if (bc.defined() && bc.requires_grad()) {
                double* gb = bc.grad().data();
                for (int ni = 0; ni < n; ++ni)
                    for (int mi = 0; mi < m; ++mi)
                        gb[mi] += gy[static_cast<std::int64_t>(ni) * m + mi];
            }
        });
    }
    return y;
}

Tensor dropout(Tape* tape, const Tensor& x, double rate, Mode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        fail(ErrorKind::parameter, "dropout: rate must lie in [0,1), got ", rate);
    if (mode == Mode::eval || rate == 0.0) return x;

    const double scale = 1.0 / (1.0 - rate);
    const std::int64_t n = x.size();
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = rng.uniform() >= rate;

    Tensor y(x.shape(), x.requires_grad());
    for (std::int64_t i = 0; i < n; ++i)
        y.data()[i] = keep[static_cast<std::size_t>(i)] ? x.data()[i] * scale : 0.0;

    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, keep = std::move(keep), scale, n](const Tensor& out) mutable {
            double* gx = xc.grad().data();
            const double* gy = out.grad().data();
            for (std::int64_t i = 0; i < n; ++i)
                if (keep[static_cast<std::size_t>(i)]) gx[i] += gy[i] * scale;
        });
    }
    return y;
}

SceResult softmax_cross_entropy(Tape* tape, const Tensor& logits, std::span<const int> targets) {
    const Shape ls = logits.shape();
    if (ls.h != 1 || ls.w != 1)
        fail(ErrorKind::dimension, "softmax_cross_entropy: expected logits (N,K,1,1), got ",
             ls.str());
    const int n = ls.n, k = ls.c;
    if (static_cast<int>(targets.size()) != n)
        fail(ErrorKind::dimension, "softmax_cross_entropy: ", targets.size(), " targets for batch ",
             n);
    for (int i = 0; i < n; ++i)
        if (targets[i] < 0 || targets[i] >= k)
            fail(ErrorKind::argument, "softmax_cross_entropy: target ", targets[i], " at row ", i,
                 " outside [0,", k, ")");

    Tensor probs(Shape{n, k, 1, 1});
    double loss_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = logits.data() + static_cast<std::int64_t>(i) * k;
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        double* prow = probs.data() + static_cast<std::int64_t>(i) * k;
        for (int j = 0; j < k; ++j) prow[j] = std::exp(row[j] - mx) / denom;
        loss_sum += mx + std::log(denom) - row[targets[i]];
    }
    Tensor loss = Tensor::scalar(loss_sum / n);
    loss.set_requires_grad(logits.requires_grad());

    if (tape && loss.requires_grad()) {
        Tensor lc = logits, pc = probs;
        std::vector<int> tgt(targets.begin(), targets.end());
        tape->record(loss, [lc, pc, tgt, n, k](const Tensor& out) mutable {
            const double go = out.grad()[0] / n;
            double* gl = lc.grad().data();
            const double* pd = pc.data();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < k; ++j) {
                    const double delta = j == tgt[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                    gl[static_cast<std::int64_t>(i) * k + j] +=
                        go * (pd[static_cast<std::int64_t>(i) * k + j] - delta);
                }
        });
    }
    return SceResult{loss, probs};
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()))
        fail(ErrorKind::dimension, "add: shape mismatch ", a.shape().str(), " vs ", b.shape().str());
    Tensor y(a.shape(), wants_grad({&a, &b}));
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] + b.data()[i];
    if (tape && y.requires_grad()) {
        Tensor ac = a, bc = b;
        tape->record(y, [ac, bc, n](const Tensor& out) mutable {
            const double* gy = out.grad().data();
            if (ac.requires_grad()) {
                double* ga = ac.grad().data();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (bc.requires_grad()) {
                double* gb = bc.grad().data();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += gy[i];
            }
        });
    }
    return y;
}

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b) {
    const Shape as = a.shape(), bs = b.shape();
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
        fail(ErrorKind::dimension, "concat_channels: incompatible shapes ", as.str(), " vs ",
             bs.str());
    Tensor y(Shape{as.n, as.c + bs.c, as.h, as.w}, wants_grad({&a, &b}));
    const std::int64_t plane = static_cast<std::int64_t>(as.h) * as.w;
    for (int n = 0; n < as.n; ++n) {
        std::memcpy(y.data() + (static_cast<std::int64_t>(n) * (as.c + bs.c)) * plane,
                    a.data() + static_cast<std::int64_t>(n) * as.c * plane,
                    sizeof(double) * static_cast<std::size_t>(as.c * plane));
        std::memcpy(y.data() + (static_cast<std::int64_t>(n) * (as.c + bs.c) + as.c) * plane,
                    b.data() + static_cast<std::int64_t>(n) * bs.c * plane,
                    sizeof(double) * static_cast<std::size_t>(bs.c * plane));
    }
    if (tape && y.requires_grad()) {
        Tensor ac = a, bc = b;
        tape->record(y, [ac, bc, plane](const Tensor& out) mutable {
            const Shape as = ac.shape(), bs = bc.shape();
            const double* gy = out.grad().data();
            for (int n = 0; n < as.n; ++n) {
                if (ac.requires_grad()) {
                    double* ga = ac.grad().data() + static_cast<std::int64_t>(n) * as.c * plane;
                    const double* src = gy + (static_cast<std::int64_t>(n) * (as.c + bs.c)) * plane;
                    for (std::int64_t i = 0; i < as.c * plane; ++i) ga[i] += src[i];
                }
                if (bc.requires_grad()) {
                    double* gb = bc.grad().data() + static_cast<std::int64_t>(n) * bs.c * plane;
                    const double* src =
                        gy + (static_cast<std::int64_t>(n) * (as.c + bs.c) + as.c) * plane;
                    for (std::int64_t i = 0; i < bs.c * plane; ++i) gb[i] += src[i];
                }
            }
        });
    }
    return y;
}

Tensor scale_channels(Tape* tape, const Tensor& x, const Tensor& s) {
    const Shape xs = x.shape(), ss = s.shape();
    if (ss.n != xs.n || ss.c != xs.c || ss.h != 1 || ss.w != 1)
        fail(ErrorKind::dimension, "scale_channels: gate shape ", ss.str(),
             " does not match input ", xs.str());
    Tensor y(xs, wants_grad({&x, &s}));
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c) {
            const double g = s.at(n, c, 0, 0);
            const std::int64_t base = (static_cast<std::int64_t>(n) * xs.c + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) y.data()[base + i] = x.data()[base + i] * g;
        }
    if (tape && y.requires_grad()) {
        Tensor xc = x, sc = s;
        tape->record(y, [xc, sc, plane](const Tensor& out) mutable {
            const Shape xs = xc.shape();
            const double* gy = out.grad().data();
            for (int n = 0; n < xs.n; ++n)
                for (int c = 0; c < xs.c; ++c) {
                    const std::int64_t base = (static_cast<std::int64_t>(n) * xs.c + c) * plane;
                    const double g = sc.at(n, c, 0, 0);
                    if (xc.requires_grad()) {
                        double* gx = xc.grad().data();
                        for (std::int64_t i = 0; i < plane; ++i) gx[base + i] += gy[base + i] * g;
                    }
                    if (sc.requires_grad()) {
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < plane; ++i)
                            acc += gy[base + i] * xc.data()[base + i];
                        sc.grad()[static_cast<std::size_t>(n) * xs.c + c] += acc;
                    }
                }
        });
    }
    return y;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
    double s = 0.0;
    for (const double v : x.values()) s += v;
    Tensor y = Tensor::scalar(s);
    y.set_requires_grad(x.requires_grad());
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc](const Tensor& out) mutable {
            const double go = out.grad()[0];
            for (auto& g : xc.grad()) g += go;
        });
    }
    return y;
}

Tensor sum_squares(Tape* tape, const Tensor& x) {
    double s = 0.0;
    for (const double v : x.values()) s += v * v;
    Tensor y = Tensor::scalar(s);
    y.set_requires_grad(x.requires_grad());
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc](const Tensor& out) mutable {
            const double go = out.grad()[0];
            double* gx = xc.grad().data();
            const double* xd = xc.data();
            for (std::int64_t i = 0; i < xc.size(); ++i) gx[i] += 2.0 * xd[i] * go;
        });
    }
    return y;
}

Tensor scalar_mul(Tape* tape, const Tensor& x, double c) {
    Tensor y(x.shape(), x.requires_grad());
    for (std::int64_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] * c;
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, c](const Tensor& out) mutable {
            double* gx = xc.grad().data();
            const double* gy = out.grad().data();
            for (std::int64_t i = 0; i < xc.size(); ++i) gx[i] += gy[i] * c;
        });
    }
    return y;
}

Tensor weighted_sum(Tape* tape, const Tensor& x, const std::vector<double>& coeff) {
    if (static_cast<std::int64_t>(coeff.size()) != x.size())
        fail(ErrorKind::dimension, "weighted_sum: ", coeff.size(), " coefficients for ", x.size(),
             " elements");
    double s = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) s += x.data()[i] * coeff[static_cast<std::size_t>(i)];
    Tensor y = Tensor::scalar(s);
    y.set_requires_grad(x.requires_grad());
    if (tape && y.requires_grad()) {
        Tensor xc = x;
        tape->record(y, [xc, coeff](const Tensor& out) mutable {
            const double go = out.grad()[0];
            double* gx = xc.grad().data();
            for (std::int64_t i = 0; i < xc.size(); ++i)
                gx[i] += coeff[static_cast<std::size_t>(i)] * go;
        });
    }
    return y;
}

} // namespace greenleaf
