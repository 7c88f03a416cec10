#pragma once

#include <span>
#include <vector>

#include "graph.hpp"
#include "tensor.hpp"

namespace greenleaf {

enum class Mode { train, eval };
enum class Act { relu, relu6, swish, sigmoid };

struct Conv2dSpec {
    int stride = 1;
    int pad = 0;
    int groups = 1;
};

// Grouped 2-D cross-correlation. x: (N,Cin,H,W), w: (Cout, Cin/groups, Kh, Kw),
// bias: (1,Cout,1,1) or null. Output (N, Cout, (H+2p-Kh)/s+1, (W+2p-Kw)/s+1).
// Group c of the output reads only group c of the input.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor* bias,
              const Conv2dSpec& spec);

struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

// Train mode normalizes with batch statistics over (N,H,W) per channel and
// folds them into the running estimates as running = (1-momentum)*running +
// momentum*batch. Eval mode normalizes with the running estimates.
Tensor batch_norm2d(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, double eps, double momentum, Mode mode);

Tensor activation(Tape* tape, const Tensor& x, Act kind);

// Mean over the spatial extent, (N,C,H,W) -> (N,C,1,1).
Tensor global_avg_pool(Tape* tape, const Tensor& x);

// Window average with zero padding; the divisor is always k*k (padded
// positions count toward the mean).
Tensor avg_pool2d(Tape* tape, const Tensor& x, int k, int stride, int pad);

Tensor max_pool2d(Tape* tape, const Tensor& x, int k, int stride, int pad);

// y = xW + b. x: (N,F,1,1), w: (F,M,1,1) read as an F-by-M matrix,
// b: (1,M,1,1) or null. Output (N,M,1,1).
Tensor dense(Tape* tape, const Tensor& x, const Tensor& w, const Tensor* bias);

// Inverted dropout: train mode zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(Tape* tape, const Tensor& x, double rate, Mode mode, Rng& rng);

struct SceResult {
    Tensor loss;   // scalar, mean over the batch of -log p(target)
    Tensor probs;  // (N,K,1,1), detached from the graph
};

// Softmax cross entropy over logits (N,K,1,1), stabilized by row-max
// subtraction so the loss stays finite for arbitrarily large logits.
SceResult softmax_cross_entropy(Tape* tape, const Tensor& logits, std::span<const int> targets);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

// Concatenate along the channel axis; spatial and batch extents must agree.
Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b);

// Per-channel gate: y[n,c,h,w] = x[n,c,h,w] * s[n,c,0,0].
Tensor scale_channels(Tape* tape, const Tensor& x, const Tensor& s);

Tensor sum_all(Tape* tape, const Tensor& x);
Tensor sum_squares(Tape* tape, const Tensor& x);
Tensor scalar_mul(Tape* tape, const Tensor& x, double c);

// Scalar dot product with fixed coefficients; handy for reducing an arbitrary
// op output to a scalar in gradient checks.
Tensor weighted_sum(Tape* tape, const Tensor& x, const std::vector<double>& coeff);

} // namespace greenleaf
