#pragma once

#include <functional>
#include <vector>

#include "tensor.hpp"

namespace greenleaf {

// Records one entry per forward op, in execution order, which keeps the list
// topologically sorted by construction. backward() walks it once, in reverse.
class Tape {
public:
    void record(Tensor output, std::function<void(const Tensor& out)> pull_grads) {
        entries_.push_back(Entry{std::move(output), std::move(pull_grads)});
    }

    // Seeds d(loss)/d(loss) = 1 and propagates to every recorded input with
    // requires_grad. The loss must be scalar.
    void backward(Tensor loss) {
        if (loss.size() != 1)
            fail(ErrorKind::argument, "backward() expects a scalar loss, got shape ",
                 loss.shape().str());
        loss.ensure_grad();
        loss.grad()[0] += 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (!it->output.has_grad()) continue;  // nothing consumed this op's output
            it->pull(it->output);
        }
    }

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    struct Entry {
        Tensor output;
        std::function<void(const Tensor&)> pull;
    };
    std::vector<Entry> entries_;
};

// Accumulate grad into `t` if it participates in differentiation.
inline void accumulate_grad(Tensor& t, std::size_t index, double v) {
    t.grad()[index] += v;
}

// Central-difference gradient estimate of a scalar function of one tensor:
// g_i = (f(x + h e_i) - f(x - h e_i)) / 2h. Used as the independent oracle
// for every backward rule; it only ever calls the forward path.
inline std::vector<double> finite_difference_grad(const std::function<double(const Tensor&)>& f,
                                                  const Tensor& x, double h) {
    if (h <= 0.0) fail(ErrorKind::parameter, "finite difference step must be positive, got ", h);
    Tensor probe = x.clone();
    std::vector<double> grad(static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double saved = probe.values()[i];
        probe.values()[i] = saved + h;
        const double fplus = f(probe);
        probe.values()[i] = saved - h;
        const double fminus = f(probe);
        probe.values()[i] = saved;
        grad[i] = (fplus - fminus) / (2.0 * h);
    }
    return grad;
}

} // namespace greenleaf
