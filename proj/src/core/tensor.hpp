#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "common.hpp"

namespace greenleaf {

// Batched NCHW shape. Every value in the system is a 4-D tensor; vectors are
// carried as (N,F,1,1) and scalars as (1,1,1,1).
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape& o) const = default;
    std::string str() const { return concat("(", n, ",", c, ",", h, ",", w, ")"); }
};

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s, bool requires_grad = false) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            fail(ErrorKind::dimension, "tensor shape has a negative extent: ", s.str());
        impl_ = std::make_shared<Impl>();
        impl_->shape = s;
        impl_->values.assign(static_cast<std::size_t>(s.numel()), 0.0);
        impl_->requires_grad = requires_grad;
    }

    Tensor(int n, int c, int h, int w, bool requires_grad = false)
        : Tensor(Shape{n, c, h, w}, requires_grad) {}

    static Tensor full(Shape s, double value, bool requires_grad = false) {
        Tensor t(s, requires_grad);
        for (auto& v : t.impl_->values) v = value;
        return t;
    }

    static Tensor scalar(double value) {
        Tensor t(Shape{1, 1, 1, 1});
        t.impl_->values[0] = value;
        return t;
    }

    static Tensor from_values(Shape s, std::vector<double> values, bool requires_grad = false) {
        if (static_cast<std::int64_t>(values.size()) != s.numel())
            fail(ErrorKind::dimension, "value count ", values.size(), " does not match shape ",
                 s.str());
        Tensor t;
        t.impl_ = std::make_shared<Impl>();
        t.impl_->shape = s;
        t.impl_->values = std::move(values);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t size() const { return impl_->shape.numel(); }

    double* data() { return impl_->values.data(); }
    const double* data() const { return impl_->values.data(); }
    std::vector<double>& values() { return impl_->values; }
    const std::vector<double>& values() const { return impl_->values; }

    double& at(int n, int c, int h, int w) { return impl_->values[offset(n, c, h, w)]; }
    double at(int n, int c, int h, int w) const { return impl_->values[offset(n, c, h, w)]; }

    double item() const {
        if (size() != 1)
            fail(ErrorKind::dimension, "item() on non-scalar tensor of shape ", shape().str());
        return impl_->values[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<double>& grad() {
        ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad() const { return impl_->grad; }
    void ensure_grad() {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
    }
    void clear_grad() { impl_->grad.clear(); }

    // Deep copy of the values (grad not copied).
    Tensor clone() const {
        Tensor t;
        t.impl_ = std::make_shared<Impl>();
        t.impl_->shape = impl_->shape;
        t.impl_->values = impl_->values;
        t.impl_->requires_grad = impl_->requires_grad;
        return t;
    }

    // Identity of the underlying storage; two handles compare equal iff they
    // alias the same tensor.
    const void* id() const { return impl_.get(); }

private:
    struct Impl {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty until touched
        bool requires_grad = false;
    };

    std::size_t offset(int n, int c, int h, int w) const {
        const Shape& s = impl_->shape;
        return static_cast<std::size_t>(((static_cast<std::int64_t>(n) * s.c + c) * s.h + h) * s.w +
                                        w);
    }

    std::shared_ptr<Impl> impl_;
};

inline bool all_finite(const Tensor& t) {
    for (const double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace greenleaf
