#pragma once

// N-dimensional double tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle; copies share storage and graph node. Ops that
// see an input requiring gradients record a backward closure on the result.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gastkit/common.hpp"

namespace gastkit::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_string(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient arrives
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    /// Gradient storage, zero-filled on first use.
    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    std::size_t rank() const { return p_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return p_->data.size(); }

    std::vector<double>& values() { return p_->data; }
    const std::vector<double>& values() const { return p_->data; }
    double& operator[](std::size_t i) { return p_->data[i]; }
    double operator[](std::size_t i) const { return p_->data[i]; }

    bool has_grad() const { return !p_->grad.empty(); }
    /// Gradient values; zeros when nothing has been accumulated.
    std::vector<double> grad() const;
    void zero_grad() const;

    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool on);
    bool is_leaf() const { return !p_->backward_fn; }

    /// The single value of a one-element tensor.
    double item() const;
    /// Same values, no graph.
    Tensor detach() const;

    /// Reverse-mode accumulation from this scalar into every reachable
    /// tensor that requires gradients. Throws ShapeError for non-scalars and
    /// InvalidArgument when nothing upstream requires gradients.
    void backward() const;

    TensorImpl* impl() const { return p_.get(); }
    const std::shared_ptr<TensorImpl>& shared() const { return p_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> p) : p_(std::move(p)) {}
    friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                              std::function<void(TensorImpl&)>);
    std::shared_ptr<TensorImpl> p_;
};

/// Creates an op output. When gradient recording is on and any input
/// requires gradients, the output keeps the inputs alive and runs
/// `backward` (reading self.grad, accumulating into parents) during
/// Tensor::backward.
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   std::function<void(TensorImpl&)> backward);

bool grad_enabled();

/// Disables graph recording in its scope (inference, finite differences).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Elementwise ops on equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& a);
/// Natural logarithm; inputs must be positive.
Tensor ln(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& a);

}  // namespace gastkit::nn
