#include "gastkit/tensor.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

namespace gastkit::nn {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

}  // namespace

std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::vector<double>& TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : p_(std::make_shared<TensorImpl>()) {
    p_->data.assign(shape_numel(shape), fill);
    p_->shape = std::move(shape);
    p_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) : p_(std::make_shared<TensorImpl>()) {
    if (data.size() != shape_numel(shape)) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
    }
    p_->shape = std::move(shape);
    p_->data = std::move(data);
    p_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Shape{1}, std::vector<double>{v}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
    }
    return p_->shape[axis];
}

std::vector<double> Tensor::grad() const {
    if (p_->grad.empty()) return std::vector<double>(p_->data.size(), 0.0);
    return p_->grad;
}

void Tensor::zero_grad() const { p_->grad.clear(); }

void Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw InvalidArgument("requires_grad can only be changed on leaf tensors");
    p_->requires_grad = on;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return p_->data[0];
}

Tensor Tensor::detach() const { return Tensor(p_->shape, p_->data, false); }

void Tensor::backward() const {
    if (numel() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_string(shape()));
    if (!p_->requires_grad) {
        throw InvalidArgument("backward: loss is not connected to any tensor that requires gradients");
    }
    // Iterative post-order DFS gives a topological order.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{p_.get(), 0}};
    seen.insert(p_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    p_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   std::function<void(TensorImpl&)> backward) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
        if (any) {
            impl->requires_grad = true;
            for (const auto& t : inputs)
                if (t.defined()) impl->parents.push_back(t.shared());
            impl->backward_fn = std::move(backward);
        }
    }
    return Tensor(std::move(impl));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        for (TensorImpl* p : {pa, pb}) {
            if (!p->requires_grad) continue;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
    TensorImpl* pa = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [pa, s](TensorImpl& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
    TensorImpl* pa = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [pa](TensorImpl& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor exp(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
    TensorImpl* pa = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [pa](TensorImpl& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.data[i];
    });
}

Tensor ln(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(a[i] > 0.0)) throw InvalidArgument("ln: non-positive input at index " + std::to_string(i));
        out[i] = std::log(a[i]);
    }
    TensorImpl* pa = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [pa](TensorImpl& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pa->data[i];
    });
}

Tensor square(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * a[i];
    TensorImpl* pa = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [pa](TensorImpl& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[i] * pa->data[i];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    TensorImpl* pa = a.impl();
    return make_result(Shape{1}, {s}, {a}, [pa](TensorImpl& self) {
        auto& g = pa->grad_buffer();
        for (double& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
    }
    TensorImpl* pa = a.impl();
    return make_result(std::move(shape), a.values(), {a}, [pa](TensorImpl& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor flatten(const Tensor& a) {
    if (a.rank() < 2) throw ShapeError("flatten needs rank >= 2, got " + shape_string(a.shape()));
    return reshape(a, Shape{a.dim(0), a.numel() / a.dim(0)});
}

}  // namespace gastkit::nn
