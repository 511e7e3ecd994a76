#pragma once

// Parameters, layer building blocks, Adam, checkpoints and finite-difference
// gradient checking on top of the tensor ops.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gastkit/nn_ops.hpp"
#include "gastkit/tensor.hpp"

namespace gastkit::nn {

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;  // false for buffers such as running statistics
};

/// Ordered, uniquely named collection of a model's tensors.
class ParameterSet {
public:
    /// Throws InvariantViolation on a duplicate name or tensor.
    Tensor add(std::string name, Tensor tensor, bool trainable = true);

    const std::vector<Parameter>& all() const { return params_; }
    std::vector<Parameter> trainable() const;
    const Parameter& get(const std::string& name) const;
    std::size_t trainable_count() const;  // total trainable scalars

    void zero_grad();
    /// Deep copy of every tensor's values, in order.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

private:
    std::vector<Parameter> params_;
};

/// Uniform(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

struct Dense {
    Tensor weight, bias;
    Dense() = default;
    Dense(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
          bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return dense(x, weight, bias); }
};

struct Conv2d {
    Tensor weight, bias;
    Extent2 stride{1, 1}, pad{0, 0};
    Conv2d() = default;
    Conv2d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Extent2 kernel, Extent2 stride,
           Extent2 pad, std::mt19937_64& rng, bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct TransposedConv2d {
    Tensor weight, bias;
    Extent2 stride{1, 1};
    TransposedConv2d() = default;
    TransposedConv2d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Extent2 kernel,
                     Extent2 stride, std::mt19937_64& rng, bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return transposed_conv2d(x, weight, bias, stride); }
};

struct Conv3d {
    Tensor weight, bias;
    Extent3 stride{1, 1, 1}, pad{0, 0, 0};
    Conv3d() = default;
    Conv3d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Extent3 kernel, Extent3 stride,
           Extent3 pad, std::mt19937_64& rng, bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return conv3d(x, weight, bias, stride, pad); }
};

struct BatchNorm {
    Tensor gamma, beta, running_mean, running_var;
    BatchNorm() = default;
    BatchNorm(ParameterSet& ps, const std::string& name, std::size_t channels);
    Tensor operator()(const Tensor& x, bool training) {
        return batchnorm(x, gamma, beta, running_mean, running_var, training);
    }
};

struct PRelu {
    Tensor slope;
    PRelu() = default;
    PRelu(ParameterSet& ps, const std::string& name, double initial = 0.25);
    Tensor operator()(const Tensor& x) const { return prelu(x, slope); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a fixed registry of trainable tensors.
class Adam {
public:
    Adam(const std::vector<Parameter>& params, AdamConfig config);

    /// Updates every registered parameter from its accumulated gradient.
    void step();
    /// Updates only the given parameters; throws InvalidArgument for a
    /// parameter that was never registered.
    void step(const std::vector<Parameter>& params);
    void zero_grad();

    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }
    void set_lr(double lr) { config_.lr = lr; }

private:
    struct Slot {
        Parameter param;
        std::vector<double> m, v;
    };
    void update(Slot& s);
    std::vector<Slot> slots_;
    AdamConfig config_;
    std::uint64_t t_ = 0;
};

/// "GASTNN1" archive: u32 count, then per tensor name length, name bytes,
/// u32 rank, u32 extents, f64 data.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
/// Loads into an identically structured set; throws FormatError on a name
/// or shape mismatch.
void load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares backward() of the scalar f against central differences in x.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
/// When max_coords > 0 only that many coordinates (chosen with `seed`) are
/// checked.
GradCheckResult grad_check(const std::function<Tensor()>& f, Tensor x, double h = 1e-5, std::size_t max_coords = 0,
                           std::uint64_t seed = 0, double floor = 1e-6);

}  // namespace gastkit::nn
