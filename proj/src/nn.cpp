#include "gastkit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gastkit/binary_io.hpp"

namespace gastkit::nn {

Tensor ParameterSet::add(std::string name, Tensor tensor, bool trainable) {
    for (const auto& p : params_) {
        if (p.name == name) throw InvariantViolation("parameter '" + name + "' registered twice");
        if (p.tensor.impl() == tensor.impl()) throw InvariantViolation("tensor registered twice as '" + name + "'");
    }
    tensor.set_requires_grad(trainable);
    params_.push_back(Parameter{std::move(name), tensor, trainable});
    return tensor;
}

std::vector<Parameter> ParameterSet::trainable() const {
    std::vector<Parameter> out;
    for (const auto& p : params_)
        if (p.trainable) out.push_back(p);
    return out;
}

const Parameter& ParameterSet::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw InvalidArgument("no parameter named '" + name + "'");
}

std::size_t ParameterSet::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.trainable) n += p.tensor.numel();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<std::vector<double>> ParameterSet::snapshot() const {
    std::vector<std::vector<double>> out;
    for (const auto& p : params_) out.push_back(p.tensor.values());
    return out;
}

void ParameterSet::restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != params_.size()) throw ShapeError("restore: snapshot has a different parameter count");
    for (std::size_t i = 0; i < values.size(); ++i) {
        Tensor t = params_[i].tensor;
        if (values[i].size() != t.numel()) throw ShapeError("restore: size mismatch for '" + params_[i].name + "'");
        t.values() = values[i];
    }
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = u(rng);
    return t;
}

Dense::Dense(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
             bool with_bias) {
    weight = ps.add(name + ".weight", kaiming_uniform({out, in}, in, rng));
    if (with_bias) bias = ps.add(name + ".bias", Tensor(Shape{out}));
}

Conv2d::Conv2d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Extent2 kernel,
               Extent2 stride_, Extent2 pad_, std::mt19937_64& rng, bool with_bias)
    : stride(stride_), pad(pad_) {
    weight = ps.add(name + ".weight", kaiming_uniform({out, in, kernel[0], kernel[1]}, in * kernel[0] * kernel[1], rng));
    if (with_bias) bias = ps.add(name + ".bias", Tensor(Shape{out}));
}

TransposedConv2d::TransposedConv2d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                                   Extent2 kernel, Extent2 stride_, std::mt19937_64& rng, bool with_bias)
    : stride(stride_) {
    weight = ps.add(name + ".weight", kaiming_uniform({in, out, kernel[0], kernel[1]}, in * kernel[0] * kernel[1], rng));
    if (with_bias) bias = ps.add(name + ".bias", Tensor(Shape{out}));
}

Conv3d::Conv3d(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Extent3 kernel,
               Extent3 stride_, Extent3 pad_, std::mt19937_64& rng, bool with_bias)
    : stride(stride_), pad(pad_) {
    weight = ps.add(name + ".weight", kaiming_uniform({out, in, kernel[0], kernel[1], kernel[2]},
                                                     in * kernel[0] * kernel[1] * kernel[2], rng));
    if (with_bias) bias = ps.add(name + ".bias", Tensor(Shape{out}));
}

BatchNorm::BatchNorm(ParameterSet& ps, const std::string& name, std::size_t channels) {
    gamma = ps.add(name + ".gamma", Tensor(Shape{channels}, 1.0));
    beta = ps.add(name + ".beta", Tensor(Shape{channels}, 0.0));
    running_mean = ps.add(name + ".running_mean", Tensor(Shape{channels}, 0.0), false);
    running_var = ps.add(name + ".running_var", Tensor(Shape{channels}, 1.0), false);
}

PRelu::PRelu(ParameterSet& ps, const std::string& name, double initial) {
    slope = ps.add(name + ".slope", Tensor(Shape{1}, initial));
}

// ---------------------------------------------------------------------------

Adam::Adam(const std::vector<Parameter>& params, AdamConfig config) : config_(config) {
    for (const auto& p : params) {
        if (!p.trainable) continue;
        for (const auto& s : slots_) {
            if (s.param.tensor.impl() == p.tensor.impl()) {
                throw InvariantViolation("parameter '" + p.name + "' appears twice in the optimizer registry");
            }
        }
        slots_.push_back(Slot{p, std::vector<double>(p.tensor.numel(), 0.0), std::vector<double>(p.tensor.numel(), 0.0)});
    }
}

void Adam::update(Slot& s) {
    Tensor t = s.param.tensor;
    if (!t.has_grad()) return;
    const auto g = t.grad();
    auto& w = t.values();
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = s.m[i] / c1, vhat = s.v[i] / c2;
        w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
}

void Adam::step() {
    ++t_;
    for (auto& s : slots_) update(s);
}

void Adam::step(const std::vector<Parameter>& params) {
    std::vector<Slot*> chosen;
    for (const auto& p : params) {
        auto it = std::find_if(slots_.begin(), slots_.end(),
                               [&](const Slot& s) { return s.param.tensor.impl() == p.tensor.impl(); });
        if (it == slots_.end()) throw InvalidArgument("Adam: parameter '" + p.name + "' is not registered");
        chosen.push_back(&*it);
    }
    ++t_;
    for (Slot* s : chosen) update(*s);
}

void Adam::zero_grad() {
    for (auto& s : slots_) s.param.tensor.zero_grad();
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    binio::put_bytes(out, "GASTNN1");
    binio::put(out, static_cast<std::uint32_t>(params.all().size()));
    for (const auto& p : params.all()) {
        binio::put(out, static_cast<std::uint32_t>(p.name.size()));
        binio::put_bytes(out, p.name);
        binio::put(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (std::size_t e : p.tensor.shape()) binio::put(out, static_cast<std::uint32_t>(e));
        for (double v : p.tensor.values()) binio::put(out, v);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    binio::expect_magic(in, "GASTNN1");
    const auto count = binio::get<std::uint32_t>(in, "tensor count");
    if (count != params.all().size()) {
        throw FormatError(path.string() + ": checkpoint holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.all().size()));
    }
    std::vector<std::vector<double>> values;
    for (const auto& p : params.all()) {
        const auto len = binio::get<std::uint32_t>(in, "name length");
        const std::string name = binio::get_bytes(in, len, "name");
        if (name != p.name) throw FormatError(path.string() + ": expected tensor '" + p.name + "', found '" + name + "'");
        const auto rank = binio::get<std::uint32_t>(in, "rank");
        Shape shape(rank);
        for (auto& e : shape) e = binio::get<std::uint32_t>(in, "extent");
        if (shape != p.tensor.shape()) {
            throw FormatError(path.string() + ": tensor '" + name + "' has shape " + shape_string(shape) +
                              ", model expects " + shape_string(p.tensor.shape()));
        }
        std::vector<double> v(p.tensor.numel());
        for (double& x : v) x = binio::get<double>(in, "tensor data");
        values.push_back(std::move(v));
    }
    params.restore(values);
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Tensor()>& f, Tensor x, double h, std::size_t max_coords,
                           std::uint64_t seed, double floor) {
    if (!x.requires_grad()) throw InvalidArgument("grad_check: x must require gradients");
    x.zero_grad();
    const Tensor loss = f();
    loss.backward();
    const auto analytic = x.grad();

    std::vector<std::size_t> coords(x.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && max_coords < coords.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(max_coords);
        std::sort(coords.begin(), coords.end());
    }

    GradCheckResult r;
    NoGradGuard guard;
    for (std::size_t i : coords) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f().item();
        x[i] = saved - h;
        const double fm = f().item();
        x[i] = saved;
        const double num = (fp - fm) / (2.0 * h);
        const double a = analytic[i];
        const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
        if (r.checked == 0 || rel > r.max_relative_error) {
            r.max_relative_error = rel;
            r.worst_index = i;
            r.analytic = a;
            r.numeric = num;
        }
        ++r.checked;
    }
    x.zero_grad();
    return r;
}

}  // namespace gastkit::nn
