#include "gastkit/grad_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "gastkit/classifier.hpp"
#include "gastkit/nn.hpp"
#include "gastkit/vae.hpp"

namespace gastkit::nn {

namespace {

class Suite {
public:
    explicit Suite(std::uint64_t seed) : rng_(seed) {}

    // Values in +-[0.2, 1.2] keep relu and maxpool inputs away from kinks and ties.
    Tensor random(Shape shape, bool requires_grad = true) {
        std::uniform_real_distribution<double> mag(0.2, 1.2);
        std::bernoulli_distribution sign(0.5);
        Tensor t(std::move(shape));
        for (double& v : t.values()) v = (sign(rng_) ? 1.0 : -1.0) * mag(rng_);
        t.set_requires_grad(requires_grad);
        return t;
    }

    Tensor positive(Shape shape) {
        std::uniform_real_distribution<double> u(0.5, 2.0);
        Tensor t(std::move(shape));
        for (double& v : t.values()) v = u(rng_);
        t.set_requires_grad(true);
        return t;
    }

    // Distinct values so the max in every pooling window is unique.
    Tensor distinct(Shape shape) {
        Tensor t(std::move(shape));
        std::vector<double> v(t.numel());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05 * static_cast<double>(i) - 1.0;
        std::shuffle(v.begin(), v.end(), rng_);
        t.values() = v;
        t.set_requires_grad(true);
        return t;
    }

    // Scalar probe: sum(op(...) * weights) with fixed random weights.
    std::function<Tensor()> probe(std::function<Tensor()> op) {
        const Tensor sample = [&] {
            NoGradGuard g;
            return op();
        }();
        Tensor w = random(sample.shape(), false);
        return [op = std::move(op), w] { return sum(mul(op(), w)); };
    }

    void check(const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
               const std::vector<std::string>& labels) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            for (const auto& t : inputs) t.zero_grad();
            const auto r = grad_check(f, inputs[i]);
            out.push_back(GradCheckEntry{name + "/" + labels[i], r.max_relative_error, r.checked, r.analytic, r.numeric});
        }
    }

    std::vector<GradCheckEntry> out;

private:
    std::mt19937_64 rng_;
};

}  // namespace

std::vector<GradCheckEntry> op_gradient_checks(std::uint64_t seed) {
    Suite s(seed);
    {
        Tensor a = s.random({2, 3}), b = s.random({2, 3});
        s.check("add", s.probe([=] { return add(a, b); }), {a, b}, {"a", "b"});
        s.check("sub", s.probe([=] { return sub(a, b); }), {a, b}, {"a", "b"});
        s.check("mul", s.probe([=] { return mul(a, b); }), {a, b}, {"a", "b"});
        s.check("scale", s.probe([=] { return scale(a, -1.7); }), {a}, {"x"});
        s.check("add_scalar", s.probe([=] { return add_scalar(a, 0.3); }), {a}, {"x"});
        s.check("exp", s.probe([=] { return exp(a); }), {a}, {"x"});
        s.check("square", s.probe([=] { return square(a); }), {a}, {"x"});
        s.check("reshape", s.probe([=] { return reshape(a, {3, 2}); }), {a}, {"x"});
        s.check("mean", [=] { return mean(mul(a, b)); }, {a}, {"x"});
        Tensor p = s.positive({2, 3});
        s.check("ln", s.probe([=] { return ln(p); }), {p}, {"x"});
    }
    {
        Tensor x = s.random({3, 4}), w = s.random({5, 4}), b = s.random({5});
        s.check("dense", s.probe([=] { return dense(x, w, b); }), {x, w, b}, {"x", "w", "b"});
    }
    {
        Tensor x = s.random({2, 2, 5, 6}), k = s.random({3, 2, 3, 3}), b = s.random({3});
        s.check("conv2d", s.probe([=] { return conv2d(x, k, b, {2, 1}, {1, 1}); }), {x, k, b}, {"x", "k", "b"});
    }
    {
        Tensor x = s.random({2, 1, 4, 5, 5}), k = s.random({2, 1, 2, 3, 3}), b = s.random({2});
        s.check("conv3d", s.probe([=] { return conv3d(x, k, b, {1, 2, 2}, {0, 1, 0}); }), {x, k, b},
                {"x", "k", "b"});
    }
    {
        Tensor x = s.random({2, 3, 3, 3}), k = s.random({3, 2, 2, 2}), b = s.random({2});
        s.check("transposed_conv2d", s.probe([=] { return transposed_conv2d(x, k, b, {2, 2}); }), {x, k, b},
                {"x", "k", "b"});
    }
    {
        Tensor x = s.distinct({2, 2, 4, 6});
        s.check("maxpool2d", s.probe([=] { return maxpool2d(x, {2, 2}, {2, 2}); }), {x}, {"x"});
        Tensor y = s.distinct({1, 2, 3, 4, 4});
        s.check("maxpool3d", s.probe([=] { return maxpool3d(y, {2, 2, 2}, {1, 2, 2}); }), {y}, {"x"});
    }
    {
        Tensor x = s.random({4, 3, 2, 2}), g = s.random({3}), b = s.random({3});
        Tensor rm(Shape{3}, 0.1), rv(Shape{3}, 1.3);
        s.check("batchnorm_train", s.probe([=]() mutable { return batchnorm(x, g, b, rm, rv, true); }), {x, g, b},
                {"x", "gamma", "beta"});
        s.check("batchnorm_eval", s.probe([=]() mutable { return batchnorm(x, g, b, rm, rv, false); }), {x, g, b},
                {"x", "gamma", "beta"});
        Tensor d = s.random({5, 3});
        s.check("batchnorm_dense", s.probe([=]() mutable { return batchnorm(d, g, b, rm, rv, true); }), {d}, {"x"});
    }
    {
        Tensor x = s.random({3, 4}), a = s.random({1});
        s.check("relu", s.probe([=] { return relu(x); }), {x}, {"x"});
        s.check("prelu", s.probe([=] { return prelu(x, a); }), {x, a}, {"x", "slope"});
        s.check("softmax_axis1", s.probe([=] { return softmax(x, 1); }), {x}, {"x"});
        Tensor y = s.random({2, 3, 4});
        s.check("softmax_axis1_rank3", s.probe([=] { return softmax(y, 1); }), {y}, {"x"});
        s.check("softmax_cross_entropy", [=] { return softmax_cross_entropy(x, {0, 3, 1}); }, {x}, {"logits"});
    }
    {
        Tensor p = s.random({2, 5}), t = s.random({2, 5});
        s.check("smooth_l1", [=] { return smooth_l1(p, t, 1.0); }, {p, t}, {"pred", "target"});
        Tensor mu = s.random({3, 4}), lv = s.random({3, 4});
        s.check("kl_standard_normal", [=] { return kl_standard_normal(mu, lv); }, {mu, lv}, {"mu", "logvar"});
        Tensor a = s.random({2, 1, 8, 8}), b = s.random({2, 1, 8, 8});
        s.check("laplacian_pyramid_loss", [=] { return laplacian_pyramid_loss(a, b, 3); }, {a, b}, {"pred", "target"});
    }
    return s.out;
}

std::vector<GradCheckEntry> model_gradient_checks(std::uint64_t seed, std::size_t coords) {
    // Deep relu stacks: a small step keeps the probe on one side of every
    // kink, and the larger floor absorbs the rounding that step brings.
    std::vector<GradCheckEntry> out;
    Suite s(seed);
    auto run = [&](const std::string& prefix, const std::function<Tensor()>& f, ParameterSet& ps, Tensor x) {
        std::uint64_t k = 0;
        auto one = [&](const std::string& name, const Tensor& t) {
            ps.zero_grad();
            x.zero_grad();
            const auto r = grad_check(f, t, 1e-7, coords, derive_seed(seed, k++), 1e-4);
            out.push_back(GradCheckEntry{prefix + "/" + name, r.max_relative_error, r.checked, r.analytic, r.numeric});
        };
        for (const auto& p : ps.trainable()) one(p.name, p.tensor);
        one("input", x);
    };

    {
        auto cfg = VaeConfig::desk();
        cfg.seed = seed;
        auto vae = std::make_shared<Vae>(cfg);
        const std::size_t side = cfg.input_side;
        Tensor x = s.random({2, 1, side, side});
        const Tensor target = s.random({2, 1, side, side}, false);
        const Tensor eps = s.random({2, cfg.latent_dim}, false);
        auto f = [vae, x, target, eps, cfg] {
            const auto o = vae->forward(x, eps, true);
            return vae_loss(o.reconstruction, target, o.mu, o.logvar, 0.5, cfg.pyramid_levels, cfg.smooth_l1_beta)
                .total;
        };
        run("vae", f, vae->params(), x);
    }
    {
        auto cfg = ClassifierConfig::desk();
        cfg.seed = seed;
        auto clf = std::make_shared<Classifier>(cfg);
        Tensor x = s.random({2, 1, cfg.sequence_length, cfg.side, cfg.side});
        const std::vector<int> labels{static_cast<int>(seed % cfg.classes), static_cast<int>((seed + 4) % cfg.classes)};
        auto f = [clf, x, labels] { return softmax_cross_entropy(clf->logits(x), labels); };
        run("classifier", f, clf->params(), x);
    }
    return out;
}

}  // namespace gastkit::nn
