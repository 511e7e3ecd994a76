#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gastkit/grad_suite.hpp"
#include "gastkit/nn.hpp"

using namespace gastkit;
using namespace gastkit::nn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = n(rng);
    t.set_requires_grad(requires_grad);
    return t;
}

// Direct nested-loop convolution.
std::vector<double> naive_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t s, std::size_t p) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const std::size_t oh = (h + 2 * p - kh) / s + 1, ow = (w + 2 * p - kw) / s + 1;
    std::vector<double> y(n * co * oh * ow, 0.0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = b[o];
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t u = 0; u < kh; ++u)
                            for (std::size_t v = 0; v < kw; ++v) {
                                const long r = static_cast<long>(i * s + u) - static_cast<long>(p);
                                const long q = static_cast<long>(j * s + v) - static_cast<long>(p);
                                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                                acc += x[((a * c + ci) * h + r) * w + q] * k[((o * c + ci) * kh + u) * kw + v];
                            }
                    y[((a * co + o) * oh + i) * ow + j] = acc;
                }
    return y;
}

}  // namespace

TEST_CASE("backward of simple reductions") {
    Tensor x(Shape{3}, std::vector<double>{1, 2, 3}, true);
    sum(x).backward();
    CHECK(x.grad() == std::vector<double>{1, 1, 1});
    x.zero_grad();
    sum(square(x)).backward();
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
    x.zero_grad();
    // Gradients add up across uses.
    sum(add(mul(x, x), x)).backward();
    CHECK(x.grad() == std::vector<double>{3, 5, 7});
}

TEST_CASE("backward errors") {
    Tensor x(Shape{2}, std::vector<double>{1, 2}, true);
    CHECK_THROWS_AS(scale(x, 2.0).backward(), ShapeError);
    Tensor c(Shape{2}, std::vector<double>{1, 2}, false);
    CHECK_THROWS_AS(sum(c).backward(), InvalidArgument);
    {
        NoGradGuard g;
        CHECK_FALSE(sum(x).requires_grad());
    }
    CHECK(sum(x).requires_grad());
    CHECK_THROWS_AS(add(x, Tensor(Shape{3})), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1}), ShapeError);
}

TEST_CASE("conv2d identity kernel and naive oracle") {
    std::mt19937_64 rng(1);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor id(Shape{3, 3, 1, 1});
    for (std::size_t c = 0; c < 3; ++c) id[c * 3 + c] = 1.0;
    CHECK(conv2d(x, id, Tensor()).values() == x.values());

    for (auto [s, p] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {3, 2}}) {
        Tensor k = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
        const auto y = conv2d(x, k, b, {s, s}, {p, p});
        const auto ref = naive_conv2d(x, k, b, s, p);
        REQUIRE(y.values().size() == ref.size());
        double worst = 0;
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
        CHECK(worst <= 1e-12);
    }
    CHECK_THROWS_AS(conv2d(x, Tensor(Shape{1, 2, 3, 3}), Tensor()), ShapeError);
    CHECK_THROWS_AS(conv2d(x, Tensor(Shape{1, 3, 9, 9}), Tensor()), ShapeError);
}

TEST_CASE("maxpool2d example") {
    Tensor x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const auto y = maxpool2d(x, {2, 2}, {2, 2});
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 4.0);
}

TEST_CASE("conv3d extents at the large geometry") {
    Tensor x(Shape{1, 1, 7, 256, 256}, 0.5);
    Tensor k(Shape{32, 1, 6, 8, 8}, 0.01);
    const auto y = conv3d(x, k, Tensor(), {1, 4, 4});
    CHECK(y.shape() == Shape{1, 32, 2, 63, 63});
    CHECK(y[0] == doctest::Approx(0.5 * 0.01 * 384));
    CHECK_THROWS_AS(maxpool3d(y, {6, 8, 8}, {1, 4, 4}), ShapeError);
    CHECK(maxpool3d(y, {2, 8, 8}, {1, 4, 4}).shape() == Shape{1, 32, 1, 14, 14});
}

TEST_CASE("transposed conv output extent") {
    Tensor x(Shape{1, 2, 4, 4}, 1.0);
    Tensor k(Shape{2, 3, 2, 2}, 1.0);
    const auto y = transposed_conv2d(x, k, Tensor(), {2, 2});
    CHECK(y.shape() == Shape{1, 3, 8, 8});
    for (double v : y.values()) CHECK(v == 2.0);
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(2);
    const auto x = random_tensor({5, 9}, rng);
    const auto y = softmax(scale(x, 10.0), 1);
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 9; ++j) {
            CHECK(y[i * 9 + j] > 0.0);
            CHECK(y[i * 9 + j] < 1.0);
            s += y[i * 9 + j];
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    const auto u = softmax(Tensor(Shape{1, 9}, 0.7), 1);
    for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 9));
}

TEST_CASE("batchnorm training statistics") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({6, 3, 4, 4}, rng);
    for (double& v : x.values()) v = 3.0 * v + 2.0;
    Tensor g(Shape{3}, 1.0), b(Shape{3}, 0.0), rm(Shape{3}, 0.0), rv(Shape{3}, 1.0);
    const auto y = batchnorm(x, g, b, rm, rv, true, 0.1, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, ss = 0;
        std::size_t cnt = 0;
        for (std::size_t n = 0; n < 6; ++n)
            for (std::size_t i = 0; i < 16; ++i) {
                const double v = y[(n * 3 + c) * 16 + i];
                s += v;
                ss += v * v;
                ++cnt;
            }
        CHECK(std::abs(s / cnt) <= 1e-6);
        CHECK(std::abs(ss / cnt - 1.0) <= 1e-6);
        CHECK(rm[c] != 0.0);
    }
}

TEST_CASE("smooth l1, kl and pyramid examples") {
    const Tensor z(Shape{1}, std::vector<double>{0.0});
    CHECK(smooth_l1(Tensor(Shape{1}, std::vector<double>{0.5}), z).item() == doctest::Approx(0.125));
    CHECK(smooth_l1(Tensor(Shape{1}, std::vector<double>{2.0}), z).item() == doctest::Approx(1.5));
    CHECK(smooth_l1(z, z).item() == 0.0);

    CHECK(kl_standard_normal(Tensor(Shape{1, 1}, 0.0), Tensor(Shape{1, 1}, 0.0)).item() == 0.0);
    CHECK(kl_standard_normal(Tensor(Shape{1, 1}, 1.0), Tensor(Shape{1, 1}, 0.0)).item() == doctest::Approx(0.5));
    CHECK(kl_standard_normal(Tensor(Shape{1, 1}, 0.0), Tensor(Shape{1, 1}, std::log(4.0))).item() ==
          doctest::Approx(-0.5 * (1 + std::log(4.0) - 4)));

    std::mt19937_64 rng(4);
    const auto a = random_tensor({2, 1, 16, 16}, rng), b = random_tensor({2, 1, 16, 16}, rng);
    CHECK(laplacian_pyramid_loss(a, a, 4).item() == 0.0);
    CHECK(laplacian_pyramid_loss(a, b, 1).item() == doctest::Approx(smooth_l1(a, b).item()).epsilon(1e-14));
    CHECK_THROWS_AS(laplacian_pyramid_loss(Tensor(Shape{1, 1, 12, 12}), Tensor(Shape{1, 1, 12, 12}), 4),
                    InvalidArgument);

    // Linear branch: scaling every difference by 2 doubles the loss.
    Tensor big = scale(sub(a, b), 100.0);
    Tensor zero(big.shape(), 0.0);
    const double l1 = laplacian_pyramid_loss(big, zero, 3, 1e-6).item();
    const double l2 = laplacian_pyramid_loss(scale(big, 2.0), zero, 3, 1e-6).item();
    CHECK(l2 == doctest::Approx(2 * l1).epsilon(1e-6));
}

TEST_CASE("laplacian bands reconstruct the image") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> img(32 * 32);
    for (double& v : img) v = n(rng);
    const auto bands = laplacian_bands(img, 32, 32, 4);
    REQUIRE(bands.size() == 4);
    CHECK(bands[0].size() == 1024);
    CHECK(bands[3].size() == 16);
    // Constant image: all detail bands vanish, residual keeps the constant.
    const auto flat = laplacian_bands(std::vector<double>(64, 2.0), 8, 8, 3);
    for (double v : flat[0]) CHECK(std::abs(v) < 1e-12);
    for (double v : flat[2]) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("every op passes the finite-difference check") {
    for (std::uint64_t seed : {1u, 2u}) {
        for (const auto& e : op_gradient_checks(seed)) {
            CHECK_MESSAGE(e.max_relative_error <= 1e-3, e.name << " error " << e.max_relative_error);
            CHECK(e.checked > 0);
        }
    }
}

TEST_CASE("grad_check on a linear function is exact") {
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({4}, rng, true);
    Tensor w = random_tensor({4}, rng);
    const auto r = grad_check([&] { return sum(mul(x, w)); }, x);
    CHECK(r.max_relative_error <= 1e-9);
    CHECK(r.checked == 4);
}

TEST_CASE("adam") {
    ParameterSet ps;
    Tensor w = ps.add("w", Tensor(Shape{3}, std::vector<double>{1, 2, 3}));
    Adam opt(ps.trainable(), AdamConfig{0.01});
    // Zero gradient leaves parameters unchanged.
    sum(scale(w, 0.0)).backward();
    opt.step();
    CHECK(w.values() == std::vector<double>{1, 2, 3});

    ParameterSet ps2;
    Tensor v = ps2.add("v", Tensor(Shape{2}, std::vector<double>{0.5, -0.5}));
    Adam opt2(ps2.trainable(), AdamConfig{0.01});
    sum(scale(v, 3.0)).backward();
    opt2.step();
    CHECK(v[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(-0.5 - 0.01).epsilon(1e-6));

    Tensor stray = Tensor(Shape{1}, 1.0, true);
    CHECK_THROWS_AS(opt2.step({Parameter{"stray", stray, true}}), InvalidArgument);
    CHECK_THROWS_AS(ps2.add("v", Tensor(Shape{1})), InvariantViolation);
    auto dup = ps2.trainable();
    dup.push_back(dup[0]);
    CHECK_THROWS_AS(Adam(dup, AdamConfig{}), InvariantViolation);
}

TEST_CASE("adam trajectories are deterministic") {
    auto run = [] {
        std::mt19937_64 rng(7);
        ParameterSet ps;
        Dense d(ps, "d", 3, 2, rng);
        Adam opt(ps.trainable(), AdamConfig{0.05});
        Tensor x = random_tensor({4, 3}, rng);
        for (int i = 0; i < 20; ++i) {
            opt.zero_grad();
            sum(square(d(x))).backward();
            opt.step();
        }
        return ps.snapshot();
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
    std::mt19937_64 rng(8);
    ParameterSet ps;
    Conv2d c(ps, "conv", 2, 3, {3, 3}, {1, 1}, {1, 1}, rng);
    BatchNorm bn(ps, "bn", 3);
    bn.running_mean[1] = 0.25;
    const auto path = std::filesystem::temp_directory_path() / "gastkit_test.ckpt";
    save_checkpoint(path, ps);

    std::mt19937_64 rng2(99);
    ParameterSet other;
    Conv2d c2(other, "conv", 2, 3, {3, 3}, {1, 1}, {1, 1}, rng2);
    BatchNorm bn2(other, "bn", 3);
    CHECK(other.snapshot() != ps.snapshot());
    load_checkpoint(path, other);
    CHECK(other.snapshot() == ps.snapshot());

    ParameterSet wrong;
    Conv2d c3(wrong, "conv", 2, 4, {3, 3}, {1, 1}, {1, 1}, rng2);
    BatchNorm bn3(wrong, "bn", 4);
    CHECK_THROWS_AS(load_checkpoint(path, wrong), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("full models pass finite-difference checks") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (const auto& e : model_gradient_checks(seed, 2)) {
            INFO(e.name << " seed " << seed << " analytic " << e.analytic << " numeric " << e.numeric);
            CHECK(e.checked > 0);
            CHECK(e.max_relative_error <= 1e-3);
        }
    }
}
