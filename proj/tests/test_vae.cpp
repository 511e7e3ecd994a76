#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gastkit/text_io.hpp"
#include "gastkit/vae.hpp"

using namespace gastkit;
using nn::Tensor;

namespace {

VaeConfig tiny_config() {
    VaeConfig c;
    c.input_side = 16;
    c.feature_maps = {2, 3, 4};
    c.latent_dim = 3;
    c.fc_widths = {8, 4};
    c.pyramid_levels = 2;
    c.epochs = 3;
    c.lr = 1e-3;
    c.batch_size = 4;
    c.seed = 5;
    return c;
}

std::vector<Fcm> random_fcms(std::size_t count, std::size_t side, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Fcm> out;
    for (std::size_t i = 0; i < count; ++i) {
        Fcm f;
        f.values = Matrix(side, side);
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = r; c < side; ++c) f.values(r, c) = f.values(c, r) = (r == c) ? 1.0 : u(rng);
        f.device_id = "dev" + std::to_string(i % 3);
        f.date = TimeCode::make(2020, 1, 1).plus_days(static_cast<int>(i));
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace

TEST_CASE("beta schedule") {
    CHECK(beta_schedule(0, 700, 1e-4) == 0.0);
    CHECK(beta_schedule(350, 700, 1e-4) == 5e-5);
    CHECK(beta_schedule(700, 700, 1e-4) == 1e-4);
    CHECK(beta_schedule(1400, 700, 1e-4) == 1e-4);
    CHECK_THROWS_AS(beta_schedule(1, 0, 1e-4), InvalidArgument);

    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> e(0, 3000);
    for (int i = 0; i < 200; ++i) {
        const std::size_t a = e(rng), b = e(rng);
        const double ba = beta_schedule(a, 700, 1e-4), bb = beta_schedule(b, 700, 1e-4);
        CHECK(ba <= 1e-4);
        if (a <= b) CHECK(ba <= bb);
    }
}

TEST_CASE("config validation") {
    VaeConfig c = VaeConfig::desk();
    CHECK_NOTHROW(c.validate());
    c.input_side = 60;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = VaeConfig::desk();
    c.latent_dim = 0;
    CHECK_THROWS_AS(Vae{c}, InvalidArgument);
    c = VaeConfig::desk();
    c.pyramid_levels = 5;
    c.input_side = 8;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    CHECK(VaeConfig::paper().input_side == 128);
    CHECK(VaeConfig::paper().lr == 1e-5);
    CHECK(VaeConfig::paper().epochs == 2000);
}

TEST_CASE("desk model layout") {
    Vae m(VaeConfig::desk());
    // Three halvings of 64 leave a 32 x 8 x 8 map in front of the dense trunk.
    CHECK(m.params().get("enc.fc1.weight").tensor.shape() == nn::Shape{256, 2048});
    CHECK(m.params().get("enc.fc2.weight").tensor.shape() == nn::Shape{128, 256});
    CHECK(m.params().get("enc.mu.weight").tensor.shape() == nn::Shape{16, 128});
    CHECK(m.params().get("dec.fc3.weight").tensor.shape() == nn::Shape{2048, 256});
    CHECK(m.params().get("dec.out.weight").tensor.shape() == nn::Shape{1, 8, 1, 1});

    Tensor x(nn::Shape{2, 1, 64, 64}, 0.1);
    nn::NoGradGuard g;
    const auto out = m.forward(x, Tensor(), true);
    CHECK(out.reconstruction.shape() == x.shape());
    CHECK(out.mu.shape() == nn::Shape{2, 16});
    CHECK_THROWS_AS(m.encode(Tensor(nn::Shape{1, 1, 32, 32}), false), ShapeError);
}

TEST_CASE("initialization is seeded") {
    const auto c = tiny_config();
    Vae a(c), b(c);
    CHECK(a.params().snapshot() == b.params().snapshot());
    auto c2 = c;
    c2.seed = 6;
    Vae d(c2);
    CHECK(a.params().snapshot() != d.params().snapshot());
}

TEST_CASE("loss composition") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0, 1);
    Tensor x(nn::Shape{2, 1, 8, 8});
    for (double& v : x.values()) v = n(rng);
    const Tensor zero(nn::Shape{2, 4}, 0.0);
    const auto l0 = vae_loss(x, x, zero, zero, 1e-4, 2);
    CHECK(l0.total.item() == 0.0);
    CHECK(l0.rec.item() == 0.0);
    CHECK(l0.kl.item() == 0.0);

    Tensor y(x.shape());
    for (double& v : y.values()) v = n(rng);
    Tensor mu(nn::Shape{2, 4}), lv(nn::Shape{2, 4});
    for (double& v : mu.values()) v = n(rng);
    for (double& v : lv.values()) v = 0.3 * n(rng);
    const auto a = vae_loss(y, x, mu, lv, 0.0, 2);
    CHECK(a.total.item() == a.rec.item());
    const auto b = vae_loss(y, x, mu, lv, 1e-4, 2);
    CHECK(b.total.item() == a.rec.item() + 1e-4 * b.kl.item());
    CHECK(b.kl.item() > 0.0);
}

TEST_CASE("encoding is deterministic") {
    Vae m(tiny_config());
    const auto fcms = random_fcms(5, 16, 1);
    const auto e1 = embed(m, fcms);
    const auto e2 = embed(m, fcms);
    REQUIRE(e1.size() == 5);
    for (std::size_t i = 0; i < e1.size(); ++i) {
        CHECK(e1[i].mu == e2[i].mu);
        CHECK(e1[i].mu.size() == 3);
        CHECK(e1[i].device_id == fcms[i].device_id);
        for (double s : e1[i].sigma) CHECK(s > 0.0);
    }
    CHECK(embed(m, {fcms[2]})[0].mu == e1[2].mu);
    auto wrong = random_fcms(1, 8, 2);
    CHECK_THROWS_AS(embed(m, wrong), ShapeError);
}

TEST_CASE("training history and determinism") {
    const auto fcms = random_fcms(9, 16, 4);
    auto c = tiny_config();
    c.e_max = 2;
    const auto r1 = train_vae(fcms, c);
    const auto r2 = train_vae(fcms, c);
    REQUIRE(r1.history.size() == 3);
    CHECK(r1.history == r2.history);
    CHECK(r1.model.params().snapshot() == r2.model.params().snapshot());
    for (const auto& h : r1.history) {
        CHECK(h.beta == beta_schedule(h.epoch, c.e_max, c.s));
        CHECK(h.total == doctest::Approx(h.rec + h.beta * h.kl).epsilon(1e-12));
    }
    CHECK_THROWS_AS(train_vae({fcms[0]}, c), InvalidArgument);
}

TEST_CASE("csv outputs") {
    const auto dir = std::filesystem::temp_directory_path() / "gastkit_vae_test";
    std::filesystem::create_directories(dir);
    Vae m(tiny_config());
    const auto fcms = random_fcms(4, 16, 6);
    const auto e = embed(m, fcms);
    write_embeddings_csv(dir / "emb.csv", e);
    const auto back = read_embeddings_csv(dir / "emb.csv");
    REQUIRE(back.size() == e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK(back[i].mu == e[i].mu);
        CHECK(back[i].date == e[i].date);
        CHECK(back[i].device_id == e[i].device_id);
    }
    write_loss_history_csv(dir / "loss.csv", {{0, 0.0, 1.5, 2.0, 1.5}});
    CHECK(read_text_file(dir / "loss.csv") == "epoch,beta,rec,kl,total\n0,0,1.5,2,1.5\n");
    std::filesystem::remove_all(dir);
}
