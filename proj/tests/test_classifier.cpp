#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "gastkit/classifier.hpp"

using namespace gastkit;
using nn::Tensor;

namespace {

Fcm make_fcm(const std::string& device, const TimeCode& date, std::size_t side, double level, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 0.2);
    Fcm f;
    f.device_id = device;
    f.date = date;
    f.values = Matrix(side, side);
    for (double& v : f.values.data()) v = level + n(rng);
    return f;
}

// Devices "a<c>"/"b<c>" for classes c = 1..classes, `days` consecutive days each.
struct Toy {
    std::vector<Fcm> fcms;
    std::map<std::string, LandUseClass> classes;
};

Toy toy_corpus(int classes, int days, std::size_t side, std::uint64_t seed) {
    Toy t;
    std::mt19937_64 rng(seed);
    const TimeCode start = TimeCode::make(2021, 3, 1);
    for (int c = 1; c <= classes; ++c) {
        for (const char* prefix : {"a", "b"}) {
            const std::string id = prefix + std::to_string(c);
            t.classes.emplace(id, LandUseClass(c));
            for (int d = 0; d < days; ++d) t.fcms.push_back(make_fcm(id, start.plus_days(d), side, c % 2 ? 0.5 : -0.5, rng));
        }
    }
    return t;
}

ClassifierConfig toy_config() {
    ClassifierConfig c;
    c.side = 8;
    c.classes = 2;
    c.channels = 4;
    c.kernel = {6, 2, 2};
    c.stride = {1, 2, 2};
    c.pool_window = {6, 2, 2};
    c.pool_stride = {1, 1, 1};
    c.dense_cap = 16;
    c.dense_min = 8;
    c.epochs = 50;
    c.lr = 1e-2;
    c.seed = 3;
    return c;
}

std::vector<FcmSequence> fake_sequences(std::size_t n) {
    std::vector<FcmSequence> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"dev" + std::to_string(i % 4), TimeCode::make(2020, 1, 1).plus_days(static_cast<int>(i)),
                       LandUseClass(static_cast<int>(i % 4) / 2 + 1), {}});
    }
    return out;
}

}  // namespace

TEST_CASE("sequence assembly") {
    std::mt19937_64 rng(1);
    const TimeCode d0 = TimeCode::make(2020, 6, 1);
    std::vector<Fcm> fcms;
    for (int d = 0; d < 14; ++d) fcms.push_back(make_fcm("x", d0.plus_days(d), 4, 0.0, rng));
    for (int d = 0; d < 14; ++d)
        if (d != 6) fcms.push_back(make_fcm("y", d0.plus_days(d), 4, 0.0, rng));
    for (int d = 0; d < 7; ++d) fcms.push_back(make_fcm("z", d0.plus_days(d), 4, 0.0, rng));
    fcms.push_back(make_fcm("unknown", d0, 4, 0.0, rng));
    const std::map<std::string, LandUseClass> cls{{"x", LandUseClass(1)}, {"y", LandUseClass(2)}, {"z", LandUseClass(3)}};
    const auto seqs = assemble_sequences(fcms, cls);
    std::map<std::string, std::size_t> per;
    for (const auto& s : seqs) {
        ++per[s.device_id];
        REQUIRE(s.frames.size() == 7);
        CHECK(s.label == cls.at(s.device_id));
        for (std::size_t k = 0; k < 7; ++k) {
            CHECK(fcms[s.frames[k]].device_id == s.device_id);
            CHECK(fcms[s.frames[k]].date == s.start.plus_days(static_cast<int>(k)));
        }
    }
    CHECK(per["x"] == 8);
    CHECK(per["y"] == 1);
    CHECK(per["z"] == 1);
    CHECK(per.count("unknown") == 0);
    for (const auto& s : seqs)
        if (s.device_id == "y") CHECK(s.start == d0.plus_days(7));

    fcms.push_back(make_fcm("x", d0, 4, 0.0, rng));
    CHECK_THROWS_AS(assemble_sequences(fcms, cls), InvalidArgument);
}

TEST_CASE("dataset split") {
    const auto seqs = fake_sequences(100);
    SplitSpec spec;
    spec.seed = 9;
    const auto s = split_dataset(seqs, spec);
    CHECK(s.train.size() == 60);
    CHECK(s.val.size() == 20);
    CHECK(s.eval.size() == 20);
    CHECK(s.holdout.empty());
    std::set<std::size_t> all;
    for (const auto* v : {&s.train, &s.val, &s.eval}) all.insert(v->begin(), v->end());
    CHECK(all.size() == 100);

    const auto again = split_dataset(seqs, spec);
    CHECK(again.train == s.train);
    CHECK(again.eval == s.eval);
    spec.seed = 10;
    CHECK(split_dataset(seqs, spec).train != s.train);

    spec.scope = SplitScope::cross_device;
    const auto x = split_dataset(seqs, spec);
    // Class 1 has dev0/dev1, class 2 has dev2/dev3; dev1 and dev3 are held out.
    for (const auto* v : {&x.train, &x.val, &x.eval})
        for (std::size_t i : *v) CHECK((seqs[i].device_id == "dev0" || seqs[i].device_id == "dev2"));
    for (std::size_t i : x.holdout) CHECK((seqs[i].device_id == "dev1" || seqs[i].device_id == "dev3"));
    CHECK(x.train.size() + x.val.size() + x.eval.size() + x.holdout.size() == 100);

    SplitSpec bad;
    bad.fractions = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(split_dataset(seqs, bad), InvalidArgument);
    CHECK_THROWS_AS(split_dataset(fake_sequences(4), SplitSpec{}), InvalidArgument);
}

TEST_CASE("desk and large geometries") {
    Classifier desk(ClassifierConfig::desk());
    CHECK(desk.flat_size() == 32 * 1 * 14 * 14);
    CHECK(desk.pool_window() == nn::Extent3{2, 4, 4});
    CHECK(desk.dense_widths() == std::vector<std::size_t>{256, 128, 64});
    CHECK(desk.params().get("output.weight").tensor.shape() == nn::Shape{9, 64});

    Classifier large(ClassifierConfig::paper());
    CHECK(large.flat_size() == 32 * 1 * 14 * 14);
    CHECK(large.dense_widths() == std::vector<std::size_t>{4096, 2048, 1024, 512, 256, 128, 64});

    auto strict = ClassifierConfig::paper();
    strict.clamp_pool_depth = false;
    try {
        Classifier c(strict);
        FAIL("expected an extent underflow");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("maxpool3d depth") != std::string::npos);
    }
    auto tiny = ClassifierConfig::desk();
    tiny.side = 3;
    CHECK_THROWS_AS(Classifier{tiny}, ShapeError);
}

TEST_CASE("predict") {
    Classifier m(ClassifierConfig::desk());
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor x(nn::Shape{2, 1, 7, 64, 64});
    for (double& v : x.values()) v = u(rng);
    const Tensor p = m.predict(x);
    REQUIRE(p.shape() == nn::Shape{2, 9});
    for (std::size_t i = 0; i < 2; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 9; ++j) s += p[i * 9 + j];
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    CHECK(m.predict(x).values() == p.values());
    CHECK_THROWS_AS(m.predict(Tensor(nn::Shape{1, 1, 6, 64, 64})), ShapeError);

    for (const auto& prm : m.params().all()) {
        Tensor t = prm.tensor;
        std::fill(t.values().begin(), t.values().end(), 0.0);
    }
    const Tensor uniform = m.predict(x);
    for (double v : uniform.values()) CHECK(v == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("training on a separable toy") {
    const Toy toy = toy_corpus(2, 14, 8, 4);
    const auto seqs = assemble_sequences(toy.fcms, toy.classes);
    REQUIRE(seqs.size() == 32);
    const auto split = split_dataset(seqs, SplitSpec{});
    const auto cfg = toy_config();
    const auto r = train_classifier(toy.fcms, seqs, split, cfg);
    CHECK(r.history.size() == 50);
    CHECK(r.history.back().train_accuracy == 1.0);
    CHECK(r.best_epoch >= 1);
    const auto again = train_classifier(toy.fcms, seqs, split, cfg);
    CHECK(again.history == r.history);

    auto zero = cfg;
    zero.epochs = 0;
    const auto z = train_classifier(toy.fcms, seqs, split, zero);
    CHECK(z.history.empty());
    CHECK(z.model.params().snapshot() == Classifier(cfg).params().snapshot());
    CHECK_THROWS_AS(train_classifier(toy.fcms, seqs, DatasetSplit{}, cfg), InvalidArgument);

    const auto m = evaluate(r.model, toy.fcms, seqs, split.eval);
    for (std::size_t c = 0; c < 2; ++c) {
        if (m.support[c] == 0) continue;
        CHECK(m.ppv[c] == 1.0);
        CHECK(m.tpr[c] == 1.0);
        CHECK(m.f1[c] == 1.0);
    }
    CHECK_THROWS_AS(evaluate(r.model, toy.fcms, seqs, {}), InvalidArgument);

    // Predictions survive a checkpoint round trip bit for bit.
    const auto path = std::filesystem::temp_directory_path() / "gastkit_clf.ckpt";
    nn::save_checkpoint(path, r.model.params());
    Classifier loaded(cfg);
    nn::load_checkpoint(path, loaded.params());
    const Tensor x = sequence_batch(toy.fcms, seqs, split.eval, cfg.side);
    CHECK(loaded.predict(x).values() == r.model.predict(x).values());
    std::filesystem::remove(path);
}

TEST_CASE("metric algebra") {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", f1_score(0.65, 0.05));
    CHECK(std::string(buf) == "0.09");
    std::snprintf(buf, sizeof buf, "%.2f", f1_score(0.3, 1.0));
    CHECK(std::string(buf) == "0.46");
    CHECK(f1_score(0.0, 0.0) == 0.0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double p = u(rng), t = u(rng), f = f1_score(p, t);
        CHECK(f >= std::min(p, t) - 1e-15);
        CHECK(f <= std::max(p, t) + 1e-15);
    }

    const std::vector<std::vector<std::size_t>> conf{{5, 1, 0}, {2, 3, 1}, {0, 0, 0}};
    const auto m = metrics_from_confusion(conf);
    CHECK(m.ppv[0] == doctest::Approx(5.0 / 7.0).epsilon(1e-15));
    CHECK(m.tpr[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.ppv[2] == 0.0);
    CHECK(m.support == std::vector<std::size_t>{6, 6, 0});
    CHECK(m.macro_f1() == doctest::Approx((m.f1[0] + m.f1[1]) / 2));
    CHECK(m.accuracy() == doctest::Approx(8.0 / 12.0));

    const auto back = metrics_from_json(metrics_to_json(m));
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(back.f1[c] - m.f1[c]) <= 1e-12);
        CHECK(std::abs(back.ppv[c] - m.ppv[c]) <= 1e-12);
    }
    CHECK_THROWS_AS(metrics_from_confusion({{1, 2}}), ShapeError);

    const auto table = metrics_table({{"same device", &m}, {"unseen", nullptr}});
    CHECK(table.find("0.71") != std::string::npos);
    CHECK(table.find(" - ") != std::string::npos);
}
