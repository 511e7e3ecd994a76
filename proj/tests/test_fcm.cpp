#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "gastkit/fcm.hpp"
#include "gastkit/text_io.hpp"

using namespace gastkit;

namespace {

double corr(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

void check_fcm_invariants(const Fcm& f) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.degenerate.empty() && !f.degenerate[i]) CHECK(f.values(i, i) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t j = 0; j < f.size(); ++j) {
            CHECK(std::abs(f.values(i, j) - f.values(j, i)) <= 1e-9);
            CHECK(f.values(i, j) <= 1.0);
            CHECK(f.values(i, j) >= (f.squared ? 0.0 : -1.0));
        }
    }
}

// Tones at exact DFT frequencies so that each lands in a single bin.
std::vector<double> tones(const std::vector<std::pair<double, double>>& freq_amp, std::size_t m, double rate,
                          double noise, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, noise);
    std::vector<double> x(m);
    for (std::size_t j = 0; j < m; ++j) {
        double v = noise > 0 ? n(rng) : 0.0;
        for (const auto& [f, a] : freq_amp) v += a * std::sin(2 * std::numbers::pi * f * j / rate);
        x[j] = v;
    }
    return x;
}

}  // namespace

TEST_CASE("jacobi eigen on a known matrix") {
    Matrix a(2, 2, std::vector<double>{2, 1, 1, 2});
    const auto e = jacobi_eigen(a);
    CHECK(e.values[0] == doctest::Approx(3.0));
    CHECK(e.values[1] == doctest::Approx(1.0));
    CHECK(std::abs(e.vectors(0, 0)) == doctest::Approx(1 / std::sqrt(2.0)));
    CHECK_THROWS_AS(jacobi_eigen(Matrix(2, 3)), ShapeError);
}

TEST_CASE("pca on points along a line") {
    Matrix d(5, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        d(i, 0) = static_cast<double>(i);
        d(i, 1) = 2.0 * static_cast<double>(i);
    }
    const auto m = pca_fit(d);
    CHECK(std::abs(m.components(0, 0)) == doctest::Approx(1 / std::sqrt(5.0)));
    CHECK(std::abs(m.components(0, 1)) == doctest::Approx(2 / std::sqrt(5.0)));
    CHECK(m.components(0, 0) * m.components(0, 1) > 0);
    CHECK(std::abs(m.eigenvalues[1]) < 1e-12);
    CHECK(m.explained_variance_ratio()[0] == doctest::Approx(1.0));
}

TEST_CASE("pca on an isotropic cloud") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix d(10000, 2);
    for (double& v : d.data()) v = n(rng);
    const auto m = pca_fit(d);
    CHECK(m.eigenvalues[1] / m.eigenvalues[0] > 0.85);
    CHECK(m.eigenvalues[0] >= m.eigenvalues[1]);
}

TEST_CASE("pca errors") {
    CHECK_THROWS_AS(pca_fit(Matrix(4, 3, 2.5)), DegenerateInput);
    CHECK_THROWS_AS(pca_fit(Matrix(1, 3, 2.5)), InvalidArgument);
}

TEST_CASE("pca invariants on both solver routes") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{30, 6}, {6, 30}}) {
        Matrix d(rows, cols);
        for (double& v : d.data()) v = n(rng) * 3.0 + 1.0;
        const auto m = pca_fit(d);
        for (std::size_t a = 0; a < m.components.rows(); ++a) {
            for (std::size_t b = 0; b < m.components.rows(); ++b) {
                double dot = 0;
                for (std::size_t j = 0; j < cols; ++j) dot += m.components(a, j) * m.components(b, j);
                CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-8);
            }
        }
        for (std::size_t k = 0; k + 1 < m.eigenvalues.size(); ++k) CHECK(m.eigenvalues[k] >= m.eigenvalues[k + 1]);
        for (double e : m.eigenvalues) CHECK(e >= 0.0);
        const auto r = m.reconstruct(d, m.components.rows());
        for (std::size_t i = 0; i < d.data().size(); ++i) CHECK(std::abs(r.data()[i] - d.data()[i]) <= 1e-9);
    }
}

TEST_CASE("pca_denoise threshold 1 reproduces the input") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    BinnedSpectrogram s;
    s.values = Matrix(40, 12);
    for (double& v : s.values.data()) v = n(rng);
    s.bin_width_hz = 4.0;
    const auto out = pca_denoise(s, 1.0);
    CHECK(out.bin_width_hz == 4.0);
    for (std::size_t i = 0; i < s.values.data().size(); ++i)
        CHECK(std::abs(out.values.data()[i] - s.values.data()[i]) <= 1e-9);
}

TEST_CASE("pca_denoise retains the minimal component count") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    BinnedSpectrogram s;
    s.values = Matrix(30, 15);
    for (double& v : s.values.data()) v = n(rng);
    PcaModel m;
    pca_denoise(s, 0.95, &m);
    const auto ratios = m.explained_variance_ratio();
    double cum = 0;
    for (std::size_t k = 0; k < m.retained_count; ++k) cum += ratios[k];
    CHECK(cum >= 0.95);
    CHECK(cum - ratios[m.retained_count - 1] < 0.95);
}

TEST_CASE("pca_denoise recovers a planted rank-1 signal") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t bins = 60, recs = 20;
    std::vector<double> profile(bins), weights(recs);
    for (double& v : profile) v = n(rng);
    for (double& v : weights) v = n(rng);
    BinnedSpectrogram s;
    s.values = Matrix(bins, recs);
    Matrix clean(bins, recs);
    for (std::size_t i = 0; i < bins; ++i)
        for (std::size_t k = 0; k < recs; ++k) {
            clean(i, k) = 3.0 * profile[i] * weights[k];
            s.values(i, k) = clean(i, k) + 0.3 * n(rng);
        }
    const auto out = pca_denoise(s, 0.95);
    CHECK(corr(out.values.data(), clean.data()) > corr(s.values.data(), clean.data()));
}

TEST_CASE("pearson examples and properties") {
    const std::vector<double> a{1, 2, 3}, b{3, 2, 1};
    CHECK(*pearson(a, a) == doctest::Approx(1.0));
    CHECK(*pearson(a, b) == doctest::Approx(-1.0));
    CHECK(*pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8));
    CHECK_FALSE(pearson(a, std::vector<double>{2, 2, 2}).has_value());
    CHECK_THROWS_AS(pearson(a, std::vector<double>{1, 2}), InvalidArgument);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(25), y(25);
        for (double& v : x) v = n(rng);
        for (double& v : y) v = n(rng);
        const double s = scale(rng), off = n(rng);
        std::vector<double> pos(25), neg(25), ys(25);
        for (std::size_t i = 0; i < 25; ++i) {
            pos[i] = s * x[i] + off;
            neg[i] = -s * x[i] + off;
            ys[i] = s * y[i] - off;
        }
        CHECK(*pearson(x, pos) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(*pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(*pearson(x, ys) == doctest::Approx(*pearson(x, y)).epsilon(1e-10));
        CHECK(*pearson(x, y) == doctest::Approx(corr(x, y)).epsilon(1e-10));
    }
}

TEST_CASE("correlation matrix handles silent bins") {
    Matrix rows(3, 4, std::vector<double>{1, 2, 3, 4, 5, 5, 5, 5, 4, 3, 2, 1});
    const auto f = correlation_matrix(rows);
    CHECK(f.degenerate == std::vector<bool>{false, true, false});
    CHECK(f.values(1, 1) == 1.0);
    CHECK(f.values(0, 1) == 0.0);
    CHECK(f.values(0, 2) == doctest::Approx(-1.0));
    check_fcm_invariants(f);
}

TEST_CASE("fcm_for_day on identical recordings") {
    std::mt19937_64 rng(1);
    const auto x = tones({{512, 0.3}, {1024, 0.1}}, 1024, 8192, 0.01, rng);
    std::vector<std::pair<TimeCode, std::vector<double>>> day;
    for (int k = 0; k < 5; ++k) day.push_back({TimeCode::make(2019, 5, 1, k / 3, 20 * (k % 3)), x});
    FcmConfig cfg;
    cfg.spectral.n_bins = 64;
    const auto f = fcm_for_day(day, 8192, cfg, "03");
    CHECK(f.device_id == "03");
    CHECK(f.date == TimeCode::make(2019, 5, 1));
    for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = 0; j < f.size(); ++j)
            if (!f.degenerate[i] && !f.degenerate[j]) CHECK(f.values(i, j) == doctest::Approx(1.0));
    CHECK_THROWS_AS(fcm_for_day({day[0]}, 8192, cfg), InvalidArgument);
}

TEST_CASE("fcm separates independent tones from a co-varying pair") {
    // 1024 samples at 8192 Hz, 64 bins of 8 rows (64 Hz each). Tones sit at
    // bins 10 (p), 20 (q), 30 and 40 (the co-varying pair). p and q toggle in
    // a balanced factorial pattern so they are exactly uncorrelated.
    const std::size_t m = 1024;
    const double rate = 8192;
    const double fp = 10 * 64 + 24, fq = 20 * 64 + 24, fa = 30 * 64 + 24, fb = 40 * 64 + 24;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> level(0.2, 1.0);
    std::vector<std::pair<TimeCode, std::vector<double>>> day;
    for (int k = 0; k < 20; ++k) {
        const double ap = (k % 2) ? 0.3 : 0.0;
        const double aq = ((k / 2) % 2) ? 0.3 : 0.0;
        const double g = level(rng);
        day.push_back({TimeCode::make(2019, 5, 1, k / 3, 20 * (k % 3)),
                       tones({{fp, ap}, {fq, aq}, {fa, 0.3 * g}, {fb, 0.15 * g}}, m, rate, 0.001, rng)});
    }
    FcmConfig cfg;
    cfg.spectral.n_bins = 64;
    const auto f = fcm_for_day(day, rate, cfg);
    check_fcm_invariants(f);
    CHECK(std::abs(f.values(10, 20)) < 0.3);
    CHECK(f.values(10, 10) == 1.0);
    CHECK(f.r_squared()(30, 40) > 0.9);

    cfg.squared = true;
    const auto sq = fcm_for_day(day, rate, cfg);
    CHECK(sq.squared);
    check_fcm_invariants(sq);
    CHECK(sq.values(30, 40) == doctest::Approx(f.values(30, 40) * f.values(30, 40)));
}

TEST_CASE("resize_fcm") {
    Fcm f;
    f.values = Matrix(4, 4, 1.0);
    f.degenerate.assign(4, false);
    const auto r = resize_fcm(f, 2);
    CHECK(r.values == Matrix(2, 2, 1.0));
    CHECK(resize_fcm(f, 4) == f);
    CHECK_THROWS_AS(resize_fcm(f, 3), InvalidArgument);
    CHECK_THROWS_AS(resize_fcm(f, 8), InvalidArgument);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    Fcm s;
    s.values = Matrix(16, 16);
    for (std::size_t i = 0; i < 16; ++i) {
        s.values(i, i) = 1;
        for (std::size_t j = i + 1; j < 16; ++j) s.values(i, j) = s.values(j, i) = u(rng);
    }
    const auto rs = resize_fcm(s, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(rs.values(i, j) == rs.values(j, i));
            CHECK(std::abs(rs.values(i, j)) <= 1.0);
        }
}

TEST_CASE("fcm image export") {
    Fcm id;
    id.values = Matrix(4, 4);
    for (std::size_t i = 0; i < 4; ++i) id.values(i, i) = 1.0;
    auto px = fcm_pixels(id);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(px[i * 4 + j] == (i == j ? 255 : 0));

    Fcm ones;
    ones.values = Matrix(3, 3, 1.0);
    for (auto p : fcm_pixels(ones)) CHECK(p == 255);

    Fcm g;
    g.values = Matrix(2, 2, std::vector<double>{1.0, 0.5, 0.5, -0.3});
    px = fcm_pixels(g);
    CHECK(px[1] == static_cast<std::uint8_t>(std::lround(255 * 0.25)));
    CHECK(px[3] == static_cast<std::uint8_t>(std::lround(255 * 0.09)));

    const auto dir = std::filesystem::temp_directory_path() / "gastkit_test_img";
    export_fcm_image(g, dir / "g.pgm");
    const auto pgm = read_text_file(dir / "g.pgm");
    CHECK(pgm.rfind("P5\n2 2\n255\n", 0) == 0);
    CHECK(static_cast<unsigned char>(pgm[pgm.size() - 3]) == px[1]);
    export_fcm_image(g, dir / "g.png");
    const auto png = read_text_file(dir / "g.png");
    CHECK(png.substr(1, 3) == "PNG");
    std::filesystem::remove_all(dir);
}

TEST_CASE("fcm binary round trip") {
    Fcm f;
    f.values = Matrix(3, 3, std::vector<double>{1, 0, 0.25, 0, 1, 0, 0.25, 0, 1});
    f.device_id = "12";
    f.date = TimeCode::make(2019, 6, 3);
    f.degenerate = {false, true, false};
    const auto path = std::filesystem::temp_directory_path() / "gastkit_test.gastf";
    write_fcm(path, f);
    CHECK(read_fcm(path) == f);
    std::filesystem::remove(path);
}
