#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "gastkit/common.hpp"
#include "gastkit/fft.hpp"
#include "gastkit/synthesis.hpp"
#include "gastkit/text_io.hpp"
#include "gastkit/wav.hpp"

using namespace gastkit;

namespace {

// Naive DFT magnitude at integer bin u.
double dft_mag(const std::vector<double>& x, std::size_t u) {
    std::complex<double> s = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * std::polar(1.0, -2 * std::numbers::pi * u * j / n);
    return std::abs(s) / n;
}

double stddev(const std::vector<double>& x) {
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / x.size());
}

SourceSignal sine(double f, double amp, std::size_t n, double rate) {
    SignalParams p;
    p.frequency = f;
    p.amplitude = amp;
    return generate_isolated_signal(SignalKind::sine, p, static_cast<double>(n) / rate, rate);
}

}  // namespace

TEST_CASE("sine generation") {
    const auto s = sine(1000, 1.0, 8000, 8000);
    CHECK(s.samples.size() == 8000);
    double peak = 0;
    for (double v : s.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-12));
    SignalParams p;
    p.frequency = 5000;
    CHECK_THROWS_AS(generate_isolated_signal(SignalKind::sine, p, 1.0, 8000), InvalidArgument);
    CHECK_THROWS_AS(generate_isolated_signal(SignalKind::sine, SignalParams{}, 0.0, 8000), InvalidArgument);
}

TEST_CASE("harmonic stack peaks at the partials") {
    SignalParams p;
    p.frequency = 250;
    p.harmonics = 3;
    const auto s = generate_isolated_signal(SignalKind::harmonic_stack, p, 1.0, 8000);
    // 1 s at 8 kHz: bin u is u Hz.
    const double a1 = dft_mag(s.samples, 250), a2 = dft_mag(s.samples, 500), a3 = dft_mag(s.samples, 750);
    CHECK(a1 > 0.1);
    CHECK(a2 > 0.1);
    CHECK(a3 > 0.1);
    CHECK(a1 > a2);
    CHECK(a2 > a3);
    for (std::size_t u : {100u, 375u, 625u, 1000u, 2000u}) CHECK(dft_mag(s.samples, u) < 1e-6);
    p.harmonics = 20;
    CHECK_THROWS_AS(generate_isolated_signal(SignalKind::harmonic_stack, p, 1.0, 8000), InvalidArgument);
}

TEST_CASE("chirp and noise burst respect Nyquist and determinism") {
    SignalParams p;
    p.frequency = 500;
    p.end_frequency = 4500;
    CHECK_THROWS_AS(generate_isolated_signal(SignalKind::chirp, p, 1.0, 8000), InvalidArgument);
    p.end_frequency = 1500;
    CHECK(generate_isolated_signal(SignalKind::chirp, p, 0.25, 8000).samples.size() == 2000);
    p.seed = 5;
    const auto a = generate_isolated_signal(SignalKind::noise_burst, p, 0.1, 8000);
    const auto b = generate_isolated_signal(SignalKind::noise_burst, p, 0.1, 8000);
    CHECK(a.samples == b.samples);
}

TEST_CASE("apply_modulation") {
    const auto s = sine(440, 0.5, 800, 8000);
    CHECK(apply_modulation(s, {}).samples == s.samples);
    for (double v : apply_modulation(s, {0.0, {}, {}}).samples) CHECK(v == 0.0);
    const auto m = apply_modulation(s, {2.0, 2.0, {}});
    for (std::size_t i = 0; i < s.samples.size(); ++i) CHECK(m.samples[i] == doctest::Approx(s.samples[i]));
    // Band filter keeps the in-band tone and removes the out-of-band one.
    auto two = sine(400, 0.3, 8000, 8000);
    const auto hi = sine(2000, 0.3, 8000, 8000);
    for (std::size_t i = 0; i < two.samples.size(); ++i) two.samples[i] += hi.samples[i];
    const auto f = apply_modulation(two, {1.0, {}, FrequencyBand{1000, 3000}});
    CHECK(f.samples.size() == two.samples.size());
    CHECK(dft_mag(f.samples, 2000) == doctest::Approx(0.15).epsilon(1e-6));
    CHECK(dft_mag(f.samples, 400) < 1e-9);
    CHECK_THROWS_AS(apply_modulation(s, {-1.0, {}, {}}), InvalidArgument);
    CHECK_THROWS_AS(apply_modulation(s, {1.0, {}, FrequencyBand{300, 200}}), InvalidArgument);
}

TEST_CASE("sensor_mix") {
    const auto s = sine(440, 0.4, 1000, 8000);
    CHECK(sensor_mix({s}, {}, {NoiseKind::white, 0.0, 0}, 1000) == s.samples);

    const auto noise = sensor_mix({}, {}, {NoiseKind::white, 0.05, 3}, 100000);
    CHECK(stddev(noise) == doctest::Approx(0.05).epsilon(0.1));

    const auto doubled = sensor_mix({s, s}, {}, {NoiseKind::white, 0.0, 0}, 1000);
    for (std::size_t i = 0; i < 1000; ++i) CHECK(doubled[i] == doctest::Approx(2 * s.samples[i]));

    // Padding and truncation.
    const auto padded = sensor_mix({s}, {}, {NoiseKind::white, 0.0, 0}, 1500);
    CHECK(padded.size() == 1500);
    CHECK(padded[1200] == 0.0);
    CHECK(sensor_mix({s}, {}, {NoiseKind::white, 0.0, 0}, 10).size() == 10);

    // Clipping.
    const auto loud = sine(440, 0.9, 1000, 8000);
    for (double v : sensor_mix({loud, loud}, {}, {NoiseKind::white, 0.0, 0}, 1000)) CHECK(std::abs(v) <= 1.0);

    auto other_rate = s;
    other_rate.sample_rate = 16000;
    CHECK_THROWS_AS(sensor_mix({s, other_rate}, {}, {NoiseKind::white, 0.0, 0}, 1000), InvalidArgument);
    CHECK_THROWS_AS(sensor_mix({s}, {{}, {}}, {NoiseKind::white, 0.0, 0}, 1000), InvalidArgument);
}

TEST_CASE("sensor_mix is linear before clipping") {
    const auto a = sine(300, 0.2, 2000, 8000);
    const auto b = sine(1300, 0.3, 2000, 8000);
    const std::vector<ModulationSpec> ma{{0.7, 3.0, {}}}, mb{{1.3, {}, FrequencyBand{1000, 2000}}};
    const NoiseSpec quiet{NoiseKind::white, 0.0, 0};
    const auto both = sensor_mix({a, b}, {ma[0], mb[0]}, quiet, 2000);
    const auto xa = sensor_mix({a}, ma, quiet, 2000);
    const auto xb = sensor_mix({b}, mb, quiet, 2000);
    for (std::size_t i = 0; i < both.size(); ++i) CHECK(both[i] == doctest::Approx(xa[i] + xb[i]).epsilon(1e-12));
}

TEST_CASE("pink noise slope is about -3 dB per octave") {
    const std::size_t n = 1 << 16;
    const double rate = 8192;
    // Average power over several realizations in octave bands.
    auto band_power = [&](const std::vector<std::complex<double>>& spec, double lo, double hi) {
        double p = 0;
        const std::size_t ulo = static_cast<std::size_t>(lo * n / rate), uhi = static_cast<std::size_t>(hi * n / rate);
        for (std::size_t u = ulo; u < uhi; ++u) p += std::norm(spec[u]);
        return p / static_cast<double>(uhi - ulo);
    };
    std::vector<double> slopes;
    const auto x = make_noise({NoiseKind::pink, 0.1, 9}, n);
    CHECK(stddev(x) == doctest::Approx(0.1).epsilon(1e-6));
    const auto spec = fft_real(x);
    double prev = 0;
    for (double lo = 100; lo * 2 <= rate / 4; lo *= 2) {
        const double db = 10 * std::log10(band_power(spec, lo, 2 * lo));
        if (lo > 100) slopes.push_back(db - prev);
        prev = db;
    }
    const double mean_slope = std::accumulate(slopes.begin(), slopes.end(), 0.0) / slopes.size();
    CHECK(mean_slope == doctest::Approx(-3.0).epsilon(1.0 / 3.0));
}

TEST_CASE("scenario validation and json") {
    auto c = default_scenario();
    CHECK_NOTHROW(c.validate());
    CHECK(c.classes.size() == 9);
    CHECK(scenario_from_json(to_json(c)).classes.size() == 9);
    CHECK(to_json(scenario_from_json(to_json(c))) == to_json(c));
    auto bad = c;
    bad.days = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = c;
    bad.sample_rate = -1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    auto j = to_json(c);
    j["colour"] = 3;
    CHECK_THROWS_AS(scenario_from_json(j), InvalidArgument);
    c.first_slot_minute = 0;
    c.slot_spacing_minutes = 26;
    c.recordings_per_day = 4;
    const auto slots = c.day_slots(TimeCode::make(2019, 5, 1));
    CHECK(slots[1].minute == 26);
    CHECK(slots[3].hour == 1);
    CHECK(slots[3].minute == 18);
}

TEST_CASE("corpus counting and determinism") {
    auto c = default_scenario();
    c.days = 14;
    c.recordings_per_day = 12;
    c.recording_seconds = 0.05;
    c.seed = 4;
    const auto root = std::filesystem::temp_directory_path() / "gastkit_test_corpus_a";
    const auto root2 = std::filesystem::temp_directory_path() / "gastkit_test_corpus_b";
    std::filesystem::remove_all(root);
    std::filesystem::remove_all(root2);
    const auto rows = synthesize_corpus(c, root);
    CHECK(rows.size() == 3024);
    std::size_t wavs = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.path().extension() == ".wav") ++wavs;
    CHECK(wavs == 3024);
    CHECK(read_manifest(root / "manifest.csv") == rows);

    set_worker_count(3);
    synthesize_corpus(c, root2);
    set_worker_count(1);
    for (std::size_t i = 0; i < rows.size(); i += 97) {
        CHECK(read_text_file(root / rows[i].wav_path) == read_text_file(root2 / rows[i].wav_path));
    }
    CHECK(read_text_file(root / "manifest.csv") == read_text_file(root2 / "manifest.csv"));
    std::filesystem::remove_all(root);
    std::filesystem::remove_all(root2);
}

TEST_CASE("weekend gain halves the main street level") {
    auto c = default_scenario();
    std::erase_if(c.classes, [](const ClassSignature& s) { return s.lut.id() != 3; });
    c.fingerprint_strength = 0.0;
    c.noise.amplitude = 0.0;
    c.days = 28;
    c.seed = 21;
    const auto root = std::filesystem::temp_directory_path() / "gastkit_test_corpus_rms";
    std::filesystem::remove_all(root);
    const auto rows = synthesize_corpus(c, root);
    double weekday = 0, weekend = 0;
    std::size_t nd = 0, ne = 0;
    for (const auto& r : rows) {
        const auto w = read_wav(root / r.wav_path);
        double ss = 0;
        for (double v : w.samples) ss += v * v;
        if (r.time.is_weekend()) {
            weekend += ss;
            ne += w.samples.size();
        } else {
            weekday += ss;
            nd += w.samples.size();
        }
    }
    const double ratio = std::sqrt(weekend / ne) / std::sqrt(weekday / nd);
    CHECK(ratio == doctest::Approx(0.5).epsilon(0.1));
    std::filesystem::remove_all(root);
}
