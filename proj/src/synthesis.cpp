#include "gastkit/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "gastkit/fft.hpp"
#include "gastkit/text_io.hpp"
#include "gastkit/wav.hpp"

namespace gastkit {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_below_nyquist(double f, double sample_rate, std::string_view what) {
    if (!(f < sample_rate / 2.0)) {
        throw InvalidArgument("aliasing: " + std::string(what) + " " + format_double(f) +
                              " Hz is not below Nyquist (" + format_double(sample_rate / 2.0) + " Hz)");
    }
    if (f < 0.0) throw InvalidArgument(std::string(what) + " must be non-negative");
}

}  // namespace

std::string_view to_string(SignalKind k) {
    switch (k) {
        case SignalKind::sine: return "sine";
        case SignalKind::harmonic_stack: return "harmonic_stack";
        case SignalKind::chirp: return "chirp";
        case SignalKind::noise_burst: return "noise_burst";
    }
    return "sine";
}

SignalKind signal_kind_from_string(std::string_view s) {
    for (auto k : {SignalKind::sine, SignalKind::harmonic_stack, SignalKind::chirp, SignalKind::noise_burst}) {
        if (to_string(k) == s) return k;
    }
    throw InvalidArgument("unknown signal kind '" + std::string(s) + "'");
}

SourceSignal generate_isolated_signal(SignalKind kind, const SignalParams& p, double duration_s,
                                      double sample_rate) {
    if (!(duration_s > 0.0)) throw InvalidArgument("duration_s must be positive");
    if (!(sample_rate > 0.0)) throw InvalidArgument("sample_rate must be positive");
    const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
    SourceSignal s;
    s.sample_rate = sample_rate;
    s.time_code = p.time_code;
    s.label = p.label;
    s.category = p.category;
    s.samples.assign(n, 0.0);
    const double dt = 1.0 / sample_rate;

    switch (kind) {
        case SignalKind::sine: {
            check_below_nyquist(p.frequency, sample_rate, "frequency");
            for (std::size_t j = 0; j < n; ++j) {
                s.samples[j] = p.amplitude * std::sin(kTwoPi * p.frequency * static_cast<double>(j) * dt + p.phase);
            }
            break;
        }
        case SignalKind::harmonic_stack: {
            if (p.harmonics < 1) throw InvalidArgument("harmonic_stack needs at least one harmonic");
            check_below_nyquist(p.frequency * p.harmonics, sample_rate, "highest harmonic");
            for (int h = 1; h <= p.harmonics; ++h) {
                const double f = p.frequency * h;
                const double a = p.amplitude / h;
                for (std::size_t j = 0; j < n; ++j) {
                    s.samples[j] += a * std::sin(kTwoPi * f * static_cast<double>(j) * dt + h * p.phase);
                }
            }
            break;
        }
        case SignalKind::chirp: {
            check_below_nyquist(p.frequency, sample_rate, "chirp start frequency");
            check_below_nyquist(p.end_frequency, sample_rate, "chirp end frequency");
            const double rate = (p.end_frequency - p.frequency) / duration_s;
            for (std::size_t j = 0; j < n; ++j) {
                const double t = static_cast<double>(j) * dt;
                s.samples[j] = p.amplitude * std::sin(kTwoPi * (p.frequency * t + 0.5 * rate * t * t) + p.phase);
            }
            break;
        }
        case SignalKind::noise_burst: {
            std::mt19937_64 rng(p.seed);
            std::normal_distribution<double> normal(0.0, 1.0);
            const auto start = static_cast<std::size_t>(std::llround(std::max(0.0, p.burst_start_s) * sample_rate));
            const std::size_t stop =
                p.burst_length_s < 0.0
                    ? n
                    : std::min(n, start + static_cast<std::size_t>(std::llround(p.burst_length_s * sample_rate)));
            for (std::size_t j = start; j < stop; ++j) s.samples[j] = p.amplitude * normal(rng);
            break;
        }
    }
    return s;
}

SourceSignal apply_modulation(const SourceSignal& signal, const ModulationSpec& spec) {
    if (spec.gain < 0.0) throw InvalidArgument("modulation gain must be non-negative");
    double scale = spec.gain;
    if (spec.distance_m) scale /= std::max(*spec.distance_m, 1.0);
    SourceSignal out = signal;
    if (spec.band) {
        const auto [lo, hi] = *spec.band;
        if (!(lo < hi)) throw InvalidArgument("modulation band requires low < high");
        if (!(signal.sample_rate > 0.0)) throw InvalidArgument("band filtering needs a sample rate");
        const std::size_t n = signal.samples.size();
        if (n > 0) {
            auto spectrum = fft_real(signal.samples);
            for (std::size_t u = 0; u < n; ++u) {
                // Frequency of bin u, folded so mirrored bins share the decision.
                const std::size_t k = std::min(u, n - u);
                const double f = static_cast<double>(k) * signal.sample_rate / static_cast<double>(n);
                if (f < lo || f > hi) spectrum[u] = 0.0;
            }
            const auto back = ifft(spectrum);
            for (std::size_t j = 0; j < n; ++j) out.samples[j] = back[j].real() / static_cast<double>(n);
        }
    }
    if (scale != 1.0) {
        for (double& x : out.samples) x *= scale;
    }
    return out;
}

std::vector<double> make_noise(const NoiseSpec& noise, std::size_t length) {
    if (noise.amplitude < 0.0) throw InvalidArgument("noise amplitude must be non-negative");
    std::vector<double> r(length, 0.0);
    if (noise.amplitude == 0.0 || length == 0) return r;
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    if (noise.kind == NoiseKind::white) {
        for (double& x : r) x = noise.amplitude * normal(rng);
        return r;
    }
    // Paul Kellett's refined pink filter (-3 dB/octave above ~10 Hz at 44.1 kHz).
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (double& x : r) {
        const double w = normal(rng);
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        x = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
    }
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= static_cast<double>(length);
    double var = 0.0;
    for (double& x : r) {
        x -= mean;
        var += x * x;
    }
    const double sd = std::sqrt(var / static_cast<double>(length));
    if (sd > 0.0) {
        for (double& x : r) x *= noise.amplitude / sd;
    }
    return r;
}

std::vector<double> sensor_mix(const std::vector<SourceSignal>& signals,
                               const std::vector<ModulationSpec>& modulations, const NoiseSpec& noise,
                               std::size_t length_samples) {
    if (length_samples == 0) throw InvalidArgument("sensor_mix length must be positive");
    if (!modulations.empty() && modulations.size() != signals.size()) {
        throw InvalidArgument("sensor_mix: " + std::to_string(modulations.size()) + " modulations for " +
                              std::to_string(signals.size()) + " signals");
    }
    for (std::size_t i = 1; i < signals.size(); ++i) {
        if (signals[i].sample_rate != signals[0].sample_rate) {
            throw InvalidArgument("sensor_mix: sample-rate mismatch (" + format_double(signals[0].sample_rate) +
                                  " vs " + format_double(signals[i].sample_rate) + " Hz)");
        }
    }
    std::vector<double> mix(length_samples, 0.0);
    for (std::size_t i = 0; i < signals.size(); ++i) {
        const SourceSignal modulated = modulations.empty() ? signals[i] : apply_modulation(signals[i], modulations[i]);
        const std::size_t n = std::min(length_samples, modulated.samples.size());
        for (std::size_t j = 0; j < n; ++j) mix[j] += modulated.samples[j];
    }
    const auto r = make_noise(noise, length_samples);
    for (std::size_t j = 0; j < length_samples; ++j) mix[j] = std::clamp(mix[j] + r[j], -1.0, 1.0);
    return mix;
}

// ---------------------------------------------------------------------------

void ScenarioConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw InvalidArgument("scenario." + field + ": " + why);
    };
    if (classes.empty()) fail("classes", "at least one class required");
    if (devices_per_class < 1) fail("devices_per_class", "must be >= 1");
    if (days < 1) fail("days", "must be >= 1");
    if (recordings_per_day < 1) fail("recordings_per_day", "must be >= 1");
    if (!(recording_seconds > 0.0)) fail("recording_seconds", "must be positive");
    if (!(sample_rate > 0.0)) fail("sample_rate", "must be positive");
    if (slot_spacing_minutes < 1) fail("slot_spacing_minutes", "must be >= 1");
    if (first_slot_minute < 0) fail("first_slot_minute", "must be >= 0");
    if (first_slot_minute + (recordings_per_day - 1) * slot_spacing_minutes >= 24 * 60) {
        fail("recordings_per_day", "slots do not fit into one day with the configured spacing");
    }
    if (!start_date.valid()) fail("start_date", "not a valid calendar date");
    if (noise.amplitude < 0.0) fail("noise.amplitude", "must be >= 0");
    if (fingerprint_strength < 0.0) fail("fingerprint_strength", "must be >= 0");
    std::set<int> seen;
    for (const auto& cls : classes) {
        if (!seen.insert(cls.lut.id()).second) fail("classes", "duplicate class " + std::to_string(cls.lut.id()));
        if (cls.devices < 0) fail("classes.devices", "must be >= 0");
        for (const auto& c : cls.components) {
            const double nyq = sample_rate / 2.0;
            if (c.amplitude < 0.0) fail("components.amplitude", "must be >= 0");
            if (c.presence < 0.0 || c.presence > 1.0) fail("components.presence", "must lie in [0, 1]");
            if (c.weekday_gain < 0.0 || c.weekend_gain < 0.0) fail("components.gain", "must be >= 0");
            if (c.kind == SignalKind::noise_burst) {
                if (c.band.high_hz > 0.0 && !(c.band.low_hz < c.band.high_hz)) fail("components.band", "low < high");
            } else {
                const double top = c.kind == SignalKind::harmonic_stack ? c.frequency * c.harmonics
                                   : c.kind == SignalKind::chirp   ? std::max(c.frequency, c.end_frequency)
                                                                    : c.frequency;
                if (!(top < nyq)) fail("components.frequency", "at or above Nyquist");
            }
        }
    }
}

std::size_t ScenarioConfig::samples_per_recording() const {
    return static_cast<std::size_t>(std::llround(recording_seconds * sample_rate));
}

std::vector<TimeCode> ScenarioConfig::day_slots(const TimeCode& date) const {
    std::vector<TimeCode> slots;
    slots.reserve(static_cast<std::size_t>(recordings_per_day));
    for (int i = 0; i < recordings_per_day; ++i) {
        const int m = first_slot_minute + i * slot_spacing_minutes;
        slots.push_back(TimeCode{date.year, date.month, date.day, m / 60, m % 60});
    }
    return slots;
}

namespace {

ComponentSpec tone(double f, double amp, double presence, std::string label, SourceCategory cat) {
    ComponentSpec c;
    c.kind = SignalKind::sine;
    c.frequency = f;
    c.amplitude = amp;
    c.presence = presence;
    c.level_jitter = 0.3;
    c.label = std::move(label);
    c.category = cat;
    return c;
}

ComponentSpec stack(double f0, int n, double amp, double presence, std::string label, SourceCategory cat) {
    ComponentSpec c = tone(f0, amp, presence, std::move(label), cat);
    c.kind = SignalKind::harmonic_stack;
    c.harmonics = n;
    return c;
}

ComponentSpec sweep(double f0, double f1, double amp, double presence, std::string label, SourceCategory cat) {
    ComponentSpec c = tone(f0, amp, presence, std::move(label), cat);
    c.kind = SignalKind::chirp;
    c.end_frequency = f1;
    return c;
}

ComponentSpec band_noise(double lo, double hi, double amp, double presence, std::string label,
                         SourceCategory cat) {
    ComponentSpec c = tone(lo, amp, presence, std::move(label), cat);
    c.kind = SignalKind::noise_burst;
    c.band = {lo, hi};
    return c;
}

ComponentSpec weekly(ComponentSpec c, double weekday, double weekend) {
    c.weekday_gain = weekday;
    c.weekend_gain = weekend;
    return c;
}

}  // namespace

ScenarioConfig default_scenario() {
    using C = SourceCategory;
    ScenarioConfig s;
    auto add = [&](int id, std::vector<ComponentSpec> comps) {
        s.classes.push_back(ClassSignature{LandUseClass(id), std::move(comps), 0});
    };
    add(1, {stack(300, 4, 0.06, 0.6, "ventilation", C::anthrophony),
            band_noise(1800, 2300, 0.08, 0.5, "voices", C::anthrophony)});
    add(2, {sweep(2600, 3400, 0.05, 0.5, "birdsong", C::biophony),
            band_noise(200, 500, 0.06, 0.35, "wind", C::geophony)});
    add(3, {weekly(band_noise(60, 700, 0.12, 0.85, "traffic", C::anthrophony), 1.0, 0.5),
            weekly(stack(110, 6, 0.06, 0.6, "engine", C::anthrophony), 1.0, 0.5)});
    add(4, {weekly(band_noise(900, 1700, 0.08, 0.5, "children", C::anthrophony), 1.0, 1.4),
            tone(2200, 0.04, 0.3, "whistle", C::anthrophony)});
    add(5, {stack(220, 3, 0.05, 0.4, "music", C::anthrophony),
            sweep(3200, 3800, 0.04, 0.4, "birdsong", C::biophony)});
    add(6, {weekly(band_noise(100, 400, 0.08, 0.6, "traffic", C::anthrophony), 1.0, 0.7),
            tone(1500, 0.04, 0.5, "bell", C::anthrophony)});
    add(7, {sweep(2000, 2600, 0.05, 0.6, "birdsong", C::biophony),
            weekly(stack(500, 3, 0.05, 0.3, "mower", C::anthrophony), 1.0, 1.5)});
    add(8, {stack(90, 10, 0.06, 0.5, "tractor", C::anthrophony),
            band_noise(2800, 3600, 0.05, 0.4, "insects", C::biophony)});
    add(9, {sweep(3400, 3900, 0.05, 0.7, "birdsong", C::biophony),
            sweep(1200, 1600, 0.04, 0.5, "birdsong", C::biophony),
            band_noise(100, 300, 0.05, 0.5, "wind", C::geophony)});
    return s;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw InvalidArgument(std::string(where) + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw InvalidArgument(std::string(where) + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read_opt(const json& j, std::string_view key, T& out, std::string_view where) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(std::string(where) + "." + std::string(key) + ": wrong type");
    }
}

json component_to_json(const ComponentSpec& c) {
    return json{{"kind", to_string(c.kind)},
                {"frequency", c.frequency},
                {"end_frequency", c.end_frequency},
                {"harmonics", c.harmonics},
                {"band", {c.band.low_hz, c.band.high_hz}},
                {"amplitude", c.amplitude},
                {"weekday_gain", c.weekday_gain},
                {"weekend_gain", c.weekend_gain},
                {"presence", c.presence},
                {"level_jitter", c.level_jitter},
                {"label", c.label},
                {"category", to_string(c.category)}};
}

ComponentSpec component_from_json(const json& j) {
    constexpr std::string_view where = "scenario.classes.components";
    reject_unknown(j,
                   {"kind", "frequency", "end_frequency", "harmonics", "band", "amplitude", "weekday_gain",
                    "weekend_gain", "presence", "level_jitter", "label", "category"},
                   where);
    ComponentSpec c;
    std::string kind = std::string(to_string(c.kind));
    read_opt(j, "kind", kind, where);
    c.kind = signal_kind_from_string(kind);
    read_opt(j, "frequency", c.frequency, where);
    read_opt(j, "end_frequency", c.end_frequency, where);
    read_opt(j, "harmonics", c.harmonics, where);
    std::vector<double> band{c.band.low_hz, c.band.high_hz};
    read_opt(j, "band", band, where);
    if (band.size() != 2) throw InvalidArgument(std::string(where) + ".band: expected [low, high]");
    c.band = {band[0], band[1]};
    read_opt(j, "amplitude", c.amplitude, where);
    read_opt(j, "weekday_gain", c.weekday_gain, where);
    read_opt(j, "weekend_gain", c.weekend_gain, where);
    read_opt(j, "presence", c.presence, where);
    read_opt(j, "level_jitter", c.level_jitter, where);
    read_opt(j, "label", c.label, where);
    std::string cat = std::string(to_string(c.category));
    read_opt(j, "category", cat, where);
    c.category = source_category_from_string(cat);
    return c;
}

}  // namespace

json to_json(const ScenarioConfig& c) {
    json classes = json::array();
    for (const auto& cls : c.classes) {
        json comps = json::array();
        for (const auto& comp : cls.components) comps.push_back(component_to_json(comp));
        classes.push_back({{"lut_id", cls.lut.id()}, {"devices", cls.devices}, {"components", std::move(comps)}});
    }
    return json{{"classes", std::move(classes)},
                {"devices_per_class", c.devices_per_class},
                {"days", c.days},
                {"recordings_per_day", c.recordings_per_day},
                {"first_slot_minute", c.first_slot_minute},
                {"slot_spacing_minutes", c.slot_spacing_minutes},
                {"recording_seconds", c.recording_seconds},
                {"sample_rate", c.sample_rate},
                {"start_date", {c.start_date.year, c.start_date.month, c.start_date.day}},
                {"noise",
                 {{"kind", c.noise.kind == NoiseKind::white ? "white" : "pink"},
                  {"amplitude", c.noise.amplitude},
                  {"seed", c.noise.seed}}},
                {"fingerprint_strength", c.fingerprint_strength},
                {"seed", c.seed}};
}

ScenarioConfig scenario_from_json(const json& j) {
    constexpr std::string_view where = "scenario";
    reject_unknown(j,
                   {"classes", "devices_per_class", "days", "recordings_per_day", "first_slot_minute",
                    "slot_spacing_minutes", "recording_seconds", "sample_rate", "start_date", "noise",
                    "fingerprint_strength", "seed"},
                   where);
    ScenarioConfig c = default_scenario();
    if (j.contains("classes")) {
        c.classes.clear();
        for (const auto& cj : j.at("classes")) {
            reject_unknown(cj, {"lut_id", "devices", "components"}, "scenario.classes");
            ClassSignature cls;
            int id = 1;
            read_opt(cj, "lut_id", id, "scenario.classes");
            cls.lut = LandUseClass(id);
            read_opt(cj, "devices", cls.devices, "scenario.classes");
            if (cj.contains("components")) {
                for (const auto& comp : cj.at("components")) cls.components.push_back(component_from_json(comp));
            }
            c.classes.push_back(std::move(cls));
        }
    }
    read_opt(j, "devices_per_class", c.devices_per_class, where);
    read_opt(j, "days", c.days, where);
    read_opt(j, "recordings_per_day", c.recordings_per_day, where);
    read_opt(j, "first_slot_minute", c.first_slot_minute, where);
    read_opt(j, "slot_spacing_minutes", c.slot_spacing_minutes, where);
    read_opt(j, "recording_seconds", c.recording_seconds, where);
    read_opt(j, "sample_rate", c.sample_rate, where);
    if (j.contains("start_date")) {
        std::vector<int> d;
        read_opt(j, "start_date", d, where);
        if (d.size() != 3) throw InvalidArgument("scenario.start_date: expected [year, month, day]");
        c.start_date = TimeCode::make(d[0], d[1], d[2]);
    }
    if (j.contains("noise")) {
        const auto& nj = j.at("noise");
        reject_unknown(nj, {"kind", "amplitude", "seed"}, "scenario.noise");
        std::string kind = "white";
        read_opt(nj, "kind", kind, "scenario.noise");
        if (kind != "white" && kind != "pink") throw InvalidArgument("scenario.noise.kind: white or pink");
        c.noise.kind = kind == "white" ? NoiseKind::white : NoiseKind::pink;
        read_opt(nj, "amplitude", c.noise.amplitude, "scenario.noise");
        read_opt(nj, "seed", c.noise.seed, "scenario.noise");
    }
    read_opt(j, "fingerprint_strength", c.fingerprint_strength, where);
    read_opt(j, "seed", c.seed, where);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

std::vector<DeviceInfo> scenario_devices(const ScenarioConfig& config) {
    std::vector<DeviceInfo> devices;
    for (const auto& cls : config.classes) {
        const int n = cls.devices > 0 ? cls.devices : config.devices_per_class;
        for (int k = 0; k < n; ++k) {
            DeviceInfo d;
            d.index = devices.size();
            d.index_in_class = static_cast<std::size_t>(k);
            d.lut = cls.lut;
            char buf[16];
            std::snprintf(buf, sizeof buf, "%02zu", d.index + 1);
            d.id = buf;
            std::mt19937_64 rng(derive_seed(config.seed, 0x10CA7E, d.index));
            std::uniform_real_distribution<double> offset(0.0, 5000.0);
            d.location = {375000.0 + std::round(offset(rng)), 5705000.0 + std::round(offset(rng))};
            devices.push_back(std::move(d));
        }
    }
    return devices;
}

namespace {

// Device-specific perturbation of the class signature.
struct Fingerprint {
    double level = 1.0;
    std::vector<double> frequency_scale;  // per class component
    std::vector<double> phase;            // per component incl. private ones
    std::vector<ComponentSpec> private_sources;
};

Fingerprint make_fingerprint(const ScenarioConfig& config, const ClassSignature& cls, const DeviceInfo& device) {
    Fingerprint fp;
    std::mt19937_64 rng(derive_seed(config.seed, 0xF1A6E4, device.index));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double s = config.fingerprint_strength;
    fp.level = std::exp(0.25 * s * normal(rng));
    const double nyq = config.sample_rate / 2.0;
    for (const auto& c : cls.components) {
        double scale = 1.0 + 0.04 * s * (2.0 * unit(rng) - 1.0);
        // Keep the shifted component below Nyquist.
        const double top = c.kind == SignalKind::harmonic_stack ? c.frequency * c.harmonics
                           : c.kind == SignalKind::chirp   ? std::max(c.frequency, c.end_frequency)
                           : c.kind == SignalKind::noise_burst ? c.band.high_hz
                                                               : c.frequency;
        if (top * scale >= 0.98 * nyq) scale = std::min(1.0, 0.98 * nyq / std::max(top, 1.0));
        fp.frequency_scale.push_back(scale);
    }
    if (s > 0.0) {
        for (int k = 0; k < 2; ++k) {
            const double f = std::round(0.05 * nyq + unit(rng) * 0.9 * nyq);
            ComponentSpec c = tone(f, 0.03 * std::min(s, 2.0), 0.5, "device-hum", SourceCategory::unlabeled);
            fp.private_sources.push_back(c);
        }
    }
    const std::size_t total = cls.components.size() + fp.private_sources.size();
    for (std::size_t i = 0; i < total; ++i) fp.phase.push_back(2.0 * std::numbers::pi * unit(rng));
    return fp;
}

const ClassSignature& class_of(const ScenarioConfig& config, LandUseClass lut) {
    for (const auto& cls : config.classes)
        if (cls.lut == lut) return cls;
    throw InvalidArgument("scenario has no class " + std::to_string(lut.id()));
}

}  // namespace

std::vector<Recording> synthesize_day(const ScenarioConfig& config, const DeviceInfo& device, int day_index) {
    const ClassSignature& cls = class_of(config, device.lut);
    const Fingerprint fp = make_fingerprint(config, cls, device);
    const TimeCode date = config.start_date.plus_days(day_index);
    const bool weekend = date.is_weekend();
    const std::size_t length = config.samples_per_recording();

    std::vector<const ComponentSpec*> comps;
    for (const auto& c : cls.components) comps.push_back(&c);
    for (const auto& c : fp.private_sources) comps.push_back(&c);

    std::mt19937_64 rng(derive_seed(config.seed, 0xDA7, device.index, static_cast<std::uint64_t>(day_index)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Recording> out;
    for (const TimeCode& t : config.day_slots(date)) {
        std::vector<SourceSignal> signals;
        std::vector<ModulationSpec> mods;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            const ComponentSpec& c = *comps[i];
            // Draw unconditionally so the stream layout does not depend on outcomes.
            const bool active = unit(rng) < c.presence;
            const double jitter = std::exp(c.level_jitter * normal(rng));
            const std::uint64_t burst_seed = rng();
            if (!active) continue;
            const double fscale = i < fp.frequency_scale.size() ? fp.frequency_scale[i] : 1.0;
            SignalParams p;
            p.frequency = c.frequency * fscale;
            p.end_frequency = c.end_frequency * fscale;
            p.harmonics = c.harmonics;
            p.amplitude = 1.0;
            p.phase = fp.phase[i];
            p.seed = burst_seed;
            p.label = c.label;
            p.category = c.category;
            p.time_code = t;
            signals.push_back(generate_isolated_signal(c.kind, p, config.recording_seconds, config.sample_rate));
            ModulationSpec m;
            m.gain = c.amplitude * (weekend ? c.weekend_gain : c.weekday_gain) * fp.level * jitter;
            if (c.kind == SignalKind::noise_burst && c.band.high_hz > 0.0) {
                m.band = FrequencyBand{c.band.low_hz * fscale, c.band.high_hz * fscale};
            }
            mods.push_back(m);
        }
        NoiseSpec noise = config.noise;
        noise.seed = rng();
        out.push_back(Recording{t, sensor_mix(signals, mods, noise, length)});
    }
    return out;
}

std::string corpus_wav_path(const std::string& device_id, const TimeCode& t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "/%02d%02d.wav", t.hour, t.minute);
    return "device_" + device_id + "/" + t.date_string() + buf;
}

std::vector<ManifestRow> synthesize_corpus(const ScenarioConfig& config, const std::filesystem::path& root) {
    config.validate();
    const auto devices = scenario_devices(config);
    const std::size_t days = static_cast<std::size_t>(config.days);
    const std::size_t tasks = devices.size() * days;
    std::vector<std::vector<ManifestRow>> rows(tasks);
    std::filesystem::create_directories(root);
    parallel_for(tasks, [&](std::size_t task) {
        const DeviceInfo& d = devices[task / days];
        const int day = static_cast<int>(task % days);
        for (const auto& rec : synthesize_day(config, d, day)) {
            const std::string rel = corpus_wav_path(d.id, rec.time);
            write_wav(root / rel, rec.samples, static_cast<std::uint32_t>(std::llround(config.sample_rate)), 16);
            rows[task].push_back(ManifestRow{d.id, d.location, d.lut, rel, rec.time});
        }
    });
    std::vector<ManifestRow> manifest;
    for (auto& r : rows) manifest.insert(manifest.end(), r.begin(), r.end());
    write_manifest(root / "manifest.csv", manifest);
    write_text_file(root / "scenario.json", to_json(config).dump(2) + "\n");
    return manifest;
}

}  // namespace gastkit
