#pragma once

// Generative realization of the sensor function: modulated isolated signals
// summed with per-recording noise, used to fabricate labelled corpora.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gastkit/gast_model.hpp"

namespace gastkit {

enum class SignalKind { sine, harmonic_stack, chirp, noise_burst };

std::string_view to_string(SignalKind k);
SignalKind signal_kind_from_string(std::string_view s);

struct SignalParams {
    double frequency = 1000.0;      // sine / fundamental / chirp start (Hz)
    double end_frequency = 2000.0;  // chirp end (Hz)
    int harmonics = 3;              // harmonic_stack: partials f0..n*f0, amplitude 1/h
    double amplitude = 1.0;
    double phase = 0.0;             // radians
    double burst_start_s = 0.0;     // noise_burst active window
    double burst_length_s = -1.0;   // < 0: until end
    std::uint64_t seed = 0;         // noise_burst generator
    std::string label;
    SourceCategory category = SourceCategory::unlabeled;
    TimeCode time_code;
};

/// Throws InvalidArgument for non-positive duration or rate and for any
/// requested frequency at or above Nyquist (aliasing).
SourceSignal generate_isolated_signal(SignalKind kind, const SignalParams& params, double duration_s,
                                      double sample_rate);

struct FrequencyBand {
    double low_hz = 0.0;
    double high_hz = 0.0;
};

/// omega: gain, optional inverse-distance attenuation and optional pass band.
struct ModulationSpec {
    double gain = 1.0;
    std::optional<double> distance_m;
    std::optional<FrequencyBand> band;
};

SourceSignal apply_modulation(const SourceSignal& signal, const ModulationSpec& spec);

enum class NoiseKind { white, pink };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::white;
    double amplitude = 0.0;  // standard deviation of the realization
    std::uint64_t seed = 0;
};

/// One noise realization of the given length. White noise is Gaussian with
/// standard deviation `amplitude`; pink noise is filtered white noise
/// rescaled to the same standard deviation.
std::vector<double> make_noise(const NoiseSpec& noise, std::size_t length);

/// Sample-wise sum of the modulated signals (zero-padded or truncated to
/// length_samples) plus one noise realization, clipped to [-1, 1].
/// `modulations` is either empty (identity) or parallel to `signals`.
std::vector<double> sensor_mix(const std::vector<SourceSignal>& signals,
                               const std::vector<ModulationSpec>& modulations, const NoiseSpec& noise,
                               std::size_t length_samples);

// ---------------------------------------------------------------------------
// Scenario-driven corpus synthesis.

/// One sound source of a class signature. Each recording the component is
/// active with probability `presence`, at amplitude scaled by the day-type
/// gain and a log-normal level jitter.
struct ComponentSpec {
    SignalKind kind = SignalKind::sine;
    double frequency = 1000.0;
    double end_frequency = 2000.0;
    int harmonics = 1;
    FrequencyBand band{0.0, 0.0};  // noise_burst pass band; empty = broadband
    double amplitude = 0.1;
    double weekday_gain = 1.0;
    double weekend_gain = 1.0;
    double presence = 1.0;
    double level_jitter = 0.0;
    std::string label;
    SourceCategory category = SourceCategory::unlabeled;
};

struct ClassSignature {
    LandUseClass lut{1};
    std::vector<ComponentSpec> components;
    int devices = 0;  // 0: use ScenarioConfig::devices_per_class
};

struct ScenarioConfig {
    std::vector<ClassSignature> classes;
    int devices_per_class = 2;
    int days = 14;
    int recordings_per_day = 12;
    int first_slot_minute = 0;  // minutes after midnight of the first slot
    int slot_spacing_minutes = 20;
    double recording_seconds = 0.5;
    double sample_rate = 8192.0;
    TimeCode start_date{2019, 5, 1, 0, 0};
    NoiseSpec noise{NoiseKind::white, 0.002, 0};
    /// Scales the per-device fingerprint (level offset, frequency shift and
    /// private sources). 0 disables fingerprints.
    double fingerprint_strength = 1.0;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument naming the offending field.
    void validate() const;
    std::size_t samples_per_recording() const;
    std::vector<TimeCode> day_slots(const TimeCode& date) const;
};

/// Desk-scale default: 9 classes with distinct spectral signatures.
ScenarioConfig default_scenario();

nlohmann::json to_json(const ScenarioConfig& c);
/// Missing keys take defaults; unknown keys are rejected.
ScenarioConfig scenario_from_json(const nlohmann::json& j);

struct DeviceInfo {
    std::string id;
    LandUseClass lut{1};
    UtmLocation location;
    std::size_t index = 0;           // global device index
    std::size_t index_in_class = 0;  // 0 = first recorder of its class
};

std::vector<DeviceInfo> scenario_devices(const ScenarioConfig& config);

struct Recording {
    TimeCode time;
    std::vector<double> samples;
};

/// All recordings of one (device, day). The generator is seeded from
/// (master seed, device index, day index) only, so any evaluation order
/// yields identical samples.
std::vector<Recording> synthesize_day(const ScenarioConfig& config, const DeviceInfo& device, int day_index);

/// Writes corpus_root/device_<id>/<YYYY>-<MM>-<DD>/<HH><MM>.wav, manifest.csv
/// and scenario.json; returns the manifest rows in (device, time) order.
std::vector<ManifestRow> synthesize_corpus(const ScenarioConfig& config,
                                           const std::filesystem::path& corpus_root);

/// Relative WAV path for a recording inside a corpus.
std::string corpus_wav_path(const std::string& device_id, const TimeCode& t);

}  // namespace gastkit
