#pragma once

// The soundscape tuple x = (G, A, S, T): geolayers, sensor data, isolated
// source signals and time codes.

#include <array>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gastkit/common.hpp"

namespace gastkit {

/// Recording time as (year, month, day, hour, minute). Ordered
/// lexicographically over the five fields.
struct TimeCode {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;

    /// Validating constructor; throws InvalidArgument on out-of-range fields
    /// or a month/day combination that does not exist.
    static TimeCode make(int year, int month, int day, int hour = 0, int minute = 0);

    bool valid() const;
    TimeCode date() const { return {year, month, day, 0, 0}; }
    TimeCode plus_days(int n) const;
    /// Days since 1970-01-01 of the calendar date.
    long days_since_epoch() const;
    /// 0 = Sunday ... 6 = Saturday.
    unsigned weekday() const;
    bool is_weekend() const;

    std::string date_string() const;  // YYYY-MM-DD
    std::string to_string() const;    // YYYY-MM-DD HH:MM
    /// Inverse of date_string(); throws FormatError.
    static TimeCode parse_date(std::string_view s);

    friend auto operator<=>(const TimeCode&, const TimeCode&) = default;
    friend bool operator==(const TimeCode&, const TimeCode&) = default;
};

std::strong_ordering compare_timecodes(const TimeCode& a, const TimeCode& b);

/// Number of land-use classes.
inline constexpr int kLandUseClassCount = 9;

/// Land-use type, id 1..9 in the fixed table order.
class LandUseClass {
public:
    explicit LandUseClass(int id);
    static LandUseClass from_name(std::string_view name);

    int id() const { return id_; }
    std::string_view name() const;
    /// Zero-based index for array addressing.
    std::size_t index() const { return static_cast<std::size_t>(id_ - 1); }

    friend bool operator==(LandUseClass, LandUseClass) = default;
    friend auto operator<=>(LandUseClass, LandUseClass) = default;

private:
    int id_;
};

const std::array<std::string_view, kLandUseClassCount>& land_use_names();

enum class GeoLayerKind { land_use, point_cloud, distance_matrix, meteorological, custom };

std::string_view to_string(GeoLayerKind kind);
GeoLayerKind geo_layer_kind_from_string(std::string_view s);

/// Stored-but-uninterpreted layer content (point clouds, distances, weather).
struct OpaquePayload {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    friend bool operator==(const OpaquePayload&, const OpaquePayload&) = default;
};

struct GeoLayer {
    GeoLayerKind kind = GeoLayerKind::custom;
    std::variant<LandUseClass, OpaquePayload> payload{OpaquePayload{}};
    std::optional<TimeCode> time_code;

    static GeoLayer land_use(LandUseClass cls);
    static GeoLayer opaque(GeoLayerKind kind, OpaquePayload payload,
                           std::optional<TimeCode> time_code = std::nullopt);

    friend bool operator==(const GeoLayer&, const GeoLayer&) = default;
};

enum class SourceCategory { biophony, geophony, anthrophony, unlabeled };

std::string_view to_string(SourceCategory c);
SourceCategory source_category_from_string(std::string_view s);

/// One isolated source signal s_T.
struct SourceSignal {
    std::vector<double> samples;
    double sample_rate = 0.0;
    TimeCode time_code;
    std::string label;
    SourceCategory category = SourceCategory::unlabeled;

    friend bool operator==(const SourceSignal&, const SourceSignal&) = default;
};

struct UtmLocation {
    double easting = 0.0;
    double northing = 0.0;
    friend bool operator==(const UtmLocation&, const UtmLocation&) = default;
};

struct SensorSpec {
    std::string device_id;
    UtmLocation location;
    double sample_rate = 44100.0;
    int bit_depth = 16;
    friend bool operator==(const SensorSpec&, const SensorSpec&) = default;
};

using RecordingMap = std::map<TimeCode, std::vector<double>>;

/// Validated, immutable soundscape. Build through build_soundscape().
class Soundscape {
public:
    const std::vector<GeoLayer>& geo() const { return geo_; }
    const SensorSpec& sensor() const { return sensor_; }
    const RecordingMap& recordings() const { return recordings_; }
    const std::vector<SourceSignal>& sources() const { return sources_; }
    const std::vector<TimeCode>& times() const { return times_; }

    /// First land-use layer, if any.
    std::optional<LandUseClass> land_use() const;

    friend bool operator==(const Soundscape&, const Soundscape&) = default;

private:
    friend Soundscape build_soundscape(std::vector<GeoLayer>, SensorSpec, RecordingMap,
                                       std::vector<SourceSignal>, std::vector<TimeCode>);
    std::vector<GeoLayer> geo_;
    SensorSpec sensor_;
    RecordingMap recordings_;
    std::vector<SourceSignal> sources_;
    std::vector<TimeCode> times_;
};

/// Sorts and deduplicates times; throws InvalidArgument when times is empty,
/// a code is not calendar-valid, the sample rate is not positive, or a
/// recording sits at a time code missing from times (orphan recording).
Soundscape build_soundscape(std::vector<GeoLayer> geo, SensorSpec sensor, RecordingMap recordings,
                            std::vector<SourceSignal> sources, std::vector<TimeCode> times);

using SourceTaxonomy = std::map<std::string, SourceCategory, std::less<>>;

/// Groups sources by the category their label maps to; unmapped labels land
/// in unlabeled. Every category key is present in the result.
std::map<SourceCategory, std::vector<SourceSignal>> partition_sources(
    const std::vector<SourceSignal>& sources, const SourceTaxonomy& taxonomy);

// Soundscape metadata file (JSON mirroring the tuple).
nlohmann::json to_json(const Soundscape& s);
Soundscape soundscape_from_json(const nlohmann::json& j);
void save_soundscape(const std::filesystem::path& path, const Soundscape& s);
Soundscape load_soundscape(const std::filesystem::path& path);

nlohmann::json to_json(const TimeCode& t);
TimeCode timecode_from_json(const nlohmann::json& j);

/// Dataset manifest row:
/// device_id, utm_east, utm_north, lut_id, wav_path, t1..t5
struct ManifestRow {
    std::string device_id;
    UtmLocation location;
    LandUseClass lut{1};
    std::string wav_path;
    TimeCode time;
    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

std::string manifest_header();
std::string manifest_to_csv(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> manifest_from_csv(std::string_view text);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace gastkit
