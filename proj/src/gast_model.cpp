#include "gastkit/gast_model.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "gastkit/text_io.hpp"

namespace gastkit {

using nlohmann::json;

namespace {

std::chrono::year_month_day to_ymd(const TimeCode& t) {
    return std::chrono::year_month_day{std::chrono::year{t.year},
                                       std::chrono::month{static_cast<unsigned>(t.month)},
                                       std::chrono::day{static_cast<unsigned>(t.day)}};
}

}  // namespace

TimeCode TimeCode::make(int year, int month, int day, int hour, int minute) {
    TimeCode t{year, month, day, hour, minute};
    if (!t.valid()) {
        throw InvalidArgument("invalid time code " + t.to_string());
    }
    return t;
}

bool TimeCode::valid() const {
    if (month < 1 || month > 12 || day < 1 || day > 31) return false;
    if (hour < 0 || hour > 23 || minute < 0 || minute > 59) return false;
    return to_ymd(*this).ok();
}

TimeCode TimeCode::plus_days(int n) const {
    const auto shifted = std::chrono::sys_days{to_ymd(*this)} + std::chrono::days{n};
    const std::chrono::year_month_day ymd{shifted};
    return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
            static_cast<int>(static_cast<unsigned>(ymd.day())), hour, minute};
}

long TimeCode::days_since_epoch() const {
    return std::chrono::sys_days{to_ymd(*this)}.time_since_epoch().count();
}

unsigned TimeCode::weekday() const {
    return std::chrono::weekday{std::chrono::sys_days{to_ymd(*this)}}.c_encoding();
}

bool TimeCode::is_weekend() const {
    const unsigned wd = weekday();
    return wd == 0 || wd == 6;
}

std::string TimeCode::date_string() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
}

std::string TimeCode::to_string() const {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d", year, month, day, hour, minute);
    return buf;
}

std::strong_ordering compare_timecodes(const TimeCode& a, const TimeCode& b) { return a <=> b; }

// ---------------------------------------------------------------------------

const std::array<std::string_view, kLandUseClassCount>& land_use_names() {
    static constexpr std::array<std::string_view, kLandUseClassCount> names{
        "commercial area",   "green space",  "main street",
        "playground",        "residential area", "residential streets",
        "small garden",      "urban agriculture", "urban forest"};
    return names;
}

LandUseClass::LandUseClass(int id) : id_(id) {
    if (id < 1 || id > kLandUseClassCount) {
        throw InvalidArgument("land-use class id " + std::to_string(id) + " outside 1.." +
                              std::to_string(kLandUseClassCount));
    }
}

LandUseClass LandUseClass::from_name(std::string_view name) {
    const auto& names = land_use_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return LandUseClass(static_cast<int>(i) + 1);
    }
    throw InvalidArgument("unknown land-use class '" + std::string(name) + "'");
}

std::string_view LandUseClass::name() const { return land_use_names()[index()]; }

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::pair<GeoLayerKind, std::string_view>, 5> kGeoKinds{{
    {GeoLayerKind::land_use, "land_use"},
    {GeoLayerKind::point_cloud, "point_cloud"},
    {GeoLayerKind::distance_matrix, "distance_matrix"},
    {GeoLayerKind::meteorological, "meteorological"},
    {GeoLayerKind::custom, "custom"},
}};

constexpr std::array<std::pair<SourceCategory, std::string_view>, 4> kCategories{{
    {SourceCategory::biophony, "biophony"},
    {SourceCategory::geophony, "geophony"},
    {SourceCategory::anthrophony, "anthrophony"},
    {SourceCategory::unlabeled, "unlabeled"},
}};

}  // namespace

std::string_view to_string(GeoLayerKind kind) {
    for (const auto& [k, s] : kGeoKinds)
        if (k == kind) return s;
    return "custom";
}

GeoLayerKind geo_layer_kind_from_string(std::string_view s) {
    for (const auto& [k, name] : kGeoKinds)
        if (name == s) return k;
    throw FormatError("unknown geolayer kind '" + std::string(s) + "'");
}

std::string_view to_string(SourceCategory c) {
    for (const auto& [k, s] : kCategories)
        if (k == c) return s;
    return "unlabeled";
}

SourceCategory source_category_from_string(std::string_view s) {
    for (const auto& [k, name] : kCategories)
        if (name == s) return k;
    throw FormatError("unknown source category '" + std::string(s) + "'");
}

GeoLayer GeoLayer::land_use(LandUseClass cls) {
    return GeoLayer{GeoLayerKind::land_use, cls, std::nullopt};
}

GeoLayer GeoLayer::opaque(GeoLayerKind kind, OpaquePayload payload, std::optional<TimeCode> time_code) {
    if (kind == GeoLayerKind::land_use) {
        throw InvalidArgument("land_use layers carry a class id, not an opaque payload");
    }
    return GeoLayer{kind, std::move(payload), time_code};
}

// ---------------------------------------------------------------------------

std::optional<LandUseClass> Soundscape::land_use() const {
    for (const auto& layer : geo_) {
        if (const auto* cls = std::get_if<LandUseClass>(&layer.payload)) return *cls;
    }
    return std::nullopt;
}

Soundscape build_soundscape(std::vector<GeoLayer> geo, SensorSpec sensor, RecordingMap recordings,
                            std::vector<SourceSignal> sources, std::vector<TimeCode> times) {
    if (times.empty()) throw InvalidArgument("soundscape needs at least one time code");
    if (!(sensor.sample_rate > 0.0)) throw InvalidArgument("sensor sample_rate must be positive");
    for (const auto& t : times) {
        if (!t.valid()) throw InvalidArgument("invalid time code " + t.to_string());
    }
    for (const auto& layer : geo) {
        const bool is_lut = std::holds_alternative<LandUseClass>(layer.payload);
        if (is_lut != (layer.kind == GeoLayerKind::land_use)) {
            throw InvalidArgument("geolayer kind '" + std::string(to_string(layer.kind)) +
                                  "' does not match its payload");
        }
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (const auto& [t, samples] : recordings) {
        if (!std::binary_search(times.begin(), times.end(), t)) {
            throw InvalidArgument("orphan recording at " + t.to_string() + ": time code not in T");
        }
    }
    Soundscape s;
    s.geo_ = std::move(geo);
    s.sensor_ = std::move(sensor);
    s.recordings_ = std::move(recordings);
    s.sources_ = std::move(sources);
    s.times_ = std::move(times);
    return s;
}

std::map<SourceCategory, std::vector<SourceSignal>> partition_sources(
    const std::vector<SourceSignal>& sources, const SourceTaxonomy& taxonomy) {
    std::map<SourceCategory, std::vector<SourceSignal>> groups;
    for (const auto& [c, name] : kCategories) groups[c];
    for (const auto& s : sources) {
        const auto it = taxonomy.find(s.label);
        groups[it == taxonomy.end() ? SourceCategory::unlabeled : it->second].push_back(s);
    }
    return groups;
}

// ---------------------------------------------------------------------------

TimeCode TimeCode::parse_date(std::string_view s) {
    int y = 0, m = 0, d = 0;
    char tail = 0;
    const std::string text(s);
    if (std::sscanf(text.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) {
        throw FormatError("expected a YYYY-MM-DD date, got '" + text + "'");
    }
    try {
        return make(y, m, d);
    } catch (const InvalidArgument& e) {
        throw FormatError(e.what());
    }
}

json to_json(const TimeCode& t) { return json::array({t.year, t.month, t.day, t.hour, t.minute}); }

TimeCode timecode_from_json(const json& j) {
    if (!j.is_array() || j.size() != 5) throw FormatError("time code must be a 5-element array");
    return TimeCode::make(j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>(),
                          j[4].get<int>());
}

json to_json(const Soundscape& s) {
    json geo = json::array();
    for (const auto& layer : s.geo()) {
        json l{{"kind", to_string(layer.kind)}};
        if (const auto* cls = std::get_if<LandUseClass>(&layer.payload)) {
            l["lut_id"] = cls->id();
        } else {
            const auto& p = std::get<OpaquePayload>(layer.payload);
            l["shape"] = p.shape;
            l["values"] = p.values;
        }
        if (layer.time_code) l["time_code"] = to_json(*layer.time_code);
        geo.push_back(std::move(l));
    }
    const auto& sensor = s.sensor();
    json recordings = json::array();
    for (const auto& [t, samples] : s.recordings()) {
        recordings.push_back({{"time_code", to_json(t)}, {"samples", samples}});
    }
    json sources = json::array();
    for (const auto& src : s.sources()) {
        sources.push_back({{"label", src.label},
                           {"category", to_string(src.category)},
                           {"sample_rate", src.sample_rate},
                           {"time_code", to_json(src.time_code)},
                           {"samples", src.samples}});
    }
    json times = json::array();
    for (const auto& t : s.times()) times.push_back(to_json(t));
    return json{{"G", std::move(geo)},
                {"A",
                 {{"device_id", sensor.device_id},
                  {"location", {sensor.location.easting, sensor.location.northing}},
                  {"sample_rate", sensor.sample_rate},
                  {"bit_depth", sensor.bit_depth},
                  {"recordings", std::move(recordings)}}},
                {"S", std::move(sources)},
                {"T", std::move(times)}};
}

Soundscape soundscape_from_json(const json& j) {
    try {
        std::vector<GeoLayer> geo;
        for (const auto& l : j.at("G")) {
            const auto kind = geo_layer_kind_from_string(l.at("kind").get<std::string>());
            std::optional<TimeCode> tc;
            if (l.contains("time_code")) tc = timecode_from_json(l.at("time_code"));
            if (kind == GeoLayerKind::land_use) {
                GeoLayer layer = GeoLayer::land_use(LandUseClass(l.at("lut_id").get<int>()));
                layer.time_code = tc;
                geo.push_back(std::move(layer));
            } else {
                OpaquePayload p{l.at("shape").get<std::vector<std::size_t>>(),
                                l.at("values").get<std::vector<double>>()};
                geo.push_back(GeoLayer::opaque(kind, std::move(p), tc));
            }
        }
        const auto& a = j.at("A");
        SensorSpec sensor;
        sensor.device_id = a.at("device_id").get<std::string>();
        sensor.location = {a.at("location").at(0).get<double>(), a.at("location").at(1).get<double>()};
        sensor.sample_rate = a.at("sample_rate").get<double>();
        sensor.bit_depth = a.at("bit_depth").get<int>();
        RecordingMap recordings;
        for (const auto& r : a.at("recordings")) {
            recordings.emplace(timecode_from_json(r.at("time_code")),
                               r.at("samples").get<std::vector<double>>());
        }
        std::vector<SourceSignal> sources;
        for (const auto& s : j.at("S")) {
            SourceSignal src;
            src.label = s.at("label").get<std::string>();
            src.category = source_category_from_string(s.at("category").get<std::string>());
            src.sample_rate = s.at("sample_rate").get<double>();
            src.time_code = timecode_from_json(s.at("time_code"));
            src.samples = s.at("samples").get<std::vector<double>>();
            sources.push_back(std::move(src));
        }
        std::vector<TimeCode> times;
        for (const auto& t : j.at("T")) times.push_back(timecode_from_json(t));
        return build_soundscape(std::move(geo), std::move(sensor), std::move(recordings),
                                std::move(sources), std::move(times));
    } catch (const json::exception& e) {
        throw FormatError(std::string("soundscape JSON: ") + e.what());
    }
}

void save_soundscape(const std::filesystem::path& path, const Soundscape& s) {
    write_text_file(path, to_json(s).dump(1) + "\n");
}

Soundscape load_soundscape(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return soundscape_from_json(j);
}

// ---------------------------------------------------------------------------

std::string manifest_header() {
    return "device_id,utm_east,utm_north,lut_id,wav_path,t1,t2,t3,t4,t5";
}

std::string manifest_to_csv(const std::vector<ManifestRow>& rows) {
    std::string out = manifest_header() + "\n";
    for (const auto& r : rows) {
        if (r.device_id.find(',') != std::string::npos || r.wav_path.find(',') != std::string::npos) {
            throw InvalidArgument("manifest fields may not contain commas");
        }
        out += r.device_id + ',' + format_double(r.location.easting) + ',' +
               format_double(r.location.northing) + ',' + std::to_string(r.lut.id()) + ',' +
               r.wav_path + ',' + std::to_string(r.time.year) + ',' + std::to_string(r.time.month) +
               ',' + std::to_string(r.time.day) + ',' + std::to_string(r.time.hour) + ',' +
               std::to_string(r.time.minute) + '\n';
    }
    return out;
}

std::vector<ManifestRow> manifest_from_csv(std::string_view text) {
    std::vector<ManifestRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != manifest_header()) throw FormatError("manifest: unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 10) {
            throw FormatError("manifest line " + std::to_string(line_no) + ": expected 10 columns, got " +
                              std::to_string(f.size()));
        }
        ManifestRow r;
        r.device_id = f[0];
        r.location = {parse_double(f[1], "utm_east"), parse_double(f[2], "utm_north")};
        r.lut = LandUseClass(static_cast<int>(parse_int(f[3], "lut_id")));
        r.wav_path = f[4];
        r.time = TimeCode::make(static_cast<int>(parse_int(f[5], "t1")), static_cast<int>(parse_int(f[6], "t2")),
                                static_cast<int>(parse_int(f[7], "t3")), static_cast<int>(parse_int(f[8], "t4")),
                                static_cast<int>(parse_int(f[9], "t5")));
        rows.push_back(std::move(r));
    }
    if (line_no == 0) throw FormatError("manifest: empty file");
    return rows;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
    write_text_file(path, manifest_to_csv(rows));
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
    return manifest_from_csv(read_text_file(path));
}

}  // namespace gastkit
