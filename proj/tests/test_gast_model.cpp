#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "gastkit/gast_model.hpp"

using namespace gastkit;

namespace {

TimeCode random_code(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> y(2018, 2021), mo(1, 12), h(0, 23), mi(0, 59);
    TimeCode t{y(rng), mo(rng), 1, h(rng), mi(rng)};
    std::uniform_int_distribution<int> d(1, 28);
    t.day = d(rng);
    return t;
}

Soundscape small_soundscape() {
    RecordingMap recs;
    recs[TimeCode::make(2019, 5, 1, 0, 20)] = {0.1, -0.2, 0.3};
    recs[TimeCode::make(2019, 5, 1, 0, 0)] = {0.0, 0.5, -0.5};
    SensorSpec sensor{"07", {389000.5, 5819000.25}, 44100.0, 16};
    std::vector<GeoLayer> geo{GeoLayer::land_use(LandUseClass(3)),
                              GeoLayer::opaque(GeoLayerKind::distance_matrix, {{2, 2}, {0, 1.5, 1.5, 0}})};
    std::vector<SourceSignal> sources{{{0.25, 0.5}, 44100.0, TimeCode::make(2019, 5, 1), "bird", SourceCategory::biophony}};
    return build_soundscape(geo, sensor, recs, sources,
                            {TimeCode::make(2019, 5, 1, 0, 20), TimeCode::make(2019, 5, 1, 0, 0)});
}

}  // namespace

TEST_CASE("timecode ordering examples") {
    CHECK(compare_timecodes(TimeCode::make(2019, 5, 1, 0, 0), TimeCode::make(2019, 5, 1, 0, 20)) ==
          std::strong_ordering::less);
    CHECK(compare_timecodes(TimeCode::make(2022, 10, 5), TimeCode::make(2022, 10, 5)) ==
          std::strong_ordering::equal);
    CHECK(compare_timecodes(TimeCode::make(2019, 12, 31, 23, 40), TimeCode::make(2020, 1, 1)) ==
          std::strong_ordering::less);
}

TEST_CASE("timecode validation") {
    CHECK_THROWS_AS(TimeCode::make(2019, 2, 30), InvalidArgument);
    CHECK_THROWS_AS(TimeCode::make(2019, 13, 1), InvalidArgument);
    CHECK_THROWS_AS(TimeCode::make(2019, 1, 1, 24, 0), InvalidArgument);
    CHECK_THROWS_AS(TimeCode::make(2019, 1, 1, 0, 60), InvalidArgument);
    CHECK_NOTHROW(TimeCode::make(2020, 2, 29));
    CHECK_NOTHROW(TimeCode::make(2019, 1, 1, 0, 26));
}

TEST_CASE("timecode calendar helpers") {
    const auto t = TimeCode::make(2019, 5, 1);
    CHECK(t.weekday() == 3);  // Wednesday
    CHECK_FALSE(t.is_weekend());
    CHECK(t.plus_days(3).is_weekend());
    CHECK(t.plus_days(31).date_string() == "2019-06-01");
    CHECK(TimeCode::make(1970, 1, 2).days_since_epoch() == 1);
    CHECK(TimeCode::make(2019, 5, 1, 7, 5).to_string() == "2019-05-01 07:05");
}

TEST_CASE("timecode order is total, antisymmetric and transitive") {
    std::mt19937_64 rng(11);
    std::vector<TimeCode> codes;
    for (int i = 0; i < 300; ++i) codes.push_back(random_code(rng));
    for (std::size_t i = 0; i < codes.size(); ++i) {
        for (std::size_t j = 0; j < codes.size(); j += 7) {
            const auto ab = compare_timecodes(codes[i], codes[j]);
            const auto ba = compare_timecodes(codes[j], codes[i]);
            CHECK((ab == std::strong_ordering::less) == (ba == std::strong_ordering::greater));
            CHECK((ab == std::strong_ordering::equal) == (codes[i] == codes[j]));
        }
    }
    std::vector<TimeCode> sorted = codes;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i + 2 < sorted.size(); ++i) {
        CHECK(compare_timecodes(sorted[i], sorted[i + 1]) != std::strong_ordering::greater);
        CHECK(compare_timecodes(sorted[i], sorted[i + 2]) != std::strong_ordering::greater);
    }
}

TEST_CASE("land use classes follow the fixed table order") {
    CHECK(LandUseClass(1).name() == "commercial area");
    CHECK(LandUseClass(3).name() == "main street");
    CHECK(LandUseClass(9).name() == "urban forest");
    CHECK(LandUseClass::from_name("small garden").id() == 7);
    for (int id = 1; id <= kLandUseClassCount; ++id) {
        CHECK(LandUseClass::from_name(LandUseClass(id).name()).id() == id);
    }
    CHECK_THROWS_AS(LandUseClass(0), InvalidArgument);
    CHECK_THROWS_AS(LandUseClass(10), InvalidArgument);
    CHECK_THROWS_AS(LandUseClass::from_name("airport"), InvalidArgument);
}

TEST_CASE("build_soundscape sorts times and keeps empty source sets") {
    const auto s = small_soundscape();
    REQUIRE(s.times().size() == 2);
    CHECK(s.times()[0] < s.times()[1]);
    CHECK(s.land_use()->id() == 3);

    RecordingMap recs{{TimeCode::make(2019, 5, 1), {0.0}}};
    const auto no_sources = build_soundscape({}, SensorSpec{"01", {}, 44100.0, 16}, recs, {},
                                             {TimeCode::make(2019, 5, 1)});
    CHECK(no_sources.sources().empty());
}

TEST_CASE("build_soundscape errors") {
    RecordingMap recs{{TimeCode::make(2019, 5, 1, 0, 40), {0.0}}};
    CHECK_THROWS_AS(build_soundscape({}, SensorSpec{"01"}, recs, {}, {TimeCode::make(2019, 5, 1, 0, 0)}),
                    InvalidArgument);
    CHECK_THROWS_AS(build_soundscape({}, SensorSpec{"01"}, {}, {}, {}), InvalidArgument);
    SensorSpec bad{"01"};
    bad.sample_rate = 0;
    CHECK_THROWS_AS(build_soundscape({}, bad, {}, {}, {TimeCode::make(2019, 5, 1)}), InvalidArgument);
}

TEST_CASE("partition_sources") {
    const auto t = TimeCode::make(2019, 5, 1);
    const SourceSignal bird{{0.1}, 100, t, "birdsong", SourceCategory::unlabeled};
    const SourceSignal wind{{0.2}, 100, t, "wind", SourceCategory::unlabeled};
    const SourceSignal car{{0.3}, 100, t, "traffic", SourceCategory::unlabeled};
    const SourceTaxonomy tax{{"birdsong", SourceCategory::biophony},
                             {"wind", SourceCategory::geophony},
                             {"traffic", SourceCategory::anthrophony}};

    auto p = partition_sources({bird, wind, car}, tax);
    CHECK(p[SourceCategory::biophony].size() == 1);
    CHECK(p[SourceCategory::geophony].size() == 1);
    CHECK(p[SourceCategory::anthrophony].size() == 1);
    CHECK(p[SourceCategory::unlabeled].empty());

    auto none = partition_sources({bird, wind, car}, {});
    CHECK(none[SourceCategory::unlabeled].size() == 3);

    auto two = partition_sources({bird, bird, car}, tax);
    CHECK(two[SourceCategory::biophony].size() == 2);
    CHECK(two[SourceCategory::anthrophony].size() == 1);
    std::size_t total = 0;
    for (const auto& [cat, group] : two) total += group.size();
    CHECK(total == 3);
}

TEST_CASE("soundscape json round trip is exact") {
    const auto s = small_soundscape();
    CHECK(soundscape_from_json(to_json(s)) == s);
    const auto path = std::filesystem::temp_directory_path() / "gastkit_test_soundscape.json";
    save_soundscape(path, s);
    CHECK(load_soundscape(path) == s);
    std::filesystem::remove(path);
}

TEST_CASE("manifest csv round trip") {
    std::vector<ManifestRow> rows{
        {"01", {389000.5, 5819000.125}, LandUseClass(3), "device_01/2019-05-01/0000.wav", TimeCode::make(2019, 5, 1)},
        {"02", {1.0 / 3.0, 2.0}, LandUseClass(9), "device_02/2019-05-01/0020.wav",
         TimeCode::make(2019, 5, 1, 0, 20)}};
    const auto text = manifest_to_csv(rows);
    CHECK(text.rfind("device_id,utm_east,utm_north,lut_id,wav_path,t1,t2,t3,t4,t5", 0) == 0);
    CHECK(manifest_from_csv(text) == rows);
    CHECK_THROWS(manifest_from_csv("device_id,utm_east\n01,2\n"));
}
