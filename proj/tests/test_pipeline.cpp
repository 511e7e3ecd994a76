#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "gastkit/pipeline.hpp"
#include "gastkit/text_io.hpp"
#include "tree_digest.hpp"

using namespace gastkit;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string invalid_message(const json& j) {
    try {
        config_from_json(j);
    } catch (const InvalidArgument& e) {
        return e.what();
    }
    return {};
}

PipelineConfig tiny(const fs::path& out) {
    auto c = config_from_json(json::parse(R"({
        "seed": 3,
        "scenario": {"days": 7, "recordings_per_day": 4},
        "vae": {"epochs": 1},
        "classifier": {"epochs": 1}
    })"));
    c.out = out;
    return c;
}

int run_all(const PipelineConfig& c, std::ostream& log) {
    for (const char* s : {"synth", "fcm", "train-vae", "embed", "cluster", "train-clf", "evaluate", "report"}) {
        const int code = run_subcommand(s, c, log, log);
        if (code != 0) return code;
    }
    return 0;
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
    const auto c = config_from_json(json::object());
    CHECK(c.scale == Scale::desk);
    CHECK(c.fcm.spectral.n_bins == 1024);
    CHECK(c.fcm.variance_threshold == 0.95);
    CHECK(c.vae.latent_dim == 16);
    CHECK(c.vae.e_max == 700);
    CHECK(c.vae.s == 1e-4);
    CHECK(c.classifier.sequence_length == 7);
    CHECK(c.split.fractions == std::array<double, 3>{0.6, 0.2, 0.2});
    CHECK(c.fcm_side == 64);

    const auto p = config_from_json(json{{"scale", "paper"}});
    CHECK(p.vae.input_side == 128);
    CHECK(p.classifier.side == 256);
    CHECK(p.vae.lr == 1e-5);
    CHECK(config_from_json(json::object(), Scale::paper).fcm_side == 256);
}

TEST_CASE("config errors name the field") {
    CHECK(invalid_message(json::parse(R"({"classifier": {"fractions": [0.5, 0.2, 0.2]}})")).find("fraction") !=
          std::string::npos);
    CHECK(invalid_message(json{{"fooo", 1}}).find("fooo") != std::string::npos);
    CHECK(invalid_message(json{{"vae", {{"fooo", 1}}}}).find("vae.fooo") != std::string::npos);
    CHECK(invalid_message(json{{"vae", {{"epochs", "many"}}}}).find("vae.epochs") != std::string::npos);
    CHECK(invalid_message(json{{"cluster", {{"k_max", 2}}}}).find("k_max") != std::string::npos);
    CHECK(invalid_message(json{{"fcm", {{"resize", 48}}}}).find("fcm.resize") != std::string::npos);
    CHECK(invalid_message(json{{"scenario", {{"seed", 4}}}}).find("scenario.seed") != std::string::npos);
    CHECK(invalid_message(json{{"scale", "huge"}}).find("scale") != std::string::npos);

    const auto path = fs::temp_directory_path() / "gastkit_bad_config.json";
    write_text_file(path, "{\n  \"seed\": 1,\n  \"vae\": {\n    \"epochs\": ,\n  }\n}\n");
    try {
        validate_config(path);
        FAIL("expected a parse error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":4:") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("config hash tracks content") {
    const auto a = config_from_json(json::object());
    auto b = a;
    CHECK(a.hash() == b.hash());
    b.out = "elsewhere";
    CHECK(a.hash() == b.hash());
    b.seed = 1;
    CHECK(a.hash() != b.hash());
    CHECK(config_from_json(a.to_json()).hash() == a.hash());
    CHECK(a.seeded_vae().seed != a.seeded_classifier(0).seed);
    CHECK(a.seeded_classifier(0).seed != a.seeded_classifier(1).seed);
}

TEST_CASE("stages respect dependencies and provenance") {
    const fs::path out = fs::temp_directory_path() / "gastkit_pipeline_test";
    fs::remove_all(out);
    const auto c = tiny(out);
    std::ostringstream log;

    CHECK(run_subcommand("evaluate", c, log, log) == 2);
    CHECK(run_subcommand("fcm", c, log, log) == 2);
    auto bad = c;
    bad.split.fractions = {0.5, 0.2, 0.2};
    CHECK(run_subcommand("synth", bad, log, log) == 1);

    REQUIRE(run_all(c, log) == 0);
    for (const char* s : {"synth", "fcm", "train-vae", "embed", "cluster", "train-clf", "evaluate", "report"}) {
        const auto p = read_provenance(stage_dir(out, s));
        CHECK(p.stage == s);
        CHECK(p.config_hash == c.hash());
        CHECK(p.seed == 3);
        CHECK(!p.timestamp.empty());
    }
    // One FCM per (device, date): 18 devices, 7 days.
    std::size_t fcms = 0;
    for (const auto& e : fs::recursive_directory_iterator(stage_dir(out, "fcm")))
        if (e.path().extension() == ".gfcm") ++fcms;
    CHECK(fcms == 18 * 7);
    const std::string table = read_text_file(stage_dir(out, "report") / "table.txt");
    CHECK(table.find("unseen device") != std::string::npos);
    CHECK(table.find("macro F1") != std::string::npos);

    // A second run reproduces every byte apart from provenance timestamps.
    const auto first = tree_digest(out);
    const fs::path out2 = out.string() + "_again";
    fs::remove_all(out2);
    auto c2 = c;
    c2.out = out2;
    REQUIRE(run_all(c2, log) == 0);
    CHECK(tree_digest(out2) == first);

    // Metrics from another configuration make the report refuse.
    const fs::path m = stage_dir(out, "evaluate") / "same_device.json";
    json j = json::parse(read_text_file(m));
    j["config_hash"] = "0000000000000000";
    write_text_file(m, j.dump(2));
    std::ostringstream err;
    CHECK(run_subcommand("report", c, log, err) == 2);
    CHECK(err.str().find("different configurations") != std::string::npos);

    fs::remove_all(out);
    fs::remove_all(out2);
}

TEST_CASE("selftest passes") {
    std::ostringstream log;
    CHECK(run_subcommand("selftest", PipelineConfig::defaults(Scale::desk), log, log) == 0);
    CHECK(log.str().find("FAIL") == std::string::npos);
}
