#pragma once

// Stage orchestration behind the command-line tool: configuration, artifact
// layout and provenance records.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gastkit/classifier.hpp"
#include "gastkit/cluster.hpp"
#include "gastkit/fcm.hpp"
#include "gastkit/synthesis.hpp"
#include "gastkit/vae.hpp"

namespace gastkit {

inline constexpr std::string_view gastkit_version = "0.1.0";

/// A stage input is absent or was produced under a different configuration.
class MissingArtifact : public Error {
public:
    using Error::Error;
};

enum class Scale { desk, paper };
std::string_view to_string(Scale s);
Scale scale_from_string(std::string_view s);

struct PipelineConfig {
    std::uint64_t seed = 0;
    Scale scale = Scale::desk;
    ScenarioConfig scenario;
    FcmConfig fcm;
    std::size_t fcm_side = 64;  // stored FCMs are block-mean resized to this
    VaeConfig vae;
    std::size_t vae_subset = 100;  // FCMs drawn for VAE training; 0 = all
    KRange k_range{1, 8};
    double min_silhouette = 0.25;
    ClassifierConfig classifier;
    SplitSpec split;
    std::filesystem::path out = "gastkit_out";

    /// Scale-dependent defaults.
    static PipelineConfig defaults(Scale scale);

    /// Throws InvalidArgument naming the field.
    void validate() const;
    /// Fully expanded form; the config hash is taken over its dump. The
    /// output directory is not part of it.
    nlohmann::json to_json() const;
    std::string hash() const;

    // Independent stream seeds for each stage, derived from `seed`.
    ScenarioConfig seeded_scenario() const;
    VaeConfig seeded_vae() const;
    ClassifierConfig seeded_classifier(std::size_t model) const;
    SplitSpec seeded_split(SplitScope scope) const;
    std::uint64_t cluster_seed() const;
    std::uint64_t subset_seed() const;
};

/// Missing keys take the defaults of `scale` (or of the "scale" key when
/// `scale` is empty); unknown keys are rejected with their dotted path.
PipelineConfig config_from_json(const nlohmann::json& j, std::optional<Scale> scale = std::nullopt);

/// Reads and normalizes a JSON config file. Parse errors report the line.
PipelineConfig validate_config(const std::filesystem::path& path, std::optional<Scale> scale = std::nullopt);

inline const std::vector<std::string> pipeline_stages{"synth",     "fcm",      "train-vae", "embed", "cluster",
                                                      "train-clf", "evaluate", "report",    "selftest"};

/// Where each stage writes, relative to the output directory.
std::filesystem::path stage_dir(const std::filesystem::path& out, std::string_view stage);

/// Runs one stage. Throws MissingArtifact when an input stage has not run.
void run_stage(std::string_view stage, const PipelineConfig& config, std::ostream& log);

/// Gradient checks and numerical oracles; true when everything passes.
bool run_selftest(std::ostream& log);

/// Maps a stage run onto an exit status: 0 ok, 1 invalid configuration,
/// 2 missing artifact, 3 internal invariant violation.
int run_subcommand(std::string_view stage, const PipelineConfig& config, std::ostream& log, std::ostream& err);

/// Provenance record written next to every stage's outputs.
struct Provenance {
    std::string stage;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version;
    std::string timestamp;  // the only field that differs between identical runs
};

void write_provenance(const std::filesystem::path& dir, const Provenance& p);
Provenance read_provenance(const std::filesystem::path& dir);

}  // namespace gastkit
