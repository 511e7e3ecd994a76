#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "gastkit/pipeline.hpp"

int main(int argc, char** argv) {
    using namespace gastkit;
    keep_freed_memory();

    CLI::App app{"Frequency correlation matrices, latent clustering and land-use classification of soundscapes"};
    app.set_version_flag("--version", std::string(gastkit_version));
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path, scale_name, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed, overrides the configuration");
    app.add_option("--out", out_dir, "artifact directory, overrides the configuration");
    app.add_option("--scale", scale_name, "problem size defaults")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--jobs", jobs, "worker threads (default: GASTKIT_JOBS or 1)")->check(CLI::PositiveNumber);

    const std::pair<const char*, const char*> commands[] = {
        {"synth", "synthesize the recording corpus"},
        {"fcm", "compute one FCM per device and day"},
        {"train-vae", "train the variational autoencoder on the FCMs"},
        {"embed", "encode every FCM into the latent space"},
        {"cluster", "choose k and cluster the embeddings"},
        {"train-clf", "train the sequence classifiers"},
        {"evaluate", "score the classifiers on their evaluation sets"},
        {"report", "render the metrics table and FCM images"},
        {"selftest", "run gradient checks and numerical oracles"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    const std::string stage = app.get_subcommands().front()->get_name();

    PipelineConfig config;
    try {
        const std::optional<Scale> scale =
            scale_name.empty() ? std::nullopt : std::optional<Scale>(scale_from_string(scale_name));
        config = config_path.empty() ? PipelineConfig::defaults(scale.value_or(Scale::desk))
                                     : validate_config(config_path, scale);
        if (seed) config.seed = *seed;
        if (!out_dir.empty()) config.out = out_dir;
    } catch (const Error& e) {
        std::cerr << "error: invalid configuration: " << e.what() << "\n";
        return 1;
    }
    if (jobs) set_worker_count(*jobs);

    return run_subcommand(stage, config, std::cout, std::cerr);
}
