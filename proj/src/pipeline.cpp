#include "gastkit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <set>

#include "gastkit/fft.hpp"
#include "gastkit/grad_suite.hpp"
#include "gastkit/spectral.hpp"
#include "gastkit/text_io.hpp"
#include "gastkit/wav.hpp"

namespace gastkit {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Stream indices for derive_seed.
enum : std::uint64_t { stream_scenario = 1, stream_vae, stream_cluster, stream_split, stream_classifier, stream_subset };

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw InvalidArgument("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
        }
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(where + "." + key + ": wrong type");
    }
}

void read_extent(const json& j, const char* key, nn::Extent3& out, const std::string& where) {
    read_opt(j, key, out, where);
}

json extent_json(const nn::Extent3& e) { return json(e); }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void require_stage(const PipelineConfig& c, std::string_view stage, std::ostream& log) {
    const fs::path dir = stage_dir(c.out, stage);
    if (!fs::exists(dir / "provenance.json")) {
        throw MissingArtifact("no " + std::string(stage) + " artifacts under " + dir.string() + "; run '" +
                              std::string(stage) + "' first");
    }
    const Provenance p = read_provenance(dir);
    if (p.config_hash != c.hash()) {
        log << "warning: " << stage << " artifacts were produced with config " << p.config_hash << ", current is "
            << c.hash() << "\n";
    }
}

void fresh_dir(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
}

void finish_stage(const PipelineConfig& c, std::string_view stage) {
    write_provenance(stage_dir(c.out, stage),
                     Provenance{std::string(stage), c.hash(), c.seed, std::string(gastkit_version), utc_timestamp()});
}

// FCM index: device_id,lut_id,date,file
struct FcmCorpus {
    std::vector<Fcm> fcms;
    std::map<std::string, LandUseClass> classes;
};

FcmCorpus load_fcms(const PipelineConfig& c, std::size_t side) {
    const fs::path dir = stage_dir(c.out, "fcm");
    const std::string text = read_text_file(dir / "index.csv");
    FcmCorpus out;
    std::size_t start = 0;
    bool header = true;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string_view line(text.data() + start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw FormatError("fcm index: expected 4 fields, got " + std::to_string(f.size()));
        out.classes.emplace(f[0], LandUseClass(static_cast<int>(parse_int(f[1], "lut_id"))));
        Fcm m = read_fcm(dir / f[3]);
        if (m.device_id != f[0] || m.date.date_string() != f[2]) {
            throw InvariantViolation("fcm index row " + f[0] + " " + f[2] + " does not match " + f[3]);
        }
        if (m.size() != side) m = resize_fcm(m, side);
        out.fcms.push_back(std::move(m));
    }
    if (out.fcms.empty()) throw MissingArtifact("fcm index " + (dir / "index.csv").string() + " lists no FCMs");
    return out;
}

void stage_synth(const PipelineConfig& c, std::ostream& log) {
    const fs::path dir = stage_dir(c.out, "synth");
    fresh_dir(dir);
    const auto rows = synthesize_corpus(c.seeded_scenario(), dir);
    log << "synth: " << rows.size() << " recordings from " << scenario_devices(c.scenario).size() << " devices\n";
    finish_stage(c, "synth");
}

void stage_fcm(const PipelineConfig& c, std::ostream& log) {
    require_stage(c, "synth", log);
    const fs::path corpus = stage_dir(c.out, "synth");
    const auto rows = read_manifest(corpus / "manifest.csv");
    std::map<std::pair<std::string, TimeCode>, std::vector<const ManifestRow*>> days;
    for (const auto& r : rows) days[{r.device_id, r.time.date()}].push_back(&r);
    std::vector<std::pair<std::pair<std::string, TimeCode>, std::vector<const ManifestRow*>>> tasks(days.begin(),
                                                                                                    days.end());
    const fs::path dir = stage_dir(c.out, "fcm");
    fresh_dir(dir);
    std::vector<std::string> lines(tasks.size());
    parallel_for(tasks.size(), [&](std::size_t i) {
        const auto& [key, recs] = tasks[i];
        std::vector<std::pair<TimeCode, std::vector<double>>> day;
        std::uint32_t rate = 0;
        for (const ManifestRow* r : recs) {
            WavData w = read_wav(corpus / r->wav_path);
            if (rate != 0 && w.sample_rate != rate) throw InvariantViolation("mixed sample rates in " + key.first);
            rate = w.sample_rate;
            day.emplace_back(r->time, std::move(w.samples));
        }
        Fcm f = fcm_for_day(std::move(day), rate, c.fcm, key.first);
        if (f.size() != c.fcm_side) f = resize_fcm(f, c.fcm_side);
        const std::string rel = key.first + "/" + key.second.date_string() + ".gfcm";
        fs::create_directories(dir / key.first);
        write_fcm(dir / rel, f);
        lines[i] = key.first + "," + std::to_string(recs.front()->lut.id()) + "," + key.second.date_string() + "," +
                   rel + "\n";
    });
    std::string index = "device_id,lut_id,date,file\n";
    for (const auto& l : lines) index += l;
    write_text_file(dir / "index.csv", index);
    log << "fcm: " << tasks.size() << " matrices of side " << c.fcm_side << "\n";
    finish_stage(c, "fcm");
}

void stage_train_vae(const PipelineConfig& c, std::ostream& log) {
    require_stage(c, "fcm", log);
    auto corpus = load_fcms(c, c.vae.input_side);
    if (c.vae_subset > 0 && c.vae_subset < corpus.fcms.size()) {
        std::mt19937_64 rng(c.subset_seed());
        std::shuffle(corpus.fcms.begin(), corpus.fcms.end(), rng);
        corpus.fcms.resize(c.vae_subset);
    }
    const fs::path dir = stage_dir(c.out, "train-vae");
    fresh_dir(dir);
    const VaeConfig vc = c.seeded_vae();
    log << "train-vae: " << corpus.fcms.size() << " FCMs\n";
    const std::size_t every = std::max<std::size_t>(1, vc.epochs / 20);
    auto result = train_vae(corpus.fcms, vc, [&](const VaeEpoch& e) {
        if (e.epoch % every == 0 || e.epoch + 1 == vc.epochs) {
            log << "train-vae: epoch " << e.epoch << " beta " << e.beta << " rec " << e.rec << " kl " << e.kl << "\n";
        }
    });
    nn::save_checkpoint(dir / "model.ckpt", result.model.params());
    write_loss_history_csv(dir / "loss_history.csv", result.history);
    finish_stage(c, "train-vae");
}

void stage_embed(const PipelineConfig& c, std::ostream& log) {
    require_stage(c, "fcm", log);
    require_stage(c, "train-vae", log);
    const auto corpus = load_fcms(c, c.vae.input_side);
    Vae model(c.seeded_vae());
    nn::load_checkpoint(stage_dir(c.out, "train-vae") / "model.ckpt", model.params());
    const fs::path dir = stage_dir(c.out, "embed");
    fresh_dir(dir);
    write_embeddings_csv(dir / "embeddings.csv", embed(model, corpus.fcms));
    log << "embed: " << corpus.fcms.size() << " embeddings\n";
    finish_stage(c, "embed");
}

void stage_cluster(const PipelineConfig& c, std::ostream& log) {
    require_stage(c, "embed", log);
    const auto emb = read_embeddings_csv(stage_dir(c.out, "embed") / "embeddings.csv");
    const Matrix points = embedding_matrix(emb);
    KRange range = c.k_range;
    range.max = std::min(range.max, points.rows());
    const KSelection sel = select_k(points, range, c.cluster_seed(), c.min_silhouette);
    for (const auto& w : sel.warnings) log << "cluster: warning: " << w << "\n";
    const ClusteringResult res = kmeans(points, sel.k, c.cluster_seed());
    const fs::path dir = stage_dir(c.out, "cluster");
    fresh_dir(dir);
    write_cluster_json(dir / "cluster.json", res, &sel);
    write_embedding_svg(dir / "embeddings.svg", points, res.assignments);
    log << "cluster: k = " << res.k << " (elbow " << sel.elbow_k << ", silhouette " << sel.silhouette_k << ")\n";
    finish_stage(c, "cluster");
}

// The two trained models: one recorder per class, and every recorder.
struct ClassifierRun {
    const char* name;
    SplitScope scope;
};
constexpr ClassifierRun classifier_runs[] = {{"one_device", SplitScope::cross_device},
                                             {"all_devices", SplitScope::per_device}};

ojson split_json(const std::vector<FcmSequence>& seqs, const DatasetSplit& s, std::size_t best_epoch) {
    auto list = [&](const std::vector<std::size_t>& idx) {
        ojson a = ojson::array();
        for (std::size_t i : idx) a.push_back(ojson::array({seqs[i].device_id, seqs[i].start.date_string()}));
        return a;
    };
    ojson j;
    j["best_epoch"] = best_epoch;
    j["train"] = list(s.train);
    j["val"] = list(s.val);
    j["eval"] = list(s.eval);
    j["holdout"] = list(s.holdout);
    return j;
}

void stage_train_clf(const PipelineConfig& c, std::ostream& log) {
    require_stage(c, "fcm", log);
    const auto corpus = load_fcms(c, c.classifier.side);
    const auto seqs = assemble_sequences(corpus.fcms, corpus.classes, c.classifier.sequence_length);
    const fs::path dir = stage_dir(c.out, "train-clf");
    fresh_dir(dir);
    for (std::size_t r = 0; r < std::size(classifier_runs); ++r) {
        const auto& run = classifier_runs[r];
        const DatasetSplit split = split_dataset(seqs, c.seeded_split(run.scope));
        const ClassifierConfig cc = c.seeded_classifier(r);
        auto result = train_classifier(corpus.fcms, seqs, split, cc, [&](const ClassifierEpoch& e) {
            log << "train-clf " << run.name << ": epoch " << e.epoch << " loss " << e.train_loss << " val acc "
                << e.val_accuracy << "\n";
        });
        const fs::path sub = dir / run.name;
        fs::create_directories(sub);
        nn::save_checkpoint(sub / "model.ckpt", result.model.params());
        std::string hist = "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
        for (const auto& e : result.history) {
            hist += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
                    format_double(e.train_accuracy) + "," + format_double(e.val_loss) + "," +
                    format_double(e.val_accuracy) + "\n";
        }
        write_text_file(sub / "history.csv", hist);
        write_text_file(sub / "split.json", split_json(seqs, split, result.best_epoch).dump(2) + "\n");
    }
    finish_stage(c, "train-clf");
}

const char* const scenario_names[] = {"same_device", "unseen_device", "all_devices"};
const char* const scenario_titles[] = {"same device", "unseen device", "all devices"};

void stage_evaluate(const PipelineConfig& c, std::ostream& log) {
    require_stage(c, "fcm", log);
    require_stage(c, "train-clf", log);
    const auto corpus = load_fcms(c, c.classifier.side);
    const auto seqs = assemble_sequences(corpus.fcms, corpus.classes, c.classifier.sequence_length);
    const fs::path models = stage_dir(c.out, "train-clf");
    std::vector<std::optional<ClassMetrics>> metrics(3);
    for (std::size_t r = 0; r < std::size(classifier_runs); ++r) {
        const auto& run = classifier_runs[r];
        const DatasetSplit split = split_dataset(seqs, c.seeded_split(run.scope));
        const json recorded = json::parse(read_text_file(models / run.name / "split.json"));
        if (recorded.at("eval").size() != split.eval.size() || recorded.at("train").size() != split.train.size()) {
            throw InvariantViolation(std::string("split of ") + run.name + " differs from the one used in training");
        }
        Classifier model(c.seeded_classifier(r));
        nn::load_checkpoint(models / run.name / "model.ckpt", model.params());
        if (run.scope == SplitScope::cross_device) {
            metrics[0] = evaluate(model, corpus.fcms, seqs, split.eval);
            if (!split.holdout.empty()) metrics[1] = evaluate(model, corpus.fcms, seqs, split.holdout);
        } else {
            metrics[2] = evaluate(model, corpus.fcms, seqs, split.eval);
        }
    }
    const fs::path dir = stage_dir(c.out, "evaluate");
    fresh_dir(dir);
    for (std::size_t s = 0; s < 3; ++s) {
        if (!metrics[s]) continue;
        ojson j;
        j["scenario"] = scenario_names[s];
        j["config_hash"] = c.hash();
        j["macro_f1"] = metrics[s]->macro_f1();
        j["metrics"] = ojson(metrics_to_json(*metrics[s]));
        write_text_file(dir / (std::string(scenario_names[s]) + ".json"), j.dump(2) + "\n");
        log << "evaluate: " << scenario_titles[s] << " macro F1 " << metrics[s]->macro_f1() << "\n";
    }
    finish_stage(c, "evaluate");
}

void stage_report(const PipelineConfig& c, std::ostream& log) {
    require_stage(c, "fcm", log);
    require_stage(c, "evaluate", log);
    std::set<std::string> hashes;
    std::vector<std::string> origin;
    auto note = [&](const std::string& hash, const std::string& what) {
        hashes.insert(hash);
        origin.push_back(what + " " + hash);
    };
    note(read_provenance(stage_dir(c.out, "fcm")).config_hash, "fcm");
    note(read_provenance(stage_dir(c.out, "evaluate")).config_hash, "evaluate");
    const bool clustered = fs::exists(stage_dir(c.out, "cluster") / "provenance.json");
    if (clustered) note(read_provenance(stage_dir(c.out, "cluster")).config_hash, "cluster");

    std::vector<std::optional<ClassMetrics>> metrics(3);
    for (std::size_t s = 0; s < 3; ++s) {
        const fs::path p = stage_dir(c.out, "evaluate") / (std::string(scenario_names[s]) + ".json");
        if (!fs::exists(p)) continue;
        const json j = json::parse(read_text_file(p));
        note(j.at("config_hash").get<std::string>(), scenario_names[s]);
        metrics[s] = metrics_from_json(j.at("metrics"));
    }
    if (hashes.size() > 1) {
        std::string msg = "report inputs come from different configurations:";
        for (const auto& o : origin) msg += " " + o;
        throw MissingArtifact(msg);
    }

    std::vector<std::pair<std::string, const ClassMetrics*>> cols;
    for (std::size_t s = 0; s < 3; ++s) cols.emplace_back(scenario_titles[s], metrics[s] ? &*metrics[s] : nullptr);
    std::string table = metrics_table(cols);
    if (clustered) {
        const json cj = json::parse(read_text_file(stage_dir(c.out, "cluster") / "cluster.json"));
        table += "\nclusters: " + std::to_string(cj.at("k").get<std::size_t>()) + "\n";
    }

    const fs::path dir = stage_dir(c.out, "report");
    fresh_dir(dir);
    write_text_file(dir / "table.txt", table);
    // First day of every device.
    const auto corpus = load_fcms(c, c.fcm_side);
    std::set<std::string> seen;
    fs::create_directories(dir / "fcm");
    for (const auto& f : corpus.fcms) {
        if (!seen.insert(f.device_id).second) continue;
        export_fcm_png(f, dir / "fcm" / (f.device_id + "_" + f.date.date_string() + ".png"));
    }
    log << table;
    finish_stage(c, "report");
}

json spectral_json(const SpectralConfig& s) {
    return json{{"n_bins", s.n_bins},
                {"eps", s.eps},
                {"half_spectrum", s.range == SpectrumRange::half},
                {"averaging", s.averaging == BinAveraging::magnitude ? "magnitude" : "energy"}};
}

}  // namespace

std::string_view to_string(Scale s) { return s == Scale::desk ? "desk" : "paper"; }

Scale scale_from_string(std::string_view s) {
    if (s == "desk") return Scale::desk;
    if (s == "paper") return Scale::paper;
    throw InvalidArgument("scale: expected 'desk' or 'paper', got '" + std::string(s) + "'");
}

PipelineConfig PipelineConfig::defaults(Scale scale) {
    PipelineConfig c;
    c.scale = scale;
    c.scenario = default_scenario();
    if (scale == Scale::desk) {
        c.fcm_side = 64;
        c.vae = VaeConfig::desk();
        c.classifier = ClassifierConfig::desk();
    } else {
        c.fcm_side = 256;
        c.vae = VaeConfig::paper();
        c.classifier = ClassifierConfig::paper();
    }
    return c;
}

void PipelineConfig::validate() const {
    scenario.validate();
    vae.validate();
    classifier.validate();
    split.validate();
    auto fail = [](const std::string& m) { throw InvalidArgument(m); };
    if (fcm.spectral.n_bins == 0) fail("spectral.n_bins must be positive");
    if (!(fcm.spectral.eps > 0.0)) fail("spectral.eps must be positive");
    if (!(fcm.variance_threshold > 0.0 && fcm.variance_threshold <= 1.0)) {
        fail("fcm.variance_threshold must lie in (0, 1]");
    }
    if (fcm_side == 0 || fcm.spectral.n_bins % fcm_side != 0) fail("fcm.resize must divide spectral.n_bins");
    if (fcm_side % vae.input_side != 0) fail("vae.input_side must divide fcm.resize");
    if (fcm_side % classifier.side != 0) fail("classifier.side must divide fcm.resize");
    if (k_range.min == 0) fail("cluster.k_min must be at least 1");
    if (k_range.max < k_range.min + 2) fail("cluster.k_max must be at least k_min + 2");
    if (!(min_silhouette >= -1.0 && min_silhouette <= 1.0)) fail("cluster.min_silhouette must lie in [-1, 1]");
    if (classifier.sequence_length > static_cast<std::size_t>(scenario.days)) {
        fail("classifier.sequence_length exceeds scenario.days");
    }
}

nlohmann::json PipelineConfig::to_json() const {
    json sc = gastkit::to_json(scenario);
    sc.erase("seed");
    return json{
        {"seed", seed},
        {"scale", std::string(gastkit::to_string(scale))},
        {"scenario", sc},
        {"spectral", spectral_json(fcm.spectral)},
        {"fcm",
         {{"variance_threshold", fcm.variance_threshold},
          {"denoise", fcm.denoise},
          {"squared", fcm.squared},
          {"resize", fcm_side}}},
        {"vae",
         {{"input_side", vae.input_side},
          {"feature_maps", vae.feature_maps},
          {"latent_dim", vae.latent_dim},
          {"fc_widths", vae.fc_widths},
          {"epochs", vae.epochs},
          {"lr", vae.lr},
          {"e_max", vae.e_max},
          {"s", vae.s},
          {"pyramid_levels", vae.pyramid_levels},
          {"smooth_l1_beta", vae.smooth_l1_beta},
          {"batch_size", vae.batch_size},
          {"subset", vae_subset}}},
        {"cluster", {{"k_min", k_range.min}, {"k_max", k_range.max}, {"min_silhouette", min_silhouette}}},
        {"classifier",
         {{"side", classifier.side},
          {"sequence_length", classifier.sequence_length},
          {"channels", classifier.channels},
          {"kernel", extent_json(classifier.kernel)},
          {"stride", extent_json(classifier.stride)},
          {"pool_window", extent_json(classifier.pool_window)},
          {"pool_stride", extent_json(classifier.pool_stride)},
          {"clamp_pool_depth", classifier.clamp_pool_depth},
          {"dense_cap", classifier.dense_cap},
          {"dense_min", classifier.dense_min},
          {"epochs", classifier.epochs},
          {"lr", classifier.lr},
          {"batch_size", classifier.batch_size},
          {"fractions", split.fractions}}},
    };
}

std::string PipelineConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

ScenarioConfig PipelineConfig::seeded_scenario() const {
    ScenarioConfig s = scenario;
    s.seed = derive_seed(seed, stream_scenario);
    return s;
}

VaeConfig PipelineConfig::seeded_vae() const {
    VaeConfig v = vae;
    v.seed = derive_seed(seed, stream_vae);
    return v;
}

ClassifierConfig PipelineConfig::seeded_classifier(std::size_t model) const {
    ClassifierConfig c = classifier;
    c.seed = derive_seed(seed, stream_classifier, model);
    return c;
}

SplitSpec PipelineConfig::seeded_split(SplitScope scope) const {
    SplitSpec s = split;
    s.scope = scope;
    s.seed = derive_seed(seed, stream_split);
    return s;
}

std::uint64_t PipelineConfig::cluster_seed() const { return derive_seed(seed, stream_cluster); }

std::uint64_t PipelineConfig::subset_seed() const { return derive_seed(seed, stream_subset); }

PipelineConfig config_from_json(const nlohmann::json& j, std::optional<Scale> scale) {
    reject_unknown(j, {"seed", "scale", "scenario", "spectral", "fcm", "vae", "cluster", "classifier", "out"}, "");
    if (!scale) {
        std::string s = "desk";
        read_opt(j, "scale", s, "config");
        scale = scale_from_string(s);
    }
    PipelineConfig c = PipelineConfig::defaults(*scale);
    read_opt(j, "seed", c.seed, "config");
    if (j.contains("out")) {
        std::string o;
        read_opt(j, "out", o, "config");
        c.out = o;
    }
    if (j.contains("scenario")) {
        if (j.at("scenario").contains("seed")) {
            throw InvalidArgument("scenario.seed: use the top-level seed, stage seeds are derived from it");
        }
        c.scenario = scenario_from_json(j.at("scenario"));
    }
    if (j.contains("spectral")) {
        const json& s = j.at("spectral");
        reject_unknown(s, {"n_bins", "eps", "half_spectrum", "averaging"}, "spectral");
        read_opt(s, "n_bins", c.fcm.spectral.n_bins, "spectral");
        read_opt(s, "eps", c.fcm.spectral.eps, "spectral");
        bool half = true;
        read_opt(s, "half_spectrum", half, "spectral");
        c.fcm.spectral.range = half ? SpectrumRange::half : SpectrumRange::full;
        std::string avg = "magnitude";
        read_opt(s, "averaging", avg, "spectral");
        if (avg == "magnitude") {
            c.fcm.spectral.averaging = BinAveraging::magnitude;
        } else if (avg == "energy") {
            c.fcm.spectral.averaging = BinAveraging::energy;
        } else {
            throw InvalidArgument("spectral.averaging: expected 'magnitude' or 'energy'");
        }
    }
    if (j.contains("fcm")) {
        const json& f = j.at("fcm");
        reject_unknown(f, {"variance_threshold", "denoise", "squared", "resize"}, "fcm");
        read_opt(f, "variance_threshold", c.fcm.variance_threshold, "fcm");
        read_opt(f, "denoise", c.fcm.denoise, "fcm");
        read_opt(f, "squared", c.fcm.squared, "fcm");
        read_opt(f, "resize", c.fcm_side, "fcm");
    }
    if (j.contains("vae")) {
        const json& v = j.at("vae");
        reject_unknown(v,
                       {"input_side", "feature_maps", "latent_dim", "fc_widths", "epochs", "lr", "e_max", "s",
                        "pyramid_levels", "smooth_l1_beta", "batch_size", "subset"},
                       "vae");
        read_opt(v, "input_side", c.vae.input_side, "vae");
        read_opt(v, "feature_maps", c.vae.feature_maps, "vae");
        read_opt(v, "latent_dim", c.vae.latent_dim, "vae");
        read_opt(v, "fc_widths", c.vae.fc_widths, "vae");
        read_opt(v, "epochs", c.vae.epochs, "vae");
        read_opt(v, "lr", c.vae.lr, "vae");
        read_opt(v, "e_max", c.vae.e_max, "vae");
        read_opt(v, "s", c.vae.s, "vae");
        read_opt(v, "pyramid_levels", c.vae.pyramid_levels, "vae");
        read_opt(v, "smooth_l1_beta", c.vae.smooth_l1_beta, "vae");
        read_opt(v, "batch_size", c.vae.batch_size, "vae");
        read_opt(v, "subset", c.vae_subset, "vae");
    }
    if (j.contains("cluster")) {
        const json& k = j.at("cluster");
        reject_unknown(k, {"k_min", "k_max", "min_silhouette"}, "cluster");
        read_opt(k, "k_min", c.k_range.min, "cluster");
        read_opt(k, "k_max", c.k_range.max, "cluster");
        read_opt(k, "min_silhouette", c.min_silhouette, "cluster");
    }
    if (j.contains("classifier")) {
        const json& k = j.at("classifier");
        reject_unknown(k,
                       {"side", "sequence_length", "channels", "kernel", "stride", "pool_window", "pool_stride",
                        "clamp_pool_depth", "dense_cap", "dense_min", "epochs", "lr", "batch_size", "fractions"},
                       "classifier");
        read_opt(k, "side", c.classifier.side, "classifier");
        read_opt(k, "sequence_length", c.classifier.sequence_length, "classifier");
        read_opt(k, "channels", c.classifier.channels, "classifier");
        read_extent(k, "kernel", c.classifier.kernel, "classifier");
        read_extent(k, "stride", c.classifier.stride, "classifier");
        read_extent(k, "pool_window", c.classifier.pool_window, "classifier");
        read_extent(k, "pool_stride", c.classifier.pool_stride, "classifier");
        read_opt(k, "clamp_pool_depth", c.classifier.clamp_pool_depth, "classifier");
        read_opt(k, "dense_cap", c.classifier.dense_cap, "classifier");
        read_opt(k, "dense_min", c.classifier.dense_min, "classifier");
        read_opt(k, "epochs", c.classifier.epochs, "classifier");
        read_opt(k, "lr", c.classifier.lr, "classifier");
        read_opt(k, "batch_size", c.classifier.batch_size, "classifier");
        read_opt(k, "fractions", c.split.fractions, "classifier");
    }
    c.validate();
    return c;
}

PipelineConfig validate_config(const std::filesystem::path& path, std::optional<Scale> scale) {
    const std::string text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw FormatError(path.string() + ":" + std::to_string(line) + ": invalid JSON");
    }
    return config_from_json(j, scale);
}

std::filesystem::path stage_dir(const std::filesystem::path& out, std::string_view stage) {
    static const std::map<std::string_view, std::string_view> dirs{
        {"synth", "corpus"},        {"fcm", "fcm"},         {"train-vae", "vae"},     {"embed", "embeddings"},
        {"cluster", "clusters"},    {"train-clf", "classifier"}, {"evaluate", "metrics"}, {"report", "report"}};
    const auto it = dirs.find(stage);
    if (it == dirs.end()) throw InvalidArgument("unknown stage '" + std::string(stage) + "'");
    return out / it->second;
}

void run_stage(std::string_view stage, const PipelineConfig& config, std::ostream& log) {
    if (stage == "synth") return stage_synth(config, log);
    if (stage == "fcm") return stage_fcm(config, log);
    if (stage == "train-vae") return stage_train_vae(config, log);
    if (stage == "embed") return stage_embed(config, log);
    if (stage == "cluster") return stage_cluster(config, log);
    if (stage == "train-clf") return stage_train_clf(config, log);
    if (stage == "evaluate") return stage_evaluate(config, log);
    if (stage == "report") return stage_report(config, log);
    if (stage == "selftest") {
        if (!run_selftest(log)) throw InvariantViolation("selftest failed");
        return;
    }
    throw InvalidArgument("unknown stage '" + std::string(stage) + "'");
}

bool run_selftest(std::ostream& log) {
    bool ok = true;
    auto report = [&](const std::string& name, bool pass, const std::string& detail) {
        log << (pass ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
        ok = ok && pass;
    };

    for (std::uint64_t seed : {1, 2}) {
        double worst = 0.0;
        std::string worst_name;
        for (const auto& e : nn::op_gradient_checks(seed)) {
            if (e.max_relative_error >= worst) {
                worst = e.max_relative_error;
                worst_name = e.name;
            }
        }
        report("op gradients seed " + std::to_string(seed), worst <= 1e-3,
               "worst " + worst_name + " " + format_double(worst));
    }
    {
        double worst = 0.0;
        std::string worst_name;
        for (const auto& e : nn::model_gradient_checks(1, 2)) {
            if (e.max_relative_error >= worst) {
                worst = e.max_relative_error;
                worst_name = e.name;
            }
        }
        report("model gradients", worst <= 1e-3, "worst " + worst_name + " " + format_double(worst));
    }
    {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        double worst = 0.0;
        for (std::size_t m : {64u, 1024u}) {
            std::vector<double> x(m);
            for (double& v : x) v = u(rng);
            const auto fast = fft_real(x);
            double scale = 0.0;
            std::vector<Complex> slow(m);
            for (std::size_t k = 0; k < m; ++k) {
                Complex s{0.0, 0.0};
                for (std::size_t j = 0; j < m; ++j) {
                    const double a = -2.0 * std::numbers::pi * static_cast<double>((j * k) % m) / static_cast<double>(m);
                    s += x[j] * Complex(std::cos(a), std::sin(a));
                }
                slow[k] = s;
                scale = std::max(scale, std::abs(s));
            }
            for (std::size_t k = 0; k < m; ++k) worst = std::max(worst, std::abs(fast[k] - slow[k]) / scale);
        }
        report("fft against direct sum", worst <= 1e-9, "max relative error " + format_double(worst));
    }
    {
        ScenarioConfig sc = default_scenario();
        sc.seed = 11;
        const auto devices = scenario_devices(sc);
        std::vector<std::pair<TimeCode, std::vector<double>>> day;
        for (auto& r : synthesize_day(sc, devices.front(), 0)) day.emplace_back(r.time, std::move(r.samples));
        const Fcm f = fcm_for_day(std::move(day), sc.sample_rate, FcmConfig{}, devices.front().id);
        double asym = 0.0;
        bool diag = true, range = true;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!f.degenerate[i] && std::abs(f.values(i, i) - 1.0) > 1e-9) diag = false;
            for (std::size_t k = 0; k < f.size(); ++k) {
                asym = std::max(asym, std::abs(f.values(i, k) - f.values(k, i)));
                if (!(f.values(i, k) >= -1.0 - 1e-12 && f.values(i, k) <= 1.0 + 1e-12)) range = false;
            }
        }
        report("fcm symmetric, unit diagonal, in range", asym <= 1e-9 && diag && range,
               "asymmetry " + format_double(asym));
    }
    {
        const bool pass = beta_schedule(0, 700, 1e-4) == 0.0 && beta_schedule(350, 700, 1e-4) == 5e-5 &&
                          beta_schedule(700, 700, 1e-4) == 1e-4 && beta_schedule(1400, 700, 1e-4) == 1e-4;
        report("beta schedule", pass, "");
    }
    return ok;
}

int run_subcommand(std::string_view stage, const PipelineConfig& config, std::ostream& log, std::ostream& err) {
    try {
        if (stage != "selftest") config.validate();
        if (stage == "selftest") return run_selftest(log) ? 0 : 3;
        run_stage(stage, config, log);
        return 0;
    } catch (const MissingArtifact& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        err << "error: invalid configuration: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const InvariantViolation& e) {
        err << "error: invariant violated: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

void write_provenance(const std::filesystem::path& dir, const Provenance& p) {
    ojson j;
    j["stage"] = p.stage;
    j["config_hash"] = p.config_hash;
    j["seed"] = p.seed;
    j["version"] = p.version;
    j["timestamp"] = p.timestamp;
    write_text_file(dir / "provenance.json", j.dump(2) + "\n");
}

Provenance read_provenance(const std::filesystem::path& dir) {
    const fs::path path = dir / "provenance.json";
    if (!fs::exists(path)) throw MissingArtifact("missing " + path.string());
    try {
        const json j = json::parse(read_text_file(path));
        return Provenance{j.at("stage").get<std::string>(), j.at("config_hash").get<std::string>(),
                          j.at("seed").get<std::uint64_t>(), j.at("version").get<std::string>(),
                          j.at("timestamp").get<std::string>()};
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace gastkit
