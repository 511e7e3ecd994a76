#include "gastkit/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace gastkit {

using nn::Tensor;

std::vector<FcmSequence> assemble_sequences(const std::vector<Fcm>& fcms,
                                            const std::map<std::string, LandUseClass>& device_class,
                                            std::size_t length) {
    if (length == 0) throw InvalidArgument("sequence length must be positive");
    // device -> (day number -> fcm index)
    std::map<std::string, std::map<long, std::size_t>> days;
    for (std::size_t i = 0; i < fcms.size(); ++i) {
        auto& m = days[fcms[i].device_id];
        if (!m.emplace(fcms[i].date.days_since_epoch(), i).second) {
            throw InvalidArgument("two FCMs for device " + fcms[i].device_id + " on " + fcms[i].date.date_string());
        }
    }
    std::vector<FcmSequence> out;
    for (const auto& [device, by_day] : days) {
        const auto cls = device_class.find(device);
        if (cls == device_class.end()) continue;
        std::vector<std::pair<long, std::size_t>> run;
        auto flush = [&] {
            for (std::size_t s = 0; s + length <= run.size(); ++s) {
                FcmSequence seq{device, fcms[run[s].second].date.date(), cls->second, {}};
                for (std::size_t k = 0; k < length; ++k) seq.frames.push_back(run[s + k].second);
                out.push_back(std::move(seq));
            }
            run.clear();
        };
        for (const auto& [day, idx] : by_day) {
            if (!run.empty() && day != run.back().first + 1) flush();
            run.emplace_back(day, idx);
        }
        flush();
    }
    return out;
}

void SplitSpec::validate() const {
    for (double f : fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("split fractions must lie in [0, 1]");
    const double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InvalidArgument("split fractions must sum to 1, got " + std::to_string(sum));
    }
}

namespace {

void shuffle_split(std::vector<std::size_t> idx, const SplitSpec& spec, DatasetSplit& out) {
    std::mt19937_64 rng(derive_seed(spec.seed, 0x5350'4c49));
    std::shuffle(idx.begin(), idx.end(), rng);
    const double n = static_cast<double>(idx.size());
    const std::size_t n_train = std::min(idx.size(), static_cast<std::size_t>(std::llround(spec.fractions[0] * n)));
    const std::size_t n_val =
        std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(spec.fractions[1] * n)));
    out.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
    out.val.assign(idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_val));
    out.eval.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
    for (auto* v : {&out.train, &out.val, &out.eval}) std::sort(v->begin(), v->end());
}

}  // namespace

DatasetSplit split_dataset(const std::vector<FcmSequence>& sequences, const SplitSpec& spec) {
    spec.validate();
    if (sequences.size() < 5) {
        throw InvalidArgument("split needs at least 5 sequences, got " + std::to_string(sequences.size()));
    }
    DatasetSplit out;
    std::vector<std::size_t> pool;
    if (spec.scope == SplitScope::per_device) {
        pool.resize(sequences.size());
        std::iota(pool.begin(), pool.end(), 0);
    } else {
        std::map<LandUseClass, std::string> kept;
        for (const auto& s : sequences) {
            auto it = kept.find(s.label);
            if (it == kept.end() || s.device_id < it->second) kept[s.label] = s.device_id;
        }
        for (std::size_t i = 0; i < sequences.size(); ++i) {
            (kept.at(sequences[i].label) == sequences[i].device_id ? pool : out.holdout).push_back(i);
        }
        if (pool.size() < 5) throw InvalidArgument("cross-device split leaves fewer than 5 training sequences");
    }
    shuffle_split(std::move(pool), spec, out);
    return out;
}

void ClassifierConfig::validate() const {
    auto fail = [](const std::string& what) { throw InvalidArgument("classifier config: " + what); };
    if (side == 0) fail("side must be positive");
    if (sequence_length == 0) fail("sequence_length must be positive");
    if (classes < 2) fail("classes must be at least 2");
    if (channels == 0) fail("channels must be positive");
    for (int a = 0; a < 3; ++a) {
        if (kernel[a] == 0 || stride[a] == 0 || pool_window[a] == 0 || pool_stride[a] == 0) {
            fail("kernel, stride and pooling extents must be positive");
        }
    }
    if (dense_min == 0) fail("dense_min must be positive");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
}

ClassifierConfig ClassifierConfig::desk() { return ClassifierConfig{}; }

ClassifierConfig ClassifierConfig::paper() {
    ClassifierConfig c;
    c.side = 256;
    c.kernel = {6, 8, 8};
    c.stride = {1, 4, 4};
    c.pool_window = {6, 8, 8};
    c.pool_stride = {1, 4, 4};
    c.dense_cap = 0;
    return c;
}

Classifier::Classifier(const ClassifierConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(derive_seed(config_.seed, 0x636c'6600));
    const auto& c = config_;
    conv_ = nn::Conv3d(params_, "conv", 1, c.channels, c.kernel, c.stride, {0, 0, 0}, rng);
    const nn::Extent3 in{c.sequence_length, c.side, c.side};
    nn::Extent3 conv_out{}, pool_out{};
    static const char* axes[] = {"depth", "height", "width"};
    for (int a = 0; a < 3; ++a) {
        conv_out[a] = nn::conv_extent(in[a], c.kernel[a], c.stride[a], 0, std::string("conv3d ") + axes[a]);
    }
    pool_window_ = c.pool_window;
    if (c.clamp_pool_depth) pool_window_[0] = std::min(pool_window_[0], conv_out[0]);
    for (int a = 0; a < 3; ++a) {
        pool_out[a] = nn::conv_extent(conv_out[a], pool_window_[a], c.pool_stride[a], 0,
                                      std::string("maxpool3d ") + axes[a]);
    }
    flat_ = c.channels * pool_out[0] * pool_out[1] * pool_out[2];
    std::size_t in_width = flat_;
    for (std::size_t w : dense_widths()) {
        dense_.push_back(nn::Dense(params_, "dense" + std::to_string(dense_.size()), in_width, w, rng));
        in_width = w;
    }
    dense_.push_back(nn::Dense(params_, "output", in_width, c.classes, rng));
}

std::vector<std::size_t> Classifier::dense_widths() const {
    std::size_t w = 1;
    while (w * 2 <= flat_) w *= 2;
    if (config_.dense_cap > 0) w = std::min(w, config_.dense_cap);
    std::vector<std::size_t> out;
    while (true) {
        out.push_back(w);
        if (w <= config_.dense_min || w < 2) break;
        w /= 2;
    }
    return out;
}

Tensor Classifier::logits(const Tensor& x) const {
    const auto& c = config_;
    if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != c.sequence_length || x.dim(3) != c.side ||
        x.dim(4) != c.side) {
        throw ShapeError("classifier: expected input [N, 1, " + std::to_string(c.sequence_length) + ", " +
                         std::to_string(c.side) + ", " + std::to_string(c.side) + "], got " +
                         nn::shape_string(x.shape()));
    }
    Tensor h = nn::relu(conv_(x));
    h = nn::maxpool3d(h, pool_window_, c.pool_stride);
    h = nn::flatten(h);
    for (std::size_t i = 0; i + 1 < dense_.size(); ++i) h = nn::relu(dense_[i](h));
    return dense_.back()(h);
}

Tensor Classifier::predict(const Tensor& x) const {
    nn::NoGradGuard guard;
    return nn::softmax(logits(x), 1);
}

Tensor sequence_batch(const std::vector<Fcm>& fcms, const std::vector<FcmSequence>& sequences,
                      const std::vector<std::size_t>& chosen, std::size_t side) {
    if (chosen.empty()) throw InvalidArgument("empty sequence batch");
    const std::size_t len = sequences.at(chosen.front()).frames.size();
    Tensor out(nn::Shape{chosen.size(), 1, len, side, side});
    auto& v = out.values();
    std::size_t offset = 0;
    for (std::size_t i : chosen) {
        const auto& s = sequences.at(i);
        if (s.frames.size() != len) throw ShapeError("sequences of different lengths in one batch");
        for (std::size_t f : s.frames) {
            const Fcm& m = fcms.at(f);
            if (m.size() != side) {
                throw ShapeError("FCM " + m.device_id + " " + m.date.date_string() + " has side " +
                                 std::to_string(m.size()) + ", expected " + std::to_string(side));
            }
            std::copy(m.values.data().begin(), m.values.data().end(), v.begin() + static_cast<long>(offset));
            offset += side * side;
        }
    }
    return out;
}

namespace {

std::size_t argmax_row(const Tensor& t, std::size_t row) {
    const std::size_t k = t.dim(1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (t[row * k + j] > t[row * k + best]) best = j;
    return best;
}

std::vector<int> labels_of(const std::vector<FcmSequence>& sequences, const std::vector<std::size_t>& chosen) {
    std::vector<int> out;
    for (std::size_t i : chosen) out.push_back(static_cast<int>(sequences[i].label.index()));
    return out;
}

// Mean loss and accuracy over `chosen` without recording a graph.
std::pair<double, double> score(const Classifier& model, const std::vector<Fcm>& fcms,
                                const std::vector<FcmSequence>& sequences, const std::vector<std::size_t>& chosen) {
    nn::NoGradGuard guard;
    const std::size_t bs = 32;
    double loss = 0.0, correct = 0.0;
    for (std::size_t s = 0; s < chosen.size(); s += bs) {
        const std::vector<std::size_t> part(chosen.begin() + static_cast<long>(s),
                                            chosen.begin() + static_cast<long>(std::min(chosen.size(), s + bs)));
        const Tensor z = model.logits(sequence_batch(fcms, sequences, part, model.config().side));
        const auto labels = labels_of(sequences, part);
        loss += static_cast<double>(part.size()) * nn::softmax_cross_entropy(z, labels).item();
        for (std::size_t i = 0; i < part.size(); ++i)
            if (argmax_row(z, i) == static_cast<std::size_t>(labels[i])) correct += 1.0;
    }
    const double n = static_cast<double>(chosen.size());
    return {loss / n, correct / n};
}

}  // namespace

ClassifierTrainResult train_classifier(const std::vector<Fcm>& fcms, const std::vector<FcmSequence>& sequences,
                                       const DatasetSplit& split, const ClassifierConfig& config,
                                       const std::function<void(const ClassifierEpoch&)>& on_epoch) {
    if (split.train.empty()) throw InvalidArgument("train_classifier: empty training split");
    keep_freed_memory();
    ClassifierTrainResult result{Classifier(config), {}, 0};
    Classifier& model = result.model;
    const auto& c = model.config();
    for (std::size_t i : split.train) {
        if (sequences.at(i).label.index() >= c.classes) throw InvalidArgument("label outside the class range");
    }
    nn::Adam opt(model.params().trainable(), nn::AdamConfig{c.lr});
    std::mt19937_64 rng(derive_seed(c.seed, 0x636c'6601));
    std::vector<std::size_t> order = split.train;
    auto best = model.params().snapshot();
    double best_acc = -1.0, best_loss = 0.0;

    for (std::size_t e = 1; e <= c.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        ClassifierEpoch rec;
        rec.epoch = e;
        for (std::size_t s = 0; s < order.size(); s += c.batch_size) {
            const std::vector<std::size_t> part(order.begin() + static_cast<long>(s),
                                                order.begin() + static_cast<long>(std::min(order.size(), s + c.batch_size)));
            const auto labels = labels_of(sequences, part);
            opt.zero_grad();
            const Tensor z = model.logits(sequence_batch(fcms, sequences, part, c.side));
            const Tensor loss = nn::softmax_cross_entropy(z, labels);
            loss.backward();
            opt.step();
            rec.train_loss += static_cast<double>(part.size()) * loss.item();
            for (std::size_t i = 0; i < part.size(); ++i)
                if (argmax_row(z, i) == static_cast<std::size_t>(labels[i])) rec.train_accuracy += 1.0;
        }
        rec.train_loss /= static_cast<double>(order.size());
        rec.train_accuracy /= static_cast<double>(order.size());
        if (!split.val.empty()) {
            std::tie(rec.val_loss, rec.val_accuracy) = score(model, fcms, sequences, split.val);
        } else {
            rec.val_loss = rec.train_loss;
            rec.val_accuracy = rec.train_accuracy;
        }
        if (rec.val_accuracy > best_acc || (rec.val_accuracy == best_acc && rec.val_loss < best_loss)) {
            best_acc = rec.val_accuracy;
            best_loss = rec.val_loss;
            best = model.params().snapshot();
            result.best_epoch = e;
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    model.params().restore(best);
    return result;
}

double f1_score(double ppv, double tpr) { return ppv + tpr > 0.0 ? 2.0 * ppv * tpr / (ppv + tpr) : 0.0; }

ClassMetrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
    const std::size_t k = confusion.size();
    for (const auto& row : confusion)
        if (row.size() != k) throw ShapeError("confusion matrix must be square");
    ClassMetrics m;
    m.ppv.assign(k, 0.0);
    m.tpr.assign(k, 0.0);
    m.f1.assign(k, 0.0);
    m.support.assign(k, 0);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t predicted = 0;
        for (std::size_t r = 0; r < k; ++r) predicted += confusion[r][c];
        m.support[c] = std::accumulate(confusion[c].begin(), confusion[c].end(), std::size_t{0});
        const double tp = static_cast<double>(confusion[c][c]);
        m.ppv[c] = predicted ? tp / static_cast<double>(predicted) : 0.0;
        m.tpr[c] = m.support[c] ? tp / static_cast<double>(m.support[c]) : 0.0;
        m.f1[c] = f1_score(m.ppv[c], m.tpr[c]);
    }
    m.confusion = std::move(confusion);
    return m;
}

double ClassMetrics::macro_f1() const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < f1.size(); ++c) {
        if (support[c] == 0) continue;
        s += f1[c];
        ++n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

double ClassMetrics::accuracy() const {
    std::size_t hit = 0, total = 0;
    for (std::size_t c = 0; c < confusion.size(); ++c) {
        hit += confusion[c][c];
        total += support[c];
    }
    return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

std::vector<std::size_t> predict_classes(const Classifier& model, const std::vector<Fcm>& fcms,
                                         const std::vector<FcmSequence>& sequences,
                                         const std::vector<std::size_t>& chosen) {
    std::vector<std::size_t> out(chosen.size());
    const std::size_t bs = 32;
    const std::size_t batches = (chosen.size() + bs - 1) / bs;
    parallel_for(batches, [&](std::size_t b) {
        const std::size_t s = b * bs, e = std::min(chosen.size(), s + bs);
        const std::vector<std::size_t> part(chosen.begin() + static_cast<long>(s), chosen.begin() + static_cast<long>(e));
        const Tensor p = model.predict(sequence_batch(fcms, sequences, part, model.config().side));
        for (std::size_t i = 0; i < part.size(); ++i) out[s + i] = argmax_row(p, i);
    });
    return out;
}

ClassMetrics evaluate(const Classifier& model, const std::vector<Fcm>& fcms,
                      const std::vector<FcmSequence>& sequences, const std::vector<std::size_t>& chosen) {
    if (chosen.empty()) throw InvalidArgument("evaluate: empty evaluation set");
    const std::size_t k = model.config().classes;
    std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
    const auto pred = predict_classes(model, fcms, sequences, chosen);
    for (std::size_t i = 0; i < chosen.size(); ++i) ++confusion[sequences[chosen[i]].label.index()][pred[i]];
    return metrics_from_confusion(std::move(confusion));
}

nlohmann::json metrics_to_json(const ClassMetrics& m) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < m.f1.size(); ++c) {
        const std::string name = m.f1.size() == static_cast<std::size_t>(kLandUseClassCount)
                                     ? std::string(land_use_names()[c])
                                     : "class " + std::to_string(c);
        classes.push_back({{"class", name},
                           {"ppv", m.ppv[c]},
                           {"tpr", m.tpr[c]},
                           {"f1", m.f1[c]},
                           {"support", m.support[c]}});
    }
    j["classes"] = classes;
    j["macro_f1"] = m.macro_f1();
    j["accuracy"] = m.accuracy();
    j["confusion"] = m.confusion;
    return nlohmann::json::parse(j.dump());
}

ClassMetrics metrics_from_json(const nlohmann::json& j) {
    try {
        return metrics_from_confusion(j.at("confusion").get<std::vector<std::vector<std::size_t>>>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metrics: ") + e.what());
    }
}

std::string metrics_table(const std::vector<std::pair<std::string, const ClassMetrics*>>& scenarios) {
    std::size_t k = 0;
    for (const auto& [name, m] : scenarios)
        if (m) k = std::max(k, m->f1.size());
    const std::size_t name_w = 22, col_w = 6;
    std::ostringstream os;
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    auto num = [](double v) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    const std::size_t block = 3 * col_w + 2;
    os << pad("", name_w);
    for (const auto& [name, m] : scenarios) os << " | " << pad(name, block);
    os << "\n" << pad("class", name_w);
    for (std::size_t s = 0; s < scenarios.size(); ++s) os << " | " << pad("PPV", col_w + 1) << pad("TPR", col_w + 1) << pad("F1", col_w);
    os << "\n" << std::string(name_w + scenarios.size() * (block + 3), '-') << "\n";
    for (std::size_t c = 0; c < k; ++c) {
        const std::string name =
            k == static_cast<std::size_t>(kLandUseClassCount) ? std::string(land_use_names()[c]) : "class " + std::to_string(c);
        os << pad(name, name_w);
        for (const auto& [sname, m] : scenarios) {
            os << " | ";
            if (m && c < m->f1.size()) {
                os << pad(num(m->ppv[c]), col_w + 1) << pad(num(m->tpr[c]), col_w + 1) << pad(num(m->f1[c]), col_w);
            } else {
                os << pad("-", col_w + 1) << pad("-", col_w + 1) << pad("-", col_w);
            }
        }
        os << "\n";
    }
    os << pad("macro F1", name_w);
    for (const auto& [sname, m] : scenarios) os << " | " << pad(m ? num(m->macro_f1()) : "-", block);
    os << "\n";
    return os.str();
}

}  // namespace gastkit
