#include "gastkit/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gastkit/text_io.hpp"

namespace gastkit {

using nn::Tensor;

void VaeConfig::validate() const {
    auto fail = [](const std::string& what) { throw InvalidArgument("vae config: " + what); };
    if (input_side == 0 || input_side % 8 != 0) fail("input_side must be a positive multiple of 8");
    for (std::size_t m : feature_maps)
        if (m == 0) fail("feature_maps entries must be positive");
    if (latent_dim == 0) fail("latent_dim must be at least 1");
    if (fc_widths[0] == 0 || fc_widths[1] == 0) fail("fc_widths entries must be positive");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (e_max == 0) fail("e_max must be positive");
    if (!(s >= 0.0)) fail("s must be non-negative");
    if (pyramid_levels == 0) fail("pyramid_levels must be at least 1");
    if ((input_side % (std::size_t{1} << (pyramid_levels - 1))) != 0) {
        fail("input_side must be divisible by 2^(pyramid_levels - 1)");
    }
    if (!(smooth_l1_beta > 0.0)) fail("smooth_l1_beta must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
}

VaeConfig VaeConfig::desk() {
    VaeConfig c;
    c.input_side = 64;
    c.epochs = 200;
    c.lr = 1e-3;
    return c;
}

VaeConfig VaeConfig::paper() {
    VaeConfig c;
    c.input_side = 128;
    return c;
}

double beta_schedule(std::size_t epoch, std::size_t e_max, double s) {
    if (e_max == 0) throw InvalidArgument("beta_schedule: e_max must be positive");
    if (epoch >= e_max) return s;
    return static_cast<double>(epoch) / static_cast<double>(e_max) * s;
}

Vae::Vae(const VaeConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(derive_seed(config_.seed, 0x7661'6500));
    const auto& maps = config_.feature_maps;

    std::size_t in = 1;
    for (std::size_t s = 0; s < 3; ++s) {
        const std::string p = "enc" + std::to_string(s);
        std::array<ConvBlock, 2> section;
        for (std::size_t b = 0; b < 2; ++b) {
            const std::string q = p + "." + std::to_string(b);
            section[b].conv = nn::Conv2d(params_, q + ".conv", b == 0 ? in : maps[s], maps[s], {3, 3}, {1, 1},
                                         {1, 1}, rng, false);
            section[b].bn = nn::BatchNorm(params_, q + ".bn", maps[s]);
        }
        encoder_.push_back(std::move(section));
        in = maps[s];
    }
    const std::size_t bottom = config_.input_side / 8;
    const std::size_t flat = maps[2] * bottom * bottom;
    const auto [w1, w2] = config_.fc_widths;
    enc_fc1_ = nn::Dense(params_, "enc.fc1", flat, w1, rng);
    enc_act1_ = nn::PRelu(params_, "enc.act1");
    enc_fc2_ = nn::Dense(params_, "enc.fc2", w1, w2, rng);
    enc_act2_ = nn::PRelu(params_, "enc.act2");
    mu_head_ = nn::Dense(params_, "enc.mu", w2, config_.latent_dim, rng);
    logvar_head_ = nn::Dense(params_, "enc.logvar", w2, config_.latent_dim, rng);

    dec_fc1_ = nn::Dense(params_, "dec.fc1", config_.latent_dim, w2, rng);
    dec_act1_ = nn::PRelu(params_, "dec.act1");
    dec_fc2_ = nn::Dense(params_, "dec.fc2", w2, w1, rng);
    dec_act2_ = nn::PRelu(params_, "dec.act2");
    dec_fc3_ = nn::Dense(params_, "dec.fc3", w1, flat, rng);
    dec_act3_ = nn::PRelu(params_, "dec.act3");

    in = maps[2];
    for (std::size_t s = 0; s < 3; ++s) {
        const std::size_t out = maps[2 - s];
        const std::string p = "dec" + std::to_string(s);
        UpBlock up;
        up.up = nn::TransposedConv2d(params_, p + ".up", in, out, {2, 2}, {2, 2}, rng, false);
        up.bn = nn::BatchNorm(params_, p + ".up_bn", out);
        ConvBlock conv;
        conv.conv = nn::Conv2d(params_, p + ".conv", out, out, {3, 3}, {1, 1}, {1, 1}, rng, false);
        conv.bn = nn::BatchNorm(params_, p + ".bn", out);
        decoder_.emplace_back(std::move(up), std::move(conv));
        in = out;
    }
    output_ = nn::Conv2d(params_, "dec.out", in, 1, {1, 1}, {1, 1}, {0, 0}, rng);
}

std::pair<Tensor, Tensor> Vae::encode(const Tensor& x, bool training) {
    const std::size_t side = config_.input_side;
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != side || x.dim(3) != side) {
        throw ShapeError("vae: expected input [N, 1, " + std::to_string(side) + ", " + std::to_string(side) +
                         "], got " + nn::shape_string(x.shape()));
    }
    Tensor h = x;
    for (auto& section : encoder_) {
        h = section[0](h, training);
        h = section[1](h, training);
        h = nn::maxpool2d(h, {2, 2}, {2, 2});
    }
    h = nn::flatten(h);
    h = enc_act1_(enc_fc1_(h));
    h = enc_act2_(enc_fc2_(h));
    return {mu_head_(h), logvar_head_(h)};
}

Tensor Vae::decode(const Tensor& z, bool training) {
    const std::size_t bottom = config_.input_side / 8;
    Tensor h = dec_act1_(dec_fc1_(z));
    h = dec_act2_(dec_fc2_(h));
    h = dec_act3_(dec_fc3_(h));
    h = nn::reshape(h, {z.dim(0), config_.feature_maps[2], bottom, bottom});
    for (auto& [up, conv] : decoder_) {
        h = up(h, training);
        h = conv(h, training);
    }
    return output_(h);
}

VaeOutput Vae::forward(const Tensor& x, const Tensor& eps, bool training) {
    auto [mu, logvar] = encode(x, training);
    Tensor z = mu;
    if (eps.defined()) {
        if (eps.shape() != mu.shape()) {
            throw ShapeError("vae: eps shape " + nn::shape_string(eps.shape()) + " does not match latent " +
                             nn::shape_string(mu.shape()));
        }
        z = nn::add(mu, nn::mul(nn::exp(nn::scale(logvar, 0.5)), eps));
    }
    return {decode(z, training), mu, logvar};
}

VaeLoss vae_loss(const Tensor& pred, const Tensor& target, const Tensor& mu, const Tensor& logvar, double beta,
                 std::size_t levels, double smooth_l1_beta) {
    VaeLoss l;
    l.rec = nn::laplacian_pyramid_loss(pred, target, levels, smooth_l1_beta);
    l.kl = nn::kl_standard_normal(mu, logvar);
    l.total = nn::add(l.rec, nn::scale(l.kl, beta));
    return l;
}

Tensor fcm_batch(const std::vector<const Fcm*>& fcms, std::size_t side) {
    Tensor out(nn::Shape{fcms.size(), 1, side, side});
    auto& v = out.values();
    for (std::size_t i = 0; i < fcms.size(); ++i) {
        const Fcm& f = *fcms[i];
        if (f.size() != side) {
            throw ShapeError("FCM " + f.device_id + " " + f.date.date_string() + " has side " +
                             std::to_string(f.size()) + ", expected " + std::to_string(side));
        }
        std::copy(f.values.data().begin(), f.values.data().end(), v.begin() + static_cast<long>(i * side * side));
    }
    return out;
}

VaeTrainResult train_vae(const std::vector<Fcm>& fcms, const VaeConfig& config,
                         const std::function<void(const VaeEpoch&)>& on_epoch) {
    if (fcms.size() < 2) throw InvalidArgument("train_vae needs at least two images");
    keep_freed_memory();
    VaeTrainResult result{Vae(config), {}};
    Vae& model = result.model;
    const VaeConfig& c = model.config();
    nn::Adam opt(model.params().trainable(), nn::AdamConfig{c.lr});
    std::mt19937_64 rng(derive_seed(c.seed, 0x7661'6501));
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::size_t> order(fcms.size());
    std::iota(order.begin(), order.end(), 0);
    // Batch boundaries; a trailing single sample cannot be batch-normalized
    // and joins the previous batch.
    std::vector<std::size_t> bounds;
    for (std::size_t i = 0; i < order.size(); i += c.batch_size) bounds.push_back(i);
    if (order.size() - bounds.back() == 1 && bounds.size() > 1) bounds.pop_back();
    bounds.push_back(order.size());
    for (std::size_t e = 0; e < c.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        VaeEpoch rec{e, beta_schedule(e, c.e_max, c.s), 0.0, 0.0, 0.0};
        for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
            std::vector<const Fcm*> batch;
            for (std::size_t i = bounds[b]; i < bounds[b + 1]; ++i) batch.push_back(&fcms[order[i]]);
            const Tensor x = fcm_batch(batch, c.input_side);
            Tensor eps(nn::Shape{batch.size(), c.latent_dim});
            for (double& v : eps.values()) v = normal(rng);

            opt.zero_grad();
            const auto out = model.forward(x, eps, true);
            const auto loss = vae_loss(out.reconstruction, x, out.mu, out.logvar, rec.beta, c.pyramid_levels,
                                       c.smooth_l1_beta);
            loss.total.backward();
            opt.step();
            const double w = static_cast<double>(batch.size());
            rec.rec += w * loss.rec.item();
            rec.kl += w * loss.kl.item();
            rec.total += w * loss.total.item();
        }
        const double n = static_cast<double>(fcms.size());
        rec.rec /= n;
        rec.kl /= n;
        rec.total /= n;
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

std::vector<LatentEmbedding> embed(Vae& model, const std::vector<Fcm>& fcms) {
    std::vector<LatentEmbedding> out;
    const std::size_t side = model.config().input_side;
    const std::size_t chunk = 32;
    nn::NoGradGuard guard;
    for (std::size_t start = 0; start < fcms.size(); start += chunk) {
        const std::size_t end = std::min(fcms.size(), start + chunk);
        std::vector<const Fcm*> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(&fcms[i]);
        const auto [mu, logvar] = model.encode(fcm_batch(batch, side), false);
        const std::size_t d = mu.dim(1);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            LatentEmbedding e;
            e.device_id = batch[i]->device_id;
            e.date = batch[i]->date;
            for (std::size_t j = 0; j < d; ++j) {
                e.mu.push_back(mu[i * d + j]);
                e.sigma.push_back(std::exp(0.5 * logvar[i * d + j]));
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

void write_loss_history_csv(const std::filesystem::path& path, const std::vector<VaeEpoch>& history) {
    std::ostringstream os;
    os << "epoch,beta,rec,kl,total\n";
    for (const auto& h : history) {
        os << h.epoch << ',' << format_double(h.beta) << ',' << format_double(h.rec) << ',' << format_double(h.kl)
           << ',' << format_double(h.total) << '\n';
    }
    write_text_file(path, os.str());
}

void write_embeddings_csv(const std::filesystem::path& path, const std::vector<LatentEmbedding>& embeddings) {
    std::ostringstream os;
    os << "device_id,date";
    const std::size_t d = embeddings.empty() ? 0 : embeddings.front().mu.size();
    for (std::size_t j = 0; j < d; ++j) os << ",mu_" << j;
    os << '\n';
    for (const auto& e : embeddings) {
        if (e.mu.size() != d) throw ShapeError("embeddings differ in dimension");
        os << e.device_id << ',' << e.date.date_string();
        for (double v : e.mu) os << ',' << format_double(v);
        os << '\n';
    }
    write_text_file(path, os.str());
}

std::vector<LatentEmbedding> read_embeddings_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty embeddings file");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "device_id" || header[1] != "date") {
        throw FormatError(path.string() + ": unexpected embeddings header");
    }
    std::vector<LatentEmbedding> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " fields");
        }
        LatentEmbedding e;
        e.device_id = cells[0];
        e.date = TimeCode::parse_date(cells[1]);
        for (std::size_t j = 2; j < cells.size(); ++j) e.mu.push_back(parse_double(cells[j], header[j]));
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace gastkit
