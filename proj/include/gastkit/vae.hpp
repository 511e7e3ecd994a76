#pragma once

// Convolutional VAE over FCM images with a linearly annealed KL weight.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gastkit/fcm.hpp"
#include "gastkit/nn.hpp"

namespace gastkit {

struct VaeConfig {
    std::size_t input_side = 64;
    std::array<std::size_t, 3> feature_maps{8, 16, 32};
    std::size_t latent_dim = 16;
    std::array<std::size_t, 2> fc_widths{256, 128};
    std::size_t epochs = 2000;
    double lr = 1e-5;
    std::size_t e_max = 700;
    double s = 1e-4;
    std::size_t pyramid_levels = 4;
    double smooth_l1_beta = 1.0;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument naming the offending field.
    void validate() const;

    /// 64 x 64 images, 200 epochs at lr 1e-3.
    static VaeConfig desk();
    /// 128 x 128 images, 2000 epochs at lr 1e-5.
    static VaeConfig paper();
};

/// beta_e = min(e / e_max, 1) * s
double beta_schedule(std::size_t epoch, std::size_t e_max, double s);

struct VaeOutput {
    nn::Tensor reconstruction;  // [N, 1, side, side]
    nn::Tensor mu, logvar;      // [N, latent_dim]
};

class Vae {
public:
    explicit Vae(const VaeConfig& config);
    Vae(const Vae&) = delete;
    Vae& operator=(const Vae&) = delete;
    Vae(Vae&&) = default;
    Vae& operator=(Vae&&) = default;

    /// Encoder, reparameterized sample mu + exp(logvar / 2) * eps, decoder.
    /// With an undefined eps the decoder sees mu directly.
    VaeOutput forward(const nn::Tensor& x, const nn::Tensor& eps, bool training);
    /// Encoder only: returns (mu, logvar).
    std::pair<nn::Tensor, nn::Tensor> encode(const nn::Tensor& x, bool training);
    nn::Tensor decode(const nn::Tensor& z, bool training);

    const VaeConfig& config() const { return config_; }
    nn::ParameterSet& params() { return params_; }
    const nn::ParameterSet& params() const { return params_; }

private:
    struct ConvBlock {
        nn::Conv2d conv;
        nn::BatchNorm bn;
        nn::Tensor operator()(const nn::Tensor& x, bool training) { return nn::relu(bn(conv(x), training)); }
    };
    struct UpBlock {
        nn::TransposedConv2d up;
        nn::BatchNorm bn;
        nn::Tensor operator()(const nn::Tensor& x, bool training) { return nn::relu(bn(up(x), training)); }
    };

    VaeConfig config_;
    nn::ParameterSet params_;
    std::vector<std::array<ConvBlock, 2>> encoder_;
    nn::Dense enc_fc1_, enc_fc2_, mu_head_, logvar_head_;
    nn::PRelu enc_act1_, enc_act2_;
    nn::Dense dec_fc1_, dec_fc2_, dec_fc3_;
    nn::PRelu dec_act1_, dec_act2_, dec_act3_;
    std::vector<std::pair<UpBlock, ConvBlock>> decoder_;
    nn::Conv2d output_;
};

struct VaeLoss {
    nn::Tensor total, rec, kl;
};

/// total = laplacian_pyramid_loss(pred, target) + beta * kl
VaeLoss vae_loss(const nn::Tensor& pred, const nn::Tensor& target, const nn::Tensor& mu, const nn::Tensor& logvar,
                 double beta, std::size_t levels = 4, double smooth_l1_beta = 1.0);

struct VaeEpoch {
    std::size_t epoch = 0;  // 0-based
    double beta = 0.0;
    double rec = 0.0;  // sample-weighted means over the epoch's batches
    double kl = 0.0;
    double total = 0.0;
    bool operator==(const VaeEpoch&) const = default;
};

struct VaeTrainResult {
    Vae model;
    std::vector<VaeEpoch> history;
};

/// Stacks square FCMs of side `side` into [N, 1, side, side].
nn::Tensor fcm_batch(const std::vector<const Fcm*>& fcms, std::size_t side);

/// Adam on shuffled mini-batches; epoch e uses beta_schedule(e).
VaeTrainResult train_vae(const std::vector<Fcm>& fcms, const VaeConfig& config,
                         const std::function<void(const VaeEpoch&)>& on_epoch = {});

struct LatentEmbedding {
    std::vector<double> mu, sigma;
    std::string device_id;
    TimeCode date;
};

/// Eval-mode encoder means and standard deviations; no sampling.
std::vector<LatentEmbedding> embed(Vae& model, const std::vector<Fcm>& fcms);

void write_loss_history_csv(const std::filesystem::path& path, const std::vector<VaeEpoch>& history);
void write_embeddings_csv(const std::filesystem::path& path, const std::vector<LatentEmbedding>& embeddings);
std::vector<LatentEmbedding> read_embeddings_csv(const std::filesystem::path& path);

}  // namespace gastkit
