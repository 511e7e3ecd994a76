#pragma once

// Land-use classification of week-long FCM sequences with a 3-D CNN.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gastkit/fcm.hpp"
#include "gastkit/gast_model.hpp"
#include "gastkit/nn.hpp"

namespace gastkit {

/// Consecutive daily FCMs of one device. `frames` index into the FCM list
/// the sequence was assembled from.
struct FcmSequence {
    std::string device_id;
    TimeCode start;
    LandUseClass label{1};
    std::vector<std::size_t> frames;
};

/// Every window of `length` consecutive calendar days per device; a missing
/// day breaks the run. Devices absent from `device_class` are skipped.
std::vector<FcmSequence> assemble_sequences(const std::vector<Fcm>& fcms,
                                            const std::map<std::string, LandUseClass>& device_class,
                                            std::size_t length = 7);

enum class SplitScope { per_device, cross_device };

struct SplitSpec {
    std::array<double, 3> fractions{0.6, 0.2, 0.2};  // train, validation, evaluation
    std::uint64_t seed = 0;
    SplitScope scope = SplitScope::per_device;

    void validate() const;
};

struct DatasetSplit {
    std::vector<std::size_t> train, val, eval;
    /// cross_device only: every sequence of the devices kept out of training.
    std::vector<std::size_t> holdout;
};

/// Seeded shuffle into train/val/eval with sizes round(f * n) (evaluation
/// takes the remainder). With cross_device scope only the first device of
/// each class (lowest id) is split; all others go to `holdout`.
DatasetSplit split_dataset(const std::vector<FcmSequence>& sequences, const SplitSpec& spec);

struct ClassifierConfig {
    std::size_t side = 64;
    std::size_t sequence_length = 7;
    std::size_t classes = 9;
    std::size_t channels = 32;
    nn::Extent3 kernel{6, 4, 4};
    nn::Extent3 stride{1, 2, 2};
    nn::Extent3 pool_window{6, 4, 4};
    nn::Extent3 pool_stride{1, 2, 2};
    bool clamp_pool_depth = true;
    /// Upper bound on the first dense width; 0 keeps the full power of two.
    std::size_t dense_cap = 256;
    std::size_t dense_min = 64;
    std::size_t epochs = 100;
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;

    void validate() const;
    /// 64 x 64 frames, kernel 6x4x4 / stride (1,2,2), dense chain capped at 256.
    static ClassifierConfig desk();
    /// 256 x 256 frames, kernel 6x8x8 / stride (1,4,4), uncapped dense chain.
    static ClassifierConfig paper();
};

class Classifier {
public:
    /// Throws ShapeError naming the layer whose window does not fit.
    explicit Classifier(const ClassifierConfig& config);
    Classifier(const Classifier&) = delete;
    Classifier& operator=(const Classifier&) = delete;
    Classifier(Classifier&&) = default;
    Classifier& operator=(Classifier&&) = default;

    /// x [N, 1, length, side, side] -> logits [N, classes]
    nn::Tensor logits(const nn::Tensor& x) const;
    /// Softmax probabilities, no graph.
    nn::Tensor predict(const nn::Tensor& x) const;

    const ClassifierConfig& config() const { return config_; }
    nn::ParameterSet& params() { return params_; }
    const nn::ParameterSet& params() const { return params_; }
    /// Flattened size after pooling and the dense widths that follow it.
    std::size_t flat_size() const { return flat_; }
    std::vector<std::size_t> dense_widths() const;
    nn::Extent3 pool_window() const { return pool_window_; }

private:
    ClassifierConfig config_;
    nn::ParameterSet params_;
    nn::Conv3d conv_;
    nn::Extent3 pool_window_{};
    std::size_t flat_ = 0;
    std::vector<nn::Dense> dense_;
};

/// Stacks the frames of the chosen sequences into [N, 1, length, side, side].
nn::Tensor sequence_batch(const std::vector<Fcm>& fcms, const std::vector<FcmSequence>& sequences,
                          const std::vector<std::size_t>& chosen, std::size_t side);

struct ClassifierEpoch {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    bool operator==(const ClassifierEpoch&) const = default;
};

struct ClassifierTrainResult {
    Classifier model;
    std::vector<ClassifierEpoch> history;
    std::size_t best_epoch = 0;  // 0 = the initial parameters were kept
};

/// Adam on shuffled mini-batches of the training split with cross-entropy.
/// The parameters of the epoch with the best validation accuracy (lower
/// validation loss on ties) are restored at the end.
ClassifierTrainResult train_classifier(const std::vector<Fcm>& fcms, const std::vector<FcmSequence>& sequences,
                                       const DatasetSplit& split, const ClassifierConfig& config,
                                       const std::function<void(const ClassifierEpoch&)>& on_epoch = {});

struct ClassMetrics {
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<double> ppv, tpr, f1;
    std::vector<std::size_t> support;

    /// Mean F1 over classes with support.
    double macro_f1() const;
    double accuracy() const;
};

/// 2 PPV TPR / (PPV + TPR), or 0 when both are 0.
double f1_score(double ppv, double tpr);
ClassMetrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion);

/// Predicted class per chosen sequence (argmax, lowest index on ties).
std::vector<std::size_t> predict_classes(const Classifier& model, const std::vector<Fcm>& fcms,
                                         const std::vector<FcmSequence>& sequences,
                                         const std::vector<std::size_t>& chosen);
ClassMetrics evaluate(const Classifier& model, const std::vector<Fcm>& fcms,
                      const std::vector<FcmSequence>& sequences, const std::vector<std::size_t>& chosen);

nlohmann::json metrics_to_json(const ClassMetrics& m);
ClassMetrics metrics_from_json(const nlohmann::json& j);
/// Per-class PPV / TPR / F1 for each named scenario side by side, two
/// decimals; "-" for a scenario that lacks metrics.
std::string metrics_table(const std::vector<std::pair<std::string, const ClassMetrics*>>& scenarios);

}  // namespace gastkit
