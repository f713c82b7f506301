#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "llmops/metrics.hpp"
#include "llmops/rng.hpp"
#include "llmops/tensor.hpp"

namespace llmops::nn {

class NetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Mode { Train, Eval };

using Prediction = std::array<double, metrics::kTargets>;

/// Three input streams fused into three regression heads.
///
///   resource [T x 4]    -> conv1d(4->16,k3) ReLU -> conv1d(16->16,k3) ReLU -> mean over T -> 16
///   performance [T x 3] -> Elman RNN (hidden 32, tanh), last hidden state    -> 32
///   deploy [8]          -> affine 8->32 -> batch norm -> ReLU                -> 32
///   concat 80 -> affine 80->64 ReLU -> affine 64->3 (load, latency, efficiency)
///
/// Convolutions use stride 1 and zero "same" padding, so any T >= 1 is accepted.
class MultiStreamNet {
public:
    static constexpr std::size_t kConvChannels = 16;
    static constexpr std::size_t kKernel = 3;
    static constexpr std::size_t kHidden = 32;
    static constexpr std::size_t kDense = 32;
    static constexpr std::size_t kFused = kConvChannels + kHidden + kDense;
    static constexpr std::size_t kFusion = 64;
    static constexpr double kBnMomentum = 0.9;
    static constexpr double kBnEpsilon = 1e-5;

    enum Param : std::size_t {
        kConv1W, kConv1B, kConv2W, kConv2B,
        kRnnWih, kRnnWhh, kRnnB,
        kDenseW, kDenseB, kBnGamma, kBnBeta,
        kFusionW, kFusionB, kHeadW, kHeadB,
        kParamCount
    };

    /// Zero-valued parameters with the fixed shapes; running variance 1.
    MultiStreamNet();

    /// Xavier-uniform weights from a seeded generator, zero biases, BN scale 1 shift 0.
    static MultiStreamNet init(std::uint64_t seed);

    static const std::array<const char*, kParamCount>& param_names();
    static std::vector<std::vector<std::size_t>> param_shapes();

    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    Tensor& param(Param p) { return params_[p]; }
    const Tensor& param(Param p) const { return params_[p]; }
    std::size_t parameter_count() const;

    Tensor bn_running_mean;
    Tensor bn_running_var;

    bool operator==(const MultiStreamNet&) const = default;

private:
    std::vector<Tensor> params_;
};

using Gradients = std::vector<Tensor>;

/// Per-window intermediate activations kept for backpropagation.
struct SampleCache {
    std::size_t length = 0;
    std::vector<double> resource, performance, deploy;               // inputs
    std::vector<double> conv1_pre, conv1_out, conv2_pre, conv2_out;  // [T x 16]
    std::vector<double> pooled;                                      // [16]
    std::vector<double> hidden;                                      // [(T+1) x 32], row 0 = zeros
    std::vector<double> dense_pre, bn_hat, bn_out, dense_out;        // [32]
    std::vector<double> fused;                                       // [80]
    std::vector<double> fusion_pre, fusion_out;                      // [64]
};

struct BatchForward {
    Mode mode = Mode::Eval;
    std::vector<Prediction> predictions;
    std::vector<SampleCache> caches;
    // Statistics used by the batch-norm layer on this pass.
    std::vector<double> bn_mean, bn_var;
};

/// Forward over a batch. Train mode normalizes with batch statistics (does not
/// touch running stats); eval mode uses the running statistics.
BatchForward forward_batch(const MultiStreamNet& net, std::span<const metrics::MetricWindow> windows, Mode mode);

/// Single-window forward. Train mode also folds the batch statistics into the running ones.
Prediction forward(MultiStreamNet& net, const metrics::MetricWindow& window, Mode mode);
Prediction predict(const MultiStreamNet& net, const metrics::MetricWindow& window);

/// Exponential moving update of the batch-norm running statistics.
void update_running_stats(MultiStreamNet& net, const BatchForward& pass);

/// Mean squared error over every head and batch element.
double loss(std::span<const Prediction> preds, std::span<const Prediction> targets);

struct TrainBatch {
    std::vector<metrics::MetricWindow> windows;
    std::vector<Prediction> targets;
};

/// Gradients of loss_scale * loss for every parameter tensor.
Gradients backward(const MultiStreamNet& net, const BatchForward& pass, std::span<const Prediction> targets,
                   double loss_scale = 1.0);
Gradients backward(const MultiStreamNet& net, const TrainBatch& batch, Mode mode = Mode::Train,
                   double loss_scale = 1.0);

struct OptimizerState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    static OptimizerState for_net(const MultiStreamNet& net, double learning_rate = 1e-3);
};

/// One adaptive-moment step on `batch`; returns the loss before the update.
double train_step(MultiStreamNet& net, OptimizerState& opt, const TrainBatch& batch);

double eval_loss(const MultiStreamNet& net, std::span<const metrics::MetricWindow> windows,
                 std::span<const Prediction> targets);

void save_weights(const MultiStreamNet& net, const std::filesystem::path& path,
                  const metrics::FeatureNormalizer* normalizer = nullptr);
MultiStreamNet load_weights(const std::filesystem::path& path);

struct WeightsFile {
    MultiStreamNet net;
    std::optional<metrics::FeatureNormalizer> normalizer;
};

std::string weights_to_json(const MultiStreamNet& net, const metrics::FeatureNormalizer* normalizer = nullptr);
WeightsFile weights_from_json(const std::string& text);
WeightsFile load_weights_file(const std::filesystem::path& path);

enum class FeatureGroup : std::size_t { Resource = 0, Performance = 1, Workload = 2, Network = 3 };
inline constexpr std::size_t kFeatureGroups = 4;
std::string_view to_string(FeatureGroup group);

/// Loss increase from shuffling each group's channels across `windows`,
/// normalized to sum to 1. Group membership:
///   resource    = cpu, mem, gpu resource channels
///   network     = net resource channel
///   performance = p95 latency and error-rate channels
///   workload    = arrival-rate (throughput) channel and the deployment vector
std::array<double, kFeatureGroups> permutation_importance(const MultiStreamNet& net,
                                                          std::span<const metrics::MetricWindow> windows,
                                                          std::span<const Prediction> targets, std::uint64_t seed,
                                                          std::size_t repeats = 1);

}  // namespace llmops::nn
