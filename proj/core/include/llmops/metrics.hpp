#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <span>
#include <stdexcept>
#include <vector>

#include "llmops/simulator.hpp"
#include "llmops/types.hpp"

namespace llmops::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kWindowLength = 32;
inline constexpr std::size_t kHistoryCapacity = 512;
inline constexpr std::size_t kResourceChannels = 4;     // cpu, mem, gpu, net
inline constexpr std::size_t kPerformanceChannels = 3;  // p95, throughput, error rate
inline constexpr std::size_t kDeployFeatures = 8;
inline constexpr std::size_t kTargets = 3;              // load, latency, efficiency

enum ResourceChannel : std::size_t { kCpu = 0, kMem = 1, kGpu = 2, kNet = 3 };
enum PerformanceChannel : std::size_t { kP95 = 0, kThroughput = 1, kErrorRate = 2 };

/// The three input streams: resource [T x 4] and performance [T x 3] row-major by
/// time step, plus the static deployment vector [8].
struct MetricWindow {
    std::size_t length = kWindowLength;
    std::vector<double> resource;
    std::vector<double> performance;
    std::vector<double> deploy;

    MetricWindow() = default;
    explicit MetricWindow(std::size_t t)
        : length(t), resource(t * kResourceChannels), performance(t * kPerformanceChannels), deploy(kDeployFeatures) {}

    double& res(std::size_t t, std::size_t c) { return resource[t * kResourceChannels + c]; }
    double res(std::size_t t, std::size_t c) const { return resource[t * kResourceChannels + c]; }
    double& perf(std::size_t t, std::size_t c) { return performance[t * kPerformanceChannels + c]; }
    double perf(std::size_t t, std::size_t c) const { return performance[t * kPerformanceChannels + c]; }

    /// Shapes consistent with `length` and every value finite.
    bool valid() const;
};

using Targets = std::array<double, kTargets>;

/// Per-channel Welford mean/variance (population) plus a bounded history for
/// median/MAD.
class RunningStats {
public:
    explicit RunningStats(std::size_t channels = 1, std::size_t history_capacity = kHistoryCapacity);

    void update(std::span<const double> sample);

    std::size_t channels() const { return mean_.size(); }
    std::size_t count() const { return count_; }
    double mean(std::size_t c) const { return mean_.at(c); }
    double variance(std::size_t c) const;
    double stddev(std::size_t c) const;
    std::vector<double> history(std::size_t c) const;
    double median(std::size_t c) const;
    double mad(std::size_t c) const;

    /// Restores a snapshot (used by weight files). History is not persisted.
    static RunningStats from_moments(std::size_t count, std::vector<double> mean, std::vector<double> variance);

private:
    std::size_t count_ = 0;
    std::size_t history_capacity_;
    std::vector<double> mean_;
    std::vector<double> m2_;
    std::vector<std::deque<double>> history_;
};

RunningStats& update_stats(RunningStats& stats, std::span<const double> sample);

/// (value - mean) / max(std, 1e-6). Requires at least two samples.
double normalize(const RunningStats& stats, std::size_t channel, double value);
double denormalize(const RunningStats& stats, std::size_t channel, double z);

/// Exact quantile of the buffer with linear interpolation between order statistics.
double streaming_quantile(std::span<const double> buffer, double q);

double median(std::span<const double> values);
/// Unscaled median absolute deviation.
double median_absolute_deviation(std::span<const double> values);

/// Indices whose robust z-score |x - median| / (1.4826 MAD + 1e-9) exceeds threshold.
std::vector<std::size_t> detect_anomalies(std::span<const double> buffer, double threshold = 3.5);

/// Ordinary least-squares slope of value against index.
double trend_slope(std::span<const double> series);

/// value(t + h - k*period) for the smallest k with h - k*period <= 0, t = last index.
double seasonal_naive_forecast(std::span<const double> series, std::size_t period, std::size_t horizon);

struct HoltWintersParams {
    double alpha = 0.3;
    double beta = 0.01;
    double gamma = 0.2;
};

/// Additive Holt-Winters forecasts for horizons 1..horizon.
std::vector<double> holt_winters_path(std::span<const double> series, std::size_t period, std::size_t horizon,
                                      const HoltWintersParams& params = {});
double holt_winters_forecast(std::span<const double> series, std::size_t period, std::size_t horizon,
                             const HoltWintersParams& params = {});

/// Resource proxy channels for one step.
std::array<double, kResourceChannels> resource_channels(const sim::StepOutcome& step, const SimConfig& cfg);
std::array<double, kPerformanceChannels> performance_channels(const sim::StepOutcome& step, const SimConfig& cfg);
std::array<double, kDeployFeatures> deploy_features(const SimConfig& cfg);

/// Unnormalized window over the last `length` steps of `history`.
MetricWindow build_raw_window(std::span<const sim::StepOutcome> history, const SimConfig& cfg,
                              std::size_t length = kWindowLength);

/// Realized (mean arrival rps, p95 of step p95 ms, efficiency) over `future`.
Targets realized_targets(std::span<const sim::StepOutcome> future, const SimConfig& cfg);

/// Running statistics for every input channel and prediction target.
struct FeatureNormalizer {
    RunningStats resource{kResourceChannels};
    RunningStats performance{kPerformanceChannels};
    RunningStats deploy{kDeployFeatures};
    RunningStats targets{kTargets};

    void observe(const MetricWindow& raw);
    void observe_targets(const Targets& raw);
    bool ready() const;

    MetricWindow normalize(const MetricWindow& raw) const;
    Targets normalize_targets(const Targets& raw) const;
    Targets denormalize_targets(const Targets& z) const;
};

/// Raw window assembled and z-normalized through `normalizer`.
MetricWindow build_window(std::span<const sim::StepOutcome> history, const SimConfig& cfg,
                          const FeatureNormalizer& normalizer, std::size_t length = kWindowLength);

/// Mean utilization times (1 - SLA-violation fraction).
double calculate_efficiency(std::span<const sim::StepOutcome> outcomes, double sla_p95_ms);

}  // namespace llmops::metrics
