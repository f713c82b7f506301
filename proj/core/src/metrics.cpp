#include "llmops/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace llmops::metrics {

bool MetricWindow::valid() const {
    if (length == 0) return false;
    if (resource.size() != length * kResourceChannels) return false;
    if (performance.size() != length * kPerformanceChannels) return false;
    if (deploy.size() != kDeployFeatures) return false;
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return finite(resource) && finite(performance) && finite(deploy);
}

RunningStats::RunningStats(std::size_t channels, std::size_t history_capacity)
    : history_capacity_(history_capacity), mean_(channels, 0.0), m2_(channels, 0.0), history_(channels) {}

void RunningStats::update(std::span<const double> sample) {
    if (sample.size() != mean_.size())
        throw MetricsError("sample has " + std::to_string(sample.size()) + " channels, expected " +
                           std::to_string(mean_.size()));
    for (double v : sample)
        if (!std::isfinite(v)) throw MetricsError("non-finite sample");
    ++count_;
    const auto n = static_cast<double>(count_);
    for (std::size_t c = 0; c < sample.size(); ++c) {
        const double delta = sample[c] - mean_[c];
        mean_[c] += delta / n;
        m2_[c] += delta * (sample[c] - mean_[c]);
        auto& h = history_[c];
        h.push_back(sample[c]);
        if (h.size() > history_capacity_) h.pop_front();
    }
}

double RunningStats::variance(std::size_t c) const {
    if (count_ == 0) return 0.0;
    return std::max(0.0, m2_.at(c) / static_cast<double>(count_));
}

double RunningStats::stddev(std::size_t c) const { return std::sqrt(variance(c)); }

std::vector<double> RunningStats::history(std::size_t c) const {
    const auto& h = history_.at(c);
    return {h.begin(), h.end()};
}

double RunningStats::median(std::size_t c) const {
    const auto h = history(c);
    if (h.empty()) throw MetricsError("median of empty history");
    return metrics::median(h);
}

double RunningStats::mad(std::size_t c) const {
    const auto h = history(c);
    if (h.empty()) throw MetricsError("MAD of empty history");
    return median_absolute_deviation(h);
}

RunningStats RunningStats::from_moments(std::size_t count, std::vector<double> mean, std::vector<double> variance) {
    if (mean.size() != variance.size()) throw MetricsError("moment vectors differ in length");
    RunningStats s(mean.size());
    s.count_ = count;
    s.mean_ = std::move(mean);
    for (std::size_t c = 0; c < variance.size(); ++c) s.m2_[c] = variance[c] * static_cast<double>(count);
    return s;
}

RunningStats& update_stats(RunningStats& stats, std::span<const double> sample) {
    stats.update(sample);
    return stats;
}

double normalize(const RunningStats& stats, std::size_t channel, double value) {
    if (stats.count() < 2) throw MetricsError("normalize: insufficient data (need at least 2 samples)");
    return (value - stats.mean(channel)) / std::max(stats.stddev(channel), 1e-6);
}

double denormalize(const RunningStats& stats, std::size_t channel, double z) {
    if (stats.count() < 2) throw MetricsError("denormalize: insufficient data (need at least 2 samples)");
    return stats.mean(channel) + z * std::max(stats.stddev(channel), 1e-6);
}

double streaming_quantile(std::span<const double> buffer, double q) {
    if (buffer.empty()) throw MetricsError("streaming_quantile: empty buffer");
    if (!(q >= 0.0 && q <= 1.0)) throw MetricsError("streaming_quantile: q must lie in [0,1]");
    std::vector<double> sorted(buffer.begin(), buffer.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double median(std::span<const double> values) {
    if (values.empty()) throw MetricsError("median: empty input");
    return streaming_quantile(values, 0.5);
}

double median_absolute_deviation(std::span<const double> values) {
    const double m = median(values);
    std::vector<double> dev;
    dev.reserve(values.size());
    for (double v : values) dev.push_back(std::abs(v - m));
    return median(dev);
}

std::vector<std::size_t> detect_anomalies(std::span<const double> buffer, double threshold) {
    if (buffer.size() < 8) throw MetricsError("detect_anomalies: need at least 8 points");
    const double m = median(buffer);
    const double scale = 1.4826 * median_absolute_deviation(buffer) + 1e-9;
    std::vector<std::size_t> flagged;
    for (std::size_t i = 0; i < buffer.size(); ++i)
        if (std::abs(buffer[i] - m) / scale > threshold) flagged.push_back(i);
    return flagged;
}

double trend_slope(std::span<const double> series) {
    if (series.size() < 2) throw MetricsError("trend_slope: need at least 2 points");
    const auto n = static_cast<double>(series.size());
    const double x_mean = (n - 1.0) / 2.0;
    const double y_mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double dx = static_cast<double>(i) - x_mean;
        sxy += dx * (series[i] - y_mean);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

double seasonal_naive_forecast(std::span<const double> series, std::size_t period, std::size_t horizon) {
    if (period == 0) throw MetricsError("seasonal_naive_forecast: period must be > 0");
    if (horizon == 0) throw MetricsError("seasonal_naive_forecast: horizon must be > 0");
    if (series.size() < period) throw MetricsError("seasonal_naive_forecast: series shorter than period");
    const std::size_t seasons_back = (horizon + period - 1) / period;
    const std::size_t last = series.size() - 1;
    return series[last + horizon - seasons_back * period];
}

std::vector<double> holt_winters_path(std::span<const double> series, std::size_t period, std::size_t horizon,
                                      const HoltWintersParams& p) {
    if (period == 0) throw MetricsError("holt_winters: period must be > 0");
    if (series.size() < 2 * period) throw MetricsError("holt_winters: need at least two full periods");
    for (double s : {p.alpha, p.beta, p.gamma})
        if (!(s > 0.0 && s < 1.0)) throw MetricsError("holt_winters: smoothing parameters must lie in (0,1)");

    double level = std::accumulate(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(period), 0.0) /
                   static_cast<double>(period);
    double trend = 0.0;
    std::vector<double> seasonal(period);
    for (std::size_t i = 0; i < period; ++i) seasonal[i] = series[i] - level;

    for (std::size_t t = period; t < series.size(); ++t) {
        const std::size_t si = t % period;
        const double prev_level = level;
        level = p.alpha * (series[t] - seasonal[si]) + (1.0 - p.alpha) * (level + trend);
        trend = p.beta * (level - prev_level) + (1.0 - p.beta) * trend;
        seasonal[si] = p.gamma * (series[t] - level) + (1.0 - p.gamma) * seasonal[si];
    }

    std::vector<double> out(horizon);
    for (std::size_t h = 1; h <= horizon; ++h) {
        const std::size_t si = (series.size() + h - 1) % period;
        out[h - 1] = level + static_cast<double>(h) * trend + seasonal[si];
    }
    return out;
}

double holt_winters_forecast(std::span<const double> series, std::size_t period, std::size_t horizon,
                             const HoltWintersParams& params) {
    if (horizon == 0) throw MetricsError("holt_winters: horizon must be > 0");
    return holt_winters_path(series, period, horizon, params).back();
}

std::array<double, kResourceChannels> resource_channels(const sim::StepOutcome& step, const SimConfig& cfg) {
    int slots = 0;
    for (const auto& r : step.regions) slots += nodes_needed(r.target_replicas, cfg.node) * cfg.node.replicas_per_node;
    const double fill = slots > 0 ? static_cast<double>(step.target_replicas) / slots : 0.0;
    const double net = std::clamp(step.served / cfg.queue_cap, 0.0, 1.0);
    return {step.utilization, fill, step.utilization, net};
}

std::array<double, kPerformanceChannels> performance_channels(const sim::StepOutcome& step, const SimConfig& cfg) {
    return {step.p95_latency_ms / cfg.constraints.sla_p95_ms, step.arrivals_rps(), step.error_rate};
}

std::array<double, kDeployFeatures> deploy_features(const SimConfig& cfg) {
    return {std::log10(cfg.model.parameter_count_b),
            cfg.model.mem_per_replica_gb,
            cfg.model.per_replica_rps,
            cfg.model.startup_s,
            static_cast<double>(cfg.regions.size()),
            static_cast<double>(cfg.constraints.min_replicas),
            static_cast<double>(cfg.constraints.max_replicas),
            cfg.node.cost_per_hour_usd};
}

MetricWindow build_raw_window(std::span<const sim::StepOutcome> history, const SimConfig& cfg, std::size_t length) {
    if (length == 0) throw MetricsError("window length must be > 0");
    if (history.size() < length)
        throw MetricsError("build_window: need " + std::to_string(length) + " steps of history, have " +
                           std::to_string(history.size()));
    MetricWindow w(length);
    const std::size_t start = history.size() - length;
    for (std::size_t t = 0; t < length; ++t) {
        const auto res = resource_channels(history[start + t], cfg);
        const auto perf = performance_channels(history[start + t], cfg);
        std::copy(res.begin(), res.end(), w.resource.begin() + static_cast<std::ptrdiff_t>(t * kResourceChannels));
        std::copy(perf.begin(), perf.end(),
                  w.performance.begin() + static_cast<std::ptrdiff_t>(t * kPerformanceChannels));
    }
    const auto dep = deploy_features(cfg);
    std::copy(dep.begin(), dep.end(), w.deploy.begin());
    return w;
}

double calculate_efficiency(std::span<const sim::StepOutcome> outcomes, double sla_p95_ms) {
    if (outcomes.empty()) return 0.0;
    double util = 0.0;
    std::size_t violations = 0;
    for (const auto& o : outcomes) {
        util += o.utilization;
        if (o.p95_latency_ms > sla_p95_ms) ++violations;
    }
    const auto n = static_cast<double>(outcomes.size());
    return (util / n) * (1.0 - static_cast<double>(violations) / n);
}

Targets realized_targets(std::span<const sim::StepOutcome> future, const SimConfig& cfg) {
    if (future.empty()) throw MetricsError("realized_targets: empty lookahead");
    double arrivals = 0.0;
    std::vector<double> p95;
    p95.reserve(future.size());
    for (const auto& o : future) {
        arrivals += o.arrivals_rps();
        p95.push_back(o.p95_latency_ms);
    }
    return {arrivals / static_cast<double>(future.size()), streaming_quantile(p95, 0.95),
            calculate_efficiency(future, cfg.constraints.sla_p95_ms)};
}

void FeatureNormalizer::observe(const MetricWindow& raw) {
    for (std::size_t t = 0; t < raw.length; ++t) {
        resource.update(std::span<const double>(raw.resource).subspan(t * kResourceChannels, kResourceChannels));
        performance.update(
            std::span<const double>(raw.performance).subspan(t * kPerformanceChannels, kPerformanceChannels));
    }
    deploy.update(raw.deploy);
}

void FeatureNormalizer::observe_targets(const Targets& raw) { targets.update(raw); }

bool FeatureNormalizer::ready() const {
    return resource.count() >= 2 && performance.count() >= 2 && deploy.count() >= 2 && targets.count() >= 2;
}

MetricWindow FeatureNormalizer::normalize(const MetricWindow& raw) const {
    MetricWindow out(raw.length);
    for (std::size_t t = 0; t < raw.length; ++t) {
        for (std::size_t c = 0; c < kResourceChannels; ++c)
            out.res(t, c) = metrics::normalize(resource, c, raw.res(t, c));
        for (std::size_t c = 0; c < kPerformanceChannels; ++c)
            out.perf(t, c) = metrics::normalize(performance, c, raw.perf(t, c));
    }
    for (std::size_t c = 0; c < kDeployFeatures; ++c) out.deploy[c] = metrics::normalize(deploy, c, raw.deploy[c]);
    return out;
}

Targets FeatureNormalizer::normalize_targets(const Targets& raw) const {
    Targets out{};
    for (std::size_t c = 0; c < kTargets; ++c) out[c] = metrics::normalize(targets, c, raw[c]);
    return out;
}

Targets FeatureNormalizer::denormalize_targets(const Targets& z) const {
    Targets out{};
    for (std::size_t c = 0; c < kTargets; ++c) out[c] = denormalize(targets, c, z[c]);
    return out;
}

MetricWindow build_window(std::span<const sim::StepOutcome> history, const SimConfig& cfg,
                          const FeatureNormalizer& normalizer, std::size_t length) {
    return normalizer.normalize(build_raw_window(history, cfg, length));
}

}  // namespace llmops::metrics
