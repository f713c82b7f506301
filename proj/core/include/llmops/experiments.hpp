#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmops/autoscaler.hpp"
#include "llmops/orchestrator.hpp"
#include "llmops/simulator.hpp"
#include "llmops/workload.hpp"

namespace llmops::experiments {

// ---- training data -------------------------------------------------------

struct Dataset {
    std::vector<metrics::MetricWindow> windows;  // raw (unnormalized)
    std::vector<metrics::Targets> targets;       // raw
    std::vector<std::size_t> episode;

    std::size_t size() const { return windows.size(); }
    void append(const Dataset& other);
};

struct CollectOptions {
    std::size_t window = metrics::kWindowLength;
    double horizon_s = 60.0;
    double perturb_every_s = 120.0;
    int perturb_max = 2;
};

/// Threshold policy plus a seeded uniform +-perturb_max replica nudge per region
/// every perturb_every_s.
class ExplorationPolicy final : public sim::ScalingPolicy {
public:
    ExplorationPolicy(std::uint64_t seed, const CollectOptions& options = {});
    std::string name() const override { return "exploration"; }
    std::optional<ScalingDecision> decide(const sim::PolicyContext& ctx) override;

private:
    scaling::ThresholdPolicy threshold_;
    Rng rng_;
    CollectOptions options_;
    double next_nudge_s_;
};

/// Rows are (window over steps [i-T, i), realized targets over [i, i+H)) for
/// i in [T, n-H), so an episode of n steps yields n - T - H rows.
Dataset dataset_from_series(std::span<const sim::StepOutcome> series, const SimConfig& cfg, std::size_t episode,
                            const CollectOptions& options = {});

Dataset collect_episode(const SimConfig& cfg, const workload::Trace& trace, std::uint64_t seed, std::size_t episode,
                        const CollectOptions& options = {});
/// `episodes` runs over the same trace, each with its own exploration stream.
Dataset collect(const SimConfig& cfg, const workload::Trace& trace, std::size_t episodes, std::uint64_t seed,
                const CollectOptions& options = {});

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// ---- training ------------------------------------------------------------

struct TrainOptions {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double validation_fraction = 0.2;
    std::uint64_t seed = 42;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    scaling::LoadPredictor predictor;
    std::vector<EpochLog> epochs;
    std::vector<double> step_losses;
    double initial_val_loss = 0.0;
    std::size_t train_rows = 0;
    std::size_t val_rows = 0;
};

/// Chronological split; the normalizer is fit on the training part only.
TrainResult train(const Dataset& data, const TrainOptions& options = {});

/// "step,loss" rows.
std::string loss_csv(const TrainResult& result);

// ---- forecasting ---------------------------------------------------------

struct ForecastEval {
    double dnn_mae = 0.0;
    double seasonal_naive_mae = 0.0;
    std::size_t windows = 0;
};

/// Mean absolute error of the load head and of a seasonal-naive forecast on the same
/// held-out windows of a simulated run over `trace`. Only windows with a full
/// period of history are scored.
ForecastEval evaluate_forecast(const scaling::LoadPredictor& predictor, const SimConfig& cfg,
                               const workload::Trace& trace, std::size_t period_steps, std::uint64_t seed,
                               const CollectOptions& options = {});

// ---- policy comparison ---------------------------------------------------

struct StaticChoice {
    std::vector<int> targets;
    int total = 0;
    sim::Aggregates aggregates;
    bool feasible = false;
};

/// Replicas proportional to region weights.
std::vector<int> proportional_targets(const SimConfig& cfg, int total);

/// Exhaustive sweep over fleet totals in the constraint bounds; the cheapest per
/// inference with SLA-violation fraction <= max_violation wins (least violating if none).
StaticChoice best_static(const SimConfig& cfg, const workload::Trace& trace, double max_violation = 0.02);

struct PolicyMetrics {
    std::string policy;
    double mean_utilization = 0.0;
    double p95_latency_ms = 0.0;
    double sla_violation_fraction = 0.0;
    double cost_per_inference_usd = 0.0;
    double total_cost_usd = 0.0;
    std::optional<double> mean_adaptation_time_s;
    std::optional<double> rollout_completion_time_s;
    std::vector<std::uint64_t> trace_checksums;
};

struct PairDelta {
    std::string baseline;
    std::string candidate;
    double utilization = 0.0;
    double p95_latency = 0.0;
    double cost_per_inference = 0.0;
    std::optional<double> adaptation_time;
    std::optional<double> rollout_time;
};

struct ComparisonReport {
    std::vector<PolicyMetrics> policies;
    std::vector<PairDelta> deltas;
    std::vector<int> static_targets;
    std::vector<std::string> log;
};

struct CompareOptions {
    std::vector<std::string> policies{"static", "threshold", "dnn"};
    std::vector<std::uint64_t> seeds{42};
    std::optional<scaling::LoadPredictor> predictor;
    scaling::ScalerConfig scaler;
    bool online_learning = false;
    double max_violation = 0.02;
    bool measure_adaptation = true;
    bool measure_rollout = true;
};

/// Throws std::invalid_argument on an unknown name.
void check_policy_names(const std::vector<std::string>& names);

std::unique_ptr<sim::ScalingPolicy> make_policy(const std::string& name, const std::vector<int>& static_targets,
                                                const CompareOptions& options, std::uint64_t seed);

PolicyMetrics to_metrics(const std::string& policy, const sim::Aggregates& a);
/// (baseline - candidate)/baseline for cost, latency and time; (candidate - baseline)/baseline for utilization.
PairDelta delta(const PolicyMetrics& baseline, const PolicyMetrics& candidate);

ComparisonReport compare(const SimConfig& cfg, const workload::Trace& trace, const CompareOptions& options);

std::string to_json(const ComparisonReport& report);
std::string to_csv(const ComparisonReport& report);

// ---- load sweep ----------------------------------------------------------

struct SweepRow {
    double rps = 0.0;
    double steady_replicas = 0.0;
    double p95_latency_ms = 0.0;
    double sla_violation_fraction = 0.0;
    double mean_utilization = 0.0;
};

/// Geometric load levels from..to; each level runs the predictive scaler on a constant trace.
std::vector<SweepRow> sweep(const SimConfig& cfg, double from_rps, double to_rps, std::size_t steps,
                            double duration_s = 600.0, const scaling::ScalerConfig& scaler = {},
                            const scaling::LoadPredictor* predictor = nullptr);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// ---- adaptation ----------------------------------------------------------

struct AdaptOptions {
    double base_rps = 1000.0;
    double step_at_s = 300.0;
    double step_to_rps = 5000.0;
    double duration_s = 900.0;
    double noise_cv = 0.05;
    std::uint64_t seed = 42;
};

struct AdaptResult {
    int direction = 0;  // +1 up, -1 down, 0 no decision needed
    std::optional<double> adaptation_time_s;
    std::optional<double> recovery_time_s;
    std::uint64_t trace_checksum = 0;
    sim::SimResult run;
};

workload::Trace step_trace(const AdaptOptions& options, double dt_s);

/// Adaptation time: first issued, non-held decision after the step whose total
/// replica change has the step's sign, measured from step_at. Zero when the
/// serving fleet already covers a step up. Recovery: first time p95 is back in SLA
/// after a post-step violation (zero if none).
AdaptResult measure_adaptation(const SimConfig& cfg, sim::ScalingPolicy& policy, const AdaptOptions& options);

std::string adapt_json(const AdaptResult& result, const AdaptOptions& options);

// ---- rollout -------------------------------------------------------------

struct RolloutDemo {
    rollout::RolloutResult result;
    std::string events_jsonl;
    std::string summary;
};

/// Canary rollout of a candidate whose error rate is max(baseline, fault_rate).
RolloutDemo rollout_demo(const SimConfig& cfg, double fault_rate, std::uint64_t seed,
                         const rollout::CanaryConfig& canary = {}, double baseline_error_rate = 0.005);

// ---- feature importance --------------------------------------------------

/// Reported group shares from the original study, for side-by-side display only.
struct ReferenceImportance {
    double resource = 0.35;
    double performance = 0.30;
    double workload = 0.20;
    double network = 0.15;
};

struct ImportanceReport {
    std::array<double, nn::kFeatureGroups> importance{};
    std::size_t windows = 0;
};

ImportanceReport importance(const scaling::LoadPredictor& predictor, const Dataset& data, std::uint64_t seed,
                            std::size_t repeats = 3);
std::string importance_json(const ImportanceReport& report);

/// Synthetic rows whose targets depend only on the resource channels.
Dataset resource_driven_dataset(std::size_t rows, std::uint64_t seed, std::size_t window = 8);

}  // namespace llmops::experiments
