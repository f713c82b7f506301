#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmops/decision.hpp"
#include "llmops/metrics.hpp"
#include "llmops/neuralnet.hpp"
#include "llmops/simulator.hpp"

namespace llmops::scaling {

struct LoadEstimate {
    double current_rps = 0.0;
    double predicted_rps = 0.0;
    LoadSource source = LoadSource::LastValue;
};

struct ScalerConfig {
    double w_latency = 1.0;
    double w_cost = 0.3;
    double w_utilization = 0.3;
    double target_utilization = 0.8;
    double horizon_s = 60.0;
    // A rising arrival trend is carried this far past the forecast so that capacity
    // ordered now is serving when the load arrives. Unset: startup + cooldown.
    std::optional<double> lead_s;
    double trend_window_s = 120.0;
    // Cap on the trend term relative to the forecast; a linear trend overshoots on steps.
    double max_trend_fraction = 0.3;
    // Queued requests are drained over this many seconds; 0 ignores the backlog.
    double backlog_drain_s = 60.0;
    // Scale-downs size for the highest planning load seen this far back.
    double scale_down_window_s = 60.0;
    double cooldown_s = 30.0;
    std::size_t retrain_every = 512;
    std::size_t buffer_cap = 8192;
    std::size_t retrain_steps = 50;
    std::size_t retrain_batch = 64;
    double season_period_s = 1440.0;
    double ewma_half_life_steps = 8.0;
    metrics::HoltWintersParams holt_winters;
    std::uint64_t seed = 7;
};

/// Throws std::invalid_argument on a bad config.
void validate(const ScalerConfig& cfg);

/// Learned load forecaster: network plus the statistics its inputs and heads were trained on.
struct LoadPredictor {
    nn::MultiStreamNet net;
    metrics::FeatureNormalizer normalizer;

    /// De-normalized heads for an unnormalized window.
    metrics::Targets predict_raw(const metrics::MetricWindow& raw_window) const;
};

/// Exponentially weighted mean arrival rate over the last window, half-life in steps.
double analyze_current_load(std::span<const sim::StepOutcome> history, double half_life_steps = 8.0,
                            std::size_t window = metrics::kWindowLength);

/// Forecast of the mean arrival rate over the next `horizon_steps`. Fallback order:
/// DNN (predictor and window present) -> Holt-Winters (>= 2 periods of history)
/// -> seasonal naive (>= 1 period) -> last value. Never negative.
LoadEstimate predict_future_load(const LoadPredictor* predictor, const metrics::MetricWindow* raw_window,
                                 std::span<const double> arrivals_rps, std::size_t period_steps,
                                 std::size_t horizon_steps, const ScalerConfig& cfg = {});

/// Least-squares slope (rps per second) of the last `window_s` of arrivals; 0 with fewer than 2 points.
double arrival_trend(std::span<const double> arrivals_rps, double dt_s, double window_s);

double effective_lead_s(const ScalerConfig& cfg, const SimConfig& sim);

/// Load the scaler sizes for: the forecast plus any rising trend over the lead.
/// Never below the current load, since scale-downs take effect at once.
double planning_rps(const LoadEstimate& estimate, double trend_rps_per_s, const ScalerConfig& cfg,
                    const SimConfig& sim);

using metrics::calculate_efficiency;

/// Score of one candidate replica count for one region.
ScoreBreakdown score_candidate(int replicas, double predicted_rps, std::size_t region, const SimConfig& sim,
                               const ScalerConfig& cfg);

/// Candidate range [lo, hi] respecting replica bounds and the per-decision step bound.
std::pair<int, int> candidate_range(int current, const Constraints& constraints);

/// One-step model-predictive choice per region; see score_candidate for the objective.
/// `last_change_s` is the time of the last applied change, if any.
ScalingDecision compute_scaling_decision(const LoadEstimate& estimate, const sim::ClusterState& state,
                                         const SimConfig& sim, const ScalerConfig& cfg,
                                         std::optional<double> last_change_s);

/// Efficiency minus w_cost times the window's cost rate relative to the budget rate
/// (or the full-fleet rate when no budget is set).
double reward(std::span<const sim::StepOutcome> outcomes, const SimConfig& sim, const ScalerConfig& cfg);

struct Experience {
    metrics::MetricWindow window;  // normalized
    nn::Prediction targets;        // normalized
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 8192);

    void push(Experience e);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t since_retrain() const { return since_retrain_; }
    void mark_retrained() { since_retrain_ = 0; }
    const Experience& at(std::size_t i) const { return items_.at(i); }
    const Experience& front() const { return items_.front(); }

private:
    std::size_t capacity_;
    std::size_t since_retrain_ = 0;
    std::deque<Experience> items_;
};

struct RetrainReport {
    bool retrained = false;
    double mean_loss = 0.0;
};

/// Appends the experience; every `retrain_every` appends runs `retrain_steps`
/// optimizer steps on uniformly sampled batches of `retrain_batch`.
RetrainReport record_and_maybe_retrain(ReplayBuffer& buffer, Experience experience, LoadPredictor& predictor,
                                       nn::OptimizerState& opt, const ScalerConfig& cfg, Rng& rng);

class StaticPolicy final : public sim::ScalingPolicy {
public:
    explicit StaticPolicy(std::vector<int> targets);
    /// Throws sim::ConstraintViolation if any target lies outside the bounds.
    void validate_for(const SimConfig& cfg) const;

    std::string name() const override { return "static"; }
    std::vector<int> initial_targets(const SimConfig& cfg, double first_rps) const override;
    std::optional<ScalingDecision> decide(const sim::PolicyContext& ctx) override;

private:
    std::vector<int> targets_;
};

/// +1 replica when windowed utilization exceeds `upper`, -1 below `lower`, per region.
class ThresholdPolicy final : public sim::ScalingPolicy {
public:
    ThresholdPolicy(double upper = 0.85, double lower = 0.5, double cooldown_s = 30.0, std::size_t window_steps = 30);

    std::string name() const override { return "threshold"; }
    std::optional<ScalingDecision> decide(const sim::PolicyContext& ctx) override;

private:
    double upper_;
    double lower_;
    double cooldown_s_;
    std::size_t window_steps_;
    std::optional<double> last_change_s_;
};

/// The predictive scaler: load estimate -> compute_scaling_decision, with optional
/// online retraining of the predictor from realized outcomes.
class DnnScalerPolicy final : public sim::ScalingPolicy {
public:
    DnnScalerPolicy(ScalerConfig cfg, std::optional<LoadPredictor> predictor, bool online_learning = false);

    std::string name() const override { return "dnn"; }
    std::optional<ScalingDecision> decide(const sim::PolicyContext& ctx) override;

    const std::optional<LoadPredictor>& predictor() const { return predictor_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    std::size_t retrain_count() const { return retrains_; }
    const std::vector<LoadEstimate>& estimates() const { return estimates_; }

private:
    ScalerConfig cfg_;
    std::optional<LoadPredictor> predictor_;
    bool online_;
    std::optional<nn::OptimizerState> opt_;
    ReplayBuffer buffer_;
    Rng rng_;
    std::vector<double> arrivals_;
    std::deque<std::pair<std::size_t, metrics::MetricWindow>> awaiting_;
    std::optional<double> last_change_s_;
    std::size_t retrains_ = 0;
    std::vector<LoadEstimate> estimates_;
    std::deque<std::pair<double, double>> recent_plans_;  // (t, rps)
};

}  // namespace llmops::scaling
