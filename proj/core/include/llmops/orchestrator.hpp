#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "llmops/types.hpp"

namespace llmops::rollout {

class RolloutError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RiskTolerance { Low, Medium, High };
enum class LatencySensitivity { Strict, Relaxed };
enum class DeploymentStrategy { BlueGreen, Canary, Rolling, Shadow };

struct DeploymentContext {
    ModelSpec model;
    RiskTolerance risk_tolerance = RiskTolerance::Medium;
    int region_count = 1;
    double spare_capacity_fraction = 0.0;
    LatencySensitivity latency_sensitivity = LatencySensitivity::Relaxed;
    // Used to turn the spare fraction into memory: spare GB = fraction * cluster_memory_gb.
    double cluster_memory_gb = 1280.0;
    int min_replicas_per_region = 1;
};

/// Throws std::invalid_argument on a malformed context.
void validate(const DeploymentContext& ctx);

struct StrategyRule {
    std::string name;
    std::function<bool(const DeploymentContext&)> applies;
    DeploymentStrategy strategy;
};

/// Ordered rules; the first that applies wins, the fallback covers the rest.
struct StrategyTree {
    std::vector<StrategyRule> rules;
    DeploymentStrategy fallback = DeploymentStrategy::Rolling;
};

const StrategyTree& default_strategy_tree();
DeploymentStrategy select_strategy(const DeploymentContext& ctx, const StrategyTree& tree = default_strategy_tree());

struct CanaryConfig {
    double initial_fraction = 0.05;
    double growth_factor = 2.0;
    double analysis_window_s = 120.0;
    double max_fraction = 1.0;
    double error_ratio_limit = 0.5;
    double latency_ratio_limit = 0.2;
    double z_threshold = 2.58;
    // Additive increment used by the rolling strategy.
    double rolling_increment = 0.25;
    std::uint64_t min_requests = 100;
    double absolute_error_margin = 0.001;
};

void validate(const CanaryConfig& cfg);

struct HealthSample {
    std::uint64_t n_requests = 0;
    std::uint64_t n_errors = 0;
    std::vector<double> latency_samples;  // ms

    void merge(const HealthSample& other);
};

enum class Verdict { Healthy, Unhealthy, Inconclusive };

struct HealthReport {
    HealthSample canary;
    HealthSample baseline;
    Verdict verdict = Verdict::Inconclusive;
    double z_errors = 0.0;
    double latency_ratio = 1.0;
};

/// One-sided pooled two-proportion z statistic for p_canary > p_baseline; 0 when undefined.
double two_proportion_z(std::uint64_t errors_a, std::uint64_t n_a, std::uint64_t errors_b, std::uint64_t n_b);

HealthReport analyze_canary_health(const HealthSample& canary, const HealthSample& baseline, const CanaryConfig& cfg);

enum class Phase { Pending, CanaryDeployed, Analyzing, Promoting, Completed, RollingBack, RolledBack };

std::string_view to_string(Phase p);
std::string_view to_string(Verdict v);
std::string_view to_string(DeploymentStrategy s);
std::string_view to_string(RiskTolerance r);
std::string_view to_string(LatencySensitivity l);

bool is_terminal(Phase p);
bool is_legal_transition(Phase from, Phase to);

struct RolloutEvent {
    double t_s = 0.0;
    Phase from = Phase::Pending;
    Phase phase = Phase::Pending;
    double fraction = 0.0;
    std::optional<Verdict> verdict;
    double z_errors = 0.0;
    double latency_ratio = 1.0;
};

struct RolloutState {
    DeploymentStrategy strategy = DeploymentStrategy::Canary;
    Phase phase = Phase::Pending;
    double traffic_fraction = 0.0;
    std::size_t windows_analyzed = 0;
    std::vector<HealthReport> health_history;
    std::vector<RolloutEvent> events;
    double started_at_s = 0.0;
    std::optional<double> finished_at_s;
};

/// Traffic fraction after a healthy window at `fraction`.
double next_fraction(DeploymentStrategy strategy, double fraction, const CanaryConfig& cfg);
double first_fraction(DeploymentStrategy strategy, const CanaryConfig& cfg);

/// Advances the state machine by one tick. `health` is consulted only in Analyzing.
/// Throws RolloutError from a terminal phase.
RolloutState rollout_tick(RolloutState state, const HealthReport& health, const CanaryConfig& cfg, double now_s);

struct ModelVariant {
    ModelSpec model;
    double error_rate = 0.005;  // intrinsic per-request failure probability
};

struct RolloutOptions {
    double offered_rps = 1000.0;
    std::uint64_t seed = 42;
    double max_duration_s = 7200.0;
};

struct RolloutResult {
    DeploymentStrategy strategy = DeploymentStrategy::Canary;
    Phase final_phase = Phase::Pending;
    std::optional<double> completion_time_s;  // set when Completed or RolledBack
    std::size_t windows_analyzed = 0;
    std::vector<HealthReport> health_history;
    std::vector<RolloutEvent> events;
};

/// Splits traffic between a baseline fleet and a candidate fleet, simulates both
/// and drives the state machine one analysis window at a time.
RolloutResult run_rollout(const SimConfig& sim, const ModelVariant& baseline, const ModelVariant& candidate,
                          DeploymentStrategy strategy, const CanaryConfig& cfg, const RolloutOptions& options = {});

/// One JSON object per line: {t_s, phase, fraction, verdict, z_errors, latency_ratio}.
std::string events_jsonl(const std::vector<RolloutEvent>& events);
std::string summary_json(const RolloutResult& result);

}  // namespace llmops::rollout
