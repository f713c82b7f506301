#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "llmops/decision.hpp"
#include "llmops/types.hpp"
#include "llmops/workload.hpp"

namespace llmops::sim {

struct PendingReplicas {
    double ready_at_s = 0.0;
    int count = 0;
};

struct ReplicaPool {
    int target_replicas = 0;
    int serving_replicas = 0;
    std::vector<PendingReplicas> pending;

    int pending_count() const;
};

// Request counters are fluid quantities, hence real-valued.
struct RegionState {
    ReplicaPool pool;
    double backlog = 0.0;
    double arrived_total = 0.0;
    double served_total = 0.0;
    double dropped_total = 0.0;
    double error_total = 0.0;
};

struct CostLedger {
    double compute_usd = 0.0;
    double network_usd = 0.0;
    double storage_usd = 0.0;
    double inference_count = 0.0;

    double total_usd() const { return compute_usd + network_usd + storage_usd; }
};

/// Fixed secondary cost rates.
struct CostRates {
    double network_usd_per_1k_served = 0.01;
    double storage_usd_per_hour = 0.05;
};

struct ClusterState {
    double now_s = 0.0;
    std::vector<RegionState> regions;
    CostLedger cost;

    std::vector<int> targets() const;
    std::vector<int> serving() const;
};

/// All replicas serving immediately, no backlog.
ClusterState make_initial_state(const SimConfig& cfg, std::span<const int> replicas_per_region);

struct RegionOutcome {
    double arrivals = 0.0;
    double served = 0.0;
    double dropped = 0.0;
    double backlog = 0.0;
    double mean_latency_ms = 0.0;
    double p95_latency_ms = 0.0;
    double utilization = 0.0;
    double error_rate = 0.0;
    double cost_delta_usd = 0.0;
    int serving_replicas = 0;
    int target_replicas = 0;
};

/// One step; `arrivals`, `served`, `dropped` and `backlog` are request counts over dt.
struct StepOutcome {
    double t_s = 0.0;
    double dt_s = 1.0;
    std::vector<RegionOutcome> regions;
    double arrivals = 0.0;
    double served = 0.0;
    double dropped = 0.0;
    double backlog = 0.0;
    // Maximum over regions carrying traffic.
    double mean_latency_ms = 0.0;
    double p95_latency_ms = 0.0;
    double utilization = 0.0;
    double error_rate = 0.0;
    double cost_delta_usd = 0.0;
    int serving_replicas = 0;
    int target_replicas = 0;

    double arrivals_rps() const { return arrivals / dt_s; }
    double served_rps() const { return served / dt_s; }
};

class SimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConstraintViolation : public SimError {
public:
    using SimError::SimError;
};

/// p95 estimate for a mean latency; the heuristic ratio used everywhere.
inline constexpr double kP95OverMean = 1.2;

/// Mean latency of a region with `backlog` requests queued ahead of `capacity_rps`.
double mean_latency_ms(const SimConfig& cfg, std::size_t region, double backlog, double capacity_rps);

StepOutcome step(ClusterState& state, double arrivals_rps, const SimConfig& cfg, const CostRates& rates = {});

/// Sets per-region targets. Scale-ups become ready after model.startup_s; scale-downs
/// cancel pending replicas first (latest first) and then remove serving ones at once.
/// Throws ConstraintViolation when a target lies outside [min_replicas, max_replicas].
void apply_scaling(ClusterState& state, const ScalingDecision& decision, const SimConfig& cfg);

struct PolicyContext {
    const ClusterState& state;
    std::span<const StepOutcome> history;
    const SimConfig& cfg;
};

class ScalingPolicy {
public:
    virtual ~ScalingPolicy() = default;
    virtual std::string name() const = 0;
    /// Replica counts at t=0. Default sizes each region for `first_rps` at 80% utilization.
    virtual std::vector<int> initial_targets(const SimConfig& cfg, double first_rps) const;
    /// Called after every step with the full outcome history. nullopt means no opinion.
    virtual std::optional<ScalingDecision> decide(const PolicyContext& ctx) = 0;
};

struct DecisionRecord {
    double t_s = 0.0;
    std::size_t region = 0;
    int current = 0;
    int target = 0;
    bool held = false;
    ScoreBreakdown score;
    LoadSource source = LoadSource::Policy;
};

struct Aggregates {
    std::size_t steps = 0;
    double mean_utilization = 0.0;
    double p95_latency_ms = 0.0;   // 95th percentile of the per-step p95 estimate
    double mean_latency_ms = 0.0;
    double sla_violation_fraction = 0.0;
    double cost_per_inference_usd = 0.0;
    double total_cost_usd = 0.0;
    double total_arrivals = 0.0;
    double total_served = 0.0;
    double total_dropped = 0.0;
    double final_backlog = 0.0;
    double mean_replicas = 0.0;
    double mean_error_rate = 0.0;
};

struct SimResult {
    std::string policy;
    std::vector<StepOutcome> series;
    std::vector<DecisionRecord> decisions;
    CostLedger ledger;
    Aggregates aggregates;
};

struct RunOptions {
    std::optional<std::vector<int>> initial_targets;
    CostRates rates;
    bool keep_series = true;
};

SimResult run(const workload::Trace& trace, ScalingPolicy& policy, const SimConfig& cfg, const RunOptions& options = {});

Aggregates aggregate(std::span<const StepOutcome> series, const CostLedger& ledger, double sla_p95_ms);

/// Fingerprint of every numeric field of the series and ledger.
std::uint64_t checksum(const SimResult& result);

std::string to_json(const SimResult& result, bool include_series = false);
/// Header: t_s,arrivals,served,dropped,p95_ms,util,err_rate,cost_usd
std::string series_csv(std::span<const StepOutcome> series);
/// Header: t_s,region,current,target,held,lat_pen,cost_term,util_term,source
std::string decisions_csv(std::span<const DecisionRecord> decisions);

}  // namespace llmops::sim
