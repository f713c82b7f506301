#include "llmops/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "llmops/metrics.hpp"
#include "llmops/rng.hpp"
#include "llmops/simulator.hpp"

namespace llmops::rollout {

void validate(const DeploymentContext& ctx) {
    if (ctx.region_count < 1) throw std::invalid_argument("region_count must be >= 1");
    if (!(ctx.spare_capacity_fraction >= 0.0)) throw std::invalid_argument("spare_capacity_fraction must be >= 0");
    if (!(ctx.cluster_memory_gb > 0.0)) throw std::invalid_argument("cluster_memory_gb must be > 0");
    if (ctx.min_replicas_per_region < 0) throw std::invalid_argument("min_replicas_per_region must be >= 0");
}

const StrategyTree& default_strategy_tree() {
    static const StrategyTree tree{
        {
            {"spare fleet and strict latency",
             [](const DeploymentContext& c) {
                 return c.spare_capacity_fraction >= 1.0 && c.latency_sensitivity == LatencySensitivity::Strict;
             },
             DeploymentStrategy::BlueGreen},
            {"low risk tolerance", [](const DeploymentContext& c) { return c.risk_tolerance == RiskTolerance::Low; },
             DeploymentStrategy::Canary},
            {"minimum fleet exceeds spare memory",
             [](const DeploymentContext& c) {
                 const double min_fleet = static_cast<double>(c.min_replicas_per_region) * c.region_count;
                 return c.model.mem_per_replica_gb * min_fleet > c.spare_capacity_fraction * c.cluster_memory_gb;
             },
             DeploymentStrategy::Rolling},
            {"high risk tolerance with headroom",
             [](const DeploymentContext& c) {
                 return c.risk_tolerance == RiskTolerance::High && c.spare_capacity_fraction >= 0.1;
             },
             DeploymentStrategy::Shadow},
        },
        DeploymentStrategy::Rolling,
    };
    return tree;
}

DeploymentStrategy select_strategy(const DeploymentContext& ctx, const StrategyTree& tree) {
    validate(ctx);
    for (const auto& rule : tree.rules)
        if (rule.applies(ctx)) return rule.strategy;
    return tree.fallback;
}

void validate(const CanaryConfig& c) {
    if (!(c.initial_fraction > 0.0 && c.initial_fraction < c.max_fraction && c.max_fraction <= 1.0))
        throw std::invalid_argument("canary fractions must satisfy 0 < initial < max <= 1");
    if (!(c.growth_factor > 1.0)) throw std::invalid_argument("growth_factor must be > 1");
    if (!(c.analysis_window_s > 0.0)) throw std::invalid_argument("analysis_window_s must be > 0");
    if (!(c.rolling_increment > 0.0)) throw std::invalid_argument("rolling_increment must be > 0");
    if (c.error_ratio_limit < 0.0 || c.latency_ratio_limit < 0.0 || c.z_threshold < 0.0)
        throw std::invalid_argument("health limits must be >= 0");
}

void HealthSample::merge(const HealthSample& other) {
    n_requests += other.n_requests;
    n_errors += other.n_errors;
    latency_samples.insert(latency_samples.end(), other.latency_samples.begin(), other.latency_samples.end());
}

double two_proportion_z(std::uint64_t errors_a, std::uint64_t n_a, std::uint64_t errors_b, std::uint64_t n_b) {
    if (n_a == 0 || n_b == 0) return 0.0;
    const double na = static_cast<double>(n_a);
    const double nb = static_cast<double>(n_b);
    const double pa = static_cast<double>(errors_a) / na;
    const double pb = static_cast<double>(errors_b) / nb;
    const double pooled = static_cast<double>(errors_a + errors_b) / (na + nb);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb));
    return se > 0.0 ? (pa - pb) / se : 0.0;
}

namespace {

double p95(const std::vector<double>& samples) {
    return samples.empty() ? 0.0 : metrics::streaming_quantile(samples, 0.95);
}

}  // namespace

HealthReport analyze_canary_health(const HealthSample& canary, const HealthSample& baseline, const CanaryConfig& cfg) {
    if (canary.n_errors > canary.n_requests || baseline.n_errors > baseline.n_requests)
        throw std::invalid_argument("n_errors must not exceed n_requests");
    HealthReport report{canary, baseline, Verdict::Inconclusive, 0.0, 1.0};
    report.z_errors = two_proportion_z(canary.n_errors, canary.n_requests, baseline.n_errors, baseline.n_requests);
    const double base_p95 = p95(baseline.latency_samples);
    const double canary_p95 = p95(canary.latency_samples);
    if (base_p95 > 0.0 && !canary.latency_samples.empty()) report.latency_ratio = canary_p95 / base_p95;

    if (canary.n_requests < cfg.min_requests || baseline.n_requests == 0) return report;

    const double canary_rate = static_cast<double>(canary.n_errors) / static_cast<double>(canary.n_requests);
    const double base_rate = static_cast<double>(baseline.n_errors) / static_cast<double>(baseline.n_requests);
    const bool error_trigger = report.z_errors > cfg.z_threshold &&
                               canary_rate > base_rate * (1.0 + cfg.error_ratio_limit) + cfg.absolute_error_margin;
    const bool latency_trigger = report.latency_ratio > 1.0 + cfg.latency_ratio_limit;
    report.verdict = error_trigger || latency_trigger ? Verdict::Unhealthy : Verdict::Healthy;
    return report;
}

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Pending: return "Pending";
        case Phase::CanaryDeployed: return "CanaryDeployed";
        case Phase::Analyzing: return "Analyzing";
        case Phase::Promoting: return "Promoting";
        case Phase::Completed: return "Completed";
        case Phase::RollingBack: return "RollingBack";
        case Phase::RolledBack: return "RolledBack";
    }
    return "unknown";
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Healthy: return "Healthy";
        case Verdict::Unhealthy: return "Unhealthy";
        case Verdict::Inconclusive: return "Inconclusive";
    }
    return "unknown";
}

std::string_view to_string(DeploymentStrategy s) {
    switch (s) {
        case DeploymentStrategy::BlueGreen: return "blue_green";
        case DeploymentStrategy::Canary: return "canary";
        case DeploymentStrategy::Rolling: return "rolling";
        case DeploymentStrategy::Shadow: return "shadow";
    }
    return "unknown";
}

std::string_view to_string(RiskTolerance r) {
    switch (r) {
        case RiskTolerance::Low: return "low";
        case RiskTolerance::Medium: return "medium";
        case RiskTolerance::High: return "high";
    }
    return "unknown";
}

std::string_view to_string(LatencySensitivity l) {
    return l == LatencySensitivity::Strict ? "strict" : "relaxed";
}

bool is_terminal(Phase p) { return p == Phase::Completed || p == Phase::RolledBack; }

bool is_legal_transition(Phase from, Phase to) {
    switch (from) {
        case Phase::Pending: return to == Phase::CanaryDeployed;
        case Phase::CanaryDeployed: return to == Phase::Analyzing;
        case Phase::Analyzing: return to == Phase::Analyzing || to == Phase::Promoting || to == Phase::RollingBack;
        case Phase::Promoting: return to == Phase::Analyzing || to == Phase::Completed;
        case Phase::RollingBack: return to == Phase::RolledBack;
        case Phase::Completed:
        case Phase::RolledBack: return false;
    }
    return false;
}

double first_fraction(DeploymentStrategy strategy, const CanaryConfig& cfg) {
    switch (strategy) {
        case DeploymentStrategy::Shadow: return 0.0;
        case DeploymentStrategy::Rolling: return std::min(cfg.rolling_increment, cfg.max_fraction);
        case DeploymentStrategy::BlueGreen:
        case DeploymentStrategy::Canary: return cfg.initial_fraction;
    }
    return cfg.initial_fraction;
}

double next_fraction(DeploymentStrategy strategy, double fraction, const CanaryConfig& cfg) {
    switch (strategy) {
        case DeploymentStrategy::Shadow: return 0.0;
        case DeploymentStrategy::BlueGreen: return cfg.max_fraction;
        case DeploymentStrategy::Rolling: return std::min(fraction + cfg.rolling_increment, cfg.max_fraction);
        case DeploymentStrategy::Canary: return std::min(fraction * cfg.growth_factor, cfg.max_fraction);
    }
    return fraction;
}

namespace {

void move_to(RolloutState& s, Phase to, double now_s, const HealthReport* health) {
    if (!is_legal_transition(s.phase, to))
        throw RolloutError("illegal transition " + std::string(to_string(s.phase)) + " -> " +
                           std::string(to_string(to)));
    RolloutEvent e;
    e.t_s = now_s;
    e.from = s.phase;
    e.phase = to;
    if (health) {
        e.verdict = health->verdict;
        e.z_errors = health->z_errors;
        e.latency_ratio = health->latency_ratio;
    }
    s.phase = to;
    if (is_terminal(to)) s.finished_at_s = now_s;
    e.fraction = s.traffic_fraction;
    s.events.push_back(e);
}

}  // namespace

RolloutState rollout_tick(RolloutState s, const HealthReport& health, const CanaryConfig& cfg, double now_s) {
    switch (s.phase) {
        case Phase::Pending:
            s.started_at_s = now_s;
            s.traffic_fraction = first_fraction(s.strategy, cfg);
            move_to(s, Phase::CanaryDeployed, now_s, nullptr);
            break;
        case Phase::CanaryDeployed:
            move_to(s, Phase::Analyzing, now_s, nullptr);
            break;
        case Phase::Analyzing:
            s.health_history.push_back(health);
            if (health.verdict == Verdict::Unhealthy) {
                ++s.windows_analyzed;
                s.traffic_fraction = 0.0;
                move_to(s, Phase::RollingBack, now_s, &health);
            } else if (health.verdict == Verdict::Healthy) {
                ++s.windows_analyzed;
                // Shadow carries no user traffic, so there is nothing to promote.
                if (s.strategy == DeploymentStrategy::Shadow) {
                    move_to(s, Phase::Analyzing, now_s, &health);
                    break;
                }
                s.traffic_fraction = next_fraction(s.strategy, s.traffic_fraction, cfg);
                const bool at_max = s.traffic_fraction >= cfg.max_fraction - 1e-12;
                if (at_max) s.traffic_fraction = cfg.max_fraction;
                move_to(s, Phase::Promoting, now_s, &health);
                if (at_max) move_to(s, Phase::Completed, now_s, &health);
            } else {
                move_to(s, Phase::Analyzing, now_s, &health);
            }
            break;
        case Phase::Promoting:
            move_to(s, Phase::Analyzing, now_s, nullptr);
            break;
        case Phase::RollingBack:
            move_to(s, Phase::RolledBack, now_s, nullptr);
            break;
        case Phase::Completed:
        case Phase::RolledBack:
            throw RolloutError("rollout_tick called in terminal phase " + std::string(to_string(s.phase)));
    }
    return s;
}

namespace {

struct Fleet {
    SimConfig cfg;
    sim::ClusterState state;
};

// Replicas per region for `share` of the offered load at 80% utilization.
std::vector<int> fleet_size(const SimConfig& cfg, double rps, double share) {
    std::vector<int> out;
    for (const Region& r : cfg.regions) {
        const double need = rps * share * r.traffic_weight / (cfg.model.per_replica_rps * 0.8);
        out.push_back(std::clamp(static_cast<int>(std::ceil(need - 1e-9)), std::max(cfg.constraints.min_replicas, 1),
                                 cfg.constraints.max_replicas));
    }
    return out;
}

HealthSample observe(const sim::StepOutcome& o, double error_rate, Rng& rng) {
    HealthSample s;
    const auto served = static_cast<std::int64_t>(std::llround(o.served));
    const auto dropped = static_cast<std::int64_t>(std::llround(o.dropped));
    s.n_requests = static_cast<std::uint64_t>(std::max<std::int64_t>(0, served + dropped));
    s.n_errors = static_cast<std::uint64_t>(rng.binomial(served, error_rate) + dropped);
    if (o.arrivals > 0.0) s.latency_samples.push_back(o.p95_latency_ms);
    return s;
}

}  // namespace

RolloutResult run_rollout(const SimConfig& sim_cfg, const ModelVariant& baseline, const ModelVariant& candidate,
                          DeploymentStrategy strategy, const CanaryConfig& cfg, const RolloutOptions& options) {
    validate(cfg);
    require_valid(sim_cfg);
    if (!(options.offered_rps >= 0.0)) throw std::invalid_argument("offered_rps must be >= 0");
    for (double p : {baseline.error_rate, candidate.error_rate})
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("variant error_rate must lie in [0,1]");

    Rng rng(options.seed);
    Fleet base{sim_cfg, {}};
    base.cfg.model = baseline.model;
    Fleet cand{sim_cfg, {}};
    cand.cfg.model = candidate.model;

    RolloutState state;
    state.strategy = strategy;
    const HealthReport none;
    double now = 0.0;
    state = rollout_tick(state, none, cfg, now);
    state = rollout_tick(state, none, cfg, now);

    auto provision = [&] {
        const double f = state.traffic_fraction;
        const bool shadow = strategy == DeploymentStrategy::Shadow;
        base.state = sim::make_initial_state(base.cfg, fleet_size(base.cfg, options.offered_rps, shadow ? 1.0 : 1.0 - f));
        cand.state = sim::make_initial_state(cand.cfg, fleet_size(cand.cfg, options.offered_rps, shadow ? 1.0 : f));
        base.state.now_s = cand.state.now_s = now;
    };
    provision();

    const double dt = sim_cfg.dt_s;
    HealthSample canary_acc, base_acc;
    double window_start = now;
    while (!is_terminal(state.phase) && now < options.max_duration_s) {
        const double f = state.traffic_fraction;
        const double base_share = strategy == DeploymentStrategy::Shadow ? 1.0 : 1.0 - f;
        const double cand_share = strategy == DeploymentStrategy::Shadow ? 1.0 : f;
        const auto ob = sim::step(base.state, options.offered_rps * base_share, base.cfg);
        const auto oc = sim::step(cand.state, options.offered_rps * cand_share, cand.cfg);
        if (base_share > 0.0) base_acc.merge(observe(ob, baseline.error_rate, rng));
        if (cand_share > 0.0) canary_acc.merge(observe(oc, candidate.error_rate, rng));
        now += dt;

        if (now - window_start + 1e-9 < cfg.analysis_window_s) continue;
        const HealthReport report = analyze_canary_health(canary_acc, base_acc, cfg);
        window_start = now;
        state = rollout_tick(state, report, cfg, now);
        // Inconclusive windows extend: keep accumulating.
        if (report.verdict != Verdict::Inconclusive) {
            canary_acc = {};
            base_acc = {};
        }
        while (state.phase == Phase::Promoting || state.phase == Phase::RollingBack)
            state = rollout_tick(state, none, cfg, now);
        if (!is_terminal(state.phase) && state.traffic_fraction != f) provision();
    }

    RolloutResult result;
    result.strategy = strategy;
    result.final_phase = state.phase;
    if (state.finished_at_s) result.completion_time_s = *state.finished_at_s - state.started_at_s;
    result.windows_analyzed = state.windows_analyzed;
    result.health_history = std::move(state.health_history);
    result.events = std::move(state.events);
    return result;
}

std::string events_jsonl(const std::vector<RolloutEvent>& events) {
    std::ostringstream out;
    for (const auto& e : events) {
        nlohmann::json j;
        j["t_s"] = e.t_s;
        j["phase"] = to_string(e.phase);
        j["fraction"] = e.fraction;
        j["verdict"] = e.verdict ? nlohmann::json(to_string(*e.verdict)) : nlohmann::json(nullptr);
        j["z_errors"] = e.z_errors;
        j["latency_ratio"] = e.latency_ratio;
        out << j.dump() << '\n';
    }
    return out.str();
}

std::string summary_json(const RolloutResult& r) {
    nlohmann::json j;
    j["strategy"] = to_string(r.strategy);
    j["final_phase"] = to_string(r.final_phase);
    j["completion_time_s"] = r.completion_time_s ? nlohmann::json(*r.completion_time_s) : nlohmann::json(nullptr);
    j["windows_analyzed"] = r.windows_analyzed;
    j["events"] = r.events.size();
    return j.dump(2);
}

}  // namespace llmops::rollout
