#include "llmops/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace llmops {

std::string_view to_string(LoadSource source) {
    switch (source) {
        case LoadSource::Dnn: return "dnn";
        case LoadSource::SeasonalNaive: return "seasonal_naive";
        case LoadSource::HoltWinters: return "holt_winters";
        case LoadSource::LastValue: return "last_value";
        case LoadSource::Policy: return "policy";
    }
    return "unknown";
}

}  // namespace llmops

namespace llmops::sim {

int ReplicaPool::pending_count() const {
    int n = 0;
    for (const auto& p : pending) n += p.count;
    return n;
}

std::vector<int> ClusterState::targets() const {
    std::vector<int> out;
    out.reserve(regions.size());
    for (const auto& r : regions) out.push_back(r.pool.target_replicas);
    return out;
}

std::vector<int> ClusterState::serving() const {
    std::vector<int> out;
    out.reserve(regions.size());
    for (const auto& r : regions) out.push_back(r.pool.serving_replicas);
    return out;
}

ClusterState make_initial_state(const SimConfig& cfg, std::span<const int> replicas_per_region) {
    if (replicas_per_region.size() != cfg.regions.size())
        throw SimError("initial replica vector has " + std::to_string(replicas_per_region.size()) +
                       " entries, config has " + std::to_string(cfg.regions.size()) + " regions");
    ClusterState state;
    state.regions.resize(cfg.regions.size());
    for (std::size_t r = 0; r < cfg.regions.size(); ++r) {
        const int n = replicas_per_region[r];
        if (n < 0) throw SimError("initial replica count must be >= 0");
        state.regions[r].pool.target_replicas = n;
        state.regions[r].pool.serving_replicas = n;
    }
    return state;
}

double mean_latency_ms(const SimConfig& cfg, std::size_t region, double backlog, double cap_rps) {
    return cfg.model.base_latency_ms + cfg.regions[region].rtt_ms + 1000.0 * backlog / std::max(cap_rps, 1e-9);
}

namespace {

void promote(ReplicaPool& pool, double now_s) {
    auto ready = [now_s](const PendingReplicas& p) { return p.ready_at_s <= now_s; };
    for (const auto& p : pool.pending)
        if (ready(p)) pool.serving_replicas += p.count;
    std::erase_if(pool.pending, ready);
}

}  // namespace

StepOutcome step(ClusterState& state, double arrivals_rps, const SimConfig& cfg, const CostRates& rates) {
    if (!std::isfinite(arrivals_rps) || arrivals_rps < 0.0)
        throw SimError("arrivals must be finite and >= 0");
    if (state.regions.size() != cfg.regions.size()) throw SimError("state/config region count mismatch");

    const double dt = cfg.dt_s;
    StepOutcome out;
    out.t_s = state.now_s;
    out.dt_s = dt;
    out.regions.resize(cfg.regions.size());

    double capacity_total = 0.0;
    double busy_latency_mean = -1.0;
    double busy_latency_p95 = -1.0;
    double idle_latency_mean = std::numeric_limits<double>::infinity();

    for (std::size_t r = 0; r < cfg.regions.size(); ++r) {
        RegionState& rs = state.regions[r];
        RegionOutcome& ro = out.regions[r];
        const Region& region = cfg.regions[r];

        const double cap_rps = capacity_rps(static_cast<std::size_t>(rs.pool.serving_replicas), cfg.model);
        const double arrivals = arrivals_rps * region.traffic_weight * dt;
        const double offered = arrivals + rs.backlog;
        const double served = std::min(offered, cap_rps * dt);
        const double remainder = offered - served;
        const double backlog = std::min(cfg.queue_cap, remainder);
        const double dropped = remainder - backlog;

        ro.arrivals = arrivals;
        ro.served = served;
        ro.dropped = dropped;
        ro.backlog = backlog;
        ro.mean_latency_ms = mean_latency_ms(cfg, r, backlog, cap_rps);
        ro.p95_latency_ms = kP95OverMean * ro.mean_latency_ms;
        ro.utilization = utilization(served / dt, cap_rps);
        ro.error_rate = arrivals > 0.0 ? std::clamp(dropped / arrivals, 0.0, 1.0) : 0.0;
        ro.serving_replicas = rs.pool.serving_replicas;
        ro.target_replicas = rs.pool.target_replicas;

        const double compute = nodes_needed(rs.pool.target_replicas, cfg.node) * cfg.node.cost_per_hour_usd *
                               region.price_multiplier * dt / 3600.0;
        const double network = served * rates.network_usd_per_1k_served / 1000.0;
        ro.cost_delta_usd = compute + network;
        state.cost.compute_usd += compute;
        state.cost.network_usd += network;

        rs.backlog = backlog;
        rs.arrived_total += arrivals;
        rs.served_total += served;
        rs.dropped_total += dropped;
        rs.error_total += dropped;

        out.arrivals += arrivals;
        out.served += served;
        out.dropped += dropped;
        out.backlog += backlog;
        out.cost_delta_usd += ro.cost_delta_usd;
        out.serving_replicas += ro.serving_replicas;
        out.target_replicas += ro.target_replicas;
        capacity_total += cap_rps;

        if (arrivals > 0.0 || backlog > 0.0) {
            busy_latency_mean = std::max(busy_latency_mean, ro.mean_latency_ms);
            busy_latency_p95 = std::max(busy_latency_p95, ro.p95_latency_ms);
        }
        idle_latency_mean = std::min(idle_latency_mean, ro.mean_latency_ms);
    }

    const double storage = rates.storage_usd_per_hour * dt / 3600.0;
    state.cost.storage_usd += storage;
    state.cost.inference_count += out.served;
    out.cost_delta_usd += storage;

    if (busy_latency_mean >= 0.0) {
        out.mean_latency_ms = busy_latency_mean;
        out.p95_latency_ms = busy_latency_p95;
    } else {
        out.mean_latency_ms = idle_latency_mean;
        out.p95_latency_ms = kP95OverMean * idle_latency_mean;
    }
    out.utilization = utilization(out.served / dt, capacity_total);
    out.error_rate = out.arrivals > 0.0 ? std::clamp(out.dropped / out.arrivals, 0.0, 1.0) : 0.0;

    state.now_s += dt;
    for (RegionState& rs : state.regions) promote(rs.pool, state.now_s);
    return out;
}

void apply_scaling(ClusterState& state, const ScalingDecision& decision, const SimConfig& cfg) {
    if (decision.target_replicas.size() != state.regions.size())
        throw ConstraintViolation("decision has " + std::to_string(decision.target_replicas.size()) +
                                  " region targets, cluster has " + std::to_string(state.regions.size()));
    const Constraints& c = cfg.constraints;
    for (std::size_t r = 0; r < decision.target_replicas.size(); ++r) {
        const int target = decision.target_replicas[r];
        if (target < c.min_replicas || target > c.max_replicas)
            throw ConstraintViolation("region '" + cfg.regions[r].name + "': target " + std::to_string(target) +
                                      " outside [" + std::to_string(c.min_replicas) + ", " +
                                      std::to_string(c.max_replicas) + "]");
    }

    for (std::size_t r = 0; r < decision.target_replicas.size(); ++r) {
        ReplicaPool& pool = state.regions[r].pool;
        const int target = decision.target_replicas[r];
        int delta = target - pool.target_replicas;
        if (delta > 0) {
            pool.pending.push_back({state.now_s + cfg.model.startup_s, delta});
        } else if (delta < 0) {
            int excess = -delta;
            while (excess > 0 && !pool.pending.empty()) {
                PendingReplicas& last = pool.pending.back();
                const int cancel = std::min(excess, last.count);
                last.count -= cancel;
                excess -= cancel;
                if (last.count == 0) pool.pending.pop_back();
            }
            pool.serving_replicas -= excess;
        }
        pool.target_replicas = target;
        promote(pool, state.now_s);
    }
}

std::vector<int> ScalingPolicy::initial_targets(const SimConfig& cfg, double first_rps) const {
    std::vector<int> out;
    for (const Region& region : cfg.regions) {
        const double need = first_rps * region.traffic_weight / (cfg.model.per_replica_rps * 0.8);
        const int n = static_cast<int>(std::ceil(need - 1e-9));
        out.push_back(std::clamp(n, cfg.constraints.min_replicas, cfg.constraints.max_replicas));
    }
    return out;
}

namespace {

double sorted_quantile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace

Aggregates aggregate(std::span<const StepOutcome> series, const CostLedger& ledger, double sla_p95_ms) {
    Aggregates a;
    a.steps = series.size();
    a.total_cost_usd = ledger.total_usd();
    if (series.empty()) return a;
    std::vector<double> p95;
    p95.reserve(series.size());
    std::size_t violations = 0;
    for (const StepOutcome& s : series) {
        a.mean_utilization += s.utilization;
        a.mean_latency_ms += s.mean_latency_ms;
        a.mean_replicas += s.target_replicas;
        a.mean_error_rate += s.error_rate;
        a.total_arrivals += s.arrivals;
        a.total_served += s.served;
        a.total_dropped += s.dropped;
        p95.push_back(s.p95_latency_ms);
        if (s.p95_latency_ms > sla_p95_ms) ++violations;
    }
    const auto n = static_cast<double>(series.size());
    a.mean_utilization /= n;
    a.mean_latency_ms /= n;
    a.mean_replicas /= n;
    a.mean_error_rate /= n;
    a.sla_violation_fraction = static_cast<double>(violations) / n;
    a.p95_latency_ms = sorted_quantile(std::move(p95), 0.95);
    a.final_backlog = series.back().backlog;
    a.cost_per_inference_usd = a.total_served > 0.0 ? a.total_cost_usd / a.total_served : 0.0;
    return a;
}

SimResult run(const workload::Trace& trace, ScalingPolicy& policy, const SimConfig& cfg, const RunOptions& options) {
    require_valid(cfg);
    if (trace.empty()) throw SimError("run: trace is empty");

    const std::vector<int> initial = options.initial_targets ? *options.initial_targets
                                                             : policy.initial_targets(cfg, trace.front().rps);
    ClusterState state = make_initial_state(cfg, initial);

    SimResult result;
    result.policy = policy.name();
    result.series.reserve(trace.size());

    for (std::size_t i = 0; i < trace.size(); ++i) {
        result.series.push_back(step(state, trace[i].rps, cfg, options.rates));

        std::optional<ScalingDecision> decision;
        try {
            decision = policy.decide(PolicyContext{state, result.series, cfg});
        } catch (const std::exception& e) {
            throw SimError("policy '" + policy.name() + "' failed at step " + std::to_string(i) + ": " + e.what());
        }
        if (!decision) continue;

        const std::vector<int> current = state.targets();
        for (std::size_t r = 0; r < current.size() && r < decision->target_replicas.size(); ++r) {
            if (decision->held || decision->target_replicas[r] != current[r]) {
                DecisionRecord rec;
                rec.t_s = state.now_s;
                rec.region = r;
                rec.current = current[r];
                rec.target = decision->target_replicas[r];
                rec.held = decision->held;
                if (r < decision->score_breakdown.size()) rec.score = decision->score_breakdown[r];
                rec.source = decision->source;
                result.decisions.push_back(rec);
            }
        }
        if (!decision->held) {
            try {
                apply_scaling(state, *decision, cfg);
            } catch (const ConstraintViolation& e) {
                throw ConstraintViolation("policy '" + policy.name() + "' at step " + std::to_string(i) + ": " +
                                          e.what());
            }
        }
    }

    result.ledger = state.cost;
    result.aggregates = aggregate(result.series, result.ledger, cfg.constraints.sla_p95_ms);
    if (!options.keep_series) result.series.clear();
    return result;
}

std::uint64_t checksum(const SimResult& result) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const StepOutcome& s : result.series) {
        mix(s.t_s);
        mix(s.arrivals);
        mix(s.served);
        mix(s.dropped);
        mix(s.backlog);
        mix(s.p95_latency_ms);
        mix(s.utilization);
        mix(s.cost_delta_usd);
        mix(static_cast<double>(s.target_replicas));
    }
    mix(result.ledger.compute_usd);
    mix(result.ledger.network_usd);
    mix(result.ledger.storage_usd);
    mix(result.ledger.inference_count);
    return h;
}

namespace {

nlohmann::json aggregates_json(const Aggregates& a) {
    return {{"steps", a.steps},
            {"mean_utilization", a.mean_utilization},
            {"p95_latency_ms", a.p95_latency_ms},
            {"mean_latency_ms", a.mean_latency_ms},
            {"sla_violation_fraction", a.sla_violation_fraction},
            {"cost_per_inference_usd", a.cost_per_inference_usd},
            {"total_cost_usd", a.total_cost_usd},
            {"total_arrivals", a.total_arrivals},
            {"total_served", a.total_served},
            {"total_dropped", a.total_dropped},
            {"final_backlog", a.final_backlog},
            {"mean_replicas", a.mean_replicas},
            {"mean_error_rate", a.mean_error_rate}};
}

}  // namespace

std::string to_json(const SimResult& result, bool include_series) {
    nlohmann::json j;
    j["policy"] = result.policy;
    j["aggregates"] = aggregates_json(result.aggregates);
    j["ledger"] = {{"compute_usd", result.ledger.compute_usd},
                   {"network_usd", result.ledger.network_usd},
                   {"storage_usd", result.ledger.storage_usd},
                   {"total_usd", result.ledger.total_usd()},
                   {"inference_count", result.ledger.inference_count}};
    j["decision_count"] = result.decisions.size();
    if (include_series) {
        nlohmann::json rows = nlohmann::json::array();
        for (const StepOutcome& s : result.series) {
            rows.push_back({{"t_s", s.t_s},
                            {"arrivals", s.arrivals},
                            {"served", s.served},
                            {"dropped", s.dropped},
                            {"p95_ms", s.p95_latency_ms},
                            {"util", s.utilization},
                            {"err_rate", s.error_rate},
                            {"cost_usd", s.cost_delta_usd},
                            {"replicas", s.target_replicas}});
        }
        j["series"] = rows;
    }
    return j.dump(2);
}

std::string series_csv(std::span<const StepOutcome> series) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "t_s,arrivals,served,dropped,p95_ms,util,err_rate,cost_usd\n";
    for (const StepOutcome& s : series) {
        os << s.t_s << ',' << s.arrivals << ',' << s.served << ',' << s.dropped << ',' << s.p95_latency_ms << ','
           << s.utilization << ',' << s.error_rate << ',' << s.cost_delta_usd << '\n';
    }
    return os.str();
}

std::string decisions_csv(std::span<const DecisionRecord> decisions) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "t_s,region,current,target,held,lat_pen,cost_term,util_term,source\n";
    for (const DecisionRecord& d : decisions) {
        os << d.t_s << ',' << d.region << ',' << d.current << ',' << d.target << ',' << (d.held ? 1 : 0) << ','
           << d.score.latency_penalty << ',' << d.score.cost_term << ',' << d.score.utilization_term << ','
           << to_string(d.source) << '\n';
    }
    return os.str();
}

}  // namespace llmops::sim
