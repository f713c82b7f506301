#include "llmops/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace llmops {

SimConfig default_config() {
    SimConfig cfg;
    cfg.regions = {
        {"us-east", 20.0, 1.00, 0.30},
        {"us-west", 30.0, 1.00, 0.20},
        {"eu-west", 25.0, 1.10, 0.25},
        {"ap-southeast", 40.0, 1.20, 0.15},
        {"sa-east", 45.0, 1.30, 0.10},
    };
    return cfg;
}

namespace {

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

std::vector<std::string> validate_config(const SimConfig& cfg) {
    std::vector<std::string> out;
    auto fail = [&out](std::string msg) { out.push_back(std::move(msg)); };

    const ModelSpec& m = cfg.model;
    if (m.id.empty()) fail("model.id must be nonempty");
    if (!positive(m.parameter_count_b)) fail("model.parameter_count_b must be > 0");
    if (!positive(m.mem_per_replica_gb)) fail("model.mem_per_replica_gb must be > 0");
    if (!positive(m.per_replica_rps)) fail("model.per_replica_rps must be > 0");
    if (!positive(m.base_latency_ms)) fail("model.base_latency_ms must be > 0");
    if (!std::isfinite(m.startup_s) || m.startup_s < 0.0) fail("model.startup_s must be >= 0");

    if (cfg.regions.empty()) {
        fail("regions must be nonempty");
    } else {
        double weight_sum = 0.0;
        std::set<std::string> names;
        for (const Region& r : cfg.regions) {
            const std::string tag = "region '" + r.name + "': ";
            if (r.name.empty()) fail("region name must be nonempty");
            if (!names.insert(r.name).second) fail(tag + "duplicate region name");
            if (!std::isfinite(r.rtt_ms) || r.rtt_ms < 0.0) fail(tag + "rtt_ms must be >= 0");
            if (!positive(r.price_multiplier)) fail(tag + "price_multiplier must be > 0");
            if (!std::isfinite(r.traffic_weight) || r.traffic_weight < 0.0 || r.traffic_weight > 1.0)
                fail(tag + "traffic_weight must lie in [0,1]");
            weight_sum += r.traffic_weight;
        }
        if (std::abs(weight_sum - 1.0) > 1e-9) {
            std::ostringstream os;
            os << "region traffic_weight sum must be 1 (got " << weight_sum << ")";
            fail(os.str());
        }
    }

    if (cfg.node.name.empty()) fail("node.name must be nonempty");
    if (cfg.node.replicas_per_node <= 0) fail("node.replicas_per_node must be > 0");
    if (!positive(cfg.node.cost_per_hour_usd)) fail("node.cost_per_hour_usd must be > 0");

    const Constraints& c = cfg.constraints;
    if (c.min_replicas <= 0) fail("constraints.min_replicas must be > 0");
    if (c.max_replicas <= 0) fail("constraints.max_replicas must be > 0");
    if (c.min_replicas > c.max_replicas)
        fail("constraints.min_replicas must be <= constraints.max_replicas");
    if (!positive(c.sla_p95_ms)) fail("constraints.sla_p95_ms must be > 0");
    if (c.budget_usd_per_hour && !positive(*c.budget_usd_per_hour))
        fail("constraints.budget_usd_per_hour must be > 0 or null");
    if (!std::isfinite(c.max_step_fraction) || c.max_step_fraction <= 0.0 || c.max_step_fraction > 1.0)
        fail("constraints.max_step_fraction must lie in (0,1]");
    if (!std::isfinite(c.cooldown_s) || c.cooldown_s < 0.0) fail("constraints.cooldown_s must be >= 0");

    if (!positive(cfg.dt_s)) fail("dt_s must be > 0");
    if (!positive(cfg.queue_cap)) fail("queue_cap must be > 0");
    return out;
}

void require_valid(const SimConfig& cfg) {
    const auto violations = validate_config(cfg);
    if (violations.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
}

double capacity_rps(std::size_t replicas_serving, const ModelSpec& model) {
    return static_cast<double>(replicas_serving) * model.per_replica_rps;
}

double utilization(double served, double capacity) {
    if (capacity <= 0.0) return 0.0;
    return std::clamp(served / capacity, 0.0, 1.0);
}

int nodes_needed(int replicas, const NodeType& node) {
    if (replicas <= 0) return 0;
    return (replicas + node.replicas_per_node - 1) / node.replicas_per_node;
}

}  // namespace llmops
