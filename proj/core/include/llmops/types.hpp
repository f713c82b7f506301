#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace llmops {

// Units throughout: USD, seconds, requests/second.

struct ModelSpec {
    std::string id = "llm-7b";
    double parameter_count_b = 7.0;
    double mem_per_replica_gb = 16.0;
    double per_replica_rps = 10.0;
    double base_latency_ms = 80.0;
    double startup_s = 60.0;
};

struct Region {
    std::string name;
    double rtt_ms = 0.0;
    double price_multiplier = 1.0;
    double traffic_weight = 0.0;
};

struct NodeType {
    std::string name = "gpu-2x";
    int replicas_per_node = 2;
    double cost_per_hour_usd = 8.0;
};

struct Constraints {
    int min_replicas = 1;
    int max_replicas = 300;
    double sla_p95_ms = 200.0;
    // nullopt means no budget cap.
    std::optional<double> budget_usd_per_hour;
    double max_step_fraction = 0.5;
    double cooldown_s = 30.0;
};

struct SimConfig {
    ModelSpec model;
    std::vector<Region> regions;
    NodeType node;
    Constraints constraints;
    double dt_s = 1.0;
    std::uint64_t seed = 42;
    double queue_cap = 5000.0;
};

/// Five-region reference fleet used by the CLI and the experiment suite.
SimConfig default_config();

/// Every invariant violation in `cfg`, one human-readable line each. Empty means valid.
std::vector<std::string> validate_config(const SimConfig& cfg);

/// Throws ConfigError listing all violations when `cfg` is invalid.
void require_valid(const SimConfig& cfg);

double capacity_rps(std::size_t replicas_serving, const ModelSpec& model);

/// served/capacity clipped to [0,1]; zero when capacity is zero.
double utilization(double served, double capacity);

/// Nodes needed to host `replicas` on `node`.
int nodes_needed(int replicas, const NodeType& node);

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace llmops
