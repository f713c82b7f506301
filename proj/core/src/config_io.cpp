#include "llmops/config_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace llmops {

using nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

json to_json(const SimConfig& cfg) {
    json regions = json::array();
    for (const Region& r : cfg.regions) {
        regions.push_back({{"name", r.name},
                           {"rtt_ms", r.rtt_ms},
                           {"price_multiplier", r.price_multiplier},
                           {"traffic_weight", r.traffic_weight}});
    }
    const Constraints& c = cfg.constraints;
    return {
        {"model",
         {{"id", cfg.model.id},
          {"parameter_count_b", cfg.model.parameter_count_b},
          {"mem_per_replica_gb", cfg.model.mem_per_replica_gb},
          {"per_replica_rps", cfg.model.per_replica_rps},
          {"base_latency_ms", cfg.model.base_latency_ms},
          {"startup_s", cfg.model.startup_s}}},
        {"regions", regions},
        {"node",
         {{"name", cfg.node.name},
          {"replicas_per_node", cfg.node.replicas_per_node},
          {"cost_per_hour_usd", cfg.node.cost_per_hour_usd}}},
        {"constraints",
         {{"min_replicas", c.min_replicas},
          {"max_replicas", c.max_replicas},
          {"sla_p95_ms", c.sla_p95_ms},
          {"budget_usd_per_hour", c.budget_usd_per_hour ? json(*c.budget_usd_per_hour) : json(nullptr)},
          {"max_step_fraction", c.max_step_fraction},
          {"cooldown_s", c.cooldown_s}}},
        {"dt_s", cfg.dt_s},
        {"seed", cfg.seed},
        {"queue_cap", cfg.queue_cap},
    };
}

}  // namespace

std::string config_to_json(const SimConfig& cfg) { return to_json(cfg).dump(2); }

SimConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config document must be a JSON object");

    SimConfig cfg = default_config();
    try {
        if (auto it = j.find("model"); it != j.end()) {
            const json& m = *it;
            read_opt(m, "id", cfg.model.id);
            read_opt(m, "parameter_count_b", cfg.model.parameter_count_b);
            read_opt(m, "mem_per_replica_gb", cfg.model.mem_per_replica_gb);
            read_opt(m, "per_replica_rps", cfg.model.per_replica_rps);
            read_opt(m, "base_latency_ms", cfg.model.base_latency_ms);
            read_opt(m, "startup_s", cfg.model.startup_s);
        }
        if (auto it = j.find("regions"); it != j.end()) {
            cfg.regions.clear();
            for (const json& r : *it) {
                Region region;
                read_opt(r, "name", region.name);
                read_opt(r, "rtt_ms", region.rtt_ms);
                read_opt(r, "price_multiplier", region.price_multiplier);
                read_opt(r, "traffic_weight", region.traffic_weight);
                cfg.regions.push_back(region);
            }
        }
        if (auto it = j.find("node"); it != j.end()) {
            read_opt(*it, "name", cfg.node.name);
            read_opt(*it, "replicas_per_node", cfg.node.replicas_per_node);
            read_opt(*it, "cost_per_hour_usd", cfg.node.cost_per_hour_usd);
        }
        if (auto it = j.find("constraints"); it != j.end()) {
            const json& c = *it;
            read_opt(c, "min_replicas", cfg.constraints.min_replicas);
            read_opt(c, "max_replicas", cfg.constraints.max_replicas);
            read_opt(c, "sla_p95_ms", cfg.constraints.sla_p95_ms);
            if (auto b = c.find("budget_usd_per_hour"); b != c.end()) {
                if (b->is_null())
                    cfg.constraints.budget_usd_per_hour.reset();
                else
                    cfg.constraints.budget_usd_per_hour = b->get<double>();
            }
            read_opt(c, "max_step_fraction", cfg.constraints.max_step_fraction);
            read_opt(c, "cooldown_s", cfg.constraints.cooldown_s);
        }
        read_opt(j, "dt_s", cfg.dt_s);
        read_opt(j, "seed", cfg.seed);
        read_opt(j, "queue_cap", cfg.queue_cap);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    require_valid(cfg);
    return cfg;
}

SimConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json(buf.str());
}

void save_config(const SimConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file " + path.string());
    out << config_to_json(cfg) << '\n';
}

}  // namespace llmops
