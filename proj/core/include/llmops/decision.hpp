#pragma once

#include <string_view>
#include <vector>

namespace llmops {

enum class LoadSource { Dnn, SeasonalNaive, HoltWinters, LastValue, Policy };

std::string_view to_string(LoadSource source);

struct ScoreBreakdown {
    double latency_penalty = 0.0;
    double cost_term = 0.0;
    double utilization_term = 0.0;

    double total() const { return latency_penalty + cost_term + utilization_term; }
};

/// Replica targets for every region, in config region order.
struct ScalingDecision {
    std::vector<int> target_replicas;
    std::vector<ScoreBreakdown> score_breakdown;
    double issued_at_s = 0.0;
    // Cooldown suppressed a change; targets equal the current ones.
    bool held = false;
    LoadSource source = LoadSource::Policy;
};

}  // namespace llmops
