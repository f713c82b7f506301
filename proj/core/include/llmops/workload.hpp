#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "llmops/rng.hpp"

namespace llmops::workload {

struct TracePoint {
    std::int64_t t_s = 0;
    double rps = 0.0;

    bool operator==(const TracePoint&) const = default;
};

using Trace = std::vector<TracePoint>;

/// Parametric arrival-rate model:
///   rps(t) = base * (1 + amplitude*sin(2*pi*t/period)) * weekly(t) * noise(t) * spike(t)
/// weekly(t) is (1 - weekly_factor) on days 5 and 6 of each 7-period week, else 1.
/// noise(t) is mean-one lognormal with the given coefficient of variation; when
/// noise_corr_s > 0 the underlying Gaussian is AR(1) with that correlation time,
/// otherwise independent per point. Spikes arrive as a Poisson process
/// (spike_rate_per_day per period) and multiply the rate by spike_magnitude for
/// spike_duration_s.
struct PatternSpec {
    double base_rps = 1000.0;
    double diurnal_amplitude = 0.6;
    double period_s = 1440.0;
    double weekly_factor = 0.0;
    double noise_cv = 0.05;
    double noise_corr_s = 0.0;
    double spike_rate_per_day = 0.0;
    double spike_magnitude = 1.0;
    double spike_duration_s = 120.0;
};

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void validate_pattern(const PatternSpec& pattern);

Trace generate_trace(const PatternSpec& pattern, std::int64_t duration_s, double dt_s, Rng& rng);

/// Deterministic rate with noise and spikes removed; used as a forecasting oracle.
double expected_rps(const PatternSpec& pattern, double t_s);

/// JSON Lines, one {"t_s": int, "rps": float} per line.
Trace load_trace(const std::filesystem::path& path);
void save_trace(const Trace& trace, const std::filesystem::path& path);
Trace parse_trace(const std::string& jsonl);
std::string format_trace(const Trace& trace);

/// Chronological split; train gets floor(fraction * n) points.
std::pair<Trace, Trace> split_trace(const Trace& trace, double fraction);

/// Every point with t_s >= at_s is set to new_rps.
Trace inject_step(Trace trace, std::int64_t at_s, double new_rps);

Trace constant_trace(double rps, std::int64_t duration_s, double dt_s = 1.0);

/// FNV-1a over (t_s, bit pattern of rps); stable fingerprint for golden tests.
std::uint64_t checksum(const Trace& trace);

PatternSpec pattern_from_json(const std::string& text);
std::string pattern_to_json(const PatternSpec& pattern);

}  // namespace llmops::workload
