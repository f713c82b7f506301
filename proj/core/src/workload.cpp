#include "llmops/workload.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace llmops::workload {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw TraceError(msg);
}

double weekly(const PatternSpec& p, double t_s) {
    const auto day = static_cast<std::int64_t>(std::floor(t_s / p.period_s));
    const std::int64_t weekday = ((day % 7) + 7) % 7;
    return weekday >= 5 ? 1.0 - p.weekly_factor : 1.0;
}

}  // namespace

void validate_pattern(const PatternSpec& p) {
    const double fields[] = {p.base_rps,      p.diurnal_amplitude,  p.period_s,        p.weekly_factor, p.noise_cv,
                             p.noise_corr_s, p.spike_rate_per_day, p.spike_magnitude, p.spike_duration_s};
    for (double f : fields) require(std::isfinite(f), "pattern fields must be finite");
    require(p.base_rps > 0.0, "base_rps must be > 0");
    require(p.diurnal_amplitude >= 0.0 && p.diurnal_amplitude <= 1.0, "diurnal_amplitude must lie in [0,1]");
    require(p.period_s > 0.0, "period_s must be > 0");
    require(p.weekly_factor >= 0.0 && p.weekly_factor <= 1.0, "weekly_factor must lie in [0,1]");
    require(p.noise_cv >= 0.0, "noise_cv must be >= 0");
    require(p.noise_corr_s >= 0.0, "noise_corr_s must be >= 0");
    require(p.spike_rate_per_day >= 0.0, "spike_rate_per_day must be >= 0");
    require(p.spike_magnitude >= 1.0, "spike_magnitude must be >= 1");
    require(p.spike_duration_s > 0.0, "spike_duration_s must be > 0");
}

double expected_rps(const PatternSpec& p, double t_s) {
    const double phase = 2.0 * std::numbers::pi * t_s / p.period_s;
    return std::max(0.0, p.base_rps * (1.0 + p.diurnal_amplitude * std::sin(phase)) * weekly(p, t_s));
}

Trace generate_trace(const PatternSpec& p, std::int64_t duration_s, double dt_s, Rng& rng) {
    validate_pattern(p);
    require(std::isfinite(dt_s) && dt_s >= 1.0, "dt_s must be >= 1 (timestamps are whole seconds)");
    require(duration_s > 0 && static_cast<double>(duration_s) >= dt_s, "duration_s must be >= dt_s");

    // Spike start times first so the noise stream is independent of spike settings
    // only through the number of draws consumed here.
    std::vector<double> spike_starts;
    if (p.spike_rate_per_day > 0.0) {
        const double rate_per_s = p.spike_rate_per_day / p.period_s;
        double t = rng.exponential(rate_per_s);
        while (t < static_cast<double>(duration_s)) {
            spike_starts.push_back(t);
            t += rng.exponential(rate_per_s);
        }
    }

    const double sigma2 = std::log1p(p.noise_cv * p.noise_cv);
    const double sigma = std::sqrt(sigma2);
    const double mu = -0.5 * sigma2;
    const double rho = p.noise_corr_s > 0.0 ? std::exp(-dt_s / p.noise_corr_s) : 0.0;
    const double innovation = std::sqrt(1.0 - rho * rho);

    const auto n = static_cast<std::int64_t>(std::floor(static_cast<double>(duration_s) / dt_s));
    Trace out;
    out.reserve(static_cast<std::size_t>(n));
    double z = rng.normal();
    std::size_t spike_idx = 0;
    for (std::int64_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt_s;
        if (k > 0) z = rho * z + innovation * rng.normal();
        const double noise = std::exp(mu + sigma * z);

        while (spike_idx < spike_starts.size() && spike_starts[spike_idx] + p.spike_duration_s <= t) ++spike_idx;
        double spike = 1.0;
        for (std::size_t s = spike_idx; s < spike_starts.size() && spike_starts[s] <= t; ++s) {
            if (t < spike_starts[s] + p.spike_duration_s) {
                spike = p.spike_magnitude;
                break;
            }
        }

        const double rps = expected_rps(p, t) * noise * spike;
        out.push_back({static_cast<std::int64_t>(std::llround(t)), std::max(0.0, rps)});
    }
    return out;
}

Trace parse_trace(const std::string& jsonl) {
    Trace out;
    std::istringstream in(jsonl);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        TracePoint pt;
        try {
            const json j = json::parse(line);
            pt.t_s = j.at("t_s").get<std::int64_t>();
            pt.rps = j.at("rps").get<double>();
        } catch (const json::exception& e) {
            throw TraceError("trace line " + std::to_string(line_no) + ": malformed record (" + e.what() + ")");
        }
        if (!std::isfinite(pt.rps) || pt.rps < 0.0)
            throw TraceError("trace line " + std::to_string(line_no) + ": rps must be finite and >= 0");
        if (pt.t_s < 0) throw TraceError("trace line " + std::to_string(line_no) + ": t_s must be >= 0");
        if (!out.empty() && pt.t_s <= out.back().t_s)
            throw TraceError("trace line " + std::to_string(line_no) + ": non-monotone t_s " + std::to_string(pt.t_s));
        out.push_back(pt);
    }
    return out;
}

std::string format_trace(const Trace& trace) {
    std::string out;
    for (const TracePoint& pt : trace) {
        out += json{{"t_s", pt.t_s}, {"rps", pt.rps}}.dump();
        out += '\n';
    }
    return out;
}

Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TraceError("cannot open trace file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_trace(buf.str());
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TraceError("cannot write trace file " + path.string());
    out << format_trace(trace);
}

std::pair<Trace, Trace> split_trace(const Trace& trace, double fraction) {
    require(!trace.empty(), "split_trace: empty trace");
    require(trace.size() >= 2, "split_trace: need at least 2 points");
    require(fraction > 0.0 && fraction < 1.0, "split_trace: fraction must lie in (0,1)");
    const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(trace.size())));
    const auto mid = trace.begin() + static_cast<std::ptrdiff_t>(cut);
    return {Trace(trace.begin(), mid), Trace(mid, trace.end())};
}

Trace inject_step(Trace trace, std::int64_t at_s, double new_rps) {
    require(!trace.empty(), "inject_step: empty trace");
    require(std::isfinite(new_rps) && new_rps >= 0.0, "inject_step: new_rps must be finite and >= 0");
    require(at_s >= trace.front().t_s && at_s <= trace.back().t_s,
            "inject_step: at_s " + std::to_string(at_s) + " outside trace range");
    for (TracePoint& pt : trace)
        if (pt.t_s >= at_s) pt.rps = new_rps;
    return trace;
}

Trace constant_trace(double rps, std::int64_t duration_s, double dt_s) {
    PatternSpec p;
    p.base_rps = rps > 0.0 ? rps : 1.0;
    p.diurnal_amplitude = 0.0;
    p.noise_cv = 0.0;
    Rng rng(0);
    Trace t = generate_trace(p, duration_s, dt_s, rng);
    for (TracePoint& pt : t) pt.rps = rps;
    return t;
}

std::uint64_t checksum(const Trace& trace) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const TracePoint& pt : trace) {
        mix(static_cast<std::uint64_t>(pt.t_s));
        mix(std::bit_cast<std::uint64_t>(pt.rps));
    }
    return h;
}

PatternSpec pattern_from_json(const std::string& text) {
    PatternSpec p;
    try {
        const json j = json::parse(text);
        auto rd = [&j](const char* k, double& v) {
            if (auto it = j.find(k); it != j.end()) v = it->get<double>();
        };
        rd("base_rps", p.base_rps);
        rd("diurnal_amplitude", p.diurnal_amplitude);
        rd("period_s", p.period_s);
        rd("weekly_factor", p.weekly_factor);
        rd("noise_cv", p.noise_cv);
        rd("noise_corr_s", p.noise_corr_s);
        rd("spike_rate_per_day", p.spike_rate_per_day);
        rd("spike_magnitude", p.spike_magnitude);
        rd("spike_duration_s", p.spike_duration_s);
    } catch (const json::exception& e) {
        throw TraceError(std::string("pattern parse error: ") + e.what());
    }
    validate_pattern(p);
    return p;
}

std::string pattern_to_json(const PatternSpec& p) {
    return json{{"base_rps", p.base_rps},
                {"diurnal_amplitude", p.diurnal_amplitude},
                {"period_s", p.period_s},
                {"weekly_factor", p.weekly_factor},
                {"noise_cv", p.noise_cv},
                {"noise_corr_s", p.noise_corr_s},
                {"spike_rate_per_day", p.spike_rate_per_day},
                {"spike_magnitude", p.spike_magnitude},
                {"spike_duration_s", p.spike_duration_s}}
        .dump();
}

}  // namespace llmops::workload
