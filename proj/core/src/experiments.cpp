#include "llmops/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace llmops::experiments {

using nlohmann::json;

namespace {

std::size_t steps_for(double seconds, double dt) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seconds / dt)));
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void Dataset::append(const Dataset& other) {
    windows.insert(windows.end(), other.windows.begin(), other.windows.end());
    targets.insert(targets.end(), other.targets.begin(), other.targets.end());
    episode.insert(episode.end(), other.episode.begin(), other.episode.end());
}

ExplorationPolicy::ExplorationPolicy(std::uint64_t seed, const CollectOptions& options)
    : rng_(seed), options_(options), next_nudge_s_(options.perturb_every_s) {}

std::optional<ScalingDecision> ExplorationPolicy::decide(const sim::PolicyContext& ctx) {
    auto d = threshold_.decide(ctx);
    if (ctx.state.now_s + 1e-9 < next_nudge_s_) return d;
    next_nudge_s_ += options_.perturb_every_s;

    ScalingDecision nudged;
    nudged.issued_at_s = ctx.state.now_s;
    nudged.target_replicas = d ? d->target_replicas : ctx.state.targets();
    const Constraints& c = ctx.cfg.constraints;
    for (int& t : nudged.target_replicas)
        t = std::clamp(t + static_cast<int>(rng_.uniform_int(-options_.perturb_max, options_.perturb_max)),
                       c.min_replicas, c.max_replicas);
    return nudged;
}

Dataset dataset_from_series(std::span<const sim::StepOutcome> series, const SimConfig& cfg, std::size_t episode,
                            const CollectOptions& options) {
    Dataset out;
    const std::size_t T = options.window;
    const std::size_t H = steps_for(options.horizon_s, cfg.dt_s);
    if (series.size() < T + H) return out;
    for (std::size_t i = T; i < series.size() - H; ++i) {
        out.windows.push_back(metrics::build_raw_window(series.first(i), cfg, T));
        out.targets.push_back(metrics::realized_targets(series.subspan(i, H), cfg));
        out.episode.push_back(episode);
    }
    return out;
}

Dataset collect_episode(const SimConfig& cfg, const workload::Trace& trace, std::uint64_t seed, std::size_t episode,
                        const CollectOptions& options) {
    ExplorationPolicy policy(seed, options);
    const sim::SimResult result = sim::run(trace, policy, cfg);
    return dataset_from_series(result.series, cfg, episode, options);
}

Dataset collect(const SimConfig& cfg, const workload::Trace& trace, std::size_t episodes, std::uint64_t seed,
                const CollectOptions& options) {
    require_valid(cfg);
    Dataset out;
    Rng root(seed);
    for (std::size_t e = 0; e < episodes; ++e) {
        Rng child = root.fork();
        out.append(collect_episode(cfg, trace, child.next(), e, options));
    }
    return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset '" + path.string() + "'");
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& w = data.windows[i];
        json row{{"episode", data.episode[i]}, {"length", w.length},         {"resource", w.resource},
                 {"performance", w.performance}, {"deploy", w.deploy}, {"targets", data.targets[i]}};
        out << row.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing dataset '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read dataset '" + path.string() + "'");
    Dataset data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json row = json::parse(line);
            metrics::MetricWindow w(row.at("length").get<std::size_t>());
            w.resource = row.at("resource").get<std::vector<double>>();
            w.performance = row.at("performance").get<std::vector<double>>();
            w.deploy = row.at("deploy").get<std::vector<double>>();
            if (!w.valid()) throw std::runtime_error("malformed window");
            data.windows.push_back(std::move(w));
            data.targets.push_back(row.at("targets").get<metrics::Targets>());
            data.episode.push_back(row.value("episode", std::size_t{0}));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return data;
}

TrainResult train(const Dataset& data, const TrainOptions& options) {
    if (options.batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (!(options.validation_fraction >= 0.0 && options.validation_fraction < 1.0))
        throw std::invalid_argument("validation_fraction must lie in [0,1)");
    const std::size_t n = data.size();
    const auto n_train = static_cast<std::size_t>(std::floor((1.0 - options.validation_fraction) * static_cast<double>(n)));
    if (n_train < 2) throw std::invalid_argument("train: need at least 2 training rows, got " + std::to_string(n_train));

    TrainResult result;
    result.train_rows = n_train;
    result.val_rows = n - n_train;
    auto& norm = result.predictor.normalizer;
    for (std::size_t i = 0; i < n_train; ++i) {
        norm.observe(data.windows[i]);
        norm.observe_targets(data.targets[i]);
    }

    std::vector<metrics::MetricWindow> zw;
    std::vector<nn::Prediction> zt;
    zw.reserve(n);
    zt.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        zw.push_back(norm.normalize(data.windows[i]));
        zt.push_back(norm.normalize_targets(data.targets[i]));
    }
    const std::span<const metrics::MetricWindow> val_w(zw.data() + n_train, n - n_train);
    const std::span<const nn::Prediction> val_t(zt.data() + n_train, n - n_train);

    auto& net = result.predictor.net;
    net = nn::MultiStreamNet::init(options.seed);
    auto opt = nn::OptimizerState::for_net(net, options.learning_rate);
    Rng rng(options.seed ^ 0x5851f42d4c957f2dULL);
    result.initial_val_loss = nn::eval_loss(net, val_w, val_t);

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::TrainBatch batch;
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + 1 < n_train; start += options.batch_size) {
            const std::size_t end = std::min(n_train, start + options.batch_size);
            if (end - start < 2) break;
            batch.windows.clear();
            batch.targets.clear();
            for (std::size_t k = start; k < end; ++k) {
                batch.windows.push_back(zw[order[k]]);
                batch.targets.push_back(zt[order[k]]);
            }
            const double l = nn::train_step(net, opt, batch);
            result.step_losses.push_back(l);
            sum += l;
            ++batches;
        }
        const double train_loss = batches ? sum / static_cast<double>(batches) : 0.0;
        const double val_loss = val_w.empty() ? train_loss : nn::eval_loss(net, val_w, val_t);
        result.epochs.push_back({epoch, train_loss, val_loss});
    }
    return result;
}

std::string loss_csv(const TrainResult& result) {
    std::ostringstream out;
    out << "step,loss\n";
    out.precision(10);
    for (std::size_t i = 0; i < result.step_losses.size(); ++i) out << i << ',' << result.step_losses[i] << '\n';
    return out.str();
}

ForecastEval evaluate_forecast(const scaling::LoadPredictor& predictor, const SimConfig& cfg,
                               const workload::Trace& trace, std::size_t period_steps, std::uint64_t seed,
                               const CollectOptions& options) {
    ExplorationPolicy policy(seed, options);
    const sim::SimResult run = sim::run(trace, policy, cfg);
    const auto& series = run.series;
    const std::size_t T = options.window;
    const std::size_t H = steps_for(options.horizon_s, cfg.dt_s);
    std::vector<double> arrivals;
    arrivals.reserve(series.size());
    for (const auto& o : series) arrivals.push_back(o.arrivals_rps());

    ForecastEval ev;
    double dnn = 0.0;
    double naive = 0.0;
    for (std::size_t i = std::max(T, period_steps); i + H <= series.size(); ++i) {
        const double truth = metrics::realized_targets(std::span(series).subspan(i, H), cfg)[0];
        const double pred = predictor.predict_raw(metrics::build_raw_window(std::span(series).first(i), cfg, T))[0];
        double sn = 0.0;
        const std::span<const double> past(arrivals.data(), i);
        for (std::size_t h = 1; h <= H; ++h) sn += metrics::seasonal_naive_forecast(past, period_steps, h);
        sn /= static_cast<double>(H);
        dnn += std::abs(pred - truth);
        naive += std::abs(sn - truth);
        ++ev.windows;
    }
    if (ev.windows == 0) throw std::invalid_argument("evaluate_forecast: trace shorter than one period plus horizon");
    ev.dnn_mae = dnn / static_cast<double>(ev.windows);
    ev.seasonal_naive_mae = naive / static_cast<double>(ev.windows);
    return ev;
}

std::vector<int> proportional_targets(const SimConfig& cfg, int total) {
    // Largest remainder, so the regions add up to the requested fleet.
    const std::size_t n = cfg.regions.size();
    std::vector<int> out(n);
    std::vector<std::pair<double, std::size_t>> rest;
    int assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double share = total * cfg.regions[i].traffic_weight;
        out[i] = static_cast<int>(std::floor(share + 1e-9));
        assigned += out[i];
        rest.emplace_back(share - out[i], i);
    }
    std::stable_sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total && k < n; ++k, ++assigned) ++out[rest[k].second];
    for (int& t : out) t = std::clamp(t, cfg.constraints.min_replicas, cfg.constraints.max_replicas);
    return out;
}

StaticChoice best_static(const SimConfig& cfg, const workload::Trace& trace, double max_violation) {
    require_valid(cfg);
    const int regions = static_cast<int>(cfg.regions.size());
    const int lo = cfg.constraints.min_replicas * regions;
    const int hi = cfg.constraints.max_replicas * regions;

    StaticChoice best;
    bool have = false;
    std::vector<int> previous;
    sim::RunOptions ro;
    ro.keep_series = false;
    for (int total = lo; total <= hi; ++total) {
        std::vector<int> targets = proportional_targets(cfg, total);
        if (targets == previous) continue;
        previous = targets;
        scaling::StaticPolicy policy(targets);
        const sim::SimResult r = sim::run(trace, policy, cfg, ro);
        const auto& a = r.aggregates;
        const bool feasible = a.sla_violation_fraction <= max_violation;
        bool better = !have;
        if (have) {
            if (feasible != best.feasible)
                better = feasible;
            else if (feasible)
                better = a.cost_per_inference_usd < best.aggregates.cost_per_inference_usd;
            else
                better = a.sla_violation_fraction < best.aggregates.sla_violation_fraction;
        }
        if (better) {
            best = {targets, total, a, feasible};
            have = true;
        }
    }
    return best;
}

void check_policy_names(const std::vector<std::string>& names) {
    if (names.empty()) throw std::invalid_argument("no policies given");
    for (const auto& n : names)
        if (n != "static" && n != "threshold" && n != "dnn")
            throw std::invalid_argument("unknown policy '" + n + "' (expected static, threshold or dnn)");
}

std::unique_ptr<sim::ScalingPolicy> make_policy(const std::string& name, const std::vector<int>& static_targets,
                                                const CompareOptions& options, std::uint64_t seed) {
    if (name == "static") return std::make_unique<scaling::StaticPolicy>(static_targets);
    if (name == "threshold") return std::make_unique<scaling::ThresholdPolicy>();
    if (name == "dnn") {
        scaling::ScalerConfig sc = options.scaler;
        sc.seed = seed;
        return std::make_unique<scaling::DnnScalerPolicy>(sc, options.predictor, options.online_learning);
    }
    throw std::invalid_argument("unknown policy '" + name + "'");
}

PolicyMetrics to_metrics(const std::string& policy, const sim::Aggregates& a) {
    PolicyMetrics m;
    m.policy = policy;
    m.mean_utilization = a.mean_utilization;
    m.p95_latency_ms = a.p95_latency_ms;
    m.sla_violation_fraction = a.sla_violation_fraction;
    m.cost_per_inference_usd = a.cost_per_inference_usd;
    m.total_cost_usd = a.total_cost_usd;
    return m;
}

PairDelta delta(const PolicyMetrics& b, const PolicyMetrics& c) {
    auto lower_better = [](double base, double cand) { return base != 0.0 ? (base - cand) / base : 0.0; };
    PairDelta d;
    d.baseline = b.policy;
    d.candidate = c.policy;
    d.utilization = b.mean_utilization != 0.0 ? (c.mean_utilization - b.mean_utilization) / b.mean_utilization : 0.0;
    d.p95_latency = lower_better(b.p95_latency_ms, c.p95_latency_ms);
    d.cost_per_inference = lower_better(b.cost_per_inference_usd, c.cost_per_inference_usd);
    if (b.mean_adaptation_time_s && c.mean_adaptation_time_s)
        d.adaptation_time = lower_better(*b.mean_adaptation_time_s, *c.mean_adaptation_time_s);
    if (b.rollout_completion_time_s && c.rollout_completion_time_s)
        d.rollout_time = lower_better(*b.rollout_completion_time_s, *c.rollout_completion_time_s);
    return d;
}

ComparisonReport compare(const SimConfig& cfg, const workload::Trace& trace, const CompareOptions& options) {
    require_valid(cfg);
    check_policy_names(options.policies);
    if (options.seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (trace.empty()) throw std::invalid_argument("compare: empty trace");

    ComparisonReport report;
    const std::uint64_t trace_sum = workload::checksum(trace);
    if (std::find(options.policies.begin(), options.policies.end(), "static") != options.policies.end()) {
        const StaticChoice choice = best_static(cfg, trace, options.max_violation);
        report.static_targets = choice.targets;
        report.log.push_back("best static total=" + std::to_string(choice.total) +
                             " violation=" + std::to_string(choice.aggregates.sla_violation_fraction) +
                             (choice.feasible ? "" : " (no count meets the violation bound)"));
    }

    double mean_rps = 0.0;
    for (const auto& p : trace) mean_rps += p.rps;
    mean_rps /= static_cast<double>(trace.size());

    std::optional<double> rollout_time;
    if (options.measure_rollout) rollout_time = rollout_demo(cfg, 0.0, options.seeds.front()).result.completion_time_s;

    for (const auto& name : options.policies) {
        PolicyMetrics total;
        total.policy = name;
        double adapt_sum = 0.0;
        std::size_t adapt_n = 0;
        for (std::uint64_t seed : options.seeds) {
            auto policy = make_policy(name, report.static_targets, options, seed);
            const sim::SimResult r = sim::run(trace, *policy, cfg);
            const PolicyMetrics m = to_metrics(name, r.aggregates);
            total.mean_utilization += m.mean_utilization;
            total.p95_latency_ms += m.p95_latency_ms;
            total.sla_violation_fraction += m.sla_violation_fraction;
            total.cost_per_inference_usd += m.cost_per_inference_usd;
            total.total_cost_usd += m.total_cost_usd;
            total.trace_checksums.push_back(trace_sum);
            report.log.push_back("policy=" + name + " seed=" + std::to_string(seed) +
                                 " trace_checksum=" + std::to_string(trace_sum));

            if (options.measure_adaptation) {
                AdaptOptions ao;
                ao.base_rps = mean_rps;
                ao.step_to_rps = 5.0 * mean_rps;
                ao.seed = seed;
                auto fresh = make_policy(name, report.static_targets, options, seed);
                const AdaptResult ar = measure_adaptation(cfg, *fresh, ao);
                if (ar.adaptation_time_s) {
                    adapt_sum += *ar.adaptation_time_s;
                    ++adapt_n;
                }
            }
        }
        const double k = static_cast<double>(options.seeds.size());
        total.mean_utilization /= k;
        total.p95_latency_ms /= k;
        total.sla_violation_fraction /= k;
        total.cost_per_inference_usd /= k;
        total.total_cost_usd /= k;
        if (adapt_n) total.mean_adaptation_time_s = adapt_sum / static_cast<double>(adapt_n);
        total.rollout_completion_time_s = rollout_time;
        report.policies.push_back(std::move(total));
    }

    for (std::size_t i = 0; i < report.policies.size(); ++i)
        for (std::size_t j = 0; j < report.policies.size(); ++j)
            if (i != j) report.deltas.push_back(delta(report.policies[i], report.policies[j]));
    return report;
}

std::string to_json(const ComparisonReport& report) {
    json j;
    j["policies"] = json::array();
    for (const auto& p : report.policies) {
        j["policies"].push_back({{"policy", p.policy},
                                 {"mean_utilization", p.mean_utilization},
                                 {"p95_latency_ms", p.p95_latency_ms},
                                 {"sla_violation_fraction", p.sla_violation_fraction},
                                 {"cost_per_inference_usd", p.cost_per_inference_usd},
                                 {"total_cost_usd", p.total_cost_usd},
                                 {"mean_adaptation_time_s", opt_json(p.mean_adaptation_time_s)},
                                 {"rollout_completion_time_s", opt_json(p.rollout_completion_time_s)},
                                 {"trace_checksums", p.trace_checksums}});
    }
    j["deltas"] = json::array();
    for (const auto& d : report.deltas) {
        j["deltas"].push_back({{"baseline", d.baseline},
                               {"candidate", d.candidate},
                               {"utilization", d.utilization},
                               {"p95_latency", d.p95_latency},
                               {"cost_per_inference", d.cost_per_inference},
                               {"adaptation_time", opt_json(d.adaptation_time)},
                               {"rollout_time", opt_json(d.rollout_time)}});
    }
    j["static_targets"] = report.static_targets;
    j["log"] = report.log;
    return j.dump(2);
}

std::string to_csv(const ComparisonReport& report) {
    std::ostringstream out;
    out.precision(10);
    out << "policy,mean_utilization,p95_latency_ms,sla_violation_fraction,cost_per_inference_usd,"
           "mean_adaptation_time_s,rollout_completion_time_s\n";
    auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& p : report.policies)
        out << p.policy << ',' << p.mean_utilization << ',' << p.p95_latency_ms << ',' << p.sla_violation_fraction
            << ',' << p.cost_per_inference_usd << ',' << opt(p.mean_adaptation_time_s) << ','
            << opt(p.rollout_completion_time_s) << '\n';
    return out.str();
}

std::vector<SweepRow> sweep(const SimConfig& cfg, double from_rps, double to_rps, std::size_t steps,
                            double duration_s, const scaling::ScalerConfig& scaler,
                            const scaling::LoadPredictor* predictor) {
    require_valid(cfg);
    if (!(from_rps > 0.0)) throw std::invalid_argument("from-rps must be > 0");
    if (from_rps > to_rps) throw std::invalid_argument("from-rps must be <= to-rps");
    if (steps == 0) throw std::invalid_argument("steps must be >= 1");
    if (!(duration_s >= 2.0 * cfg.dt_s)) throw std::invalid_argument("sweep duration too short");

    std::vector<SweepRow> rows;
    for (std::size_t k = 0; k < steps; ++k) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
        const double rps = from_rps * std::pow(to_rps / from_rps, frac);
        const auto trace = workload::constant_trace(rps, static_cast<std::int64_t>(duration_s), cfg.dt_s);
        std::optional<scaling::LoadPredictor> p;
        if (predictor) p = *predictor;
        scaling::DnnScalerPolicy policy(scaler, p, false);
        const sim::SimResult r = sim::run(trace, policy, cfg);

        SweepRow row;
        row.rps = rps;
        const std::size_t half = r.series.size() / 2;
        double replicas = 0.0;
        for (std::size_t i = half; i < r.series.size(); ++i) replicas += r.series[i].target_replicas;
        row.steady_replicas = replicas / static_cast<double>(r.series.size() - half);
        row.p95_latency_ms = r.aggregates.p95_latency_ms;
        row.sla_violation_fraction = r.aggregates.sla_violation_fraction;
        row.mean_utilization = r.aggregates.mean_utilization;
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "rps,steady_replicas,p95_ms,sla_violation_fraction,mean_utilization\n";
    for (const auto& r : rows)
        out << r.rps << ',' << r.steady_replicas << ',' << r.p95_latency_ms << ',' << r.sla_violation_fraction << ','
            << r.mean_utilization << '\n';
    return out.str();
}

workload::Trace step_trace(const AdaptOptions& o, double dt_s) {
    if (!(o.base_rps > 0.0) || !(o.step_to_rps >= 0.0)) throw std::invalid_argument("adapt: rates must be positive");
    if (!(o.step_at_s > 0.0 && o.step_at_s < o.duration_s))
        throw std::invalid_argument("adapt: step-at must lie inside the run");
    workload::PatternSpec p;
    p.base_rps = o.base_rps;
    p.diurnal_amplitude = 0.0;
    p.noise_cv = o.noise_cv;
    Rng rng(o.seed);
    auto trace = workload::generate_trace(p, static_cast<std::int64_t>(o.duration_s), dt_s, rng);
    const double factor = o.step_to_rps / o.base_rps;
    for (auto& pt : trace)
        if (static_cast<double>(pt.t_s) >= o.step_at_s) pt.rps *= factor;
    return trace;
}

AdaptResult measure_adaptation(const SimConfig& cfg, sim::ScalingPolicy& policy, const AdaptOptions& options) {
    const auto trace = step_trace(options, cfg.dt_s);
    AdaptResult out;
    out.trace_checksum = workload::checksum(trace);
    out.run = sim::run(trace, policy, cfg);
    const auto& series = out.run.series;

    std::size_t step_idx = 0;
    while (step_idx < series.size() && series[step_idx].t_s < options.step_at_s) ++step_idx;
    if (options.step_to_rps > options.base_rps) {
        const double cap =
            step_idx > 0 ? series[step_idx - 1].serving_replicas * cfg.model.per_replica_rps : 0.0;
        out.direction = cap >= options.step_to_rps ? 0 : 1;
    } else if (options.step_to_rps < options.base_rps) {
        out.direction = -1;
    }

    if (out.direction == 0) {
        out.adaptation_time_s = 0.0;
    } else {
        // Records at one issue time form one decision.
        const auto& recs = out.run.decisions;
        for (std::size_t i = 0; i < recs.size();) {
            std::size_t j = i;
            int change = 0;
            bool held = false;
            while (j < recs.size() && recs[j].t_s == recs[i].t_s) {
                held = held || recs[j].held;
                if (!recs[j].held) change += recs[j].target - recs[j].current;
                ++j;
            }
            if (recs[i].t_s > options.step_at_s && !held && change * out.direction > 0) {
                out.adaptation_time_s = recs[i].t_s - options.step_at_s;
                break;
            }
            i = j;
        }
    }

    const double sla = cfg.constraints.sla_p95_ms;
    std::optional<std::size_t> violated;
    for (std::size_t i = step_idx; i < series.size(); ++i) {
        if (!violated) {
            if (series[i].p95_latency_ms > sla) violated = i;
        } else if (series[i].p95_latency_ms <= sla) {
            out.recovery_time_s = series[i].t_s - options.step_at_s;
            break;
        }
    }
    if (!violated) out.recovery_time_s = 0.0;
    return out;
}

std::string adapt_json(const AdaptResult& r, const AdaptOptions& o) {
    json j{{"base_rps", o.base_rps},
           {"step_at_s", o.step_at_s},
           {"step_to_rps", o.step_to_rps},
           {"seed", o.seed},
           {"direction", r.direction},
           {"adaptation_time_s", opt_json(r.adaptation_time_s)},
           {"recovery_time_s", opt_json(r.recovery_time_s)},
           {"trace_checksum", r.trace_checksum},
           {"sla_violation_fraction", r.run.aggregates.sla_violation_fraction}};
    return j.dump(2);
}

RolloutDemo rollout_demo(const SimConfig& cfg, double fault_rate, std::uint64_t seed,
                         const rollout::CanaryConfig& canary, double baseline_error_rate) {
    if (!(fault_rate >= 0.0 && fault_rate <= 1.0)) throw std::invalid_argument("fault-rate must lie in [0,1]");
    rollout::ModelVariant base{cfg.model, baseline_error_rate};
    rollout::ModelVariant cand{cfg.model, std::max(baseline_error_rate, fault_rate)};
    rollout::RolloutOptions opts;
    opts.seed = seed;
    RolloutDemo demo;
    demo.result = rollout::run_rollout(cfg, base, cand, rollout::DeploymentStrategy::Canary, canary, opts);
    demo.events_jsonl = rollout::events_jsonl(demo.result.events);
    demo.summary = rollout::summary_json(demo.result);
    return demo;
}

ImportanceReport importance(const scaling::LoadPredictor& predictor, const Dataset& data, std::uint64_t seed,
                            std::size_t repeats) {
    std::vector<metrics::MetricWindow> zw;
    std::vector<nn::Prediction> zt;
    for (std::size_t i = 0; i < data.size(); ++i) {
        zw.push_back(predictor.normalizer.normalize(data.windows[i]));
        zt.push_back(predictor.normalizer.normalize_targets(data.targets[i]));
    }
    ImportanceReport r;
    r.importance = nn::permutation_importance(predictor.net, zw, zt, seed, repeats);
    r.windows = zw.size();
    return r;
}

std::string importance_json(const ImportanceReport& r) {
    const ReferenceImportance ref;
    json j;
    for (std::size_t g = 0; g < nn::kFeatureGroups; ++g)
        j["importance"][std::string(nn::to_string(static_cast<nn::FeatureGroup>(g)))] = r.importance[g];
    j["windows"] = r.windows;
    j["reference_reported_not_a_target"] = {{"resource", ref.resource},
                                            {"performance", ref.performance},
                                            {"workload", ref.workload},
                                            {"network", ref.network}};
    return j.dump(2);
}

Dataset resource_driven_dataset(std::size_t rows, std::uint64_t seed, std::size_t window) {
    Rng rng(seed);
    Dataset d;
    for (std::size_t i = 0; i < rows; ++i) {
        metrics::MetricWindow w(window);
        for (double& v : w.resource) v = rng.normal();
        for (double& v : w.performance) v = rng.normal();
        for (double& v : w.deploy) v = rng.normal();
        double cpu = 0.0, mem = 0.0, gpu = 0.0;
        for (std::size_t t = 0; t < window; ++t) {
            cpu += w.res(t, metrics::kCpu);
            mem += w.res(t, metrics::kMem);
            gpu += w.res(t, metrics::kGpu);
        }
        const double n = static_cast<double>(window);
        d.windows.push_back(std::move(w));
        d.targets.push_back({cpu / n + mem / n, gpu / n - cpu / n, 0.5 * mem / n + gpu / n});
        d.episode.push_back(0);
    }
    return d;
}

}  // namespace llmops::experiments
