#include "llmops/autoscaler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace llmops::scaling {

void validate(const ScalerConfig& c) {
    auto fail = [](const char* msg) { throw std::invalid_argument(std::string("scaler config: ") + msg); };
    if (c.w_latency < 0.0 || c.w_cost < 0.0 || c.w_utilization < 0.0) fail("weights must be >= 0");
    if (c.w_latency + c.w_cost + c.w_utilization <= 0.0) fail("weights must not all be zero");
    if (!(c.target_utilization > 0.0 && c.target_utilization < 1.0)) fail("target_utilization must lie in (0,1)");
    if (!(c.horizon_s > 0.0)) fail("horizon_s must be > 0");
    if (!(c.cooldown_s >= 0.0)) fail("cooldown_s must be >= 0");
    if (c.lead_s && !(*c.lead_s >= 0.0)) fail("lead_s must be >= 0");
    if (!(c.trend_window_s >= 0.0)) fail("trend_window_s must be >= 0");
    if (!(c.max_trend_fraction >= 0.0)) fail("max_trend_fraction must be >= 0");
    if (!(c.scale_down_window_s >= 0.0)) fail("scale_down_window_s must be >= 0");
    if (c.retrain_every == 0 || c.buffer_cap == 0) fail("retrain_every and buffer_cap must be > 0");
    if (c.retrain_batch == 0) fail("retrain_batch must be > 0");
    if (!(c.season_period_s > 0.0)) fail("season_period_s must be > 0");
    if (!(c.ewma_half_life_steps > 0.0)) fail("ewma_half_life_steps must be > 0");
}

metrics::Targets LoadPredictor::predict_raw(const metrics::MetricWindow& raw_window) const {
    const auto z = nn::predict(net, normalizer.normalize(raw_window));
    return normalizer.denormalize_targets(z);
}

namespace {

double ewma(std::span<const double> values, double half_life, std::size_t window) {
    if (values.empty()) throw std::invalid_argument("analyze_current_load: empty history");
    const std::size_t n = std::min(window, values.size());
    const double decay = std::pow(0.5, 1.0 / half_life);
    double weight = 1.0;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t age = 0; age < n; ++age) {
        num += weight * values[values.size() - 1 - age];
        den += weight;
        weight *= decay;
    }
    return num / den;
}

std::size_t steps_for(double seconds, double dt) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seconds / dt)));
}

}  // namespace

double analyze_current_load(std::span<const sim::StepOutcome> history, double half_life_steps, std::size_t window) {
    if (history.empty()) throw std::invalid_argument("analyze_current_load: empty history");
    const std::size_t n = std::min(window, history.size());
    std::vector<double> rates;
    rates.reserve(n);
    for (std::size_t i = history.size() - n; i < history.size(); ++i) rates.push_back(history[i].arrivals_rps());
    return ewma(rates, half_life_steps, window);
}

LoadEstimate predict_future_load(const LoadPredictor* predictor, const metrics::MetricWindow* raw_window,
                                 std::span<const double> arrivals, std::size_t period_steps, std::size_t horizon_steps,
                                 const ScalerConfig& cfg) {
    if (arrivals.empty()) throw std::invalid_argument("predict_future_load: empty history");
    LoadEstimate est;
    est.current_rps = ewma(arrivals, cfg.ewma_half_life_steps, metrics::kWindowLength);
    horizon_steps = std::max<std::size_t>(1, horizon_steps);
    period_steps = std::max<std::size_t>(1, period_steps);

    double predicted = arrivals.back();
    est.source = LoadSource::LastValue;
    if (predictor && raw_window && predictor->normalizer.ready()) {
        predicted = predictor->predict_raw(*raw_window)[0];
        est.source = LoadSource::Dnn;
    } else if (arrivals.size() >= 2 * period_steps) {
        // Bounded fit span keeps per-step cost independent of run length.
        const std::size_t span = std::min(arrivals.size(), 4 * period_steps);
        const auto path = metrics::holt_winters_path(arrivals.subspan(arrivals.size() - span), period_steps,
                                                     horizon_steps, cfg.holt_winters);
        predicted = std::accumulate(path.begin(), path.end(), 0.0) / static_cast<double>(horizon_steps);
        est.source = LoadSource::HoltWinters;
    } else if (arrivals.size() >= period_steps) {
        double sum = 0.0;
        for (std::size_t h = 1; h <= horizon_steps; ++h)
            sum += metrics::seasonal_naive_forecast(arrivals, period_steps, h);
        predicted = sum / static_cast<double>(horizon_steps);
        est.source = LoadSource::SeasonalNaive;
    }
    est.predicted_rps = std::isfinite(predicted) ? std::max(0.0, predicted) : 0.0;
    return est;
}

double arrival_trend(std::span<const double> arrivals, double dt_s, double window_s) {
    const auto n = std::min(arrivals.size(), static_cast<std::size_t>(std::max(0.0, window_s / dt_s)));
    if (n < 2) return 0.0;
    return metrics::trend_slope(arrivals.last(n)) / dt_s;
}

double effective_lead_s(const ScalerConfig& cfg, const SimConfig& sim) {
    if (cfg.lead_s) return *cfg.lead_s;
    const double cooldown = std::max(cfg.cooldown_s, sim.constraints.cooldown_s);
    return sim.model.startup_s + cooldown;
}

double planning_rps(const LoadEstimate& est, double trend, const ScalerConfig& cfg, const SimConfig& sim) {
    const double extra = std::max(0.0, trend) * effective_lead_s(cfg, sim);
    const double ahead = est.predicted_rps + std::min(extra, cfg.max_trend_fraction * est.predicted_rps);
    return std::max(ahead, est.current_rps);
}

ScoreBreakdown score_candidate(int replicas, double predicted_rps, std::size_t region, const SimConfig& sim,
                               const ScalerConfig& cfg) {
    const double cap = capacity_rps(static_cast<std::size_t>(std::max(replicas, 0)), sim.model);
    const double util = cap > 0.0 ? predicted_rps / cap : (predicted_rps > 0.0 ? 1e9 : 0.0);
    double backlog = 0.0;
    if (util > 1.0) backlog = (predicted_rps - cap) * cfg.horizon_s;
    const double latency = sim::kP95OverMean * sim::mean_latency_ms(sim, region, backlog, cap);
    const double sla = sim.constraints.sla_p95_ms;

    ScoreBreakdown s;
    s.latency_penalty = cfg.w_latency * std::max(0.0, latency - sla) / sla;
    s.cost_term = cfg.w_cost * static_cast<double>(replicas) / static_cast<double>(sim.constraints.max_replicas);
    s.utilization_term = cfg.w_utilization * std::abs(util - cfg.target_utilization);
    return s;
}

std::pair<int, int> candidate_range(int current, const Constraints& c) {
    const int step = static_cast<int>(std::ceil(c.max_step_fraction * static_cast<double>(std::max(current, 0))));
    return {std::max(c.min_replicas, current - step), std::min(c.max_replicas, current + step)};
}

ScalingDecision compute_scaling_decision(const LoadEstimate& estimate, const sim::ClusterState& state,
                                         const SimConfig& sim, const ScalerConfig& cfg,
                                         std::optional<double> last_change_s) {
    if (state.regions.size() != sim.regions.size()) throw std::invalid_argument("state/config region mismatch");
    ScalingDecision d;
    d.issued_at_s = state.now_s;
    d.source = estimate.source;
    const std::vector<int> current = state.targets();
    bool changes = false;
    for (std::size_t r = 0; r < sim.regions.size(); ++r) {
        const auto [lo, hi] = candidate_range(current[r], sim.constraints);
        if (lo > hi)
            throw std::runtime_error("region '" + sim.regions[r].name + "': empty candidate set [" +
                                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
        const double predicted = estimate.predicted_rps * sim.regions[r].traffic_weight;
        int best = lo;
        ScoreBreakdown best_score = score_candidate(lo, predicted, r, sim, cfg);
        for (int n = lo + 1; n <= hi; ++n) {
            const ScoreBreakdown s = score_candidate(n, predicted, r, sim, cfg);
            if (s.total() < best_score.total()) {
                best = n;
                best_score = s;
            }
        }
        d.target_replicas.push_back(best);
        d.score_breakdown.push_back(best_score);
        changes = changes || best != current[r];
    }

    const double cooldown = std::max(cfg.cooldown_s, sim.constraints.cooldown_s);
    if (changes && last_change_s && state.now_s - *last_change_s < cooldown) {
        d.held = true;
        d.target_replicas = current;
    }
    return d;
}

double reward(std::span<const sim::StepOutcome> outcomes, const SimConfig& sim, const ScalerConfig& cfg) {
    if (outcomes.empty()) throw std::invalid_argument("reward: empty window");
    double cost = 0.0;
    double seconds = 0.0;
    for (const auto& o : outcomes) {
        cost += o.cost_delta_usd;
        seconds += o.dt_s;
    }
    const double rate = cost / seconds * 3600.0;
    double reference = 0.0;
    if (sim.constraints.budget_usd_per_hour) {
        reference = *sim.constraints.budget_usd_per_hour;
    } else {
        for (const Region& region : sim.regions)
            reference += nodes_needed(sim.constraints.max_replicas, sim.node) * sim.node.cost_per_hour_usd *
                         region.price_multiplier;
    }
    return calculate_efficiency(outcomes, sim.constraints.sla_p95_ms) - cfg.w_cost * rate / reference;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be > 0");
}

void ReplayBuffer::push(Experience e) {
    items_.push_back(std::move(e));
    if (items_.size() > capacity_) items_.pop_front();
    ++since_retrain_;
}

RetrainReport record_and_maybe_retrain(ReplayBuffer& buffer, Experience experience, LoadPredictor& predictor,
                                       nn::OptimizerState& opt, const ScalerConfig& cfg, Rng& rng) {
    buffer.push(std::move(experience));
    RetrainReport report;
    if (buffer.since_retrain() < cfg.retrain_every) return report;

    double total = 0.0;
    nn::TrainBatch batch;
    for (std::size_t s = 0; s < cfg.retrain_steps; ++s) {
        batch.windows.clear();
        batch.targets.clear();
        for (std::size_t i = 0; i < cfg.retrain_batch; ++i) {
            const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(buffer.size()) - 1));
            batch.windows.push_back(buffer.at(idx).window);
            batch.targets.push_back(buffer.at(idx).targets);
        }
        total += nn::train_step(predictor.net, opt, batch);
    }
    buffer.mark_retrained();
    report.retrained = true;
    report.mean_loss = cfg.retrain_steps ? total / static_cast<double>(cfg.retrain_steps) : 0.0;
    return report;
}

StaticPolicy::StaticPolicy(std::vector<int> targets) : targets_(std::move(targets)) {}

void StaticPolicy::validate_for(const SimConfig& cfg) const {
    if (targets_.size() != cfg.regions.size())
        throw sim::ConstraintViolation("static policy has " + std::to_string(targets_.size()) + " targets for " +
                                       std::to_string(cfg.regions.size()) + " regions");
    for (int t : targets_)
        if (t < cfg.constraints.min_replicas || t > cfg.constraints.max_replicas)
            throw sim::ConstraintViolation("static target " + std::to_string(t) + " outside [" +
                                           std::to_string(cfg.constraints.min_replicas) + ", " +
                                           std::to_string(cfg.constraints.max_replicas) + "]");
}

std::vector<int> StaticPolicy::initial_targets(const SimConfig& cfg, double) const {
    validate_for(cfg);
    return targets_;
}

std::optional<ScalingDecision> StaticPolicy::decide(const sim::PolicyContext& ctx) {
    ScalingDecision d;
    d.target_replicas = targets_;
    d.issued_at_s = ctx.state.now_s;
    return d;
}

ThresholdPolicy::ThresholdPolicy(double upper, double lower, double cooldown_s, std::size_t window_steps)
    : upper_(upper), lower_(lower), cooldown_s_(cooldown_s), window_steps_(std::max<std::size_t>(1, window_steps)) {
    if (!(lower < upper)) throw std::invalid_argument("threshold policy: lower must be < upper");
}

std::optional<ScalingDecision> ThresholdPolicy::decide(const sim::PolicyContext& ctx) {
    if (ctx.history.empty()) return std::nullopt;
    const std::size_t n = std::min(window_steps_, ctx.history.size());
    const auto recent = ctx.history.subspan(ctx.history.size() - n);
    const Constraints& c = ctx.cfg.constraints;

    ScalingDecision d;
    d.issued_at_s = ctx.state.now_s;
    const std::vector<int> current = ctx.state.targets();
    bool changes = false;
    for (std::size_t r = 0; r < current.size(); ++r) {
        double util = 0.0;
        for (const auto& o : recent) util += o.regions[r].utilization;
        util /= static_cast<double>(n);
        int target = current[r];
        if (util > upper_)
            target = current[r] + 1;
        else if (util < lower_)
            target = current[r] - 1;
        target = std::clamp(target, c.min_replicas, c.max_replicas);
        d.target_replicas.push_back(target);
        changes = changes || target != current[r];
    }
    const double cooldown = std::max(cooldown_s_, c.cooldown_s);
    if (changes) {
        if (last_change_s_ && ctx.state.now_s - *last_change_s_ < cooldown) {
            d.held = true;
            d.target_replicas = current;
        } else {
            last_change_s_ = ctx.state.now_s;
        }
    }
    return d;
}

DnnScalerPolicy::DnnScalerPolicy(ScalerConfig cfg, std::optional<LoadPredictor> predictor, bool online_learning)
    : cfg_(cfg), predictor_(std::move(predictor)), online_(online_learning), buffer_(cfg.buffer_cap), rng_(cfg.seed) {
    validate(cfg_);
    if (predictor_ && online_) opt_ = nn::OptimizerState::for_net(predictor_->net);
}

std::optional<ScalingDecision> DnnScalerPolicy::decide(const sim::PolicyContext& ctx) {
    const auto& hist = ctx.history;
    if (hist.empty()) return std::nullopt;
    if (arrivals_.size() > hist.size()) arrivals_.clear();
    while (arrivals_.size() < hist.size()) arrivals_.push_back(hist[arrivals_.size()].arrivals_rps());

    const double dt = ctx.cfg.dt_s;
    const std::size_t horizon = steps_for(cfg_.horizon_s, dt);
    const std::size_t period = steps_for(cfg_.season_period_s, dt);

    std::optional<metrics::MetricWindow> raw;
    if (predictor_ && hist.size() >= metrics::kWindowLength) raw = metrics::build_raw_window(hist, ctx.cfg);

    LoadEstimate est = predict_future_load(predictor_ ? &*predictor_ : nullptr, raw ? &*raw : nullptr, arrivals_,
                                           period, horizon, cfg_);
    est.current_rps = analyze_current_load(hist, cfg_.ewma_half_life_steps);
    estimates_.push_back(est);

    if (online_ && predictor_ && raw && predictor_->normalizer.ready()) {
        awaiting_.emplace_back(hist.size(), predictor_->normalizer.normalize(*raw));
        while (!awaiting_.empty() && hist.size() >= awaiting_.front().first + horizon) {
            const std::size_t start = awaiting_.front().first;
            const auto realized = metrics::realized_targets(hist.subspan(start, horizon), ctx.cfg);
            Experience e{std::move(awaiting_.front().second), predictor_->normalizer.normalize_targets(realized)};
            awaiting_.pop_front();
            if (record_and_maybe_retrain(buffer_, std::move(e), *predictor_, *opt_, cfg_, rng_).retrained)
                ++retrains_;
        }
    }

    const double now = ctx.state.now_s;
    const double drain_rps =
        hist.empty() || cfg_.backlog_drain_s <= 0.0 ? 0.0 : hist.back().backlog / cfg_.backlog_drain_s;
    const double wanted =
        planning_rps(est, arrival_trend(arrivals_, dt, cfg_.trend_window_s), cfg_, ctx.cfg) + drain_rps;
    while (!recent_plans_.empty() && recent_plans_.front().first < now - cfg_.scale_down_window_s)
        recent_plans_.pop_front();
    while (!recent_plans_.empty() && recent_plans_.back().second <= wanted) recent_plans_.pop_back();
    recent_plans_.emplace_back(now, wanted);
    LoadEstimate plan = est;
    plan.predicted_rps = recent_plans_.front().second;
    ScalingDecision d = compute_scaling_decision(plan, ctx.state, ctx.cfg, cfg_, last_change_s_);
    if (!d.held && d.target_replicas != ctx.state.targets()) last_change_s_ = ctx.state.now_s;
    return d;
}

}  // namespace llmops::scaling
