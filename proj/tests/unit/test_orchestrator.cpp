#include <gtest/gtest.h>

#include <cmath>

#include "llmops/orchestrator.hpp"
#include "llmops/rng.hpp"

using namespace llmops;
using namespace llmops::rollout;

namespace {

HealthSample sample(std::uint64_t n, std::uint64_t errors, double p95 = 150.0) {
    HealthSample s;
    s.n_requests = n;
    s.n_errors = errors;
    s.latency_samples.assign(20, p95);
    return s;
}

HealthReport verdict(Verdict v) {
    HealthReport h;
    h.verdict = v;
    return h;
}

RolloutState analyzing(double fraction, DeploymentStrategy strategy = DeploymentStrategy::Canary) {
    RolloutState s;
    s.strategy = strategy;
    s.phase = Phase::Analyzing;
    s.traffic_fraction = fraction;
    return s;
}

constexpr Phase kPhases[] = {Phase::Pending,   Phase::CanaryDeployed, Phase::Analyzing, Phase::Promoting,
                             Phase::Completed, Phase::RollingBack,    Phase::RolledBack};
constexpr Verdict kVerdicts[] = {Verdict::Healthy, Verdict::Unhealthy, Verdict::Inconclusive};

}  // namespace

TEST(Strategy, TreePaths) {
    DeploymentContext ctx;
    ctx.risk_tolerance = RiskTolerance::Low;
    ctx.spare_capacity_fraction = 0.05;
    EXPECT_EQ(select_strategy(ctx), DeploymentStrategy::Canary);

    ctx = {};
    ctx.spare_capacity_fraction = 1.2;
    ctx.latency_sensitivity = LatencySensitivity::Strict;
    EXPECT_EQ(select_strategy(ctx), DeploymentStrategy::BlueGreen);

    ctx = {};
    ctx.model.mem_per_replica_gb = 640;
    ctx.region_count = 3;
    ctx.spare_capacity_fraction = 0.0;
    EXPECT_EQ(select_strategy(ctx), DeploymentStrategy::Rolling);

    ctx = {};
    ctx.risk_tolerance = RiskTolerance::High;
    ctx.spare_capacity_fraction = 0.5;
    EXPECT_EQ(select_strategy(ctx), DeploymentStrategy::Shadow);

    ctx.risk_tolerance = RiskTolerance::Medium;
    EXPECT_EQ(select_strategy(ctx), DeploymentStrategy::Rolling);
}

TEST(Strategy, TreeIsReplaceableData) {
    StrategyTree tree;
    tree.rules.push_back({"many regions", [](const DeploymentContext& c) { return c.region_count > 3; },
                          DeploymentStrategy::Shadow});
    tree.fallback = DeploymentStrategy::BlueGreen;
    DeploymentContext ctx;
    EXPECT_EQ(select_strategy(ctx, tree), DeploymentStrategy::BlueGreen);
    ctx.region_count = 5;
    EXPECT_EQ(select_strategy(ctx, tree), DeploymentStrategy::Shadow);
}

TEST(Strategy, TotalOverRandomContexts) {
    Rng rng(1);
    for (int k = 0; k < 1000; ++k) {
        DeploymentContext ctx;
        ctx.risk_tolerance = static_cast<RiskTolerance>(rng.uniform_int(0, 2));
        ctx.latency_sensitivity = static_cast<LatencySensitivity>(rng.uniform_int(0, 1));
        ctx.region_count = static_cast<int>(rng.uniform_int(1, 8));
        ctx.spare_capacity_fraction = 2 * rng.uniform();
        ctx.model.mem_per_replica_gb = 1 + 500 * rng.uniform();
        const auto a = select_strategy(ctx), b = select_strategy(ctx);
        ASSERT_EQ(a, b);
    }
    DeploymentContext bad;
    bad.region_count = 0;
    EXPECT_THROW(validate(bad), std::invalid_argument);
}

TEST(Health, ZStatisticByHand) {
    const double p1 = 0.05, p2 = 0.005, pooled = 55.0 / 2000.0;
    const double z = (p1 - p2) / std::sqrt(pooled * (1 - pooled) * (2.0 / 1000));
    EXPECT_NEAR(two_proportion_z(50, 1000, 5, 1000), z, 1e-12);
    EXPECT_NEAR(z, 6.15, 0.01);
    EXPECT_EQ(two_proportion_z(0, 1000, 0, 1000), 0.0);
    EXPECT_EQ(two_proportion_z(0, 0, 0, 10), 0.0);
}

TEST(Health, Examples) {
    const CanaryConfig cfg;
    const auto bad = analyze_canary_health(sample(1000, 50), sample(1000, 5), cfg);
    EXPECT_EQ(bad.verdict, Verdict::Unhealthy);
    EXPECT_NEAR(bad.z_errors, 6.15, 0.01);
    EXPECT_EQ(analyze_canary_health(sample(1000, 5), sample(1000, 5), cfg).verdict, Verdict::Healthy);
    EXPECT_EQ(analyze_canary_health(sample(50, 0), sample(1000, 5), cfg).verdict, Verdict::Inconclusive);
}

TEST(Health, LatencyTriggerAndPracticalMargin) {
    const CanaryConfig cfg;
    EXPECT_EQ(analyze_canary_health(sample(1000, 5, 190), sample(1000, 5, 150), cfg).verdict, Verdict::Unhealthy);
    EXPECT_EQ(analyze_canary_health(sample(1000, 5, 175), sample(1000, 5, 150), cfg).verdict, Verdict::Healthy);
    // Significant but tiny: 0.0 vs 0.03% error on huge samples stays healthy.
    EXPECT_EQ(analyze_canary_health(sample(10'000'000, 3000), sample(10'000'000, 0), cfg).verdict, Verdict::Healthy);
}

TEST(Health, SymmetricOnIdenticalSamples) {
    Rng rng(2);
    const CanaryConfig cfg;
    for (int k = 0; k < 200; ++k) {
        const auto n = static_cast<std::uint64_t>(rng.uniform_int(100, 100000));
        const auto e = static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) / 10));
        const auto s = sample(n, e, 50 + 300 * rng.uniform());
        ASSERT_EQ(analyze_canary_health(s, s, cfg).verdict, Verdict::Healthy);
    }
}

TEST(Tick, Examples) {
    const CanaryConfig cfg;
    auto s = rollout_tick(analyzing(0.05), verdict(Verdict::Healthy), cfg, 10);
    EXPECT_EQ(s.phase, Phase::Promoting);
    EXPECT_DOUBLE_EQ(s.traffic_fraction, 0.10);

    s = rollout_tick(analyzing(0.8), verdict(Verdict::Healthy), cfg, 10);
    EXPECT_EQ(s.phase, Phase::Completed);
    EXPECT_EQ(s.traffic_fraction, 1.0);

    for (double f : {0.05, 0.4, 1.0}) {
        s = rollout_tick(analyzing(f), verdict(Verdict::Unhealthy), cfg, 10);
        EXPECT_EQ(s.phase, Phase::RollingBack);
        EXPECT_EQ(s.traffic_fraction, 0.0);
        s = rollout_tick(s, verdict(Verdict::Healthy), cfg, 11);
        EXPECT_EQ(s.phase, Phase::RolledBack);
    }

    s = rollout_tick(analyzing(0.2), verdict(Verdict::Inconclusive), cfg, 10);
    EXPECT_EQ(s.phase, Phase::Analyzing);
    EXPECT_EQ(s.traffic_fraction, 0.2);
    EXPECT_EQ(s.health_history.size(), 1u);
}

TEST(Tick, TerminalPhasesThrow) {
    RolloutState s;
    s.phase = Phase::Completed;
    EXPECT_THROW(rollout_tick(s, {}, {}, 0), RolloutError);
    s.phase = Phase::RolledBack;
    EXPECT_THROW(rollout_tick(s, {}, {}, 0), RolloutError);
}

TEST(Tick, EveryPhaseVerdictPairIsLegal) {
    const CanaryConfig cfg;
    for (auto strategy : {DeploymentStrategy::Canary, DeploymentStrategy::BlueGreen, DeploymentStrategy::Rolling,
                          DeploymentStrategy::Shadow}) {
        for (Phase p : kPhases) {
            for (Verdict v : kVerdicts) {
                RolloutState s = analyzing(0.25, strategy);
                s.phase = p;
                if (is_terminal(p)) {
                    EXPECT_THROW(rollout_tick(s, verdict(v), cfg, 1), RolloutError);
                    continue;
                }
                const auto next = rollout_tick(s, verdict(v), cfg, 1);
                ASSERT_FALSE(next.events.empty());
                for (const auto& e : next.events) EXPECT_TRUE(is_legal_transition(e.from, e.phase));
            }
        }
    }
}

TEST(Tick, FuzzedSequences) {
    const CanaryConfig cfg;
    Rng rng(3);
    for (int run = 0; run < 2000; ++run) {
        RolloutState s;
        s.strategy = static_cast<DeploymentStrategy>(rng.uniform_int(0, 3));
        bool rolled = false;
        double prev_fraction = 0;
        for (int t = 0; t < 40 && !is_terminal(s.phase); ++t) {
            const Verdict v = kVerdicts[rng.uniform_int(0, 2)];
            s = rollout_tick(std::move(s), verdict(v), cfg, t);
            rolled = rolled || s.phase == Phase::RollingBack;
            if (rolled) {
                ASSERT_NE(s.phase, Phase::Completed);
                ASSERT_EQ(s.traffic_fraction, 0.0);
            } else {
                ASSERT_GE(s.traffic_fraction, prev_fraction);
            }
            ASSERT_GE(s.traffic_fraction, 0.0);
            ASSERT_LE(s.traffic_fraction, cfg.max_fraction);
            prev_fraction = s.traffic_fraction;
        }
        for (const auto& e : s.events) ASSERT_TRUE(is_legal_transition(e.from, e.phase));
        if (s.strategy == DeploymentStrategy::Shadow) ASSERT_NE(s.phase, Phase::Completed);
    }
}

TEST(Pace, StrategiesAdvanceAsDocumented) {
    const CanaryConfig cfg;
    EXPECT_EQ(first_fraction(DeploymentStrategy::Canary, cfg), 0.05);
    EXPECT_EQ(next_fraction(DeploymentStrategy::Canary, 0.05, cfg), 0.1);
    EXPECT_EQ(next_fraction(DeploymentStrategy::BlueGreen, 0.05, cfg), 1.0);
    EXPECT_EQ(first_fraction(DeploymentStrategy::Rolling, cfg), 0.25);
    EXPECT_EQ(next_fraction(DeploymentStrategy::Rolling, 0.25, cfg), 0.5);
    EXPECT_EQ(first_fraction(DeploymentStrategy::Shadow, cfg), 0.0);
    CanaryConfig bad;
    bad.growth_factor = 1.0;
    EXPECT_THROW(validate(bad), std::invalid_argument);
    bad = {};
    bad.initial_fraction = 1.0;
    EXPECT_THROW(validate(bad), std::invalid_argument);
}

TEST(Rollout, FaultFreeCompletesInFiveWindows) {
    const auto sim = default_config();
    const CanaryConfig cfg;
    const auto r = run_rollout(sim, {sim.model, 0.005}, {sim.model, 0.005}, DeploymentStrategy::Canary, cfg);
    EXPECT_EQ(r.final_phase, Phase::Completed);
    EXPECT_EQ(r.windows_analyzed, 5u);
    ASSERT_TRUE(r.completion_time_s.has_value());
    EXPECT_DOUBLE_EQ(*r.completion_time_s, 5 * cfg.analysis_window_s);
}

TEST(Rollout, FaultyCandidateRollsBackQuickly) {
    const auto sim = default_config();
    const CanaryConfig cfg;
    RolloutOptions opts;
    int quick = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        opts.seed = seed;
        const auto r = run_rollout(sim, {sim.model, 0.005}, {sim.model, 0.05}, DeploymentStrategy::Canary, cfg, opts);
        ASSERT_EQ(r.final_phase, Phase::RolledBack);
        quick += r.windows_analyzed <= 2;
    }
    EXPECT_EQ(quick, 20);
}

TEST(Rollout, TrickleTrafficStaysInconclusive) {
    const auto sim = default_config();
    CanaryConfig cfg;
    cfg.min_requests = 1'000'000;
    RolloutOptions opts;
    opts.max_duration_s = 1200;
    const auto r = run_rollout(sim, {sim.model, 0.005}, {sim.model, 0.005}, DeploymentStrategy::Canary, cfg, opts);
    EXPECT_EQ(r.final_phase, Phase::Analyzing);
    EXPECT_FALSE(r.completion_time_s.has_value());
    for (const auto& h : r.health_history) EXPECT_EQ(h.verdict, Verdict::Inconclusive);
}

TEST(Rollout, DeterministicPerSeed) {
    const auto sim = default_config();
    const auto a = run_rollout(sim, {sim.model, 0.005}, {sim.model, 0.02}, DeploymentStrategy::Canary, {});
    const auto b = run_rollout(sim, {sim.model, 0.005}, {sim.model, 0.02}, DeploymentStrategy::Canary, {});
    EXPECT_EQ(events_jsonl(a.events), events_jsonl(b.events));
    EXPECT_EQ(summary_json(a), summary_json(b));
}
