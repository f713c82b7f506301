#include <benchmark/benchmark.h>

#include "llmops/autoscaler.hpp"
#include "llmops/neuralnet.hpp"
#include "llmops/simulator.hpp"

using namespace llmops;

namespace {

metrics::MetricWindow noise_window(Rng& rng) {
    metrics::MetricWindow w(metrics::kWindowLength);
    for (auto& v : w.resource) v = rng.normal();
    for (auto& v : w.performance) v = rng.normal();
    for (auto& v : w.deploy) v = rng.normal();
    return w;
}

nn::TrainBatch noise_batch(std::size_t n) {
    Rng rng(1);
    nn::TrainBatch b;
    for (std::size_t i = 0; i < n; ++i) {
        b.windows.push_back(noise_window(rng));
        b.targets.push_back({rng.normal(), rng.normal(), rng.normal()});
    }
    return b;
}

}  // namespace

static void BM_SimStep(benchmark::State& state) {
    const auto cfg = default_config();
    std::vector<int> r(cfg.regions.size(), 20);
    auto st = sim::make_initial_state(cfg, r);
    double rps = 500;
    for (auto _ : state) {
        rps = rps > 1500 ? 500 : rps + 1;
        benchmark::DoNotOptimize(sim::step(st, rps, cfg));
    }
}
BENCHMARK(BM_SimStep);

static void BM_ScalingDecision(benchmark::State& state) {
    const auto cfg = default_config();
    std::vector<int> r(cfg.regions.size(), 100);
    const auto st = sim::make_initial_state(cfg, r);
    scaling::LoadEstimate est{4000, 4200, LoadSource::HoltWinters};
    for (auto _ : state) benchmark::DoNotOptimize(scaling::compute_scaling_decision(est, st, cfg, {}, std::nullopt));
}
BENCHMARK(BM_ScalingDecision);

static void BM_SimRunDay(benchmark::State& state) {
    const auto cfg = default_config();
    Rng rng(42);
    const auto trace = workload::generate_trace(workload::PatternSpec{}, 1440, 1.0, rng);
    for (auto _ : state) {
        scaling::DnnScalerPolicy policy({}, std::nullopt);
        benchmark::DoNotOptimize(sim::run(trace, policy, cfg).aggregates);
    }
}
BENCHMARK(BM_SimRunDay)->Unit(benchmark::kMillisecond);

static void BM_NetForward(benchmark::State& state) {
    const auto net = nn::MultiStreamNet::init(1);
    const auto batch = noise_batch(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(nn::forward_batch(net, batch.windows, nn::Mode::Eval));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NetForward)->Arg(1)->Arg(32);

static void BM_NetBackward(benchmark::State& state) {
    const auto net = nn::MultiStreamNet::init(1);
    const auto batch = noise_batch(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(nn::backward(net, batch, nn::Mode::Train));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NetBackward)->Arg(32);

static void BM_TrainStep(benchmark::State& state) {
    auto net = nn::MultiStreamNet::init(1);
    auto opt = nn::OptimizerState::for_net(net);
    const auto batch = noise_batch(32);
    for (auto _ : state) benchmark::DoNotOptimize(nn::train_step(net, opt, batch));
}
BENCHMARK(BM_TrainStep);
BENCHMARK_MAIN();
