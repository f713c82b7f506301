#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "llmops/neuralnet.hpp"

using namespace llmops;
using namespace llmops::nn;
using metrics::MetricWindow;

namespace {

MetricWindow random_window(Rng& rng, std::size_t t = 8) {
    MetricWindow w(t);
    for (auto& v : w.resource) v = rng.normal();
    for (auto& v : w.performance) v = rng.normal();
    for (auto& v : w.deploy) v = rng.normal();
    return w;
}

TrainBatch random_batch(std::uint64_t seed, std::size_t n, std::size_t t = 8) {
    Rng rng(seed);
    TrainBatch b;
    for (std::size_t i = 0; i < n; ++i) {
        b.windows.push_back(random_window(rng, t));
        b.targets.push_back({rng.normal(), rng.normal(), rng.normal()});
    }
    return b;
}

bool is_bias(std::size_t p) {
    using N = MultiStreamNet;
    return p == N::kConv1B || p == N::kConv2B || p == N::kRnnB || p == N::kDenseB || p == N::kFusionB ||
           p == N::kHeadB;
}

std::filesystem::path temp_file(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Init, ShapesAndDeterminism) {
    const auto a = MultiStreamNet::init(1), b = MultiStreamNet::init(1), c = MultiStreamNet::init(2);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    const auto shapes = MultiStreamNet::param_shapes();
    for (std::size_t p = 0; p < MultiStreamNet::kParamCount; ++p) {
        EXPECT_EQ(a.params()[p].shape, shapes[p]) << MultiStreamNet::param_names()[p];
        if (is_bias(p))
            for (double v : a.params()[p].data) EXPECT_EQ(v, 0.0);
    }
    for (double v : a.param(MultiStreamNet::kBnGamma).data) EXPECT_EQ(v, 1.0);
    for (double v : a.param(MultiStreamNet::kBnBeta).data) EXPECT_EQ(v, 0.0);
    for (double v : a.bn_running_var.data) EXPECT_GT(v, 0.0);
}

TEST(Init, XavierBounds) {
    const auto net = MultiStreamNet::init(3);
    const auto& w = net.param(MultiStreamNet::kFusionW);
    const double bound = std::sqrt(6.0 / (80.0 + 64.0));
    for (double v : w.data) {
        EXPECT_LE(std::abs(v), bound);
    }
}

TEST(Forward, ZeroWindowGivesHeadBiases) {
    MultiStreamNet net = MultiStreamNet::init(4);
    for (auto p : {MultiStreamNet::kHeadW, MultiStreamNet::kFusionW}) net.param(p).fill(0.0);
    auto& hb = net.param(MultiStreamNet::kHeadB);
    hb[0] = 0.5, hb[1] = -1.25, hb[2] = 3.0;
    const auto out = predict(net, MetricWindow(metrics::kWindowLength));
    EXPECT_EQ(out[0], 0.5);
    EXPECT_EQ(out[1], -1.25);
    EXPECT_EQ(out[2], 3.0);
}

TEST(Forward, EvalIsPureAndFinite) {
    const auto net = MultiStreamNet::init(5);
    const auto copy = net;
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const auto w = random_window(rng, 1 + static_cast<std::size_t>(i));
        const auto a = predict(net, w), b = predict(net, w);
        EXPECT_EQ(a, b);
        for (double v : a) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_EQ(net, copy);
}

TEST(Forward, TrainModeMovesRunningStatsOnly) {
    auto net = MultiStreamNet::init(6);
    const auto before = net;
    Rng rng(6);
    forward(net, random_window(rng), Mode::Train);
    EXPECT_EQ(net.params(), before.params());
    EXPECT_NE(net.bn_running_mean, before.bn_running_mean);
}

TEST(Forward, ShapeMismatchThrows) {
    const auto net = MultiStreamNet::init(7);
    MetricWindow w(8);
    w.deploy.resize(7);
    EXPECT_THROW(predict(net, w), NetError);
    MetricWindow v(8);
    v.resource.pop_back();
    EXPECT_THROW(predict(net, v), NetError);
}

TEST(Forward, RecurrenceIsCausal) {
    // Running the prefix alone must reproduce the hidden states of the full unroll.
    const auto net = MultiStreamNet::init(8);
    Rng rng(8);
    const auto full = random_window(rng, 12);
    const auto ref = forward_batch(net, std::span(&full, 1), Mode::Eval).caches[0].hidden;
    for (std::size_t t = 1; t <= 12; ++t) {
        MetricWindow prefix(t);
        std::copy_n(full.performance.begin(), t * 3, prefix.performance.begin());
        prefix.deploy = full.deploy;
        const auto h = forward_batch(net, std::span(&prefix, 1), Mode::Eval).caches[0].hidden;
        for (std::size_t j = 0; j < MultiStreamNet::kHidden; ++j)
            ASSERT_EQ(h[t * MultiStreamNet::kHidden + j], ref[t * MultiStreamNet::kHidden + j]) << t;
    }
}

TEST(Forward, BatchNormStandardizesTheBatch) {
    const auto net = MultiStreamNet::init(9);
    const auto batch = random_batch(9, 32);
    const auto pass = forward_batch(net, batch.windows, Mode::Train);
    for (std::size_t c = 0; c < MultiStreamNet::kDense; ++c) {
        double m = 0, v = 0;
        for (const auto& s : pass.caches) m += s.bn_hat[c];
        m /= 32;
        for (const auto& s : pass.caches) v += (s.bn_hat[c] - m) * (s.bn_hat[c] - m);
        v /= 32;
        EXPECT_LT(std::abs(m), 1e-6);
        EXPECT_NEAR(v, 1.0, 1e-3);
    }
}

TEST(Loss, Examples) {
    const std::vector<Prediction> a{{1, 2, 3}, {4, 5, 6}};
    const std::vector<Prediction> b{{2, 3, 4}, {5, 6, 7}};
    EXPECT_EQ(loss(a, a), 0.0);
    EXPECT_DOUBLE_EQ(loss(a, b), 1.0);
    EXPECT_EQ(loss(a, b), loss(b, a));
}

TEST(Backward, GradientShapesAndLinearity) {
    const auto net = MultiStreamNet::init(10);
    const auto batch = random_batch(10, 4);
    const auto g1 = backward(net, batch, Mode::Train, 1.0);
    const auto g2 = backward(net, batch, Mode::Train, 2.0);
    ASSERT_EQ(g1.size(), MultiStreamNet::kParamCount);
    for (std::size_t p = 0; p < g1.size(); ++p) {
        ASSERT_EQ(g1[p].shape, net.params()[p].shape);
        for (std::size_t i = 0; i < g1[p].size(); ++i) EXPECT_NEAR(g2[p][i], 2.0 * g1[p][i], 1e-12 * (1 + std::abs(g1[p][i])));
    }
}

TEST(Backward, HeadGradientVanishesAtZeroResidual) {
    const auto net = MultiStreamNet::init(11);
    auto batch = random_batch(11, 4);
    const auto pass = forward_batch(net, batch.windows, Mode::Train);
    batch.targets = pass.predictions;
    const auto g = backward(net, pass, batch.targets);
    for (auto p : {MultiStreamNet::kHeadW, MultiStreamNet::kHeadB})
        for (double v : g[p].data) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MatchesFiniteDifferencesInEvalMode) {
    auto net = MultiStreamNet::init(12);
    Rng rng(12);
    for (auto& v : net.bn_running_mean.data) v = 0.3 * rng.normal();
    const auto batch = random_batch(12, 3);
    const auto g = backward(net, batch, Mode::Eval);
    auto loss_at = [&](const MultiStreamNet& n) {
        return loss(forward_batch(n, batch.windows, Mode::Eval).predictions, batch.targets);
    };
    const double h = 1e-5;
    std::size_t checked = 0, bad = 0;
    for (std::size_t p = 0; p < net.params().size(); ++p) {
        for (std::size_t k = 0; k < 12; ++k) {
            const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(net.params()[p].size()) - 1));
            auto plus = net, minus = net;
            plus.params()[p][i] += h;
            minus.params()[p][i] -= h;
            const double numeric = (loss_at(plus) - loss_at(minus)) / (2 * h);
            const double rel = std::abs(g[p][i] - numeric) / std::max(1e-6, std::abs(g[p][i]) + std::abs(numeric));
            ++checked;
            bad += rel > 1e-4;
        }
    }
    // A sampled coordinate can straddle a ReLU kink; allow one such case.
    EXPECT_LE(bad, 1u) << "of " << checked;
}

TEST(Training, OverfitsOneBatch) {
    auto net = MultiStreamNet::init(13);
    auto opt = OptimizerState::for_net(net);
    const auto batch = random_batch(13, 64);
    const double first = train_step(net, opt, batch);
    double last = first;
    for (int i = 1; i < 200; ++i) last = train_step(net, opt, batch);
    last = loss(forward_batch(net, batch.windows, Mode::Train).predictions, batch.targets);
    EXPECT_LE(last * 10, first) << first << " -> " << last;
}

TEST(Training, ZeroLearningRateLeavesParameters) {
    auto net = MultiStreamNet::init(14);
    auto opt = OptimizerState::for_net(net, 0.0);
    const auto before = net.params();
    const auto batch = random_batch(14, 8);
    for (int i = 0; i < 5; ++i) train_step(net, opt, batch);
    EXPECT_EQ(net.params(), before);
    EXPECT_EQ(opt.step, 5u);
}

TEST(Training, Repeatable) {
    auto run = [] {
        auto net = MultiStreamNet::init(15);
        auto opt = OptimizerState::for_net(net);
        const auto batch = random_batch(15, 16);
        double l = 0;
        for (int i = 0; i < 30; ++i) l = train_step(net, opt, batch);
        return l;
    };
    EXPECT_EQ(run(), run());
}

TEST(Training, RejectsBadBatches) {
    auto net = MultiStreamNet::init(16);
    auto opt = OptimizerState::for_net(net);
    EXPECT_THROW(train_step(net, opt, TrainBatch{}), NetError);
    auto b = random_batch(16, 2);
    b.targets[1][0] = std::nan("");
    EXPECT_THROW(train_step(net, opt, b), NetError);
}

TEST(Weights, RoundTripIsBitExact) {
    auto net = MultiStreamNet::init(17);
    Rng rng(17);
    for (int i = 0; i < 3; ++i) forward(net, random_window(rng), Mode::Train);
    const auto path = temp_file("llmops_weights_test.json");
    save_weights(net, path);
    const auto back = load_weights(path);
    EXPECT_EQ(back, net);
    for (int i = 0; i < 10; ++i) {
        const auto w = random_window(rng, 32);
        EXPECT_EQ(predict(back, w), predict(net, w));
    }
    std::filesystem::remove(path);
}

TEST(Weights, NormalizerTravelsWithTheNet) {
    metrics::FeatureNormalizer norm;
    Rng rng(18);
    for (int i = 0; i < 4; ++i) {
        norm.observe(random_window(rng));
        norm.observe_targets({rng.normal(), rng.normal(), rng.normal()});
    }
    const auto file = weights_from_json(weights_to_json(MultiStreamNet::init(18), &norm));
    ASSERT_TRUE(file.normalizer.has_value());
    EXPECT_DOUBLE_EQ(file.normalizer->targets.mean(1), norm.targets.mean(1));
    EXPECT_DOUBLE_EQ(file.normalizer->resource.variance(2), norm.resource.variance(2));
    EXPECT_FALSE(weights_from_json(weights_to_json(MultiStreamNet::init(18))).normalizer.has_value());
}

TEST(Weights, TruncatedFileIsAParseError) {
    const auto text = weights_to_json(MultiStreamNet::init(19));
    try {
        weights_from_json(text.substr(0, text.size() / 2));
        FAIL();
    } catch (const NetError& e) {
        EXPECT_NE(std::string(e.what()).find("parse"), std::string::npos);
    }
}

TEST(Weights, WrongHiddenSizeIsAnArchitectureMismatch) {
    auto text = weights_to_json(MultiStreamNet::init(20));
    const std::string key = "\"rnn_hidden\":32";
    const auto pos = text.find(key);
    ASSERT_NE(pos, std::string::npos) << text.substr(0, 300);
    text.replace(pos, key.size(), "\"rnn_hidden\":64");
    try {
        weights_from_json(text);
        FAIL();
    } catch (const NetError& e) {
        EXPECT_NE(std::string(e.what()).find("architecture mismatch"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("rnn_hidden"), std::string::npos) << e.what();
    }
}

TEST(Importance, SumsToOneAndRespectsDeadPaths) {
    auto net = MultiStreamNet::init(21);
    Rng rng(21);
    std::vector<MetricWindow> windows;
    std::vector<Prediction> targets;
    for (int i = 0; i < 120; ++i) {
        windows.push_back(random_window(rng, 8));
        targets.push_back({rng.normal(), rng.normal(), rng.normal()});
    }
    const auto imp = permutation_importance(net, windows, targets, 3, 2);
    double sum = 0;
    for (double v : imp) {
        EXPECT_GE(v, 0.0);
        sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);

    // Cut the recurrent stream out of the fusion layer.
    auto& w = net.param(MultiStreamNet::kFusionW);
    ASSERT_EQ(w.shape[1], MultiStreamNet::kFused);
    for (std::size_t r = 0; r < w.shape[0]; ++r)
        for (std::size_t c = MultiStreamNet::kConvChannels; c < MultiStreamNet::kConvChannels + MultiStreamNet::kHidden; ++c)
            w[r * w.shape[1] + c] = 0.0;
    const auto cut = permutation_importance(net, windows, targets, 3, 2);
    EXPECT_NEAR(cut[static_cast<std::size_t>(FeatureGroup::Performance)], 0.0, 1e-9);

    windows.resize(99);
    targets.resize(99);
    EXPECT_THROW(permutation_importance(net, windows, targets, 3), NetError);
}
