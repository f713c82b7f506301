#include "llmops/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace llmops::nn {

using metrics::kDeployFeatures;
using metrics::kPerformanceChannels;
using metrics::kResourceChannels;
using metrics::kTargets;
using metrics::MetricWindow;

namespace {

using Net = MultiStreamNet;
constexpr std::size_t C = Net::kConvChannels;
constexpr std::size_t K = Net::kKernel;
constexpr std::size_t H = Net::kHidden;
constexpr std::size_t D = Net::kDense;
constexpr std::size_t F = Net::kFused;
constexpr std::size_t U = Net::kFusion;

void conv1d_forward(const double* in, std::size_t length, std::size_t cin, const Tensor& w, const Tensor& b,
                    double* out) {
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t o = 0; o < C; ++o) {
            double s = b[o];
            for (std::size_t k = 0; k < K; ++k) {
                const auto tt = static_cast<std::ptrdiff_t>(t + k) - 1;
                if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(length)) continue;
                const double* x = in + static_cast<std::size_t>(tt) * cin;
                const double* wk = &w.data[o * cin * K];
                for (std::size_t i = 0; i < cin; ++i) s += wk[i * K + k] * x[i];
            }
            out[t * C + o] = s;
        }
    }
}

// Accumulates dW, db and (when din != nullptr) the input gradient.
void conv1d_backward(const double* in, std::size_t length, std::size_t cin, const Tensor& w, const double* dout,
                     Tensor& dw, Tensor& db, double* din) {
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t o = 0; o < C; ++o) {
            const double g = dout[t * C + o];
            if (g == 0.0) continue;
            db[o] += g;
            for (std::size_t k = 0; k < K; ++k) {
                const auto tt = static_cast<std::ptrdiff_t>(t + k) - 1;
                if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(length)) continue;
                const auto row = static_cast<std::size_t>(tt) * cin;
                for (std::size_t i = 0; i < cin; ++i) {
                    const std::size_t wi = (o * cin + i) * K + k;
                    dw[wi] += g * in[row + i];
                    if (din) din[row + i] += g * w[wi];
                }
            }
        }
    }
}

void check_window(const MetricWindow& w) {
    if (w.length == 0) throw NetError("window length must be > 0");
    if (w.resource.size() != w.length * kResourceChannels)
        throw NetError("resource stream shape mismatch: expected [" + std::to_string(w.length) + " x 4]");
    if (w.performance.size() != w.length * kPerformanceChannels)
        throw NetError("performance stream shape mismatch: expected [" + std::to_string(w.length) + " x 3]");
    if (w.deploy.size() != kDeployFeatures) throw NetError("deploy vector shape mismatch: expected [8]");
}

// Everything up to the batch-norm input.
void forward_streams(const Net& net, const MetricWindow& w, SampleCache& c) {
    const std::size_t T = w.length;
    c.length = T;
    c.resource = w.resource;
    c.performance = w.performance;
    c.deploy = w.deploy;
    c.conv1_pre.assign(T * C, 0.0);
    c.conv1_out.assign(T * C, 0.0);
    c.conv2_pre.assign(T * C, 0.0);
    c.conv2_out.assign(T * C, 0.0);
    conv1d_forward(w.resource.data(), T, kResourceChannels, net.param(Net::kConv1W), net.param(Net::kConv1B),
                   c.conv1_pre.data());
    for (std::size_t i = 0; i < T * C; ++i) c.conv1_out[i] = std::max(0.0, c.conv1_pre[i]);
    conv1d_forward(c.conv1_out.data(), T, C, net.param(Net::kConv2W), net.param(Net::kConv2B), c.conv2_pre.data());
    for (std::size_t i = 0; i < T * C; ++i) c.conv2_out[i] = std::max(0.0, c.conv2_pre[i]);
    c.pooled.assign(C, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < C; ++o) c.pooled[o] += c.conv2_out[t * C + o];
    for (double& p : c.pooled) p /= static_cast<double>(T);

    const Tensor& wih = net.param(Net::kRnnWih);
    const Tensor& whh = net.param(Net::kRnnWhh);
    const Tensor& bh = net.param(Net::kRnnB);
    c.hidden.assign((T + 1) * H, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const double* x = &w.performance[t * kPerformanceChannels];
        const double* prev = &c.hidden[t * H];
        double* cur = &c.hidden[(t + 1) * H];
        for (std::size_t j = 0; j < H; ++j) {
            double a = bh[j];
            for (std::size_t i = 0; i < kPerformanceChannels; ++i) a += wih[j * kPerformanceChannels + i] * x[i];
            for (std::size_t i = 0; i < H; ++i) a += whh[j * H + i] * prev[i];
            cur[j] = std::tanh(a);
        }
    }

    const Tensor& wd = net.param(Net::kDenseW);
    const Tensor& bd = net.param(Net::kDenseB);
    c.dense_pre.assign(D, 0.0);
    for (std::size_t j = 0; j < D; ++j) {
        double a = bd[j];
        for (std::size_t i = 0; i < kDeployFeatures; ++i) a += wd[j * kDeployFeatures + i] * w.deploy[i];
        c.dense_pre[j] = a;
    }
}

// Batch-norm output onwards.
Prediction forward_head(const Net& net, SampleCache& c, std::span<const double> mean, std::span<const double> var) {
    const Tensor& gamma = net.param(Net::kBnGamma);
    const Tensor& beta = net.param(Net::kBnBeta);
    c.bn_hat.assign(D, 0.0);
    c.bn_out.assign(D, 0.0);
    c.dense_out.assign(D, 0.0);
    for (std::size_t j = 0; j < D; ++j) {
        c.bn_hat[j] = (c.dense_pre[j] - mean[j]) / std::sqrt(var[j] + Net::kBnEpsilon);
        c.bn_out[j] = gamma[j] * c.bn_hat[j] + beta[j];
        c.dense_out[j] = std::max(0.0, c.bn_out[j]);
    }

    c.fused.assign(F, 0.0);
    std::copy(c.pooled.begin(), c.pooled.end(), c.fused.begin());
    std::copy(c.hidden.end() - static_cast<std::ptrdiff_t>(H), c.hidden.end(),
              c.fused.begin() + static_cast<std::ptrdiff_t>(C));
    std::copy(c.dense_out.begin(), c.dense_out.end(), c.fused.begin() + static_cast<std::ptrdiff_t>(C + H));

    const Tensor& wf = net.param(Net::kFusionW);
    const Tensor& bf = net.param(Net::kFusionB);
    c.fusion_pre.assign(U, 0.0);
    c.fusion_out.assign(U, 0.0);
    for (std::size_t j = 0; j < U; ++j) {
        double a = bf[j];
        for (std::size_t i = 0; i < F; ++i) a += wf[j * F + i] * c.fused[i];
        c.fusion_pre[j] = a;
        c.fusion_out[j] = std::max(0.0, a);
    }

    const Tensor& wh = net.param(Net::kHeadW);
    const Tensor& bhd = net.param(Net::kHeadB);
    Prediction p{};
    for (std::size_t h = 0; h < kTargets; ++h) {
        double a = bhd[h];
        for (std::size_t i = 0; i < U; ++i) a += wh[h * U + i] * c.fusion_out[i];
        p[h] = a;
    }
    return p;
}

}  // namespace

MultiStreamNet::MultiStreamNet() : bn_running_mean({D}, 0.0), bn_running_var({D}, 1.0) {
    for (const auto& shape : param_shapes()) params_.emplace_back(shape, 0.0);
    params_[kBnGamma].fill(1.0);
}

const std::array<const char*, MultiStreamNet::kParamCount>& MultiStreamNet::param_names() {
    static const std::array<const char*, kParamCount> names = {
        "conv1.weight", "conv1.bias",   "conv2.weight", "conv2.bias",    "rnn.weight_ih",
        "rnn.weight_hh", "rnn.bias",    "dense.weight", "dense.bias",    "bn.gamma",
        "bn.beta",       "fusion.weight", "fusion.bias", "head.weight", "head.bias"};
    return names;
}

std::vector<std::vector<std::size_t>> MultiStreamNet::param_shapes() {
    return {{C, kResourceChannels, K}, {C}, {C, C, K}, {C}, {H, kPerformanceChannels}, {H, H}, {H},
            {D, kDeployFeatures},      {D}, {D},        {D}, {U, F},                  {U},    {kTargets, U},
            {kTargets}};
}

std::size_t MultiStreamNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

MultiStreamNet MultiStreamNet::init(std::uint64_t seed) {
    MultiStreamNet net;
    Rng rng(seed);
    auto xavier = [&rng](Tensor& t, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : t.data) v = (2.0 * rng.uniform() - 1.0) * limit;
    };
    xavier(net.params_[kConv1W], kResourceChannels * K, C * K);
    xavier(net.params_[kConv2W], C * K, C * K);
    xavier(net.params_[kRnnWih], kPerformanceChannels, H);
    xavier(net.params_[kRnnWhh], H, H);
    xavier(net.params_[kDenseW], kDeployFeatures, D);
    xavier(net.params_[kFusionW], F, U);
    xavier(net.params_[kHeadW], U, kTargets);
    return net;
}

BatchForward forward_batch(const MultiStreamNet& net, std::span<const MetricWindow> windows, Mode mode) {
    if (windows.empty()) throw NetError("forward: empty batch");
    BatchForward pass;
    pass.mode = mode;
    pass.caches.resize(windows.size());
    for (std::size_t b = 0; b < windows.size(); ++b) {
        check_window(windows[b]);
        forward_streams(net, windows[b], pass.caches[b]);
    }

    if (mode == Mode::Train) {
        const auto n = static_cast<double>(windows.size());
        pass.bn_mean.assign(D, 0.0);
        pass.bn_var.assign(D, 0.0);
        for (const auto& c : pass.caches)
            for (std::size_t j = 0; j < D; ++j) pass.bn_mean[j] += c.dense_pre[j];
        for (double& m : pass.bn_mean) m /= n;
        for (const auto& c : pass.caches)
            for (std::size_t j = 0; j < D; ++j) {
                const double d = c.dense_pre[j] - pass.bn_mean[j];
                pass.bn_var[j] += d * d;
            }
        for (double& v : pass.bn_var) v /= n;
    } else {
        pass.bn_mean = net.bn_running_mean.data;
        pass.bn_var = net.bn_running_var.data;
    }

    pass.predictions.reserve(windows.size());
    for (auto& c : pass.caches) pass.predictions.push_back(forward_head(net, c, pass.bn_mean, pass.bn_var));
    return pass;
}

void update_running_stats(MultiStreamNet& net, const BatchForward& pass) {
    if (pass.mode != Mode::Train) return;
    const auto n = static_cast<double>(pass.caches.size());
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    const double m = MultiStreamNet::kBnMomentum;
    for (std::size_t j = 0; j < D; ++j) {
        net.bn_running_mean[j] = m * net.bn_running_mean[j] + (1.0 - m) * pass.bn_mean[j];
        net.bn_running_var[j] = m * net.bn_running_var[j] + (1.0 - m) * pass.bn_var[j] * unbias;
    }
}

Prediction forward(MultiStreamNet& net, const MetricWindow& window, Mode mode) {
    BatchForward pass = forward_batch(net, std::span<const MetricWindow>(&window, 1), mode);
    update_running_stats(net, pass);
    return pass.predictions.front();
}

Prediction predict(const MultiStreamNet& net, const MetricWindow& window) {
    return forward_batch(net, std::span<const MetricWindow>(&window, 1), Mode::Eval).predictions.front();
}

double loss(std::span<const Prediction> preds, std::span<const Prediction> targets) {
    if (preds.size() != targets.size()) throw NetError("loss: prediction/target count mismatch");
    if (preds.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t b = 0; b < preds.size(); ++b)
        for (std::size_t h = 0; h < kTargets; ++h) {
            const double d = preds[b][h] - targets[b][h];
            s += d * d;
        }
    return s / static_cast<double>(preds.size() * kTargets);
}

Gradients backward(const MultiStreamNet& net, const BatchForward& pass, std::span<const Prediction> targets,
                   double loss_scale) {
    const std::size_t B = pass.caches.size();
    if (B == 0) throw NetError("backward: empty batch");
    if (targets.size() != B) throw NetError("backward: target count mismatch");

    Gradients g;
    g.reserve(Net::kParamCount);
    for (const auto& p : net.params()) g.emplace_back(p.shape, 0.0);

    const Tensor& wh = net.param(Net::kHeadW);
    const Tensor& wf = net.param(Net::kFusionW);
    const Tensor& wih = net.param(Net::kRnnWih);
    const Tensor& whh = net.param(Net::kRnnWhh);
    const Tensor& gamma = net.param(Net::kBnGamma);

    const double dscale = loss_scale * 2.0 / static_cast<double>(B * kTargets);
    // Gradient w.r.t. the batch-norm output y = gamma * x_hat + beta, per sample.
    std::vector<double> d_bn(B * D, 0.0);

    std::vector<double> d_fusion(U), d_fused(F), d_h(H), d_a(H), d_prev(H);
    std::vector<double> d_conv2, d_conv1;

    for (std::size_t b = 0; b < B; ++b) {
        const SampleCache& c = pass.caches[b];
        const std::size_t T = c.length;

        std::fill(d_fusion.begin(), d_fusion.end(), 0.0);
        for (std::size_t h = 0; h < kTargets; ++h) {
            const double dp = dscale * (pass.predictions[b][h] - targets[b][h]);
            g[Net::kHeadB][h] += dp;
            for (std::size_t i = 0; i < U; ++i) {
                g[Net::kHeadW][h * U + i] += dp * c.fusion_out[i];
                d_fusion[i] += wh[h * U + i] * dp;
            }
        }

        std::fill(d_fused.begin(), d_fused.end(), 0.0);
        for (std::size_t j = 0; j < U; ++j) {
            if (c.fusion_pre[j] <= 0.0) continue;
            const double dpre = d_fusion[j];
            g[Net::kFusionB][j] += dpre;
            for (std::size_t i = 0; i < F; ++i) {
                g[Net::kFusionW][j * F + i] += dpre * c.fused[i];
                d_fused[i] += wf[j * F + i] * dpre;
            }
        }

        for (std::size_t j = 0; j < D; ++j) d_bn[b * D + j] = c.bn_out[j] > 0.0 ? d_fused[C + H + j] : 0.0;

        // Recurrent stream: backpropagation through time.
        std::copy(d_fused.begin() + static_cast<std::ptrdiff_t>(C),
                  d_fused.begin() + static_cast<std::ptrdiff_t>(C + H), d_h.begin());
        for (std::size_t t = T; t-- > 0;) {
            const double* h_cur = &c.hidden[(t + 1) * H];
            const double* h_prev = &c.hidden[t * H];
            const double* x = &c.performance[t * kPerformanceChannels];
            std::fill(d_prev.begin(), d_prev.end(), 0.0);
            for (std::size_t j = 0; j < H; ++j) {
                const double da = d_h[j] * (1.0 - h_cur[j] * h_cur[j]);
                g[Net::kRnnB][j] += da;
                for (std::size_t i = 0; i < kPerformanceChannels; ++i)
                    g[Net::kRnnWih][j * kPerformanceChannels + i] += da * x[i];
                for (std::size_t i = 0; i < H; ++i) {
                    g[Net::kRnnWhh][j * H + i] += da * h_prev[i];
                    d_prev[i] += whh[j * H + i] * da;
                }
            }
            d_h.swap(d_prev);
        }
        (void)wih;

        // Convolutional stream: mean pool, two conv+ReLU layers.
        d_conv2.assign(T * C, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t o = 0; o < C; ++o)
                if (c.conv2_pre[t * C + o] > 0.0) d_conv2[t * C + o] = d_fused[o] / static_cast<double>(T);
        d_conv1.assign(T * C, 0.0);
        conv1d_backward(c.conv1_out.data(), T, C, net.param(Net::kConv2W), d_conv2.data(), g[Net::kConv2W],
                        g[Net::kConv2B], d_conv1.data());
        for (std::size_t i = 0; i < T * C; ++i)
            if (c.conv1_pre[i] <= 0.0) d_conv1[i] = 0.0;
        conv1d_backward(c.resource.data(), T, kResourceChannels, net.param(Net::kConv1W), d_conv1.data(),
                        g[Net::kConv1W], g[Net::kConv1B], nullptr);
    }

    // Batch norm couples the batch in train mode.
    for (std::size_t j = 0; j < D; ++j) {
        const double inv_std = 1.0 / std::sqrt(pass.bn_var[j] + Net::kBnEpsilon);
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const double dy = d_bn[b * D + j];
            sum_dy += dy;
            sum_dy_xhat += dy * pass.caches[b].bn_hat[j];
        }
        g[Net::kBnBeta][j] += sum_dy;
        g[Net::kBnGamma][j] += sum_dy_xhat;

        for (std::size_t b = 0; b < B; ++b) {
            const double dxhat = d_bn[b * D + j] * gamma[j];
            double dz;
            if (pass.mode == Mode::Train) {
                const auto n = static_cast<double>(B);
                dz = gamma[j] * inv_std / n *
                     (n * d_bn[b * D + j] - sum_dy - pass.caches[b].bn_hat[j] * sum_dy_xhat);
            } else {
                dz = dxhat * inv_std;
            }
            g[Net::kDenseB][j] += dz;
            for (std::size_t i = 0; i < kDeployFeatures; ++i)
                g[Net::kDenseW][j * kDeployFeatures + i] += dz * pass.caches[b].deploy[i];
        }
    }
    return g;
}

Gradients backward(const MultiStreamNet& net, const TrainBatch& batch, Mode mode, double loss_scale) {
    if (batch.windows.size() != batch.targets.size()) throw NetError("backward: window/target count mismatch");
    const BatchForward pass = forward_batch(net, batch.windows, mode);
    return backward(net, pass, batch.targets, loss_scale);
}

OptimizerState OptimizerState::for_net(const MultiStreamNet& net, double learning_rate) {
    OptimizerState s;
    s.learning_rate = learning_rate;
    for (const auto& p : net.params()) {
        s.first_moment.emplace_back(p.shape, 0.0);
        s.second_moment.emplace_back(p.shape, 0.0);
    }
    return s;
}

double train_step(MultiStreamNet& net, OptimizerState& opt, const TrainBatch& batch) {
    if (batch.windows.empty()) throw NetError("train_step: empty batch");
    if (batch.windows.size() != batch.targets.size()) throw NetError("train_step: window/target count mismatch");
    for (const auto& t : batch.targets)
        for (double v : t)
            if (!std::isfinite(v)) throw NetError("train_step: non-finite target");
    if (opt.first_moment.size() != net.params().size()) opt = OptimizerState::for_net(net, opt.learning_rate);

    const BatchForward pass = forward_batch(net, batch.windows, Mode::Train);
    const double value = loss(pass.predictions, batch.targets);
    const Gradients g = backward(net, pass, batch.targets);
    update_running_stats(net, pass);

    ++opt.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t p = 0; p < g.size(); ++p) {
        Tensor& param = net.params()[p];
        Tensor& m = opt.first_moment[p];
        Tensor& v = opt.second_moment[p];
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[p][i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[p][i] * g[p][i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            param[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
    return value;
}

double eval_loss(const MultiStreamNet& net, std::span<const MetricWindow> windows, std::span<const Prediction> targets) {
    if (windows.size() != targets.size()) throw NetError("eval_loss: window/target count mismatch");
    if (windows.empty()) return 0.0;
    const BatchForward pass = forward_batch(net, windows, Mode::Eval);
    return loss(pass.predictions, targets);
}

namespace {

using nlohmann::json;

json arch_descriptor() {
    return {{"name", "multi-stream-v1"},
            {"resource_channels", kResourceChannels},
            {"performance_channels", kPerformanceChannels},
            {"deploy_features", kDeployFeatures},
            {"conv_channels", C},
            {"kernel", K},
            {"rnn_hidden", H},
            {"dense_hidden", D},
            {"fusion_hidden", U},
            {"heads", kTargets}};
}

json stats_json(const metrics::RunningStats& s) {
    std::vector<double> mean, var;
    for (std::size_t c = 0; c < s.channels(); ++c) {
        mean.push_back(s.mean(c));
        var.push_back(s.variance(c));
    }
    return {{"count", s.count()}, {"mean", mean}, {"variance", var}};
}

metrics::RunningStats stats_from_json(const json& j, std::size_t channels, const char* name) {
    auto mean = j.at("mean").get<std::vector<double>>();
    auto var = j.at("variance").get<std::vector<double>>();
    if (mean.size() != channels || var.size() != channels)
        throw NetError(std::string("normalizer '") + name + "' has wrong channel count");
    return metrics::RunningStats::from_moments(j.at("count").get<std::size_t>(), std::move(mean), std::move(var));
}

}  // namespace

std::string weights_to_json(const MultiStreamNet& net, const metrics::FeatureNormalizer* normalizer) {
    json layers = json::array();
    for (std::size_t p = 0; p < Net::kParamCount; ++p) {
        const Tensor& t = net.params()[p];
        layers.push_back({{"name", Net::param_names()[p]}, {"shape", t.shape}, {"values", t.data}});
    }
    json doc{{"arch", arch_descriptor()},
             {"layers", layers},
             {"running_stats",
              {{"bn.running_mean", net.bn_running_mean.data}, {"bn.running_var", net.bn_running_var.data}}}};
    if (normalizer) {
        doc["normalizer"] = {{"resource", stats_json(normalizer->resource)},
                             {"performance", stats_json(normalizer->performance)},
                             {"deploy", stats_json(normalizer->deploy)},
                             {"targets", stats_json(normalizer->targets)}};
    }
    return doc.dump();
}

WeightsFile weights_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw NetError(std::string("weights parse error: ") + e.what());
    }
    WeightsFile out;
    try {
        const json& arch = doc.at("arch");
        const json expected = arch_descriptor();
        for (const auto& [key, value] : expected.items()) {
            if (!arch.contains(key) || arch.at(key) != value)
                throw NetError("architecture mismatch on '" + key + "': expected " + value.dump() + ", file has " +
                               (arch.contains(key) ? arch.at(key).dump() : std::string("nothing")));
        }
        const json& layers = doc.at("layers");
        if (layers.size() != Net::kParamCount)
            throw NetError("architecture mismatch: expected " + std::to_string(Net::kParamCount) + " layers, file has " +
                           std::to_string(layers.size()));
        for (std::size_t p = 0; p < Net::kParamCount; ++p) {
            const json& layer = layers.at(p);
            const std::string name = layer.at("name").get<std::string>();
            if (name != Net::param_names()[p])
                throw NetError("layer " + std::to_string(p) + ": expected '" + Net::param_names()[p] + "', found '" +
                               name + "'");
            const auto shape = layer.at("shape").get<std::vector<std::size_t>>();
            Tensor& t = out.net.params()[p];
            if (shape != t.shape)
                throw NetError("layer '" + name + "': shape mismatch, expected " + t.shape_string());
            auto values = layer.at("values").get<std::vector<double>>();
            if (values.size() != t.size()) throw NetError("layer '" + name + "': value count mismatch");
            t.data = std::move(values);
            if (!t.all_finite()) throw NetError("layer '" + name + "': non-finite value");
        }
        const json& rs = doc.at("running_stats");
        auto rm = rs.at("bn.running_mean").get<std::vector<double>>();
        auto rv = rs.at("bn.running_var").get<std::vector<double>>();
        if (rm.size() != D || rv.size() != D) throw NetError("running_stats: shape mismatch, expected [32]");
        for (double v : rv)
            if (!(v > 0.0)) throw NetError("running_stats: bn.running_var must be > 0");
        out.net.bn_running_mean.data = std::move(rm);
        out.net.bn_running_var.data = std::move(rv);

        if (auto it = doc.find("normalizer"); it != doc.end() && !it->is_null()) {
            metrics::FeatureNormalizer n;
            n.resource = stats_from_json(it->at("resource"), kResourceChannels, "resource");
            n.performance = stats_from_json(it->at("performance"), kPerformanceChannels, "performance");
            n.deploy = stats_from_json(it->at("deploy"), kDeployFeatures, "deploy");
            n.targets = stats_from_json(it->at("targets"), kTargets, "targets");
            out.normalizer = std::move(n);
        }
    } catch (const json::exception& e) {
        throw NetError(std::string("weights format error: ") + e.what());
    }
    return out;
}

void save_weights(const MultiStreamNet& net, const std::filesystem::path& path,
                  const metrics::FeatureNormalizer* normalizer) {
    std::ofstream out(path);
    if (!out) throw NetError("cannot write weights file " + path.string());
    out << weights_to_json(net, normalizer) << '\n';
}

WeightsFile load_weights_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NetError("cannot open weights file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return weights_from_json(buf.str());
}

MultiStreamNet load_weights(const std::filesystem::path& path) { return load_weights_file(path).net; }

std::string_view to_string(FeatureGroup group) {
    switch (group) {
        case FeatureGroup::Resource: return "resource";
        case FeatureGroup::Performance: return "performance";
        case FeatureGroup::Workload: return "workload";
        case FeatureGroup::Network: return "network";
    }
    return "unknown";
}

namespace {

void copy_group(FeatureGroup group, const MetricWindow& src, MetricWindow& dst) {
    const std::size_t T = std::min(src.length, dst.length);
    auto copy_res = [&](std::size_t ch) {
        for (std::size_t t = 0; t < T; ++t) dst.res(t, ch) = src.res(t, ch);
    };
    auto copy_perf = [&](std::size_t ch) {
        for (std::size_t t = 0; t < T; ++t) dst.perf(t, ch) = src.perf(t, ch);
    };
    switch (group) {
        case FeatureGroup::Resource:
            copy_res(metrics::kCpu);
            copy_res(metrics::kMem);
            copy_res(metrics::kGpu);
            break;
        case FeatureGroup::Network: copy_res(metrics::kNet); break;
        case FeatureGroup::Performance:
            copy_perf(metrics::kP95);
            copy_perf(metrics::kErrorRate);
            break;
        case FeatureGroup::Workload:
            copy_perf(metrics::kThroughput);
            dst.deploy = src.deploy;
            break;
    }
}

}  // namespace

std::array<double, kFeatureGroups> permutation_importance(const MultiStreamNet& net,
                                                          std::span<const MetricWindow> windows,
                                                          std::span<const Prediction> targets, std::uint64_t seed,
                                                          std::size_t repeats) {
    if (windows.size() < 100) throw NetError("permutation_importance: need at least 100 evaluation windows");
    if (windows.size() != targets.size()) throw NetError("permutation_importance: window/target count mismatch");
    if (repeats == 0) repeats = 1;

    const double base = eval_loss(net, windows, targets);
    Rng rng(seed);
    std::array<double, kFeatureGroups> increase{};
    std::vector<std::size_t> order(windows.size());
    for (std::size_t g = 0; g < kFeatureGroups; ++g) {
        const auto group = static_cast<FeatureGroup>(g);
        double total = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(std::span<std::size_t>(order));
            std::vector<MetricWindow> permuted(windows.begin(), windows.end());
            for (std::size_t i = 0; i < windows.size(); ++i) copy_group(group, windows[order[i]], permuted[i]);
            total += std::max(0.0, eval_loss(net, permuted, targets) - base);
        }
        increase[g] = total / static_cast<double>(repeats);
    }

    const double sum = std::accumulate(increase.begin(), increase.end(), 0.0);
    std::array<double, kFeatureGroups> out{};
    if (sum <= 0.0) {
        out.fill(1.0 / static_cast<double>(kFeatureGroups));
        return out;
    }
    for (std::size_t g = 0; g < kFeatureGroups; ++g) out[g] = increase[g] / sum;
    return out;
}

}  // namespace llmops::nn
