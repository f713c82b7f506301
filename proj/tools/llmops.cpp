// llmops command-line driver.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "llmops/config_io.hpp"
#include "llmops/experiments.hpp"

namespace fs = std::filesystem;
using namespace llmops;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t effective_seed(std::uint64_t flag) {
    const char* env = std::getenv("LLMOPS_SEED");
    if (!env || !*env) return flag;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
        return v;
    } catch (const std::exception&) {
        throw UsageError(std::string("LLMOPS_SEED is not an unsigned integer: '") + env + "'");
    }
}

SimConfig config_or_default(const std::string& path) { return path.empty() ? default_config() : load_config(path); }

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<scaling::LoadPredictor> load_predictor(const std::string& path) {
    if (path.empty()) return std::nullopt;
    auto file = nn::load_weights_file(path);
    if (!file.normalizer) throw std::runtime_error("weights file '" + path + "' carries no feature normalizer");
    return scaling::LoadPredictor{std::move(file.net), std::move(*file.normalizer)};
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predictive autoscaling and rollout simulator for LLM serving"};
    app.require_subcommand(1);

    // gen-trace
    std::string pattern_arg, out;
    std::int64_t duration = 2880;
    double dt = 1.0;
    std::uint64_t seed = 42;
    auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic request-rate trace (JSONL)");
    gen->add_option("--pattern", pattern_arg, "Pattern JSON text or path to a JSON file");
    gen->add_option("--duration", duration, "Duration in seconds")->check(CLI::PositiveNumber);
    gen->add_option("--dt", dt, "Sample interval in seconds")->check(CLI::Range(1.0, 1e9));
    gen->add_option("--seed", seed);
    gen->add_option("--out", out)->required();

    // collect
    std::string config_path, trace_path;
    std::size_t episodes = 3;
    auto* col = app.add_subcommand("collect", "Run the exploration policy and write training rows (JSONL)");
    col->add_option("--config", config_path);
    col->add_option("--trace", trace_path)->required();
    col->add_option("--episodes", episodes);
    col->add_option("--seed", seed);
    col->add_option("--out", out)->required();

    // train
    std::string data_path, weights_out, loss_out;
    std::size_t epochs = 20, batch = 32;
    auto* tr = app.add_subcommand("train", "Train the load predictor on collected rows");
    tr->add_option("--data", data_path)->required();
    tr->add_option("--epochs", epochs);
    tr->add_option("--batch", batch)->check(CLI::Range(2, 1 << 20));
    tr->add_option("--seed", seed);
    tr->add_option("--out-weights", weights_out)->required();
    tr->add_option("--loss-csv", loss_out, "Per-step loss CSV");

    // compare
    std::string weights_path, policies = "static,threshold,dnn", seeds_arg;
    std::size_t reps = 1;
    auto* cmp = app.add_subcommand("compare", "Compare scaling policies on one trace");
    cmp->add_option("--config", config_path);
    cmp->add_option("--trace", trace_path)->required();
    cmp->add_option("--weights", weights_path);
    cmp->add_option("--policies", policies);
    cmp->add_option("--reps", reps)->check(CLI::PositiveNumber);
    cmp->add_option("--seeds", seeds_arg, "Comma-separated seeds, one per repetition");
    cmp->add_option("--seed", seed, "Base seed when --seeds is absent");
    cmp->add_option("--out", out, "Output directory")->required();

    // sweep
    double from_rps = 1000.0, to_rps = 100000.0, sweep_duration = 600.0;
    std::size_t steps = 8;
    auto* sw = app.add_subcommand("sweep", "Steady-state behaviour across geometric load levels");
    sw->add_option("--config", config_path);
    sw->add_option("--from-rps", from_rps);
    sw->add_option("--to-rps", to_rps);
    sw->add_option("--steps", steps);
    sw->add_option("--duration", sweep_duration);
    sw->add_option("--weights", weights_path);
    sw->add_option("--out", out)->required();

    // adapt
    experiments::AdaptOptions adapt_opts;
    auto* ad = app.add_subcommand("adapt", "Measure reaction time to a load step");
    ad->add_option("--config", config_path);
    ad->add_option("--step-at", adapt_opts.step_at_s);
    ad->add_option("--step-to", adapt_opts.step_to_rps);
    ad->add_option("--base-rps", adapt_opts.base_rps);
    ad->add_option("--duration", adapt_opts.duration_s);
    ad->add_option("--weights", weights_path);
    ad->add_option("--seed", seed);
    ad->add_option("--out", out)->required();

    // rollout-demo
    double fault_rate = 0.0;
    auto* ro = app.add_subcommand("rollout-demo", "Canary rollout of a candidate with an injected fault rate");
    ro->add_option("--config", config_path);
    ro->add_option("--fault-rate", fault_rate)->check(CLI::Range(0.0, 1.0));
    ro->add_option("--seed", seed);
    ro->add_option("--out", out, "Output directory")->required();

    // importance
    auto* im = app.add_subcommand("importance", "Permutation importance per feature group");
    im->add_option("--weights", weights_path)->required();
    im->add_option("--data", data_path)->required();
    im->add_option("--seed", seed);
    im->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        seed = effective_seed(seed);

        if (gen->parsed()) {
            workload::PatternSpec pattern;
            if (!pattern_arg.empty())
                pattern = workload::pattern_from_json(fs::exists(pattern_arg) ? read_file(pattern_arg) : pattern_arg);
            Rng rng(seed);
            const auto trace = workload::generate_trace(pattern, duration, dt, rng);
            workload::save_trace(trace, out);
            std::cout << "wrote " << trace.size() << " points to " << out << " (checksum " << workload::checksum(trace)
                      << ")\n";
        } else if (col->parsed()) {
            const SimConfig cfg = config_or_default(config_path);
            const auto trace = workload::load_trace(trace_path);
            const auto data = experiments::collect(cfg, trace, episodes, seed);
            experiments::save_dataset(data, out);
            std::cout << "wrote " << data.size() << " rows from " << episodes << " episode(s) to " << out << "\n";
        } else if (tr->parsed()) {
            const auto data = experiments::load_dataset(data_path);
            experiments::TrainOptions opts;
            opts.epochs = epochs;
            opts.batch_size = batch;
            opts.seed = seed;
            const auto result = experiments::train(data, opts);
            std::cout << "rows train=" << result.train_rows << " val=" << result.val_rows
                      << " initial_val_loss=" << result.initial_val_loss << "\n";
            for (const auto& e : result.epochs)
                std::cout << "epoch " << e.epoch << " train_loss=" << e.train_loss << " val_loss=" << e.val_loss
                          << "\n";
            if (fs::path(weights_out).has_parent_path()) fs::create_directories(fs::path(weights_out).parent_path());
            nn::save_weights(result.predictor.net, weights_out, &result.predictor.normalizer);
            if (!loss_out.empty()) write_file(loss_out, experiments::loss_csv(result));
        } else if (cmp->parsed()) {
            experiments::CompareOptions opts;
            opts.policies = split_csv(policies);
            try {
                experiments::check_policy_names(opts.policies);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            opts.seeds.clear();
            if (!seeds_arg.empty()) {
                for (const auto& s : split_csv(seeds_arg)) {
                    try {
                        opts.seeds.push_back(std::stoull(s));
                    } catch (const std::exception&) {
                        throw UsageError("bad seed '" + s + "'");
                    }
                }
                if (opts.seeds.size() != reps && cmp->count("--reps"))
                    throw UsageError("--seeds has " + std::to_string(opts.seeds.size()) + " entries, --reps is " +
                                     std::to_string(reps));
            } else {
                for (std::size_t r = 0; r < reps; ++r) opts.seeds.push_back(seed + r);
            }
            opts.predictor = load_predictor(weights_path);
            const SimConfig cfg = config_or_default(config_path);
            const auto trace = workload::load_trace(trace_path);
            const auto report = experiments::compare(cfg, trace, opts);
            for (const auto& line : report.log) std::cerr << line << "\n";
            write_file(fs::path(out) / "report.json", experiments::to_json(report));
            write_file(fs::path(out) / "report.csv", experiments::to_csv(report));
            std::cout << experiments::to_csv(report);
        } else if (sw->parsed()) {
            if (from_rps > to_rps) throw UsageError("--from-rps must be <= --to-rps");
            if (steps == 0) throw UsageError("--steps must be >= 1");
            const SimConfig cfg = config_or_default(config_path);
            const auto predictor = load_predictor(weights_path);
            const auto rows =
                experiments::sweep(cfg, from_rps, to_rps, steps, sweep_duration, {}, predictor ? &*predictor : nullptr);
            write_file(out, experiments::sweep_csv(rows));
            std::cout << experiments::sweep_csv(rows);
        } else if (ad->parsed()) {
            const SimConfig cfg = config_or_default(config_path);
            adapt_opts.seed = seed;
            scaling::ScalerConfig sc;
            sc.seed = seed;
            scaling::DnnScalerPolicy policy(sc, load_predictor(weights_path));
            const auto result = experiments::measure_adaptation(cfg, policy, adapt_opts);
            const auto text = experiments::adapt_json(result, adapt_opts);
            write_file(out, text);
            std::cout << text << "\n";
        } else if (ro->parsed()) {
            const SimConfig cfg = config_or_default(config_path);
            const auto demo = experiments::rollout_demo(cfg, fault_rate, seed);
            write_file(fs::path(out) / "events.jsonl", demo.events_jsonl);
            write_file(fs::path(out) / "summary.json", demo.summary);
            std::cout << demo.summary << "\n";
        } else if (im->parsed()) {
            const auto predictor = load_predictor(weights_path);
            const auto data = experiments::load_dataset(data_path);
            const auto report = experiments::importance(*predictor, data, seed);
            const auto text = experiments::importance_json(report);
            write_file(out, text);
            std::cout << text << "\n";
            const experiments::ReferenceImportance ref;
            std::cout << "reported in the original study (for comparison only): resource " << ref.resource
                      << ", performance " << ref.performance << ", workload " << ref.workload << ", network "
                      << ref.network << "\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
