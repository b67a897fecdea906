#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sslnet/bench.hpp"
#include "sslnet/checkpoint.hpp"
#include "sslnet/config.hpp"
#include "sslnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sslnet;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir;
    std::int64_t seed_override = -1;
    int iters_override = -1;
};

Config load_config(const CommonOpts& opts) {
    Config cfg = load_config_file(opts.config_path);
    if (opts.seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(opts.seed_override);
    if (opts.iters_override >= 0) cfg.train.total_iters = opts.iters_override;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    return cfg;
}

std::string metadata_for(const Config& cfg, int iter, const std::vector<MetricsRow>& rows) {
    json meta;
    meta["arch"] = json::parse(arch_to_json(cfg.arch));
    meta["iter"] = iter;
    meta["seed"] = cfg.train.seed;
    if (!rows.empty()) {
        const MetricsRow& r = rows.back();
        meta["metrics_tail"] = {{"iter", r.iter},         {"train_loss", r.train_loss},
                                {"train_acc", r.train_acc}, {"eval_acc", r.eval_acc},
                                {"sparsity", r.sparsity},   {"lr", r.lr}};
    }
    return meta.dump();
}

int cmd_train(const CommonOpts& opts, int save_every) {
    Config cfg = load_config(opts);
    auto [train_set, eval_set] = load_dataset(cfg.dataset);
    Rng init_rng(cfg.train.seed);
    Graph g = build_network(cfg.arch, init_rng);
    fs::create_directories(cfg.output_dir);

    TrainHook hook;
    std::vector<MetricsRow> rows;
    if (save_every > 0) {
        hook = [&](int iter, Graph& graph) {
            if ((iter + 1) % save_every == 0) {
                save_checkpoint(graph, metadata_for(cfg, iter + 1, rows),
                                (fs::path(cfg.output_dir) / ("checkpoint_" + std::to_string(iter + 1) + ".bin"))
                                    .string());
            }
        };
    }
    rows = train(g, train_set, eval_set, cfg.train, hook);

    const std::string metrics_path = (fs::path(cfg.output_dir) / "metrics.csv").string();
    write_metrics_csv(metrics_path, rows);
    const std::string ckpt_path = (fs::path(cfg.output_dir) / "checkpoint.bin").string();
    save_checkpoint(g, metadata_for(cfg, cfg.train.total_iters, rows), ckpt_path);

    if (!rows.empty()) {
        const MetricsRow& r = rows.back();
        std::printf("iter %d  train_loss %.4f  train_acc %.4f  eval_acc %.4f  sparsity %.4f\n", r.iter,
                    r.train_loss, r.train_acc, r.eval_acc, r.sparsity);
    }
    std::printf("checkpoint: %s\nmetrics: %s\n", ckpt_path.c_str(), metrics_path.c_str());
    return 0;
}

int cmd_eval(const CommonOpts& opts) {
    Config cfg = load_config(opts);
    auto [train_set, eval_set] = load_dataset(cfg.dataset);
    (void)train_set;
    Rng init_rng(cfg.train.seed);
    Graph g = build_network(cfg.arch, init_rng);
    load_checkpoint_into(g, opts.checkpoint_path);
    const float acc = evaluate(g, eval_set, cfg.train.batch_size);
    std::printf("eval_acc %.4f\n", acc);
    return 0;
}

int cmd_cost(const CommonOpts& opts) {
    Config cfg = load_config(opts);
    Rng init_rng(cfg.train.seed);
    Graph g = build_network(cfg.arch, init_rng);
    const CostReport report = count_cost(g, cfg.arch.input_shape());
    std::printf("madds %llu\nparams %llu\n", static_cast<unsigned long long>(report.madds),
                static_cast<unsigned long long>(report.params));
    std::printf("madds_millions %.1f\nparams_millions %.2f\n", report.madds / 1e6, report.params / 1e6);
    return 0;
}

int cmd_sparsity(const CommonOpts& opts) {
    const CheckpointFile cf = read_checkpoint(opts.checkpoint_path);
    // shift layers are the (name.alpha, name.beta) block pairs
    std::int64_t total_unshifted = 0, total_channels = 0;
    std::printf("%-24s %16s %10s\n", "layer", "unshifts/channels", "sparsity");
    for (std::size_t i = 0; i < cf.blocks.size(); ++i) {
        const CheckpointBlock& a = cf.blocks[i];
        const std::string suffix = ".alpha";
        if (a.name.size() <= suffix.size() ||
            a.name.compare(a.name.size() - suffix.size(), suffix.size(), suffix) != 0) {
            continue;
        }
        const std::string base = a.name.substr(0, a.name.size() - suffix.size());
        const CheckpointBlock* b = nullptr;
        for (const CheckpointBlock& cand : cf.blocks) {
            if (cand.name == base + ".beta") {
                b = &cand;
                break;
            }
        }
        if (!b || b->data.size() != a.data.size()) continue;
        int unshifted = 0;
        for (std::size_t c = 0; c < a.data.size(); ++c) {
            if (round_displacement(a.data[c]) == 0 && round_displacement(b->data[c]) == 0) ++unshifted;
        }
        total_unshifted += unshifted;
        total_channels += static_cast<std::int64_t>(a.data.size());
        // report by the owning layer, e.g. "block2_2" for "block2_2.shift"
        std::string layer = base;
        if (layer.size() > 6 && layer.compare(layer.size() - 6, 6, ".shift") == 0) {
            layer = layer.substr(0, layer.size() - 6);
        }
        std::printf("%-24s %9d / %-6zu %9.1f%%\n", layer.c_str(), unshifted, a.data.size(),
                    100.0 * unshifted / static_cast<double>(a.data.size()));
    }
    if (total_channels == 0) {
        std::fprintf(stderr, "checkpoint contains no shift layers\n");
        return 1;
    }
    std::printf("%-24s %9lld / %-6lld %9.1f%%\n", "total", static_cast<long long>(total_unshifted),
                static_cast<long long>(total_channels),
                100.0 * static_cast<double>(total_unshifted) / static_cast<double>(total_channels));
    return 0;
}

int cmd_ablate(const CommonOpts& opts, int remove_k) {
    Config cfg = load_config(opts);
    auto [train_set, eval_set] = load_dataset(cfg.dataset);
    (void)train_set;
    Rng init_rng(cfg.train.seed);
    Graph g = build_network(cfg.arch, init_rng);
    load_checkpoint_into(g, opts.checkpoint_path);

    const auto order = ablation_order(g);
    if (remove_k < 0 || remove_k > static_cast<int>(order.size())) {
        throw ConfigError("--remove must be in [0, " + std::to_string(order.size()) + "]");
    }
    std::vector<std::string> victims(order.begin(), order.begin() + remove_k);
    Graph reduced = remove_shift_layers(g, victims);
    const float acc = evaluate(reduced, eval_set, cfg.train.batch_size);
    std::printf("removed %d of %zu shift layers\n", remove_k, order.size());
    for (const std::string& v : victims) std::printf("  removed %s\n", v.c_str());
    std::printf("eval_acc %.4f\n", acc);
    return 0;
}

KernelId kernel_from_name(const std::string& name) {
    if (name == "dense_shift") return KernelId::DenseShift;
    if (name == "sparse_shift") return KernelId::SparseShift;
    if (name == "depthwise3") return KernelId::DepthwiseConv3;
    if (name == "depthwise5") return KernelId::DepthwiseConv5;
    if (name == "pointwise") return KernelId::PointwiseConv;
    throw ConfigError("unknown bench kernel '" + name + "'");
}

int cmd_bench(const std::string& bench_config_path, const std::string& out_dir) {
    json j;
    if (!bench_config_path.empty()) {
        std::ifstream in(bench_config_path);
        if (!in) throw ConfigError("cannot open bench config: " + bench_config_path);
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bench config is not valid JSON: ") + e.what());
        }
    } else {
        j = json::parse(R"({
          "cases": [
            {"kernel": "dense_shift", "shape": [32,64,56,56], "runs": 30},
            {"kernel": "sparse_shift", "shape": [32,64,56,56], "sparsity": 0.9, "runs": 30},
            {"kernel": "depthwise3", "shape": [32,64,56,56], "runs": 10},
            {"kernel": "depthwise5", "shape": [32,64,56,56], "runs": 10},
            {"kernel": "pointwise", "shape": [32,64,56,56], "runs": 10}
          ]
        })");
    }

    const std::uint64_t seed = j.value("seed", 1);
    BenchReport report;
    report.logical_cpus = static_cast<int>(std::thread::hardware_concurrency());
    for (const json& c : j.value("cases", json::array())) {
        KernelCase kc;
        kc.kernel = kernel_from_name(c.at("kernel").get<std::string>());
        if (c.contains("shape")) {
            const auto v = c.at("shape").get<std::vector<int>>();
            if (v.size() != 4) throw ConfigError("bench shape must have 4 entries");
            kc.shape = {v[0], v[1], v[2], v[3]};
        }
        kc.sparsity = c.value("sparsity", 0.0);
        kc.runs = c.value("runs", 100);
        kc.warmup = c.value("warmup", 5);
        report.rows.push_back(run_kernel_bench(kc, seed));
    }

    if (j.contains("decomposition")) {
        const json& d = j.at("decomposition");
        ArchSpec arch = d.contains("arch") ? arch_from_json(d.at("arch").dump()) : ArchSpec{};
        const int batch = d.value("batch", 1);
        const int runs = d.value("runs", 3);
        const double sparsity = d.value("sparsity", -1.0);
        BenchReport decomp = run_decomposition(arch, arch.input_shape(batch), runs, seed, sparsity);
        for (const BenchRow& r : decomp.rows) report.rows.push_back(r);
    }

    std::printf("%s", report.to_text().c_str());
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string path = (fs::path(out_dir) / "bench.csv").string();
        std::ofstream out(path);
        out << report.to_csv();
        std::printf("csv: %s\n", path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse shift layer networks: training, inspection and kernel benchmarks"};
    app.require_subcommand(1);

    CommonOpts opts;
    int save_every = 0;
    int remove_k = 0;
    std::string bench_config;

    auto* train_cmd = app.add_subcommand("train", "train a network from a JSON config");
    train_cmd->add_option("--config", opts.config_path, "config file")->required();
    train_cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
    train_cmd->add_option("--seed", opts.seed_override, "seed override");
    train_cmd->add_option("--iters", opts.iters_override, "iteration override (smoke tests)");
    train_cmd->add_option("--save-every", save_every, "also save checkpoint_<iter>.bin every N iters");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the config's test set");
    eval_cmd->add_option("--config", opts.config_path, "config file")->required();
    eval_cmd->add_option("--checkpoint", opts.checkpoint_path, "checkpoint file")->required();

    auto* cost_cmd = app.add_subcommand("cost", "report MAdds and parameter count");
    cost_cmd->add_option("--config", opts.config_path, "config file")->required();

    auto* sparsity_cmd = app.add_subcommand("sparsity", "per-layer shift sparsity of a checkpoint");
    sparsity_cmd->add_option("--checkpoint", opts.checkpoint_path, "checkpoint file")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "remove the most-unimportant shift layers and re-eval");
    ablate_cmd->add_option("--config", opts.config_path, "config file")->required();
    ablate_cmd->add_option("--checkpoint", opts.checkpoint_path, "checkpoint file")->required();
    ablate_cmd->add_option("--remove", remove_k, "how many layers to remove");

    auto* bench_cmd = app.add_subcommand("bench", "kernel micro-benchmarks and runtime decomposition");
    bench_cmd->add_option("--bench-config", bench_config, "bench config JSON (default: built-in cases)");
    bench_cmd->add_option("--out", opts.out_dir, "directory for bench.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*train_cmd) return cmd_train(opts, save_every);
        if (*eval_cmd) return cmd_eval(opts);
        if (*cost_cmd) return cmd_cost(opts);
        if (*sparsity_cmd) return cmd_sparsity(opts);
        if (*ablate_cmd) return cmd_ablate(opts, remove_k);
        if (*bench_cmd) return cmd_bench(bench_config, opts.out_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const ValueError& e) {
        std::fprintf(stderr, "invalid value: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
