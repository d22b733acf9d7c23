// SPDX-License-Identifier: Apache-2.0
//
// segstream <verify|bench|flops|simulate|encode> [--config FILE] [--seed N] [--out FILE]
//
// Exit status: 0 success, 1 verification failure, 2 usage or config error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segstream/bench.hpp"
#include "segstream/config_file.hpp"
#include "segstream/flops.hpp"
#include "segstream/harness.hpp"
#include "segstream/tensor_io.hpp"
#include "segstream/verify.hpp"
#include "segstream/weights_io.hpp"

namespace {

using namespace segstream;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

struct Globals {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
};

EncoderConfig base_config(const Globals &g) {
    return g.config.empty() ? EncoderConfig{} : load_config(g.config);
}

// Writes to --out when given, stdout otherwise.
template <typename F> void with_output(const Globals &g, F &&write) {
    if (g.out.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream f(g.out, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot open output file '" + g.out + "'");
    }
    write(f);
}

int run_verify_cmd(const Globals &g, const std::string &suite, const std::string &fault) {
    VerifyOptions opts;
    opts.seed = g.seed;
    opts.threads = threads_from_env();
    if (!fault.empty()) {
        if (fault != "bank-offset") {
            throw ConfigError("unknown fault '" + fault + "' (expected bank-offset)");
        }
        opts.fault_bank_offset = true;
    }
    const auto results = run_verify(parse_suite(suite), opts);
    print_report(std::cout, results);
    for (const auto &r : results) {
        if (!r.pass) {
            return kExitFailed;
        }
    }
    return kExitOk;
}

int run_bench_cmd(const Globals &g, BenchSpec spec, const std::vector<std::string> &variants) {
    if (!g.config.empty()) {
        const EncoderConfig cfg = base_config(g);
        spec.layers = cfg.num_layers;
        spec.d = cfg.d;
        spec.heads = cfg.heads;
        spec.center = cfg.layout.center;
        spec.right = cfg.layout.right;
        spec.bank_capacity = cfg.bank_capacity;
        spec.clip = cfg.clip;
        spec.ffn_dim = cfg.ffn_dim;
        spec.input_dim = cfg.input_dim;
    }
    spec.seed = g.seed;
    if (!variants.empty()) {
        spec.variants.clear();
        for (const auto &v : variants) {
            spec.variants.push_back(parse_bench_variant(v));
        }
    }
    spec.validate();

    const auto rows = run_bench(spec, [](const BenchRow &r) {
        std::fprintf(stderr, "%-16s l=%-4zu mean %8.3f ms  sd %7.3f ms%s\n", r.variant.c_str(),
                     r.left, r.mean_ms, r.stddev_ms, r.timer_warning ? "  [timer warning]" : "");
    });
    with_output(g, [&](std::ostream &os) { write_bench_csv(os, rows); });

    const TimingShape shape = assess_timing_shape(rows);
    std::fprintf(stderr,
                 "implicit t(max l)/t(min l) = %.3f; spearman augmem %.3f, augmem_no_banks %.3f\n",
                 shape.implicit_ratio, shape.augmem_rho, shape.augmem_no_banks_rho);
    return kExitOk;
}

int run_flops_cmd(const Globals &g, const std::vector<std::size_t> &left_sizes,
                  const std::vector<std::size_t> &banks) {
    const EncoderConfig cfg = base_config(g);
    with_output(g, [&](std::ostream &os) { write_flops_table(os, cfg, left_sizes, banks); });
    return kExitOk;
}

struct SimulateArgs {
    std::vector<std::size_t> ks{kWaitKPresets.begin(), kWaitKPresets.end()};
    double duration_ms = 8000.0;
    double frame_period_ms = 10.0;
    std::size_t ratio = 8;
    std::optional<std::size_t> trace_k;
};

int run_simulate_cmd(const Globals &g, const SimulateArgs &a) {
    const EncoderConfig cfg = base_config(g);
    const EncoderWeights weights = random_weights(cfg, g.seed);
    const Mat frames = synthetic_source(g.seed, a.duration_ms, a.frame_period_ms, cfg.input_dim);
    std::optional<StreamTrace> trace;
    for (std::size_t k : a.ks) {
        const auto res = simulate_stream(frames, cfg, weights, {k, a.ratio}, a.frame_period_ms);
        std::printf("wait-%zu AL = %.0f ms (%zu writes, %zu reads)\n", k,
                    std::round(res.average_lagging_ms), res.trace.tgt_tokens, res.trace.src_chunks);
        if (a.trace_k && *a.trace_k == k) {
            trace = res.trace;
        }
    }
    if (a.trace_k) {
        if (!trace) {
            throw ConfigError("--trace-k must be one of the simulated k values");
        }
        if (g.out.empty()) {
            throw ConfigError("--trace-k needs --out");
        }
        with_output(g, [&](std::ostream &os) { write_trace_csv(os, *trace); });
    }
    return kExitOk;
}

int run_encode_cmd(const Globals &g, const std::string &input, const std::string &weights_path,
                   double duration_ms) {
    if (g.out.empty()) {
        throw ConfigError("encode needs --out");
    }
    const EncoderConfig cfg = base_config(g);
    const EncoderWeights weights =
        weights_path.empty() ? random_weights(cfg, g.seed) : load_weights(weights_path, cfg);
    const Mat frames = input.empty() ? synthetic_source(g.seed, duration_ms, 10.0, cfg.input_dim)
                                     : load_tensor(input);
    const Mat out = encode_utterance(frames, cfg, weights);
    save_tensor(g.out, out);
    std::printf("%zu frames -> %zu x %zu\n", frames.rows, out.rows, out.cols);
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Streaming segment-attention encoder: verification, timing and latency tools"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "key = value encoder config file");
    app.add_option("--seed", g.seed, "seed for weights and synthetic inputs");
    app.add_option("--out", g.out, "output file (CSV, or SGT1 for encode)");

    auto *verify = app.add_subcommand("verify", "run invariant suites");
    std::string suite = "all";
    std::string fault;
    verify->add_option("suite", suite, "kernels | attention | encoder | harness | all");
    verify->add_option("--inject-fault", fault, "mutation fixture: bank-offset");

    auto *bench = app.add_subcommand("bench", "forward-pass time against left context");
    BenchSpec spec;
    std::vector<std::string> variants;
    bench->add_option("--left-sizes", spec.left_sizes, "ascending left sizes")->delimiter(',');
    bench->add_option("--repeats", spec.repeats, "timed runs per point (>= 3)");
    bench->add_option("--warmup", spec.warmup, "discarded runs per point");
    bench->add_option("--variants", variants, "augmem, augmem_no_banks, implicit")->delimiter(',');
    bench->add_flag("!--no-pin", spec.pin_thread, "do not pin the thread to a CPU");

    auto *flops = app.add_subcommand("flops", "analytical MAC table");
    std::vector<std::size_t> flop_left{0, 16, 32, 64, 96, 128};
    std::vector<std::size_t> flop_banks{0, 3};
    flops->add_option("--left-sizes", flop_left)->delimiter(',');
    flops->add_option("--banks", flop_banks)->delimiter(',');

    auto *simulate = app.add_subcommand("simulate", "wait-k streaming with Average Lagging");
    SimulateArgs sim;
    std::size_t trace_k = 0;
    simulate->add_option("--k", sim.ks, "wait-k values")->delimiter(',');
    simulate->add_option("--duration-ms", sim.duration_ms, "synthetic source length");
    simulate->add_option("--frame-period-ms", sim.frame_period_ms);
    simulate->add_option("--ratio", sim.ratio, "pre-decision ratio (tokens per chunk)");
    auto *trace_opt = simulate->add_option("--trace-k", trace_k, "write this k's trace CSV to --out");

    auto *encode = app.add_subcommand("encode", "encode an SGT1 frame file");
    std::string input, weights_path;
    double encode_ms = 5000.0;
    encode->add_option("--input", input, "SGT1 frames (synthetic when omitted)");
    encode->add_option("--weights", weights_path, "weight manifest (seeded random when omitted)");
    encode->add_option("--duration-ms", encode_ms, "synthetic input length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*verify) {
            return run_verify_cmd(g, suite, fault);
        }
        if (*bench) {
            return run_bench_cmd(g, spec, variants);
        }
        if (*flops) {
            return run_flops_cmd(g, flop_left, flop_banks);
        }
        if (*simulate) {
            if (*trace_opt) {
                sim.trace_k = trace_k;
            }
            return run_simulate_cmd(g, sim);
        }
        if (*encode) {
            return run_encode_cmd(g, input, weights_path, encode_ms);
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError &e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
