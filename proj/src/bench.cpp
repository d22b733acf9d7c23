// SPDX-License-Identifier: Apache-2.0

#include "segstream/bench.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#ifdef __linux__
#include <sched.h>
#endif

#include "segstream/flops.hpp"
#include "segstream/harness.hpp"

namespace segstream {

std::string_view to_string(BenchVariant v) {
    switch (v) {
    case BenchVariant::augmem:
        return "augmem";
    case BenchVariant::augmem_no_banks:
        return "augmem_no_banks";
    case BenchVariant::implicit:
        return "implicit";
    }
    return "?";
}

BenchVariant parse_bench_variant(std::string_view name) {
    if (name == "augmem") {
        return BenchVariant::augmem;
    }
    if (name == "augmem_no_banks") {
        return BenchVariant::augmem_no_banks;
    }
    if (name == "implicit") {
        return BenchVariant::implicit;
    }
    throw ConfigError("unknown bench variant '" + std::string(name) +
                      "' (expected augmem, augmem_no_banks or implicit)");
}

void BenchSpec::validate() const {
    if (variants.empty()) {
        throw ConfigError("bench: no variants selected");
    }
    if (left_sizes.empty()) {
        throw ConfigError("bench: left_sizes must be non-empty");
    }
    if (!std::is_sorted(left_sizes.begin(), left_sizes.end())) {
        throw ConfigError("bench: left_sizes must be sorted ascending");
    }
    if (repeats < 3) {
        throw ConfigError("bench: repeats must be at least 3");
    }
    bench_config(*this, BenchVariant::augmem, left_sizes.back()).validate();
}

EncoderConfig bench_config(const BenchSpec &spec, BenchVariant v, std::size_t left) {
    EncoderConfig cfg;
    cfg.num_layers = spec.layers;
    cfg.d = spec.d;
    cfg.heads = spec.heads;
    cfg.layout = {left, spec.center, spec.right};
    cfg.clip = spec.clip;
    cfg.ffn_dim = spec.ffn_dim;
    cfg.input_dim = spec.input_dim;
    cfg.variant = v == BenchVariant::implicit ? Variant::implicit : Variant::augmem;
    cfg.bank_capacity = v == BenchVariant::augmem ? spec.bank_capacity : 0;
    return cfg;
}

std::size_t bench_segment_index(const BenchSpec &spec) {
    const std::size_t max_left = spec.left_sizes.empty() ? 0 : spec.left_sizes.back();
    const std::size_t for_left = (max_left + spec.center - 1) / spec.center;
    return std::max({for_left, spec.bank_capacity, std::size_t{1}});
}

BenchWorkload bench_workload(const BenchSpec &spec) {
    const EncoderConfig cfg = bench_config(spec, BenchVariant::implicit, 0);
    const std::size_t segments = bench_segment_index(spec) + 1;
    const std::size_t frames = cfg.subsample.frames_for_tokens(segments * spec.center + spec.right);
    constexpr double kFramePeriodMs = 10.0;
    BenchWorkload w;
    w.frames = synthetic_source(spec.seed, static_cast<double>(frames) * kFramePeriodMs,
                                kFramePeriodMs, spec.input_dim);
    w.weights = random_weights(cfg, spec.seed);
    return w;
}

namespace {

struct Fnv1a {
    std::uint64_t h = 1469598103934665603ull;

    void bytes(const void *p, std::size_t n) {
        const auto *b = static_cast<const unsigned char *>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    }
    void floats(const std::vector<float> &v) { bytes(v.data(), v.size() * sizeof(float)); }
    void mat(const Mat &m) {
        const std::uint64_t shape[2] = {m.rows, m.cols};
        bytes(shape, sizeof shape);
        floats(m.data);
    }
};

void pin_to_current_cpu() {
#ifdef __linux__
    const int cpu = sched_getcpu();
    if (cpu >= 0) {
        cpu_set_t set;
        CPU_ZERO(&set);
        CPU_SET(cpu, &set);
        sched_setaffinity(0, sizeof set, &set);
    }
#endif
}

double timer_resolution_ms() {
    using clock = std::chrono::steady_clock;
    double best = std::chrono::duration<double, std::milli>(clock::duration(1)).count();
    double observed = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto a = clock::now();
        auto b = clock::now();
        while (b == a) {
            b = clock::now();
        }
        const double dt = std::chrono::duration<double, std::milli>(b - a).count();
        observed = observed == 0.0 ? dt : std::min(observed, dt);
    }
    return std::max(best, observed);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::runtime_error("bench csv: bad number '" + std::string(s) + "'");
    }
    return v;
}

template <typename T> T parse_integer(std::string_view s) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::runtime_error("bench csv: bad integer '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

BenchRow summarize(BenchVariant v, std::size_t left, std::vector<double> runs,
                   double resolution_ms, std::uint64_t digest) {
    BenchRow row;
    row.variant = std::string(to_string(v));
    row.left = left;
    const double n = static_cast<double>(runs.size());
    row.mean_ms = std::accumulate(runs.begin(), runs.end(), 0.0) / n;
    double ss = 0.0;
    for (double r : runs) {
        ss += (r - row.mean_ms) * (r - row.mean_ms);
    }
    row.stddev_ms = runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    row.runs_ms = std::move(runs);
    row.timer_warning = resolution_ms > 0.01 * row.mean_ms;
    row.workload_digest = digest;
    return row;
}

} // namespace

std::uint64_t workload_digest(const Mat &frames, const EncoderWeights &w) {
    Fnv1a h;
    h.mat(frames);
    h.mat(w.frontend.conv1.weight);
    h.floats(w.frontend.conv1.bias);
    h.mat(w.frontend.conv2.weight);
    h.floats(w.frontend.conv2.bias);
    h.mat(w.frontend.proj);
    h.floats(w.frontend.proj_bias);
    for (const auto &l : w.layers) {
        h.floats(l.attn.pre_norm.gamma);
        h.floats(l.attn.pre_norm.beta);
        for (const Mat *m : {&l.attn.wq, &l.attn.wk, &l.attn.wv, &l.attn.wo, &l.attn.rel_table}) {
            h.mat(*m);
        }
        h.floats(l.ffn_norm.gamma);
        h.floats(l.ffn_norm.beta);
        h.mat(l.ffn_w1);
        h.floats(l.ffn_b1);
        h.mat(l.ffn_w2);
        h.floats(l.ffn_b2);
    }
    return h.h;
}

std::vector<BenchRow> run_bench(const BenchSpec &spec,
                                const std::function<void(const BenchRow &)> &on_row) {
    spec.validate();
    if (spec.pin_thread) {
        pin_to_current_cpu();
    }
    const BenchWorkload work = bench_workload(spec);
    const std::uint64_t digest = workload_digest(work.frames, work.weights);
    const std::size_t timed = bench_segment_index(spec);
    const double resolution = timer_resolution_ms();
    const std::size_t nv = spec.variants.size();

    struct Case {
        EncoderConfig cfg;
        SegmentWindow window;
        Mat window_frames;
        std::vector<LayerState> prefilled;
        std::vector<double> runs;
    };

    // Every (left, variant) case runs once per iteration, in an order rotated
    // by one each time, so slow drift in machine speed lands on all points
    // alike. Cases for the same left size sit next to each other.
    std::vector<Case> cases;
    for (std::size_t left : spec.left_sizes) {
        for (BenchVariant v : spec.variants) {
            Case c;
            c.cfg = bench_config(spec, v, left);
            const auto windows = segment_stream(work.frames.rows, c.cfg.layout, c.cfg.subsample,
                                                c.cfg.variant == Variant::augmem);
            c.prefilled.resize(c.cfg.num_layers);
            for (std::size_t k = 0; k < timed; ++k) {
                const auto &w = windows.at(k);
                encode_segment(slice_rows(work.frames, w.frame_begin, w.frame_end), w, c.prefilled,
                               c.cfg, work.weights);
            }
            c.window = windows.at(timed);
            c.window_frames = slice_rows(work.frames, c.window.frame_begin, c.window.frame_end);
            cases.push_back(std::move(c));
        }
    }

    const std::size_t nc = cases.size();
    for (std::size_t iter = 0; iter < spec.warmup + spec.repeats; ++iter) {
        for (std::size_t j = 0; j < nc; ++j) {
            Case &c = cases[(iter + j) % nc];
            std::vector<LayerState> state = c.prefilled;
            const auto t0 = std::chrono::steady_clock::now();
            const Mat out = encode_segment(c.window_frames, c.window, state, c.cfg, work.weights);
            const auto t1 = std::chrono::steady_clock::now();
            if (out.rows != c.window.center) {
                throw std::logic_error("bench: unexpected output size");
            }
            if (iter >= spec.warmup) {
                c.runs.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
        }
    }

    std::vector<BenchRow> rows;
    for (std::size_t j = 0; j < nv; ++j) {
        for (std::size_t li = 0; li < spec.left_sizes.size(); ++li) {
            BenchRow row = summarize(spec.variants[j], spec.left_sizes[li],
                                     std::move(cases[li * nv + j].runs), resolution, digest);
            if (on_row) {
                on_row(row);
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_bench_csv(std::ostream &out, const std::vector<BenchRow> &rows) {
    out << "variant,left,mean_ms,stddev_ms,timer_warning,workload_digest,runs_ms\n";
    for (const auto &r : rows) {
        out << r.variant << ',' << r.left << ',' << format_double(r.mean_ms) << ','
            << format_double(r.stddev_ms) << ',' << (r.timer_warning ? 1 : 0) << ','
            << r.workload_digest << ',';
        for (std::size_t i = 0; i < r.runs_ms.size(); ++i) {
            out << (i ? ";" : "") << format_double(r.runs_ms[i]);
        }
        out << '\n';
    }
}

std::vector<BenchRow> read_bench_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) ||
        line != "variant,left,mean_ms,stddev_ms,timer_warning,workload_digest,runs_ms") {
        throw std::runtime_error("bench csv: missing or unexpected header");
    }
    std::vector<BenchRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split(line, ',');
        if (f.size() != 7) {
            throw std::runtime_error("bench csv: expected 7 fields in '" + line + "'");
        }
        BenchRow r;
        r.variant = std::string(f[0]);
        r.left = parse_integer<std::size_t>(f[1]);
        r.mean_ms = parse_double(f[2]);
        r.stddev_ms = parse_double(f[3]);
        r.timer_warning = parse_integer<int>(f[4]) != 0;
        r.workload_digest = parse_integer<std::uint64_t>(f[5]);
        if (!f[6].empty()) {
            for (auto v : split(f[6], ';')) {
                r.runs_ms.push_back(parse_double(v));
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            r[order[t]] = avg;
        }
        i = j + 1;
    }
    return r;
}

} // namespace

double spearman_rank_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("spearman: need two equal-length series of length >= 2");
    }
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

TimingShape assess_timing_shape(const std::vector<BenchRow> &rows) {
    auto series = [&](std::string_view variant) {
        std::vector<const BenchRow *> s;
        for (const auto &r : rows) {
            if (r.variant == variant) {
                s.push_back(&r);
            }
        }
        std::sort(s.begin(), s.end(), [](auto *a, auto *b) { return a->left < b->left; });
        return s;
    };
    auto rho = [](const std::vector<const BenchRow *> &s) {
        std::vector<double> l, t;
        for (auto *r : s) {
            l.push_back(static_cast<double>(r->left));
            t.push_back(r->mean_ms);
        }
        return s.size() >= 2 ? spearman_rank_correlation(l, t) : 0.0;
    };
    auto increasing = [](const std::vector<const BenchRow *> &s) {
        if (s.size() < 2) {
            return false;
        }
        for (std::size_t i = 1; i < s.size(); ++i) {
            if (!(s[i]->mean_ms > s[i - 1]->mean_ms)) {
                return false;
            }
        }
        return true;
    };

    TimingShape shape;
    const auto imp = series("implicit");
    if (imp.size() >= 2) {
        shape.implicit_ratio = imp.back()->mean_ms / imp.front()->mean_ms;
    }
    const auto aug = series("augmem");
    const auto nob = series("augmem_no_banks");
    shape.augmem_rho = rho(aug);
    shape.augmem_no_banks_rho = rho(nob);
    shape.augmem_increasing = increasing(aug);
    shape.augmem_no_banks_increasing = increasing(nob);

    bool compared = false;
    shape.banks_cost_more = true;
    for (auto *a : aug) {
        if (a->left < 64) {
            continue;
        }
        for (auto *b : nob) {
            if (b->left == a->left) {
                compared = true;
                shape.banks_cost_more = shape.banks_cost_more && a->mean_ms >= b->mean_ms;
            }
        }
    }
    shape.banks_cost_more = shape.banks_cost_more && compared;
    return shape;
}

void write_flops_table(std::ostream &out, const EncoderConfig &base,
                       const std::vector<std::size_t> &left_sizes,
                       const std::vector<std::size_t> &bank_counts) {
    out << "left,center,right,banks,term,augmem,implicit,xl,ratio_augmem_implicit\n";
    for (std::size_t banks : bank_counts) {
        for (std::size_t left : left_sizes) {
            EncoderConfig cfg = base;
            cfg.layout.left = left;
            cfg.bank_capacity = banks;
            cfg.variant = Variant::augmem;
            const auto aug = flops_estimate(cfg);
            cfg.variant = Variant::implicit;
            const auto imp = flops_estimate(cfg);
            cfg.variant = Variant::xl;
            const auto xl = flops_estimate(cfg);

            auto row = [&](std::string_view term, std::uint64_t a, std::uint64_t i,
                           std::uint64_t x) {
                const double ratio =
                    i == 0 ? (a == 0 ? 1.0 : INFINITY) : static_cast<double>(a) / static_cast<double>(i);
                out << left << ',' << cfg.layout.center << ',' << cfg.layout.right << ',' << banks
                    << ',' << term << ',' << a << ',' << i << ',' << x << ','
                    << format_double(ratio) << '\n';
            };
            row("qk_formula", aug.qk_formula, imp.qk_formula, xl.qk_formula);
            row("attention_qk_av", aug.total.attention_qk_av, imp.total.attention_qk_av,
                xl.total.attention_qk_av);
            row("projections", aug.total.projections, imp.total.projections, xl.total.projections);
            row("ffn", aug.total.ffn, imp.total.ffn, xl.total.ffn);
            row("conv", aug.total.conv, imp.total.conv, xl.total.conv);
            row("total", aug.total.total(), imp.total.total(), xl.total.total());
        }
    }
}

} // namespace segstream
