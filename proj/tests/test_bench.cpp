// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "segstream/bench.hpp"

using namespace segstream;

namespace {

BenchSpec tiny_spec() {
    BenchSpec s;
    s.left_sizes = {0, 4, 8};
    s.center = 8;
    s.right = 4;
    s.repeats = 3;
    s.warmup = 1;
    s.d = 16;
    s.heads = 2;
    s.layers = 2;
    s.ffn_dim = 32;
    s.input_dim = 8;
    s.bank_capacity = 2;
    s.clip = 5;
    s.pin_thread = false;
    return s;
}

BenchRow row(std::string v, std::size_t l, double mean) {
    BenchRow r;
    r.variant = std::move(v);
    r.left = l;
    r.mean_ms = mean;
    r.runs_ms = {mean, mean, mean};
    return r;
}

} // namespace

TEST(BenchSpec, Validation) {
    BenchSpec s;
    EXPECT_NO_THROW(s.validate());
    s.repeats = 2;
    EXPECT_THROW(s.validate(), ConfigError);
    s = BenchSpec{};
    s.left_sizes = {32, 16};
    EXPECT_THROW(s.validate(), ConfigError);
    s.left_sizes = {};
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(parse_bench_variant("xl"), ConfigError);
    EXPECT_EQ(parse_bench_variant("augmem_no_banks"), BenchVariant::augmem_no_banks);
}

TEST(BenchSpec, ConfigsPerVariant) {
    BenchSpec s;
    const auto a = bench_config(s, BenchVariant::augmem, 64);
    EXPECT_EQ(a.variant, Variant::augmem);
    EXPECT_EQ(a.bank_capacity, 3u);
    EXPECT_EQ(a.layout.left, 64u);
    EXPECT_EQ(bench_config(s, BenchVariant::augmem_no_banks, 64).bank_capacity, 0u);
    EXPECT_EQ(bench_config(s, BenchVariant::implicit, 64).variant, Variant::implicit);
    EXPECT_EQ(bench_segment_index(s), 3u);
}

TEST(Bench, TinyRunShapeAndDeterministicWorkload) {
    const auto spec = tiny_spec();
    std::size_t streamed = 0;
    const auto rows = run_bench(spec, [&](const BenchRow &) { ++streamed; });
    ASSERT_EQ(rows.size(), 9u);
    EXPECT_EQ(streamed, 9u);
    EXPECT_EQ(rows[0].variant, "augmem");
    EXPECT_EQ(rows[3].variant, "augmem_no_banks");
    EXPECT_EQ(rows[8].variant, "implicit");
    EXPECT_EQ(rows[8].left, 8u);
    for (const auto &r : rows) {
        ASSERT_EQ(r.runs_ms.size(), 3u);
        const auto [lo, hi] = std::minmax_element(r.runs_ms.begin(), r.runs_ms.end());
        EXPECT_GE(r.mean_ms, *lo);
        EXPECT_LE(r.mean_ms, *hi);
        EXPECT_GE(r.stddev_ms, 0.0);
        EXPECT_EQ(r.workload_digest, rows[0].workload_digest);
    }
    const auto w1 = bench_workload(spec);
    const auto w2 = bench_workload(spec);
    EXPECT_EQ(workload_digest(w1.frames, w1.weights), workload_digest(w2.frames, w2.weights));
    EXPECT_EQ(workload_digest(w1.frames, w1.weights), rows[0].workload_digest);
    auto other = spec;
    other.seed = 2;
    const auto w3 = bench_workload(other);
    EXPECT_NE(workload_digest(w3.frames, w3.weights), rows[0].workload_digest);
}

TEST(BenchCsv, RoundTripIsExact) {
    std::vector<BenchRow> rows;
    for (std::size_t i = 0; i < 4; ++i) {
        BenchRow r;
        r.variant = i % 2 ? "implicit" : "augmem";
        r.left = i * 16;
        r.runs_ms = {0.1 * static_cast<double>(i) + 1.0 / 3.0, 2.0e-7, 123456.789012345};
        r.mean_ms = std::nextafter(5.0, 6.0);
        r.stddev_ms = 1.0 / 7.0;
        r.timer_warning = i == 2;
        r.workload_digest = 0xfedcba9876543210ull - i;
        rows.push_back(r);
    }
    std::stringstream buf;
    write_bench_csv(buf, rows);
    EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')),
              "variant,left,mean_ms,stddev_ms,timer_warning,workload_digest,runs_ms");
    EXPECT_EQ(buf.str().find('\r'), std::string::npos);
    EXPECT_EQ(read_bench_csv(buf), rows);

    std::stringstream bad("variant,left\nx,1\n");
    EXPECT_THROW(read_bench_csv(bad), std::runtime_error);
}

TEST(Spearman, RanksWithTies) {
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(spearman_rank_correlation(x, std::vector<double>{10, 20, 30, 40}), 1.0);
    EXPECT_DOUBLE_EQ(spearman_rank_correlation(x, std::vector<double>{4, 3, 2, 1}), -1.0);
    EXPECT_LT(spearman_rank_correlation(x, std::vector<double>{1, 1, 2, 2}), 1.0);
    EXPECT_THROW(spearman_rank_correlation(x, std::vector<double>{1}), std::invalid_argument);
}

TEST(TimingShape, Assessment) {
    std::vector<BenchRow> rows;
    const double aug[] = {10, 11, 12, 14, 16, 18};
    const double nob[] = {9.9, 10.8, 11.9, 13.9, 15.8, 17.9};
    const double imp[] = {8, 8.1, 8.2, 8.3, 8.4, 8.5};
    const std::size_t ls[] = {0, 16, 32, 64, 96, 128};
    for (int i = 0; i < 6; ++i) {
        rows.push_back(row("augmem", ls[i], aug[i]));
        rows.push_back(row("augmem_no_banks", ls[i], nob[i]));
        rows.push_back(row("implicit", ls[i], imp[i]));
    }
    auto shape = assess_timing_shape(rows);
    EXPECT_NEAR(shape.implicit_ratio, 8.5 / 8.0, 1e-12);
    EXPECT_DOUBLE_EQ(shape.augmem_rho, 1.0);
    EXPECT_TRUE(shape.augmem_increasing);
    EXPECT_TRUE(shape.augmem_no_banks_increasing);
    EXPECT_TRUE(shape.banks_cost_more);

    rows[3 * 3 + 1].mean_ms = 50.0; // no-banks at l = 64 slower than banks
    shape = assess_timing_shape(rows);
    EXPECT_FALSE(shape.banks_cost_more);
    EXPECT_FALSE(shape.augmem_no_banks_increasing);
}

TEST(FlopsTable, DefaultRowAndCollapse) {
    std::ostringstream out;
    write_flops_table(out, EncoderConfig{}, {0, 32}, {0, 3});
    const std::string csv = out.str();
    EXPECT_NE(csv.find("32,64,32,3,qk_formula,4292608,3145728,"), std::string::npos) << csv;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "left,center,right,banks,term,augmem,implicit,xl,ratio_augmem_implicit");
    std::size_t collapse_rows = 0;
    while (std::getline(in, line)) {
        if (line.rfind("0,64,32,0,", 0) == 0) {
            ++collapse_rows;
            EXPECT_EQ(line.substr(line.rfind(',') + 1), "1") << line;
        }
    }
    EXPECT_EQ(collapse_rows, 6u);
}
