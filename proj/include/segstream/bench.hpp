// SPDX-License-Identifier: Apache-2.0
//
// Forward-pass timing of one steady-state segment against the left-context
// size, plus the complexity table. CSV output is the contract: header row,
// comma separated, '.' decimals, LF line endings.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segstream/encoder.hpp"

namespace segstream {

enum class BenchVariant { augmem, augmem_no_banks, implicit };

std::string_view to_string(BenchVariant v);
BenchVariant parse_bench_variant(std::string_view name);

struct BenchSpec {
    std::vector<BenchVariant> variants = {BenchVariant::augmem, BenchVariant::augmem_no_banks,
                                          BenchVariant::implicit};
    std::vector<std::size_t> left_sizes = {0, 16, 32, 64, 96, 128};
    std::size_t center = 64;
    std::size_t right = 32;
    std::size_t repeats = 10;
    std::size_t warmup = 3;
    std::size_t d = 256;
    std::size_t heads = 4;
    std::size_t layers = 12;
    std::size_t ffn_dim = 2048;
    std::size_t input_dim = 80;
    std::size_t bank_capacity = 3; // used by the augmem variant only
    std::size_t clip = 16;
    std::uint64_t seed = 1;
    bool pin_thread = true;

    void validate() const;
};

struct BenchRow {
    std::string variant;
    std::size_t left = 0;
    double mean_ms = 0.0;
    double stddev_ms = 0.0;
    std::vector<double> runs_ms;
    bool timer_warning = false; // timer resolution coarser than 1% of the mean
    std::uint64_t workload_digest = 0;

    friend bool operator==(const BenchRow &, const BenchRow &) = default;
};

EncoderConfig bench_config(const BenchSpec &spec, BenchVariant v, std::size_t left);

// Inputs and weights shared by every variant and left size.
struct BenchWorkload {
    Mat frames;
    EncoderWeights weights;
};

BenchWorkload bench_workload(const BenchSpec &spec);

// FNV-1a over the bits of the frames and every weight tensor.
std::uint64_t workload_digest(const Mat &frames, const EncoderWeights &weights);

// Index of the timed segment: late enough that banks and left context are
// saturated for every configured size.
std::size_t bench_segment_index(const BenchSpec &spec);

// Rows are ordered by variant (as listed in the spec), then by left size.
// Variants are interleaved per repeat so slow drift hits all of them alike.
std::vector<BenchRow> run_bench(const BenchSpec &spec,
                                const std::function<void(const BenchRow &)> &on_row = {});

void write_bench_csv(std::ostream &out, const std::vector<BenchRow> &rows);
std::vector<BenchRow> read_bench_csv(std::istream &in);

double spearman_rank_correlation(std::span<const double> x, std::span<const double> y);

// Shape of the timing curves against left size.
struct TimingShape {
    double implicit_ratio = 0.0;     // t(largest l) / t(smallest l)
    double augmem_rho = 0.0;         // Spearman(l, mean) with banks
    double augmem_no_banks_rho = 0.0;
    bool augmem_increasing = false;  // strictly increasing means
    bool augmem_no_banks_increasing = false;
    bool banks_cost_more = false;    // augmem >= augmem_no_banks for every l >= 64
};

TimingShape assess_timing_shape(const std::vector<BenchRow> &rows);

// One row per (left size, bank count, term) with augmem, implicit and xl MAC
// counts and the augmem / implicit ratio.
void write_flops_table(std::ostream &out, const EncoderConfig &base,
                       const std::vector<std::size_t> &left_sizes,
                       const std::vector<std::size_t> &bank_counts);

} // namespace segstream
