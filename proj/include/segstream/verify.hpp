// SPDX-License-Identifier: Apache-2.0
//
// Invariant suites behind `segstream verify`, plus the toy-instance checks
// they are built from (also used directly by the acceptance binary).

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "segstream/encoder.hpp"

namespace segstream {

enum class Suite { kernels, attention, encoder, harness, all };

Suite parse_suite(std::string_view name);
std::string_view to_string(Suite s);

struct VerifyOptions {
    std::uint64_t seed = 1;
    bool fault_bank_offset = false; // mutation fixture, see AttentionProbe
    std::size_t threads = 1;
};

struct PropertyResult {
    std::string suite;
    std::string name;
    bool pass = false;
    double max_error = 0.0; // 0 for exact checks
    std::string detail;
};

// SEGSTREAM_THREADS if set to a positive integer, else the hardware count.
std::size_t threads_from_env();

std::vector<PropertyResult> run_verify(Suite suite, const VerifyOptions &opts);

// One line per property, then a summary line.
void print_report(std::ostream &out, const std::vector<PropertyResult> &results);

// Toy instance: 2 layers, d=16, 2 heads, l/c/r = 4/8/4, clip 5, N=2,
// input_dim 8, ffn 32; 93 frames give 22 tokens, three segments, the last
// one short with no lookahead.
struct ToyInstance {
    EncoderConfig cfg;
    EncoderWeights weights;
    Mat frames;
};

ToyInstance toy_instance(Variant v, std::uint64_t seed, std::size_t left = 4,
                         std::size_t banks = 2);

// Largest difference between each engine attention step and the reference
// step fed the same layer input and history.
double step_oracle_error(const ToyInstance &inst, bool fault_bank_offset = false);

// encode_utterance against the reference replay.
double end_to_end_error(const ToyInstance &inst, bool fault_bank_offset = false);

// Every new_bank against the recomputed segment-mean attention.
double bank_error(const ToyInstance &inst, bool fault_bank_offset = false);

// l = 0, N = 0: largest pairwise difference between the three variants, per
// step outputs and encoder outputs.
double variant_collapse_error(std::uint64_t seed);

// After each segment, z_cache is bit-identical to the tail of the recorded
// center attention output. Returns the number of mismatching steps.
std::size_t z_tap_mismatches(const ToyInstance &inst);

// Streaming in irregular chunks against offline; true when bit-identical.
bool prefix_deterministic(const EncoderConfig &cfg, const EncoderWeights &w, const Mat &frames,
                          const std::vector<std::size_t> &chunk_sizes);

} // namespace segstream
