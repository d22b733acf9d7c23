// SPDX-License-Identifier: Apache-2.0
//
// Wait-k scheduling over pre-decision chunks, Average Lagging, and the
// seeded synthetic source used in place of recorded speech.
//
// Average Lagging follows the SimulEval speech convention:
//
//   AL = 1/tau * sum_{i=1..tau} [ d_i - (i - 1) * T / |y| ]
//
// with d_i the source milliseconds read when target token i is written, T
// the source duration and tau the first token written after the whole
// source was read.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "segstream/encoder.hpp"
#include "segstream/tensor.hpp"

namespace segstream {

class MetricError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::array<std::size_t, 4> kWaitKPresets = {1, 3, 5, 7};

struct WaitKPolicy {
    std::size_t k = 1;
    std::size_t pre_decision_ratio = 8; // encoder tokens per read chunk

    void validate() const;
};

enum class Action { read, write };

struct StreamTrace {
    std::vector<Action> actions;
    std::vector<double> elapsed_ms; // source ms consumed at each action
    std::vector<double> delays;     // d_i per target token, ms
    double src_duration_ms = 0.0;
    std::size_t src_chunks = 0;
    std::size_t tgt_tokens = 0;

    // Checks the trace invariants; throws MetricError on violation.
    void validate() const;
};

// Token t (1-based) is written once min(k + t - 1, src_chunks) chunks have
// been read; reads left over after the last write are appended.
std::vector<Action> wait_k_schedule(const WaitKPolicy &policy, std::size_t src_chunks,
                                    std::size_t tgt_tokens);

// Timestamps a schedule with uniform chunks; elapsed time is capped at the
// source duration (the last chunk may be short).
StreamTrace make_trace(const std::vector<Action> &actions, double chunk_ms, double src_duration_ms);

double average_lagging(const StreamTrace &trace);

// Source ms per read: pre_decision_ratio tokens of frame_period * factor each.
double chunk_duration_ms(const WaitKPolicy &policy, double frame_period_ms,
                         const SubsampleConfig &sub);

// floor(duration / period) frames of seeded uniform values in [-1, 1].
Mat synthetic_source(std::uint64_t seed, double duration_ms, double frame_period_ms,
                     std::size_t input_dim = 80);

// CSV: action_index,action,elapsed_src_ms
void write_trace_csv(std::ostream &out, const StreamTrace &trace);

struct SimulationResult {
    StreamTrace trace;
    double average_lagging_ms = 0.0;
    std::size_t encoder_tokens = 0;
};

// Drives a StreamingEncoder with one read per pre-decision chunk of frames.
// A write needs min(k + t - 1, chunks) * ratio encoded tokens; because a
// center is only encodable after its right context arrives, the reads that
// deliver lookahead are charged to the write that waits on them. A stub
// writer stands in for the decoder. `tgt_tokens` defaults to the number of
// encoder chunks.
SimulationResult simulate_stream(const Mat &frames, const EncoderConfig &cfg,
                                 const EncoderWeights &weights, const WaitKPolicy &policy,
                                 double frame_period_ms,
                                 std::optional<std::size_t> tgt_tokens = std::nullopt);

} // namespace segstream
