// SPDX-License-Identifier: Apache-2.0

#include "segstream/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <random>
#include <string>

namespace segstream {

void WaitKPolicy::validate() const {
    if (k < 1) {
        throw ConfigError("wait-k: k must be at least 1");
    }
    if (pre_decision_ratio < 1) {
        throw ConfigError("wait-k: pre-decision ratio must be at least 1");
    }
}

void StreamTrace::validate() const {
    if (actions.size() != elapsed_ms.size()) {
        throw MetricError("trace: actions and timestamps differ in length");
    }
    if (!(src_duration_ms > 0.0)) {
        throw MetricError("trace: source duration must be positive");
    }
    const auto reads = static_cast<std::size_t>(std::count(actions.begin(), actions.end(), Action::read));
    const std::size_t writes = actions.size() - reads;
    if (reads != src_chunks) {
        throw MetricError("trace: " + std::to_string(reads) + " reads but " +
                          std::to_string(src_chunks) + " source chunks");
    }
    if (writes != tgt_tokens || delays.size() != tgt_tokens) {
        throw MetricError("trace: write count, delay count and target length disagree");
    }
    for (std::size_t i = 0; i < delays.size(); ++i) {
        if (delays[i] < 0.0 || delays[i] > src_duration_ms) {
            throw MetricError("trace: delay " + std::to_string(delays[i]) +
                              " ms outside [0, source duration]");
        }
        if (i > 0 && delays[i] < delays[i - 1]) {
            throw MetricError("trace: delays must be non-decreasing");
        }
    }
}

std::vector<Action> wait_k_schedule(const WaitKPolicy &policy, std::size_t src_chunks,
                                    std::size_t tgt_tokens) {
    policy.validate();
    if (src_chunks < 1 || tgt_tokens < 1) {
        throw std::invalid_argument("wait_k_schedule: source and target must be non-empty");
    }
    std::vector<Action> actions;
    actions.reserve(src_chunks + tgt_tokens);
    std::size_t reads = 0;
    for (std::size_t t = 1; t <= tgt_tokens; ++t) {
        const std::size_t needed = std::min(policy.k + t - 1, src_chunks);
        for (; reads < needed; ++reads) {
            actions.push_back(Action::read);
        }
        actions.push_back(Action::write);
    }
    for (; reads < src_chunks; ++reads) {
        actions.push_back(Action::read);
    }
    return actions;
}

StreamTrace make_trace(const std::vector<Action> &actions, double chunk_ms,
                       double src_duration_ms) {
    StreamTrace trace;
    trace.actions = actions;
    trace.src_duration_ms = src_duration_ms;
    double elapsed = 0.0;
    for (Action a : actions) {
        if (a == Action::read) {
            ++trace.src_chunks;
            elapsed = std::min(static_cast<double>(trace.src_chunks) * chunk_ms, src_duration_ms);
        } else {
            ++trace.tgt_tokens;
            trace.delays.push_back(elapsed);
        }
        trace.elapsed_ms.push_back(elapsed);
    }
    return trace;
}

double average_lagging(const StreamTrace &trace) {
    if (trace.actions.empty() || trace.tgt_tokens == 0) {
        throw MetricError("average lagging is undefined for an empty trace");
    }
    trace.validate();
    const double per_token = trace.src_duration_ms / static_cast<double>(trace.tgt_tokens);
    std::size_t tau = trace.tgt_tokens;
    for (std::size_t i = 0; i < trace.delays.size(); ++i) {
        if (trace.delays[i] >= trace.src_duration_ms) {
            tau = i + 1;
            break;
        }
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < tau; ++i) {
        sum += trace.delays[i] - static_cast<double>(i) * per_token;
    }
    return sum / static_cast<double>(tau);
}

double chunk_duration_ms(const WaitKPolicy &policy, double frame_period_ms,
                         const SubsampleConfig &sub) {
    return static_cast<double>(policy.pre_decision_ratio) * frame_period_ms *
           static_cast<double>(sub.factor());
}

Mat synthetic_source(std::uint64_t seed, double duration_ms, double frame_period_ms,
                     std::size_t input_dim) {
    if (!(duration_ms > 0.0) || !(frame_period_ms > 0.0) || input_dim == 0) {
        throw std::invalid_argument("synthetic_source: duration, period and input_dim must be positive");
    }
    const auto frames = static_cast<std::size_t>(std::floor(duration_ms / frame_period_ms));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Mat m(frames, input_dim);
    for (float &v : m.data) {
        v = dist(rng);
    }
    return m;
}

void write_trace_csv(std::ostream &out, const StreamTrace &trace) {
    out << "action_index,action,elapsed_src_ms\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.actions.size(); ++i) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, trace.elapsed_ms[i]);
        (void)ec;
        out << i << ',' << (trace.actions[i] == Action::read ? "READ" : "WRITE") << ','
            << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
    }
}

SimulationResult simulate_stream(const Mat &frames, const EncoderConfig &cfg,
                                 const EncoderWeights &weights, const WaitKPolicy &policy,
                                 double frame_period_ms, std::optional<std::size_t> tgt_tokens) {
    cfg.validate();
    policy.validate();
    const std::size_t total_frames = frames.rows;
    const std::size_t total_tokens = subsampled_length(total_frames, cfg.subsample);
    if (total_tokens == 0) {
        throw std::invalid_argument("simulate_stream: source shorter than one encoder token");
    }
    const std::size_t ratio = policy.pre_decision_ratio;
    const std::size_t frames_per_chunk = ratio * cfg.subsample.factor();
    const std::size_t src_chunks = (total_frames + frames_per_chunk - 1) / frames_per_chunk;
    const std::size_t encoder_chunks = (total_tokens + ratio - 1) / ratio;
    const std::size_t targets = tgt_tokens.value_or(encoder_chunks);
    if (targets == 0) {
        throw std::invalid_argument("simulate_stream: need at least one target token");
    }

    StreamingEncoder encoder(cfg, weights);
    SimulationResult res;
    res.trace.src_duration_ms = static_cast<double>(total_frames) * frame_period_ms;
    std::size_t frames_read = 0;
    std::size_t encoded = 0;

    auto read_chunk = [&] {
        const std::size_t end = std::min(total_frames, frames_read + frames_per_chunk);
        encoded += encoder.push(slice_rows(frames, frames_read, end)).rows;
        frames_read = end;
        ++res.trace.src_chunks;
        if (frames_read == total_frames) {
            encoded += encoder.finish().rows;
        }
        res.trace.actions.push_back(Action::read);
        res.trace.elapsed_ms.push_back(static_cast<double>(frames_read) * frame_period_ms);
    };

    for (std::size_t t = 1; t <= targets; ++t) {
        const std::size_t needed = std::min((policy.k + t - 1) * ratio, total_tokens);
        while (encoded < needed && res.trace.src_chunks < src_chunks) {
            read_chunk();
        }
        const double now = static_cast<double>(frames_read) * frame_period_ms;
        res.trace.actions.push_back(Action::write);
        res.trace.elapsed_ms.push_back(now);
        res.trace.delays.push_back(now);
        ++res.trace.tgt_tokens;
    }
    while (res.trace.src_chunks < src_chunks) {
        read_chunk();
    }
    res.encoder_tokens = encoded;
    res.average_lagging_ms = average_lagging(res.trace);
    return res;
}

} // namespace segstream
