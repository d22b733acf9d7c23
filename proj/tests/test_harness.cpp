// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include <gtest/gtest.h>

#include "segstream/harness.hpp"
#include "segstream/verify.hpp"

using namespace segstream;

namespace {

constexpr Action R = Action::read;
constexpr Action W = Action::write;

StreamTrace delays_trace(std::vector<double> delays, double total) {
    StreamTrace t;
    t.src_duration_ms = total;
    t.tgt_tokens = delays.size();
    for (double d : delays) {
        t.actions.push_back(W);
        t.elapsed_ms.push_back(d);
    }
    t.delays = std::move(delays);
    return t;
}

} // namespace

TEST(WaitK, Examples) {
    EXPECT_EQ(wait_k_schedule({1, 8}, 3, 3), (std::vector<Action>{R, W, R, W, R, W}));
    EXPECT_EQ(wait_k_schedule({5, 8}, 3, 2), (std::vector<Action>{R, R, R, W, W}));
    EXPECT_EQ(wait_k_schedule({2, 8}, 5, 2), (std::vector<Action>{R, R, W, R, W, R, R}));
    for (std::size_t k : kWaitKPresets) {
        EXPECT_NO_THROW(wait_k_schedule({k, 8}, 4, 4));
    }
}

TEST(WaitK, InvalidArguments) {
    EXPECT_THROW(wait_k_schedule({0, 8}, 3, 3), ConfigError);
    EXPECT_THROW(wait_k_schedule({1, 0}, 3, 3), ConfigError);
    EXPECT_THROW(wait_k_schedule({1, 8}, 0, 3), std::invalid_argument);
}

TEST(AverageLagging, WaitUntilEndIsT) {
    const auto t = make_trace(wait_k_schedule({9, 8}, 4, 7), 250.0, 1000.0);
    EXPECT_EQ(average_lagging(t), 1000.0);
}

TEST(AverageLagging, SynchronizedIsTOverY) {
    const double total = 900.0;
    const auto t = delays_trace({300.0, 600.0, 900.0}, total);
    EXPECT_NEAR(average_lagging(t), 300.0, 1e-12);
}

TEST(AverageLagging, ClosedFormKTimesU) {
    for (std::size_t k : kWaitKPresets) {
        for (std::size_t n : {7, 8, 20}) {
            const double u = 320.0;
            const auto t = make_trace(wait_k_schedule({k, 8}, n, n), u, u * n);
            EXPECT_NEAR(average_lagging(t), k * u, 1e-9) << "k=" << k << " n=" << n;
        }
    }
}

TEST(AverageLagging, ShortLastChunkCapsAtDuration) {
    const auto t = make_trace(wait_k_schedule({1, 8}, 3, 3), 100.0, 250.0);
    EXPECT_EQ(t.delays, (std::vector<double>{100.0, 200.0, 250.0}));
    EXPECT_NO_THROW(t.validate());
}

TEST(AverageLagging, RejectsInvalidTraces) {
    StreamTrace empty;
    empty.src_duration_ms = 10.0;
    EXPECT_THROW(average_lagging(empty), MetricError);
    EXPECT_THROW(average_lagging(delays_trace({200.0, 100.0}, 300.0)), MetricError);
    EXPECT_THROW(average_lagging(delays_trace({600.0, 1200.0}, 1000.0)), MetricError);
    auto mismatch = delays_trace({1.0}, 10.0);
    mismatch.src_chunks = 2;
    EXPECT_THROW(average_lagging(mismatch), MetricError);
}

TEST(AverageLagging, MonotoneInDelays) {
    const auto a = delays_trace({100, 200, 300, 500}, 600.0);
    const auto b = delays_trace({150, 200, 450, 600}, 600.0);
    EXPECT_GE(average_lagging(b), average_lagging(a));
}

TEST(ChunkDuration, RatioTimesTokenPeriod) {
    EXPECT_EQ(chunk_duration_ms({1, 8}, 10.0, SubsampleConfig{}), 320.0);
}

TEST(SyntheticSource, DeterministicShapeAndRange) {
    const Mat a = synthetic_source(42, 1000.0, 10.0);
    EXPECT_EQ(a, synthetic_source(42, 1000.0, 10.0));
    EXPECT_NE(a, synthetic_source(43, 1000.0, 10.0));
    EXPECT_EQ(a.rows, 100u);
    EXPECT_EQ(a.cols, 80u);
    for (float v : a.data) {
        EXPECT_GE(v, -1.0f);
        EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(synthetic_source(1, 1005.0, 10.0, 3).rows, 100u);
    EXPECT_THROW(synthetic_source(1, 0.0, 10.0), std::invalid_argument);
}

TEST(TraceCsv, Format) {
    const auto t = make_trace({R, W, R, W}, 320.0, 500.0);
    std::ostringstream out;
    write_trace_csv(out, t);
    EXPECT_EQ(out.str(), "action_index,action,elapsed_src_ms\n0,READ,320\n1,WRITE,320\n"
                         "2,READ,500\n3,WRITE,500\n");
}

TEST(Simulate, ChargesLookaheadAndEncodesEverything) {
    auto inst = toy_instance(Variant::implicit, 3);
    inst.frames = synthetic_source(3, 3000.0, 10.0, inst.cfg.input_dim);
    const auto res = simulate_stream(inst.frames, inst.cfg, inst.weights, {1, 2}, 10.0);
    EXPECT_EQ(res.encoder_tokens, subsampled_length(300, inst.cfg.subsample));
    EXPECT_NO_THROW(res.trace.validate());
    // The first write needs 2 tokens, available only once segment 0 with its
    // 4-token lookahead is encoded: 12 tokens = 51 frames -> 7 chunks of 8.
    ASSERT_FALSE(res.trace.delays.empty());
    EXPECT_EQ(res.trace.delays.front(), 560.0);
    EXPECT_GT(res.average_lagging_ms, 0.0);
    EXPECT_LE(res.average_lagging_ms, 3000.0);

    const auto wait_all = simulate_stream(inst.frames, inst.cfg, inst.weights, {100, 2}, 10.0);
    EXPECT_EQ(wait_all.average_lagging_ms, 3000.0);
}
