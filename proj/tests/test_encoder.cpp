// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "segstream/config_file.hpp"
#include "segstream/encoder.hpp"
#include "segstream/flops.hpp"
#include "segstream/harness.hpp"
#include "segstream/oracle.hpp"
#include "segstream/verify.hpp"
#include "segstream/weights_io.hpp"

using namespace segstream;

namespace {

EncoderConfig small_config(Variant v) { return toy_instance(v, 1).cfg; }

void zero(Mat &m) { std::fill(m.data.begin(), m.data.end(), 0.0f); }
void zero(std::vector<float> &v) { std::fill(v.begin(), v.end(), 0.0f); }

} // namespace

TEST(Subsample, LengthArithmetic) {
    SubsampleConfig sub;
    EXPECT_EQ(sub.factor(), 4u);
    EXPECT_EQ(sub.receptive_field(), 7u);
    EXPECT_EQ(subsampled_length(512, sub), 127u);
    EXPECT_EQ(subsampled_length(6, sub), 0u);
    EXPECT_EQ(subsampled_length(7, sub), 1u);
    for (std::size_t n = 1; n < 50; ++n) {
        EXPECT_EQ(subsampled_length(sub.frames_for_tokens(n), sub), n);
        EXPECT_EQ(subsampled_length(sub.frames_for_tokens(n) - 1, sub), n - 1);
    }
}

TEST(Subsample, ZeroInputZeroBiasGivesZero) {
    auto cfg = small_config(Variant::implicit);
    auto w = random_weights(cfg, 3);
    zero(w.frontend.conv1.bias);
    zero(w.frontend.conv2.bias);
    zero(w.frontend.proj_bias);
    const Mat out = subsample(Mat(40, cfg.input_dim), w.frontend, cfg.subsample);
    EXPECT_EQ(out, Mat(subsampled_length(40, cfg.subsample), cfg.d));
    EXPECT_THROW(subsample(Mat(6, cfg.input_dim), w.frontend, cfg.subsample), BufferUnderflow);
}

TEST(Subsample, MatchesReferenceFrontend) {
    const auto inst = toy_instance(Variant::implicit, 4);
    const Mat got = subsample(inst.frames, inst.weights.frontend, inst.cfg.subsample);
    const auto ref = oracle::frontend(oracle::to_double(inst.frames), inst.weights.frontend, 2);
    EXPECT_LE(oracle::max_abs_diff(got, ref), 1e-5);
}

TEST(SegmentStream, FiveHundredTwelveFrames) {
    EncoderConfig cfg;
    const auto w = segment_stream(512, cfg.layout, cfg.subsample);
    ASSERT_EQ(w.size(), 2u);
    EXPECT_EQ(w[0].center, 64u);
    EXPECT_EQ(w[0].right, 32u);
    EXPECT_EQ(w[0].frame_begin, 0u);
    EXPECT_EQ(w[0].frame_end, cfg.subsample.frames_for_tokens(96));
    EXPECT_EQ(w[1].center, 63u);
    EXPECT_EQ(w[1].right, 0u);
    EXPECT_EQ(w[1].frame_begin, 256u);
    EXPECT_EQ(w[1].frame_end, 511u); // the last frame cannot complete another token
}

TEST(SegmentStream, OneCenterHasNoLookahead) {
    EncoderConfig cfg;
    const auto w = segment_stream(cfg.subsample.frames_for_tokens(64), cfg.layout, cfg.subsample);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].center, 64u);
    EXPECT_EQ(w[0].right, 0u);
    EXPECT_TRUE(segment_stream(3, cfg.layout, cfg.subsample).empty());
}

TEST(SegmentStream, LeftContextReachesBack) {
    EncoderConfig cfg;
    const auto w = segment_stream(2000, cfg.layout, cfg.subsample, true);
    ASSERT_GE(w.size(), 3u);
    EXPECT_EQ(w[0].left, 0u);
    EXPECT_EQ(w[1].left, 32u);
    EXPECT_EQ(w[1].token_begin, 32u);
    EXPECT_EQ(w[1].frame_begin, 128u);
    for (const auto &s : w) {
        EXPECT_EQ(subsampled_length(s.frame_end - s.frame_begin, cfg.subsample), s.tokens());
    }
}

TEST(EncoderLayer, ZeroWeightsAreIdentity) {
    auto cfg = small_config(Variant::augmem);
    auto w = random_weights(cfg, 2);
    for (auto &l : w.layers) {
        for (Mat *m : {&l.attn.wq, &l.attn.wk, &l.attn.wv, &l.attn.wo, &l.attn.rel_table, &l.ffn_w1,
                       &l.ffn_w2}) {
            zero(*m);
        }
        zero(l.ffn_b1);
        zero(l.ffn_b2);
    }
    const auto inst = toy_instance(Variant::augmem, 2);
    const Mat x = subsample(slice_rows(inst.frames, 0, 60), w.frontend, cfg.subsample);
    const auto f = encoder_layer_forward(x, {0, 8, x.rows - 8}, LayerState{}, w.layers[0], cfg);
    EXPECT_EQ(f.tokens, x);
    EXPECT_EQ(f.state.banks.rows, 1u);
}

TEST(EncoderLayer, SingleSegmentMatchesDenseLayer) {
    const auto inst = toy_instance(Variant::implicit, 5);
    const Mat x = subsample(slice_rows(inst.frames, 0, inst.cfg.subsample.frames_for_tokens(12)),
                            inst.weights.frontend, inst.cfg.subsample);
    const auto f = encoder_layer_forward(x, {0, 8, 4}, LayerState{}, inst.weights.layers[0], inst.cfg);
    const auto ref_attn = oracle::cached_attention(oracle::to_double(x), oracle::DMat(0, 16),
                                                   inst.weights.layers[0].attn);
    const Mat attn = vstack({&f.attention.center_out, &f.attention.right_out});
    EXPECT_LE(oracle::max_abs_diff(attn, ref_attn), 1e-5);
}

TEST(Encoder, ToyReplayForEveryVariant) {
    for (Variant v : {Variant::augmem, Variant::implicit, Variant::xl}) {
        for (std::uint64_t s = 1; s <= 3; ++s) {
            EXPECT_LE(end_to_end_error(toy_instance(v, s)), 1e-4) << to_string(v);
        }
    }
}

TEST(Encoder, PostResidualTapMatchesReplay) {
    auto inst = toy_instance(Variant::implicit, 6);
    inst.cfg.z_tap = ZTap::post_residual;
    EXPECT_LE(end_to_end_error(inst), 1e-4);
    const auto plain = toy_instance(Variant::implicit, 6);
    EXPECT_NE(encode_utterance(inst.frames, inst.cfg, inst.weights),
              encode_utterance(plain.frames, plain.cfg, plain.weights));
}

TEST(Encoder, LeftLargerThanCenterSaturatesCache) {
    auto inst = toy_instance(Variant::implicit, 7, 12);
    EXPECT_LE(end_to_end_error(inst), 1e-4);
    inst.cfg.variant = Variant::xl;
    EXPECT_LE(end_to_end_error(inst), 1e-4);
    inst.cfg.variant = Variant::augmem;
    EXPECT_LE(end_to_end_error(inst), 1e-4);
}

TEST(Encoder, OutputRowsAndDegenerateInput) {
    const auto inst = toy_instance(Variant::xl, 8);
    const Mat out = encode_utterance(inst.frames, inst.cfg, inst.weights);
    EXPECT_EQ(out.rows, 22u);
    EXPECT_EQ(out.cols, 16u);
    EXPECT_TRUE(all_finite(out));
    const Mat none = encode_utterance(Mat(5, inst.cfg.input_dim), inst.cfg, inst.weights);
    EXPECT_EQ(none.rows, 0u);
    EXPECT_EQ(none.cols, 16u);
    EXPECT_THROW(encode_utterance(Mat(50, 3), inst.cfg, inst.weights), ShapeError);
}

TEST(Encoder, DefaultWidthIs256) {
    EncoderConfig cfg;
    cfg.num_layers = 1;
    const auto w = random_weights(cfg, 1);
    const Mat out = encode_utterance(synthetic_source(1, 5120.0, 10.0), cfg, w);
    EXPECT_EQ(out.rows, 127u);
    EXPECT_EQ(out.cols, 256u);
}

TEST(Encoder, RightContextNeverEmitted) {
    for (Variant v : {Variant::augmem, Variant::implicit}) {
        const auto inst = toy_instance(v, 9);
        EncoderHooks hooks;
        hooks.poison_right = true;
        EXPECT_EQ(encode_utterance(inst.frames, inst.cfg, inst.weights, hooks),
                  encode_utterance(inst.frames, inst.cfg, inst.weights));
    }
}

TEST(Streaming, PrefixDeterminism) {
    for (Variant v : {Variant::augmem, Variant::implicit, Variant::xl}) {
        const auto inst = toy_instance(v, 10);
        EXPECT_TRUE(prefix_deterministic(inst.cfg, inst.weights, inst.frames, {1}));
        EXPECT_TRUE(prefix_deterministic(inst.cfg, inst.weights, inst.frames, {13, 2, 40}));
        EXPECT_TRUE(prefix_deterministic(inst.cfg, inst.weights, inst.frames, {1000}));
    }
}

TEST(Streaming, EmitsWhenLookaheadArrivesAndTrimsBuffer) {
    const auto inst = toy_instance(Variant::implicit, 11);
    StreamingEncoder enc(inst.cfg, inst.weights);
    const std::size_t first = inst.cfg.subsample.frames_for_tokens(12);
    EXPECT_EQ(enc.push(slice_rows(inst.frames, 0, first - 1)).rows, 0u);
    EXPECT_EQ(enc.push(slice_rows(inst.frames, first - 1, first)).rows, 8u);
    EXPECT_EQ(enc.state().segments_done, 1u);
    EXPECT_EQ(enc.state().buffer_origin, 32u);
    EXPECT_EQ(enc.state().emitted_tokens, 8u);
    EXPECT_EQ(enc.state().layers.size(), 2u);
    enc.push(slice_rows(inst.frames, first, inst.frames.rows));
    const Mat tail = enc.finish();
    EXPECT_EQ(enc.state().emitted_tokens, 22u);
    EXPECT_TRUE(enc.state().finished);
    EXPECT_EQ(enc.finish().rows, 0u);
    EXPECT_THROW(enc.push(Mat(1, inst.cfg.input_dim)), std::logic_error);
    (void)tail;
}

TEST(Streaming, AugmemKeepsLeftFrames) {
    const auto inst = toy_instance(Variant::augmem, 12);
    StreamingEncoder enc(inst.cfg, inst.weights);
    enc.push(inst.frames);
    // Two segments ran; segment 2 starts at token 16 and reaches back 4.
    EXPECT_EQ(enc.state().segments_done, 2u);
    EXPECT_EQ(enc.state().buffer_origin, 48u);
}

TEST(Flops, DefaultQkValues) {
    EncoderConfig cfg;
    cfg.variant = Variant::augmem;
    const auto a = flops_estimate(cfg);
    EXPECT_EQ(a.qk_formula, 4'292'608u);
    EXPECT_EQ(a.queries, 129u);
    EXPECT_EQ(a.keys, 131u);
    EXPECT_EQ(a.per_layer.attention_qk_av, 2u * 129 * 131 * 256);
    EXPECT_EQ(a.total.ffn, 12u * 2 * 128 * 256 * 2048);
    cfg.variant = Variant::implicit;
    const auto i = flops_estimate(cfg);
    EXPECT_EQ(i.qk_formula, 3'145'728u);
    EXPECT_EQ(i.queries, 96u);
    EXPECT_EQ(i.keys, 128u);
    cfg.variant = Variant::xl;
    EXPECT_EQ(flops_estimate(cfg).total.total(), i.total.total());
}

TEST(Flops, CollapseAtNoHistory) {
    EncoderConfig cfg;
    cfg.layout.left = 0;
    cfg.bank_capacity = 0;
    cfg.variant = Variant::augmem;
    const auto a = flops_estimate(cfg).total;
    cfg.variant = Variant::implicit;
    const auto i = flops_estimate(cfg).total;
    EXPECT_EQ(a.attention_qk_av, i.attention_qk_av);
    EXPECT_EQ(a.projections, i.projections);
    EXPECT_EQ(a.ffn, i.ffn);
    EXPECT_EQ(a.conv, i.conv);
}

TEST(Flops, ImplicitCheaperWithLeftContext) {
    EncoderConfig cfg;
    for (std::size_t l : {1, 32, 128}) {
        for (std::size_t n : {0, 3}) {
            cfg.layout.left = l;
            cfg.bank_capacity = n;
            cfg.variant = Variant::augmem;
            const auto a = flops_estimate(cfg).total;
            cfg.variant = Variant::implicit;
            const auto i = flops_estimate(cfg).total;
            EXPECT_LT(i.attention_qk_av, a.attention_qk_av);
            EXPECT_LT(i.projections, a.projections);
            EXPECT_LT(i.ffn, a.ffn);
            EXPECT_LT(i.conv, a.conv);
        }
    }
}

TEST(ConfigFile, DefaultsRoundTripAndErrors) {
    EncoderConfig cfg;
    cfg.variant = Variant::xl;
    cfg.layout = {8, 16, 4};
    cfg.z_tap = ZTap::post_residual;
    cfg.ln_eps = 1e-6f;
    std::istringstream in(format_config(cfg));
    const auto back = parse_config(in);
    EXPECT_EQ(format_config(back), format_config(cfg));
    EXPECT_EQ(back.layout.left, 8u);
    EXPECT_EQ(back.variant, Variant::xl);

    std::istringstream partial("# comment\n\nlayers = 3\nvariant = augmem  \n");
    const auto p = parse_config(partial);
    EXPECT_EQ(p.num_layers, 3u);
    EXPECT_EQ(p.d, 256u);
    EXPECT_EQ(p.variant, Variant::augmem);

    std::istringstream unknown("depth = 3\n");
    EXPECT_THROW(parse_config(unknown), ConfigError);
    std::istringstream bad("layers = -2\n");
    EXPECT_THROW(parse_config(bad), ConfigError);
    std::istringstream noeq("layers 3\n");
    EXPECT_THROW(parse_config(noeq), ConfigError);
    std::istringstream heads("d = 10\nheads = 4\n");
    EXPECT_THROW(parse_config(heads).validate(), ConfigError);
}

TEST(WeightsIo, ManifestRoundTrip) {
    const auto inst = toy_instance(Variant::augmem, 13);
    const auto dir = std::filesystem::temp_directory_path() / "segstream_weights_test";
    std::filesystem::remove_all(dir);
    const auto manifest = save_weights(dir, inst.weights);
    const auto back = load_weights(manifest, inst.cfg);
    EXPECT_EQ(encode_utterance(inst.frames, inst.cfg, back),
              encode_utterance(inst.frames, inst.cfg, inst.weights));
    auto other = inst.cfg;
    other.num_layers = 3;
    EXPECT_ANY_THROW(load_weights(manifest, other));
    std::filesystem::remove_all(dir);
}

TEST(Weights, SeededAndInRange) {
    const auto cfg = small_config(Variant::implicit);
    const auto a = random_weights(cfg, 5);
    const auto b = random_weights(cfg, 5);
    EXPECT_EQ(a.layers[1].ffn_w1, b.layers[1].ffn_w1);
    EXPECT_NE(a.layers[1].ffn_w1, random_weights(cfg, 6).layers[1].ffn_w1);
    for (float v : a.layers[0].attn.wq.data) {
        EXPECT_LE(std::abs(v), 0.1f);
    }
    EXPECT_EQ(a.layers[0].attn.pre_norm.gamma, std::vector<float>(16, 1.0f));
}
