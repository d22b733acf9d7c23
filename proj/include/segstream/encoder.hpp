// SPDX-License-Identifier: Apache-2.0
//
// Streaming block-processing encoder: frame segmentation, a two-layer
// strided convolutional frontend, and a stack of pre-LN attention + FFN
// layers that carry per-layer history from one segment to the next.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "segstream/attention.hpp"
#include "segstream/tensor.hpp"

namespace segstream {

// Two stride-`stride` convolutions of width `kernel_width`, ReLU after each.
struct SubsampleConfig {
    std::size_t kernel_width = 3;
    std::size_t stride = 2;

    std::size_t factor() const { return stride * stride; }
    // Raw frames seen by one output token.
    std::size_t receptive_field() const { return kernel_width + stride * (kernel_width - 1); }
    // Frames required to produce exactly `tokens` outputs from a window that
    // starts on a token boundary.
    std::size_t frames_for_tokens(std::size_t tokens) const {
        return tokens == 0 ? 0 : (tokens - 1) * factor() + receptive_field();
    }
};

// Output length of the frontend for `frames` input frames (floor rule per layer).
std::size_t subsampled_length(std::size_t frames, const SubsampleConfig &sub);

struct EncoderConfig {
    std::size_t num_layers = 12;
    std::size_t d = 256;
    std::size_t heads = 4;
    SegmentLayout layout{32, 64, 32};
    std::size_t bank_capacity = 3;
    std::size_t clip = 16;
    Variant variant = Variant::implicit;
    SubsampleConfig subsample;
    std::size_t ffn_dim = 2048;
    std::size_t input_dim = 80;
    ZTap z_tap = ZTap::attn_out;
    float ln_eps = 1e-5f;

    // Banks exist only for augmem; the other variants always run with N = 0.
    std::size_t effective_bank_capacity() const {
        return variant == Variant::augmem ? bank_capacity : 0;
    }
    void validate() const;
};

struct FrontendWeights {
    ConvKernel conv1; // input_dim -> d
    ConvKernel conv2; // d -> d
    Mat proj;         // d x d
    std::vector<float> proj_bias;
};

struct LayerWeights {
    AttentionWeights attn;
    LayerNormParams ffn_norm;
    Mat ffn_w1; // d x ffn_dim
    std::vector<float> ffn_b1;
    Mat ffn_w2; // ffn_dim x d
    std::vector<float> ffn_b2;
};

struct EncoderWeights {
    FrontendWeights frontend;
    std::vector<LayerWeights> layers;

    void validate(const EncoderConfig &cfg) const;
};

// Every matrix and bias uniform in [-0.1, 0.1]; norms start at gamma = 1,
// beta = 0. Identical seeds and shapes give identical weights.
EncoderWeights random_weights(const EncoderConfig &cfg, std::uint64_t seed);

// One segment's slice of the stream. Token indices are global
// post-subsampling positions; frames are raw input rows.
struct SegmentWindow {
    std::size_t index = 0;
    std::size_t token_begin = 0; // first token of the window (left context included)
    std::size_t left = 0;        // augmem only
    std::size_t center = 0;
    std::size_t right = 0;
    std::size_t frame_begin = 0;
    std::size_t frame_end = 0;

    std::size_t center_begin() const { return token_begin + left; }
    std::size_t tokens() const { return left + center + right; }
};

// Segment k's center covers tokens [k*c, (k+1)*c); up to r lookahead tokens
// follow, clipped at the end of the stream. With `with_left_context` the
// window also reaches back over min(l, k*c) tokens (augmem re-encodes them).
std::vector<SegmentWindow> segment_stream(std::size_t total_frames, const SegmentLayout &layout,
                                          const SubsampleConfig &sub,
                                          bool with_left_context = false);

Mat subsample(const Mat &segment_frames, const FrontendWeights &w, const SubsampleConfig &sub);

struct LayerForward {
    Mat tokens; // same row layout as the input
    LayerState state;
    StepOutput attention;
};

// x1 = x + Attn(LN(x)); x2 = x1 + FFN(LN(x1)). For augmem `tokens` holds
// [L, C, R]; otherwise [C, R].
LayerForward encoder_layer_forward(const Mat &tokens, const StepShape &shape,
                                   const LayerState &state, const LayerWeights &w,
                                   const EncoderConfig &cfg, const AttentionProbe *probe = nullptr);

// Value written over final-layer right-context rows when
// EncoderHooks::poison_right is set.
inline constexpr float kRightPoison = 1.0e30f;

struct EncoderHooks {
    std::function<void(std::size_t segment, std::size_t layer, const StepOutput &step,
                       const LayerState &after)>
        on_step;
    const AttentionProbe *probe = nullptr;
    bool poison_right = false;
};

// Runs one segment's frames through the frontend and every layer, updating
// `layers` in place. Returns the final-layer center rows.
Mat encode_segment(const Mat &window_frames, const SegmentWindow &window,
                   std::vector<LayerState> &layers, const EncoderConfig &cfg,
                   const EncoderWeights &weights, const EncoderHooks &hooks = {});

// Offline: all segments in order, center outputs concatenated.
Mat encode_utterance(const Mat &frames, const EncoderConfig &cfg, const EncoderWeights &weights,
                     const EncoderHooks &hooks = {});

struct EncoderState {
    std::vector<LayerState> layers;
    Mat frame_buffer;             // unconsumed frames starting at buffer_origin
    std::size_t buffer_origin = 0; // global index of frame_buffer row 0
    std::size_t frames_received = 0;
    std::size_t segments_done = 0;
    std::size_t emitted_tokens = 0;
    bool finished = false;
};

// Incremental front end to the same segment pipeline. A segment is encoded
// as soon as its center and full lookahead have arrived; finish() flushes
// the truncated tail. `weights` must outlive the encoder.
class StreamingEncoder {
  public:
    StreamingEncoder(EncoderConfig cfg, const EncoderWeights &weights, EncoderHooks hooks = {});

    // Returns the center rows emitted by this call (possibly none).
    Mat push(const Mat &frames);
    Mat finish();

    const EncoderState &state() const { return state_; }
    const EncoderConfig &config() const { return cfg_; }

  private:
    Mat run_window(const SegmentWindow &window);
    void drop_consumed_frames();

    EncoderConfig cfg_;
    const EncoderWeights *weights_;
    EncoderHooks hooks_;
    EncoderState state_;
};

} // namespace segstream
