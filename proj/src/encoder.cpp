// SPDX-License-Identifier: Apache-2.0

#include "segstream/encoder.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace segstream {

std::size_t subsampled_length(std::size_t frames, const SubsampleConfig &sub) {
    const std::size_t first = conv_output_length(frames, sub.kernel_width, sub.stride);
    return conv_output_length(first, sub.kernel_width, sub.stride);
}

void EncoderConfig::validate() const {
    if (num_layers == 0) {
        throw ConfigError("config: num_layers must be at least 1");
    }
    if (heads == 0 || d == 0 || d % heads != 0) {
        throw ConfigError("config: d=" + std::to_string(d) + " must be divisible by heads=" +
                          std::to_string(heads));
    }
    layout.validate();
    if (subsample.kernel_width == 0 || subsample.stride == 0) {
        throw ConfigError("config: subsample kernel and stride must be positive");
    }
    if (ffn_dim == 0 || input_dim == 0) {
        throw ConfigError("config: ffn_dim and input_dim must be positive");
    }
    if (!(ln_eps >= 0.0f)) {
        throw ConfigError("config: ln_eps must be non-negative");
    }
}

namespace {

void check_shape(const Mat &m, std::size_t rows, std::size_t cols, const std::string &what) {
    if (m.rows != rows || m.cols != cols) {
        throw ShapeError("weights: " + what + " is " + m.shape_str() + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

void check_len(const std::vector<float> &v, std::size_t n, const std::string &what) {
    if (v.size() != n) {
        throw ShapeError("weights: " + what + " has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(n));
    }
}

void check_conv(const ConvKernel &k, std::size_t width, std::size_t in, std::size_t out,
                const std::string &what) {
    if (k.width != width || k.in_dim != in || k.out_dim != out) {
        throw ShapeError("weights: " + what + " geometry mismatch");
    }
    check_shape(k.weight, width * in, out, what + ".weight");
    check_len(k.bias, out, what + ".bias");
}

} // namespace

void EncoderWeights::validate(const EncoderConfig &cfg) const {
    const std::size_t d = cfg.d;
    const std::size_t w = cfg.subsample.kernel_width;
    check_conv(frontend.conv1, w, cfg.input_dim, d, "frontend.conv1");
    check_conv(frontend.conv2, w, d, d, "frontend.conv2");
    check_shape(frontend.proj, d, d, "frontend.proj");
    check_len(frontend.proj_bias, d, "frontend.proj_bias");
    if (layers.size() != cfg.num_layers) {
        throw ShapeError("weights: " + std::to_string(layers.size()) + " layers, config has " +
                         std::to_string(cfg.num_layers));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto &l = layers[i];
        const std::string p = "layer" + std::to_string(i);
        if (l.attn.heads != cfg.heads || l.attn.clip != cfg.clip) {
            throw ShapeError("weights: " + p + " heads/clip disagree with config");
        }
        l.attn.validate();
        check_shape(l.attn.wq, d, d, p + ".wq");
        check_len(l.ffn_norm.gamma, d, p + ".ffn_norm.gamma");
        check_len(l.ffn_norm.beta, d, p + ".ffn_norm.beta");
        check_shape(l.ffn_w1, d, cfg.ffn_dim, p + ".ffn1.weight");
        check_len(l.ffn_b1, cfg.ffn_dim, p + ".ffn1.bias");
        check_shape(l.ffn_w2, cfg.ffn_dim, d, p + ".ffn2.weight");
        check_len(l.ffn_b2, d, p + ".ffn2.bias");
    }
}

EncoderWeights random_weights(const EncoderConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-0.1f, 0.1f);
    auto mat = [&](std::size_t r, std::size_t c) {
        Mat m(r, c);
        for (float &v : m.data) {
            v = dist(rng);
        }
        return m;
    };
    auto vec = [&](std::size_t n) {
        std::vector<float> v(n);
        for (float &x : v) {
            x = dist(rng);
        }
        return v;
    };
    auto norm = [&] {
        return LayerNormParams{std::vector<float>(cfg.d, 1.0f), std::vector<float>(cfg.d, 0.0f),
                               cfg.ln_eps};
    };
    auto conv = [&](std::size_t in, std::size_t out) {
        ConvKernel k;
        k.width = cfg.subsample.kernel_width;
        k.in_dim = in;
        k.out_dim = out;
        k.weight = mat(k.width * in, out);
        k.bias = vec(out);
        return k;
    };

    EncoderWeights w;
    w.frontend.conv1 = conv(cfg.input_dim, cfg.d);
    w.frontend.conv2 = conv(cfg.d, cfg.d);
    w.frontend.proj = mat(cfg.d, cfg.d);
    w.frontend.proj_bias = vec(cfg.d);
    w.layers.resize(cfg.num_layers);
    for (auto &l : w.layers) {
        l.attn.pre_norm = norm();
        l.attn.heads = cfg.heads;
        l.attn.clip = cfg.clip;
        l.attn.wq = mat(cfg.d, cfg.d);
        l.attn.wk = mat(cfg.d, cfg.d);
        l.attn.wv = mat(cfg.d, cfg.d);
        l.attn.wo = mat(cfg.d, cfg.d);
        l.attn.rel_table = mat(2 * cfg.clip + 1, cfg.d / cfg.heads);
        l.ffn_norm = norm();
        l.ffn_w1 = mat(cfg.d, cfg.ffn_dim);
        l.ffn_b1 = vec(cfg.ffn_dim);
        l.ffn_w2 = mat(cfg.ffn_dim, cfg.d);
        l.ffn_b2 = vec(cfg.d);
    }
    return w;
}

namespace {

SegmentWindow make_window(std::size_t k, std::size_t total_tokens, std::size_t total_frames,
                          const SegmentLayout &layout, const SubsampleConfig &sub,
                          bool with_left_context) {
    SegmentWindow w;
    w.index = k;
    const std::size_t center_begin = k * layout.center;
    w.center = std::min(layout.center, total_tokens - center_begin);
    w.right = std::min(layout.right, total_tokens - center_begin - w.center);
    w.left = with_left_context ? std::min(layout.left, center_begin) : 0;
    w.token_begin = center_begin - w.left;
    w.frame_begin = w.token_begin * sub.factor();
    w.frame_end =
        std::min(total_frames, w.frame_begin + sub.frames_for_tokens(w.tokens()));
    return w;
}

} // namespace

std::vector<SegmentWindow> segment_stream(std::size_t total_frames, const SegmentLayout &layout,
                                          const SubsampleConfig &sub, bool with_left_context) {
    layout.validate();
    const std::size_t tokens = subsampled_length(total_frames, sub);
    std::vector<SegmentWindow> out;
    for (std::size_t k = 0; k * layout.center < tokens; ++k) {
        out.push_back(make_window(k, tokens, total_frames, layout, sub, with_left_context));
    }
    return out;
}

Mat subsample(const Mat &segment_frames, const FrontendWeights &w, const SubsampleConfig &sub) {
    if (subsampled_length(segment_frames.rows, sub) == 0) {
        throw BufferUnderflow("subsample: " + std::to_string(segment_frames.rows) +
                              " frames cannot produce a token; need at least " +
                              std::to_string(sub.receptive_field()));
    }
    Mat h = conv1d(segment_frames, w.conv1, sub.stride);
    relu_inplace(h);
    h = conv1d(h, w.conv2, sub.stride);
    relu_inplace(h);
    return linear(h, w.proj, w.proj_bias);
}

LayerForward encoder_layer_forward(const Mat &tokens, const StepShape &shape,
                                   const LayerState &state, const LayerWeights &w,
                                   const EncoderConfig &cfg, const AttentionProbe *probe) {
    StepOptions opts;
    opts.left_context = cfg.layout.left;
    opts.bank_capacity = cfg.effective_bank_capacity();
    opts.z_tap = cfg.z_tap;
    opts.probe = probe;

    LayerForward res;
    switch (cfg.variant) {
    case Variant::augmem:
        res.attention = augmem_step(tokens, shape, state, w.attn, opts);
        break;
    case Variant::implicit:
        res.attention = implicit_step(tokens, shape, state, w.attn, opts);
        break;
    case Variant::xl:
        res.attention = xl_step(tokens, shape, state, w.attn, opts);
        break;
    }

    const auto &a = res.attention;
    Mat x1 = vstack({&a.left_out, &a.center_out, &a.right_out});
    add_inplace(x1, tokens);

    Mat hidden = linear(layer_norm(x1, w.ffn_norm), w.ffn_w1, w.ffn_b1);
    relu_inplace(hidden);
    res.tokens = linear(hidden, w.ffn_w2, w.ffn_b2);
    add_inplace(res.tokens, x1);

    res.state = state;
    commit_step(res.state, a, opts.bank_capacity);
    return res;
}

Mat encode_segment(const Mat &window_frames, const SegmentWindow &window,
                   std::vector<LayerState> &layers, const EncoderConfig &cfg,
                   const EncoderWeights &weights, const EncoderHooks &hooks) {
    if (layers.size() != cfg.num_layers) {
        throw std::logic_error("encode_segment: state has " + std::to_string(layers.size()) +
                               " layers, config has " + std::to_string(cfg.num_layers));
    }
    if (window.left != 0 && cfg.variant != Variant::augmem) {
        throw std::logic_error("encode_segment: only augmem windows carry left context");
    }
    Mat x = subsample(window_frames, weights.frontend, cfg.subsample);
    if (x.rows != window.tokens()) {
        throw std::logic_error("encode_segment: frontend produced " + std::to_string(x.rows) +
                               " tokens for a window of " + std::to_string(window.tokens()));
    }

    const StepShape shape{window.left, window.center, window.right};
    for (std::size_t i = 0; i < cfg.num_layers; ++i) {
        auto f = encoder_layer_forward(x, shape, layers[i], weights.layers[i], cfg, hooks.probe);
        if (hooks.on_step) {
            hooks.on_step(window.index, i, f.attention, f.state);
        }
        layers[i] = std::move(f.state);
        x = std::move(f.tokens);
    }
    if (hooks.poison_right) {
        const std::size_t first = window.left + window.center;
        std::fill(x.data.begin() + static_cast<std::ptrdiff_t>(first * x.cols), x.data.end(),
                  kRightPoison);
    }
    return slice_rows(x, window.left, window.left + window.center);
}

Mat encode_utterance(const Mat &frames, const EncoderConfig &cfg, const EncoderWeights &weights,
                     const EncoderHooks &hooks) {
    cfg.validate();
    weights.validate(cfg);
    if (frames.rows != 0 && frames.cols != cfg.input_dim) {
        throw ShapeError("encode_utterance: frames " + frames.shape_str() + " but input_dim is " +
                         std::to_string(cfg.input_dim));
    }
    const auto windows = segment_stream(frames.rows, cfg.layout, cfg.subsample,
                                        cfg.variant == Variant::augmem);
    std::vector<LayerState> layers(cfg.num_layers);
    std::vector<Mat> centers;
    centers.reserve(windows.size());
    for (const auto &w : windows) {
        centers.push_back(encode_segment(slice_rows(frames, w.frame_begin, w.frame_end), w, layers,
                                         cfg, weights, hooks));
    }
    if (centers.empty()) {
        return Mat(0, cfg.d);
    }
    std::vector<const Mat *> parts;
    for (const auto &c : centers) {
        parts.push_back(&c);
    }
    return vstack(parts);
}

StreamingEncoder::StreamingEncoder(EncoderConfig cfg, const EncoderWeights &weights,
                                   EncoderHooks hooks)
    : cfg_(std::move(cfg)), weights_(&weights), hooks_(std::move(hooks)) {
    cfg_.validate();
    weights_->validate(cfg_);
    state_.layers.resize(cfg_.num_layers);
    state_.frame_buffer = Mat(0, cfg_.input_dim);
}

Mat StreamingEncoder::push(const Mat &frames) {
    if (state_.finished) {
        throw std::logic_error("StreamingEncoder::push after finish");
    }
    if (frames.rows != 0 && frames.cols != cfg_.input_dim) {
        throw ShapeError("StreamingEncoder::push: frames " + frames.shape_str() +
                         " but input_dim is " + std::to_string(cfg_.input_dim));
    }
    state_.frame_buffer = vstack({&state_.frame_buffer, &frames});
    state_.frames_received += frames.rows;

    const bool with_left = cfg_.variant == Variant::augmem;
    Mat emitted(0, cfg_.d);
    for (;;) {
        const std::size_t tokens = subsampled_length(state_.frames_received, cfg_.subsample);
        const std::size_t k = state_.segments_done;
        if (k * cfg_.layout.center >= tokens) {
            break;
        }
        const auto w = make_window(k, tokens, state_.frames_received, cfg_.layout,
                                   cfg_.subsample, with_left);
        // Only full windows run early; anything shorter waits for finish().
        if (w.center < cfg_.layout.center || w.right < cfg_.layout.right) {
            break;
        }
        const Mat out = run_window(w);
        emitted = vstack({&emitted, &out});
    }
    return emitted;
}

Mat StreamingEncoder::finish() {
    if (state_.finished) {
        return Mat(0, cfg_.d);
    }
    const bool with_left = cfg_.variant == Variant::augmem;
    const std::size_t tokens = subsampled_length(state_.frames_received, cfg_.subsample);
    Mat emitted(0, cfg_.d);
    while (state_.segments_done * cfg_.layout.center < tokens) {
        const auto w = make_window(state_.segments_done, tokens, state_.frames_received,
                                   cfg_.layout, cfg_.subsample, with_left);
        const Mat out = run_window(w);
        emitted = vstack({&emitted, &out});
    }
    state_.finished = true;
    return emitted;
}

Mat StreamingEncoder::run_window(const SegmentWindow &window) {
    const Mat frames = slice_rows(state_.frame_buffer, window.frame_begin - state_.buffer_origin,
                                  window.frame_end - state_.buffer_origin);
    Mat out = encode_segment(frames, window, state_.layers, cfg_, *weights_, hooks_);
    ++state_.segments_done;
    state_.emitted_tokens += window.center;
    drop_consumed_frames();
    return out;
}

void StreamingEncoder::drop_consumed_frames() {
    const std::size_t next_center = state_.segments_done * cfg_.layout.center;
    const std::size_t keep_left =
        cfg_.variant == Variant::augmem ? std::min(cfg_.layout.left, next_center) : 0;
    const std::size_t new_origin = (next_center - keep_left) * cfg_.subsample.factor();
    if (new_origin <= state_.buffer_origin) {
        return;
    }
    const std::size_t drop =
        std::min(new_origin - state_.buffer_origin, state_.frame_buffer.rows);
    state_.frame_buffer = slice_rows(state_.frame_buffer, drop, state_.frame_buffer.rows);
    state_.buffer_origin += drop;
}

} // namespace segstream
