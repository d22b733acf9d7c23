// SPDX-License-Identifier: Apache-2.0

#include "segstream/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace segstream::oracle {

DMat to_double(const Mat &m) {
    DMat d(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        d.v[i] = m.data[i];
    }
    return d;
}

Mat to_float(const DMat &m) {
    Mat f(m.rows, m.cols);
    for (std::size_t i = 0; i < m.v.size(); ++i) {
        f.data[i] = static_cast<float>(m.v[i]);
    }
    return f;
}

double max_abs_diff(const Mat &engine, const DMat &ref) {
    if (engine.rows != ref.rows || engine.cols != ref.cols) {
        return std::numeric_limits<double>::infinity();
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.v.size(); ++i) {
        const double diff = std::abs(static_cast<double>(engine.data[i]) - ref.v[i]);
        if (!(diff <= worst)) {
            worst = diff; // NaN propagates as the worst case
        }
    }
    return worst;
}

namespace {

DMat rows_of(const DMat &x, std::size_t begin, std::size_t end) {
    DMat out(end - begin, x.cols);
    std::copy(x.v.begin() + static_cast<std::ptrdiff_t>(begin * x.cols),
              x.v.begin() + static_cast<std::ptrdiff_t>(end * x.cols), out.v.begin());
    return out;
}

DMat stack(const DMat &a, const DMat &b) {
    const std::size_t cols = a.rows ? a.cols : b.cols;
    DMat out(a.rows + b.rows, cols);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return out;
}

DMat tail(const DMat &x, std::size_t n) { return rows_of(x, x.rows - std::min(n, x.rows), x.rows); }

// y = x W + b with W given in the engine's rows-times-W layout.
DMat affine(const DMat &x, const Mat &w, const std::vector<float> *bias) {
    DMat y(x.rows, w.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = 0; j < w.cols; ++j) {
            double acc = bias ? static_cast<double>((*bias)[j]) : 0.0;
            for (std::size_t k = 0; k < x.cols; ++k) {
                acc += x(i, k) * static_cast<double>(w.data[k * w.cols + j]);
            }
            y(i, j) = acc;
        }
    }
    return y;
}

void relu(DMat &x) {
    for (double &v : x.v) {
        v = std::max(v, 0.0);
    }
}

DMat plus(const DMat &a, const DMat &b) {
    DMat out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        out.v[i] += b.v[i];
    }
    return out;
}

std::vector<int> span_positions(int begin, int end) {
    std::vector<int> p;
    for (int i = begin; i < end; ++i) {
        p.push_back(i);
    }
    return p;
}

std::vector<std::optional<int>> keys_with_banks(std::size_t banks, int begin, int end) {
    std::vector<std::optional<int>> p(banks, std::nullopt);
    for (int i = begin; i < end; ++i) {
        p.emplace_back(i);
    }
    return p;
}

std::size_t valid_length(std::size_t n, std::size_t width, std::size_t stride) {
    return n < width ? 0 : (n - width) / stride + 1;
}

} // namespace

DMat layer_norm(const DMat &x, const LayerNormParams &p) {
    DMat out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            mean += x(i, j);
        }
        mean /= static_cast<double>(x.cols);
        double var = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            var += (x(i, j) - mean) * (x(i, j) - mean);
        }
        var /= static_cast<double>(x.cols);
        const double denom = var + static_cast<double>(p.eps);
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double z = denom > 0.0 ? (x(i, j) - mean) / std::sqrt(denom) : 0.0;
            out(i, j) = z * p.gamma[j] + p.beta[j];
        }
    }
    return out;
}

DMat conv1d(const DMat &x, const ConvKernel &k, std::size_t stride) {
    const std::size_t n = valid_length(x.rows, k.width, stride);
    DMat y(n, k.out_dim);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t o = 0; o < k.out_dim; ++o) {
            double acc = k.bias[o];
            for (std::size_t tap = 0; tap < k.width; ++tap) {
                for (std::size_t c = 0; c < k.in_dim; ++c) {
                    acc += x(t * stride + tap, c) *
                           static_cast<double>(k.weight.data[(tap * k.in_dim + c) * k.out_dim + o]);
                }
            }
            y(t, o) = acc;
        }
    }
    return y;
}

DMat frontend(const DMat &frames, const FrontendWeights &w, std::size_t stride) {
    DMat h = conv1d(frames, w.conv1, stride);
    relu(h);
    h = conv1d(h, w.conv2, stride);
    relu(h);
    return affine(h, w.proj, &w.proj_bias);
}

DMat dense_attention(const DMat &queries, const std::vector<int> &query_pos, const DMat &kv,
                     const std::vector<std::optional<int>> &key_pos, const AttentionWeights &w) {
    const std::size_t d = w.wq.rows;
    const std::size_t heads = w.heads;
    const std::size_t dh = d / heads;
    const long clip = static_cast<long>(w.clip);
    const DMat q = affine(queries, w.wq, nullptr);
    const DMat k = affine(kv, w.wk, nullptr);
    const DMat v = affine(kv, w.wv, nullptr);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    DMat context(queries.rows, d);
    std::vector<double> logits(kv.rows);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < queries.rows; ++i) {
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < kv.rows; ++j) {
                long offset = -clip;
                if (key_pos[j]) {
                    offset = std::clamp<long>(*key_pos[j] - query_pos[i], -clip, clip);
                }
                const std::size_t rel = static_cast<std::size_t>(offset + clip);
                double dot = 0.0, bias = 0.0;
                for (std::size_t e = 0; e < dh; ++e) {
                    dot += q(i, h * dh + e) * k(j, h * dh + e);
                    bias += q(i, h * dh + e) *
                            static_cast<double>(w.rel_table.data[rel * dh + e]);
                }
                logits[j] = dot * scale + bias;
                top = std::max(top, logits[j]);
            }
            double total = 0.0;
            for (double &x : logits) {
                x = std::exp(x - top);
                total += x;
            }
            for (std::size_t j = 0; j < kv.rows; ++j) {
                const double p = logits[j] / total;
                for (std::size_t e = 0; e < dh; ++e) {
                    context(i, h * dh + e) += p * v(j, h * dh + e);
                }
            }
        }
    }
    return affine(context, w.wo, nullptr);
}

DMat summary_bank(const DMat &segment, std::size_t left, const DMat &banks,
                  const AttentionWeights &w) {
    const DMat normed = layer_norm(segment, w.pre_norm);
    DMat sigma(1, normed.cols);
    for (std::size_t i = 0; i < normed.rows; ++i) {
        for (std::size_t j = 0; j < normed.cols; ++j) {
            sigma(0, j) += normed(i, j);
        }
    }
    for (double &x : sigma.v) {
        x /= static_cast<double>(normed.rows);
    }
    const int l = static_cast<int>(left);
    const int rest = static_cast<int>(segment.rows) - l;
    return dense_attention(sigma, {0}, stack(banks, normed), keys_with_banks(banks.rows, -l, rest),
                           w);
}

AugmemRef augmem_attention(const DMat &segment, std::size_t left, const DMat &banks,
                           std::size_t bank_capacity, const AttentionWeights &w) {
    const DMat normed = layer_norm(segment, w.pre_norm);
    const int l = static_cast<int>(left);
    const int rest = static_cast<int>(segment.rows) - l;
    AugmemRef ref;
    ref.out = dense_attention(normed, span_positions(-l, rest), stack(banks, normed),
                              keys_with_banks(banks.rows, -l, rest), w);
    if (bank_capacity > 0) {
        ref.bank = summary_bank(segment, left, banks, w);
    }
    return ref;
}

DMat cached_attention(const DMat &center_right, const DMat &cache, const AttentionWeights &w) {
    const DMat normed = layer_norm(stack(cache, center_right), w.pre_norm);
    const DMat queries = rows_of(normed, cache.rows, normed.rows);
    const int n = static_cast<int>(center_right.rows);
    return dense_attention(queries, span_positions(0, n), normed,
                           keys_with_banks(0, -static_cast<int>(cache.rows), n), w);
}

DMat replay_encode(const Mat &frames, const EncoderConfig &cfg, const EncoderWeights &w,
                   std::vector<ReplayStep> *steps) {
    const std::size_t width = cfg.subsample.kernel_width;
    const std::size_t stride = cfg.subsample.stride;
    const std::size_t total_tokens =
        valid_length(valid_length(frames.rows, width, stride), width, stride);
    if (total_tokens == 0) {
        return DMat(0, cfg.d);
    }
    const DMat tokens = frontend(to_double(frames), w.frontend, stride);

    const std::size_t l = cfg.layout.left;
    const std::size_t c = cfg.layout.center;
    const std::size_t r = cfg.layout.right;
    const std::size_t n_banks = cfg.variant == Variant::augmem ? cfg.bank_capacity : 0;
    const std::size_t layers = cfg.num_layers;

    std::vector<DMat> banks(layers, DMat(0, cfg.d));
    std::vector<DMat> cache(layers, DMat(0, cfg.d));
    DMat emitted(0, cfg.d);

    for (std::size_t seg = 0; seg * c < total_tokens; ++seg) {
        const std::size_t start = seg * c;
        const std::size_t c_eff = std::min(c, total_tokens - start);
        const std::size_t r_eff = std::min(r, total_tokens - start - c_eff);
        const std::size_t left = cfg.variant == Variant::augmem ? std::min(l, start) : 0;
        DMat x = rows_of(tokens, start - left, start + c_eff + r_eff);

        for (std::size_t i = 0; i < layers; ++i) {
            const LayerWeights &lw = w.layers[i];
            ReplayStep step;
            step.segment = seg;
            step.layer = i;

            if (cfg.variant == Variant::augmem) {
                AugmemRef a = augmem_attention(x, left, banks[i], n_banks, lw.attn);
                step.attention = a.out;
                if (a.bank) {
                    banks[i] = tail(stack(banks[i], *a.bank), n_banks);
                    step.bank = std::move(a.bank);
                }
                step.cache_after = banks[i];
            } else {
                step.attention = cached_attention(x, cache[i], lw.attn);
                if (l > 0) {
                    const std::size_t keep = std::min(l, c_eff);
                    const DMat center_in = rows_of(x, 0, c_eff);
                    const DMat center_attn = rows_of(step.attention, 0, c_eff);
                    if (cfg.variant == Variant::xl) {
                        cache[i] = tail(center_in, keep);
                    } else if (cfg.z_tap == ZTap::attn_out) {
                        cache[i] = tail(center_attn, keep);
                    } else {
                        cache[i] = tail(plus(center_in, center_attn), keep);
                    }
                }
                step.cache_after = cache[i];
            }

            const DMat x1 = plus(x, step.attention);
            DMat hidden = affine(layer_norm(x1, lw.ffn_norm), lw.ffn_w1, &lw.ffn_b1);
            relu(hidden);
            x = plus(x1, affine(hidden, lw.ffn_w2, &lw.ffn_b2));
            if (steps) {
                steps->push_back(std::move(step));
            }
        }
        emitted = stack(emitted, rows_of(x, left, left + c_eff));
    }
    return emitted;
}

} // namespace segstream::oracle
