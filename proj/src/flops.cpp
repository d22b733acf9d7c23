// SPDX-License-Identifier: Apache-2.0

#include "segstream/flops.hpp"

#include <algorithm>

namespace segstream {

FlopsEstimate flops_estimate(const EncoderConfig &cfg) {
    cfg.validate();
    const std::uint64_t d = cfg.d;
    const std::size_t l = cfg.layout.left;
    const std::size_t c = cfg.layout.center;
    const std::size_t r = cfg.layout.right;
    const std::size_t n_banks = cfg.effective_bank_capacity();

    FlopsEstimate e;
    if (cfg.variant == Variant::augmem) {
        e.tokens = l + c + r;
        e.queries = e.tokens + (n_banks > 0 ? 1 : 0);
        e.keys = n_banks + e.tokens;
        e.qk_formula = static_cast<std::uint64_t>(n_banks + l + c + r) * (l + c + r) * d;
    } else {
        // Cached left context is cut from one previous center, so it never
        // exceeds c rows.
        const std::size_t cached = std::min(l, c);
        e.tokens = c + r;
        e.queries = c + r;
        e.keys = cached + c + r;
        e.qk_formula = static_cast<std::uint64_t>(c + r) * (cached + c + r) * d;
    }

    const std::uint64_t q = e.queries;
    const std::uint64_t k = e.keys;
    const std::uint64_t n = e.tokens;
    e.per_layer.attention_qk_av = 2 * q * k * d;
    e.per_layer.projections = (2 * q + 2 * k) * d * d;
    e.per_layer.ffn = 2 * n * d * cfg.ffn_dim;

    const auto &sub = cfg.subsample;
    const std::uint64_t w = sub.kernel_width;
    const std::uint64_t first_len =
        conv_output_length(sub.frames_for_tokens(e.tokens), sub.kernel_width, sub.stride);
    const std::uint64_t conv = first_len * w * cfg.input_dim * d + n * w * d * d + n * d * d;

    const std::uint64_t layers = cfg.num_layers;
    e.total.attention_qk_av = layers * e.per_layer.attention_qk_av;
    e.total.projections = layers * e.per_layer.projections;
    e.total.ffn = layers * e.per_layer.ffn;
    e.total.conv = conv;
    return e;
}

} // namespace segstream
