// SPDX-License-Identifier: Apache-2.0
//
// Analytical multiply-accumulate counts for one steady-state segment (left
// context and banks fully populated).

#pragma once

#include <cstddef>
#include <cstdint>

#include "segstream/encoder.hpp"

namespace segstream {

struct FlopTerms {
    std::uint64_t attention_qk_av = 0; // scores plus context: 2 * queries * keys * d
    std::uint64_t projections = 0;     // W_q, W_k, W_v, W_o
    std::uint64_t ffn = 0;
    std::uint64_t conv = 0; // frontend; zero in per-layer terms

    std::uint64_t total() const { return attention_qk_av + projections + ffn + conv; }
};

struct FlopsEstimate {
    std::size_t queries = 0;
    std::size_t keys = 0;
    std::size_t tokens = 0; // rows through the FFN and the frontend
    // Score term of the attention complexity alone, summary query excluded:
    // (N + l + c + r)(l + c + r) d for augmem, (c + r)(min(l, c) + c + r) d otherwise.
    std::uint64_t qk_formula = 0;
    FlopTerms per_layer;
    FlopTerms total; // per_layer * num_layers plus the frontend
};

FlopsEstimate flops_estimate(const EncoderConfig &cfg);

} // namespace segstream
