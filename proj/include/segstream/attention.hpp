// SPDX-License-Identifier: Apache-2.0
//
// Multi-head attention with clipped relative-position bias, and the three
// segment-attention steps that differ in how history enters the keys:
//
//   augmem   Q = [L, C, R, s]   K, V = [M, L, C, R]   (s: segment mean, M: banks)
//   implicit Q = [C, R]         K, V = [Z, C, R]      (Z: previous attention output)
//   xl       Q = [C, R]         K, V = [X, C, R]      (X: previous raw input)
//
// Steps take un-normalized layer input. The layer's pre-attention norm is
// applied inside the step to every row that gets projected, cached rows
// included, so each K/V block is one projection of one normalized block.

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "segstream/tensor.hpp"

namespace segstream {

class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

enum class Variant { augmem, implicit, xl };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

// Which tensor the implicit variant keeps as next segment's left context.
enum class ZTap { attn_out, post_residual };

std::string_view to_string(ZTap t);
ZTap parse_z_tap(std::string_view name);

// Context sizes in post-subsampling tokens.
struct SegmentLayout {
    std::size_t left = 32;
    std::size_t center = 64;
    std::size_t right = 32;

    std::size_t size() const { return left + center + right; }
    void validate() const;
};

struct AttentionWeights {
    LayerNormParams pre_norm;
    Mat wq, wk, wv, wo; // d x d, applied as rows * W
    Mat rel_table;      // (2 * clip + 1) x head_dim, row clip is offset 0
    std::size_t heads = 1;
    std::size_t clip = 16;

    std::size_t model_dim() const { return wq.rows; }
    std::size_t head_dim() const { return heads ? model_dim() / heads : 0; }
    void validate() const;
};

// Key position marking a memory-bank row. Banks summarize arbitrarily old
// content and always use the most distant left offset (-clip).
inline constexpr int kBankPosition = std::numeric_limits<int>::min();

// Positions on a per-segment axis where center token 0 sits at 0.
struct RelativePositions {
    std::vector<int> queries;
    std::vector<int> keys;
};

// Debug hooks for attention internals. `fault_bank_offset` is a mutation
// fixture for the verify suite: banks get the zero offset instead of -clip.
struct AttentionProbe {
    std::function<void(std::size_t head, const Mat &probs)> on_probs;
    bool fault_bank_offset = false;
};

// Row-major (queries x keys) indices into the relative table.
std::vector<std::size_t> relative_offset_indices(const RelativePositions &pos, std::size_t clip,
                                                 bool fault_bank_offset = false);

// Per-head additive logits: bias_h[q][k] = q_h . rel_table[index(q, k)].
// `projected_queries` are queries after W_q (all heads side by side).
std::vector<Mat> relative_position_bias(const Mat &projected_queries, std::size_t heads,
                                        const RelativePositions &pos, const Mat &rel_table,
                                        std::size_t clip, bool fault_bank_offset = false);

// softmax(Q_h K_h^T / sqrt(d/heads) + bias_h) V_h per head, concatenated and
// projected by W_o. Inputs are pre-projection rows.
Mat multi_head_attention(const Mat &queries, const Mat &keys, const Mat &values,
                         const AttentionWeights &w, const RelativePositions *positions = nullptr,
                         const AttentionProbe *probe = nullptr);

// Mean over rows; 1 x d.
Mat summarization_query(const Mat &segment_rows);

// Per-layer history carried across segments. Only the member matching the
// configured variant is ever populated.
struct LayerState {
    Mat banks;     // augmem: at most N rows, oldest first
    Mat z_cache;   // implicit: min(l, c_eff) rows of the previous segment
    Mat raw_cache; // xl: min(l, c_eff) pre-attention input rows of the previous segment
    std::size_t segment_index = 0;
};

// Effective row counts of the block handed to a step.
struct StepShape {
    std::size_t left = 0; // augmem only; rows of L at the top of the input
    std::size_t center = 0;
    std::size_t right = 0;
};

struct StepOptions {
    std::size_t left_context = 0;  // configured l
    std::size_t bank_capacity = 0; // configured N; augmem only
    ZTap z_tap = ZTap::attn_out;
    const AttentionProbe *probe = nullptr;
};

struct StepOutput {
    Mat left_out; // augmem: attention output of the L rows, fed to the next layer
    Mat center_out;
    Mat right_out;
    std::optional<Mat> new_bank; // augmem with N > 0
    std::optional<Mat> new_z;    // implicit with l > 0
    std::optional<Mat> new_raw;  // xl with l > 0
    std::size_t query_rows = 0;
    std::size_t key_rows = 0;
};

// `segment` holds [L, C, R] rows. With N > 0 the segment mean is appended to
// the queries and its output row becomes `new_bank`.
StepOutput augmem_step(const Mat &segment, const StepShape &shape, const LayerState &state,
                       const AttentionWeights &w, const StepOptions &opts);

// `center_right` holds [C, R] rows; state.z_cache supplies the left context.
StepOutput implicit_step(const Mat &center_right, const StepShape &shape,
                         const LayerState &state, const AttentionWeights &w,
                         const StepOptions &opts);

// `center_right` holds [C, R] rows; state.raw_cache supplies the left context.
StepOutput xl_step(const Mat &center_right, const StepShape &shape, const LayerState &state,
                   const AttentionWeights &w, const StepOptions &opts);

// Append a bank row, evicting the oldest rows beyond `capacity`.
void push_bank(LayerState &state, const Mat &bank, std::size_t capacity);

// Fold a step's new history into the state and advance the segment index.
void commit_step(LayerState &state, const StepOutput &out, std::size_t bank_capacity);

} // namespace segstream
