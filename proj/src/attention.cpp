// SPDX-License-Identifier: Apache-2.0

#include "segstream/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace segstream {

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::augmem:
        return "augmem";
    case Variant::implicit:
        return "implicit";
    case Variant::xl:
        return "xl";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    if (name == "augmem") {
        return Variant::augmem;
    }
    if (name == "implicit") {
        return Variant::implicit;
    }
    if (name == "xl") {
        return Variant::xl;
    }
    throw ConfigError("unknown attention variant '" + std::string(name) +
                      "' (expected augmem, implicit or xl)");
}

std::string_view to_string(ZTap t) {
    return t == ZTap::attn_out ? "attn_out" : "post_residual";
}

ZTap parse_z_tap(std::string_view name) {
    if (name == "attn_out") {
        return ZTap::attn_out;
    }
    if (name == "post_residual") {
        return ZTap::post_residual;
    }
    throw ConfigError("unknown z_tap '" + std::string(name) +
                      "' (expected attn_out or post_residual)");
}

void SegmentLayout::validate() const {
    if (center < 1) {
        throw ConfigError("segment layout: center size must be at least 1");
    }
}

void AttentionWeights::validate() const {
    const std::size_t d = model_dim();
    if (heads == 0 || d == 0 || d % heads != 0) {
        throw ConfigError("attention: model dim " + std::to_string(d) +
                          " not divisible by head count " + std::to_string(heads));
    }
    for (const Mat *m : {&wq, &wk, &wv, &wo}) {
        if (m->rows != d || m->cols != d) {
            throw ShapeError("attention: projection " + m->shape_str() + " expected " +
                             std::to_string(d) + "x" + std::to_string(d));
        }
    }
    if (rel_table.rows != 2 * clip + 1 || rel_table.cols != head_dim()) {
        throw ShapeError("attention: relative table " + rel_table.shape_str() + " expected " +
                         std::to_string(2 * clip + 1) + "x" + std::to_string(head_dim()));
    }
    if (pre_norm.gamma.size() != d || pre_norm.beta.size() != d) {
        throw ShapeError("attention: pre-norm length mismatch");
    }
}

std::vector<std::size_t> relative_offset_indices(const RelativePositions &pos, std::size_t clip,
                                                 bool fault_bank_offset) {
    const auto nq = pos.queries.size();
    const auto nk = pos.keys.size();
    const long long c = static_cast<long long>(clip);
    std::vector<std::size_t> idx(nq * nk);
    for (std::size_t q = 0; q < nq; ++q) {
        for (std::size_t k = 0; k < nk; ++k) {
            long long offset;
            if (pos.keys[k] == kBankPosition) {
                offset = fault_bank_offset ? 0 : -c;
            } else {
                offset = std::clamp<long long>(
                    static_cast<long long>(pos.keys[k]) - pos.queries[q], -c, c);
            }
            idx[q * nk + k] = static_cast<std::size_t>(offset + c);
        }
    }
    return idx;
}

std::vector<Mat> relative_position_bias(const Mat &projected_queries, std::size_t heads,
                                        const RelativePositions &pos, const Mat &rel_table,
                                        std::size_t clip, bool fault_bank_offset) {
    if (pos.queries.size() != projected_queries.rows) {
        throw ShapeError("relative_position_bias: " + std::to_string(pos.queries.size()) +
                         " query positions for " + projected_queries.shape_str());
    }
    const std::size_t dh = projected_queries.cols / heads;
    const std::size_t nq = pos.queries.size();
    const std::size_t nk = pos.keys.size();
    const auto idx = relative_offset_indices(pos, clip, fault_bank_offset);
    const Mat table_t = transpose(rel_table);

    std::vector<Mat> bias;
    bias.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        // Score every query against every table row once, then gather.
        const Mat scores = matmul(slice_cols(projected_queries, h * dh, (h + 1) * dh), table_t);
        Mat b(nq, nk);
        for (std::size_t q = 0; q < nq; ++q) {
            for (std::size_t k = 0; k < nk; ++k) {
                b(q, k) = scores(q, idx[q * nk + k]);
            }
        }
        bias.push_back(std::move(b));
    }
    return bias;
}

Mat multi_head_attention(const Mat &queries, const Mat &keys, const Mat &values,
                         const AttentionWeights &w, const RelativePositions *positions,
                         const AttentionProbe *probe) {
    const std::size_t d = w.model_dim();
    if (queries.cols != d || keys.cols != d || values.cols != d) {
        throw ShapeError("multi_head_attention: inputs " + queries.shape_str() + ", " +
                         keys.shape_str() + ", " + values.shape_str() + " for model dim " +
                         std::to_string(d));
    }
    if (keys.rows != values.rows || keys.rows == 0) {
        throw ShapeError("multi_head_attention: keys " + keys.shape_str() + " vs values " +
                         values.shape_str());
    }
    if (positions && positions->keys.size() != keys.rows) {
        throw ShapeError("multi_head_attention: " + std::to_string(positions->keys.size()) +
                         " key positions for " + keys.shape_str());
    }

    const Mat q = matmul(queries, w.wq);
    const Mat k = matmul(keys, w.wk);
    const Mat v = matmul(values, w.wv);
    const std::size_t dh = w.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    std::vector<Mat> bias;
    if (positions) {
        bias = relative_position_bias(q, w.heads, *positions, w.rel_table, w.clip,
                                      probe && probe->fault_bank_offset);
    }

    Mat context(queries.rows, d);
    for (std::size_t h = 0; h < w.heads; ++h) {
        const Mat kh_t = transpose(slice_cols(k, h * dh, (h + 1) * dh));
        Mat logits = matmul(slice_cols(q, h * dh, (h + 1) * dh), kh_t);
        for (float &x : logits.data) {
            x *= scale;
        }
        if (positions) {
            add_inplace(logits, bias[h]);
        }
        const Mat probs = softmax_rows(logits);
        if (probe && probe->on_probs) {
            probe->on_probs(h, probs);
        }
        const Mat head_out = matmul(probs, slice_cols(v, h * dh, (h + 1) * dh));
        for (std::size_t r = 0; r < head_out.rows; ++r) {
            std::copy_n(head_out.row(r).begin(), dh, context.row(r).begin() + h * dh);
        }
    }
    return matmul(context, w.wo);
}

Mat summarization_query(const Mat &segment_rows) {
    if (segment_rows.rows == 0) {
        throw std::invalid_argument("summarization_query: empty segment");
    }
    Mat out(1, segment_rows.cols);
    std::vector<double> acc(segment_rows.cols, 0.0);
    for (std::size_t r = 0; r < segment_rows.rows; ++r) {
        auto row = segment_rows.row(r);
        for (std::size_t c = 0; c < segment_rows.cols; ++c) {
            acc[c] += row[c];
        }
    }
    for (std::size_t c = 0; c < segment_rows.cols; ++c) {
        out(0, c) = static_cast<float>(acc[c] / static_cast<double>(segment_rows.rows));
    }
    return out;
}

namespace {

void append_range(std::vector<int> &out, int begin, int end) {
    for (int p = begin; p < end; ++p) {
        out.push_back(p);
    }
}

void check_block(const Mat &input, std::size_t expected_rows, const AttentionWeights &w,
                 const char *who) {
    if (input.rows != expected_rows || input.cols != w.model_dim()) {
        throw ShapeError(std::string(who) + ": input " + input.shape_str() + " expected " +
                         std::to_string(expected_rows) + "x" + std::to_string(w.model_dim()));
    }
}

// Shared body of the implicit and XL steps: queries over [C, R], keys and
// values over [cache, C, R].
StepOutput cached_left_step(const Mat &center_right, const StepShape &shape, const Mat &cache,
                            const AttentionWeights &w, const StepOptions &opts, const char *who) {
    if (shape.left != 0 || shape.center == 0) {
        throw ShapeError(std::string(who) + ": shape must have left = 0 and center >= 1");
    }
    check_block(center_right, shape.center + shape.right, w, who);
    if (cache.rows != 0 && cache.cols != w.model_dim()) {
        throw ShapeError(std::string(who) + ": cache " + cache.shape_str());
    }

    const Mat normed = layer_norm(vstack({&cache, &center_right}), w.pre_norm);
    const Mat queries = slice_rows(normed, cache.rows, normed.rows);

    const int c = static_cast<int>(shape.center);
    const int r = static_cast<int>(shape.right);
    RelativePositions pos;
    append_range(pos.queries, 0, c + r);
    append_range(pos.keys, -static_cast<int>(cache.rows), c + r);

    const Mat out = multi_head_attention(queries, normed, normed, w, &pos, opts.probe);

    StepOutput res;
    res.center_out = slice_rows(out, 0, shape.center);
    res.right_out = slice_rows(out, shape.center, out.rows);
    res.query_rows = queries.rows;
    res.key_rows = normed.rows;
    return res;
}

} // namespace

StepOutput augmem_step(const Mat &segment, const StepShape &shape, const LayerState &state,
                       const AttentionWeights &w, const StepOptions &opts) {
    if (shape.center == 0) {
        throw ShapeError("augmem_step: center must be at least 1 row");
    }
    check_block(segment, shape.left + shape.center + shape.right, w, "augmem_step");
    if (state.banks.rows > opts.bank_capacity) {
        throw ShapeError("augmem_step: " + std::to_string(state.banks.rows) +
                         " banks exceed capacity " + std::to_string(opts.bank_capacity));
    }

    const bool summarize = opts.bank_capacity > 0;
    const Mat normed = layer_norm(segment, w.pre_norm);
    Mat queries = normed;
    if (summarize) {
        const Mat sigma = summarization_query(normed);
        queries = vstack({&normed, &sigma});
    }
    const Mat keys = vstack({&state.banks, &normed});

    const int l = static_cast<int>(shape.left);
    const int cr = static_cast<int>(shape.center + shape.right);
    RelativePositions pos;
    append_range(pos.queries, -l, cr);
    if (summarize) {
        pos.queries.push_back(0);
    }
    pos.keys.assign(state.banks.rows, kBankPosition);
    append_range(pos.keys, -l, cr);

    const Mat out = multi_head_attention(queries, keys, keys, w, &pos, opts.probe);

    StepOutput res;
    res.left_out = slice_rows(out, 0, shape.left);
    res.center_out = slice_rows(out, shape.left, shape.left + shape.center);
    res.right_out = slice_rows(out, shape.left + shape.center, segment.rows);
    if (summarize) {
        res.new_bank = slice_rows(out, out.rows - 1, out.rows);
    }
    res.query_rows = queries.rows;
    res.key_rows = keys.rows;
    return res;
}

StepOutput implicit_step(const Mat &center_right, const StepShape &shape,
                         const LayerState &state, const AttentionWeights &w,
                         const StepOptions &opts) {
    StepOutput res = cached_left_step(center_right, shape, state.z_cache, w, opts, "implicit_step");
    if (opts.left_context > 0) {
        // Z is cut from the tail of the center output, next to where the
        // following segment's center begins.
        const std::size_t keep = std::min(opts.left_context, shape.center);
        if (opts.z_tap == ZTap::attn_out) {
            res.new_z = tail_rows(res.center_out, keep);
        } else {
            const Mat residual = add(slice_rows(center_right, 0, shape.center), res.center_out);
            res.new_z = tail_rows(residual, keep);
        }
    }
    return res;
}

StepOutput xl_step(const Mat &center_right, const StepShape &shape, const LayerState &state,
                   const AttentionWeights &w, const StepOptions &opts) {
    StepOutput res = cached_left_step(center_right, shape, state.raw_cache, w, opts, "xl_step");
    if (opts.left_context > 0) {
        const std::size_t keep = std::min(opts.left_context, shape.center);
        res.new_raw = tail_rows(slice_rows(center_right, 0, shape.center), keep);
    }
    return res;
}

void push_bank(LayerState &state, const Mat &bank, std::size_t capacity) {
    if (capacity == 0) {
        return;
    }
    Mat joined = vstack({&state.banks, &bank});
    state.banks = tail_rows(joined, capacity);
}

void commit_step(LayerState &state, const StepOutput &out, std::size_t bank_capacity) {
    if (out.new_bank) {
        push_bank(state, *out.new_bank, bank_capacity);
    }
    if (out.new_z) {
        state.z_cache = *out.new_z;
    }
    if (out.new_raw) {
        state.raw_cache = *out.new_raw;
    }
    ++state.segment_index;
}

} // namespace segstream
