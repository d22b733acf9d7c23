// SPDX-License-Identifier: Apache-2.0
//
// Reference implementation in double precision. Every routine here is a
// direct loop over the defining formula; nothing calls into the float
// kernels, so agreement with the engine is evidence rather than tautology.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "segstream/encoder.hpp"

namespace segstream::oracle {

struct DMat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    DMat() = default;
    DMat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

    double &operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

DMat to_double(const Mat &m);
Mat to_float(const DMat &m);

// Largest |a - b| over matching entries; infinity on shape mismatch.
double max_abs_diff(const Mat &engine, const DMat &ref);

DMat layer_norm(const DMat &x, const LayerNormParams &p);

// Valid 1-D convolution, weight laid out (width * in) x out with tap-major rows.
DMat conv1d(const DMat &x, const ConvKernel &k, std::size_t stride);

// conv, ReLU, conv, ReLU, then the output projection.
DMat frontend(const DMat &frames, const FrontendWeights &w, std::size_t stride);

// A key position of nullopt is a memory bank: offset pinned at -clip.
DMat dense_attention(const DMat &queries, const std::vector<int> &query_pos, const DMat &kv,
                     const std::vector<std::optional<int>> &key_pos, const AttentionWeights &w);

// Attention output of the segment-mean query of LN(segment) against
// [banks, LN(segment)], with the segment starting at position -left.
DMat summary_bank(const DMat &segment, std::size_t left, const DMat &banks,
                  const AttentionWeights &w);

struct AugmemRef {
    DMat out; // attention output for every [L, C, R] row
    std::optional<DMat> bank;
};

// `segment` is raw layer input [L, C, R].
AugmemRef augmem_attention(const DMat &segment, std::size_t left, const DMat &banks,
                           std::size_t bank_capacity, const AttentionWeights &w);

// `center_right` is raw layer input [C, R]; `cache` is the raw previous rows
// placed at positions -|cache| .. -1.
DMat cached_attention(const DMat &center_right, const DMat &cache, const AttentionWeights &w);

struct ReplayStep {
    std::size_t segment = 0;
    std::size_t layer = 0;
    DMat attention; // rows as in the engine step: [L,] C, R
    std::optional<DMat> bank;
    DMat cache_after; // banks, Z or raw cache after the step
};

// Whole-utterance encode from scratch: runs the frontend once over all
// frames, cuts the token sequence into segments by its own arithmetic, and
// threads banks and caches through explicit per-layer variables.
DMat replay_encode(const Mat &frames, const EncoderConfig &cfg, const EncoderWeights &w,
                   std::vector<ReplayStep> *steps = nullptr);

} // namespace segstream::oracle
