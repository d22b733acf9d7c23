// SPDX-License-Identifier: Apache-2.0
//
// Dense single-precision kernels shared by every encoder stage.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace segstream {

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Thrown when a kernel needs more input frames than it was given. Streaming
// callers treat this as "buffer more and retry".
class BufferUnderflow : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Row-major float matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, float fill = 0.0f)
        : rows(r), cols(c), data(r * c, fill) {}
    Mat(std::size_t r, std::size_t c, std::vector<float> values);

    static Mat from_rows(std::initializer_list<std::initializer_list<float>> rows);

    float &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool empty() const { return rows == 0; }
    std::string shape_str() const;

    friend bool operator==(const Mat &, const Mat &) = default;
};

struct LayerNormParams {
    std::vector<float> gamma;
    std::vector<float> beta;
    float eps = 1e-5f;
};

// 1-D convolution over the time axis. `weight` is laid out so that a
// contiguous window of `width` input rows, flattened, multiplies it directly:
// (width * in_dim) x out_dim.
struct ConvKernel {
    std::size_t width = 0;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Mat weight;
    std::vector<float> bias;
};

Mat matmul(const Mat &a, const Mat &b);

// a * b + bias (bias broadcast over rows; may be empty).
Mat linear(const Mat &x, const Mat &w, std::span<const float> bias = {});

Mat softmax_rows(const Mat &x);

Mat layer_norm(const Mat &x, std::span<const float> gamma, std::span<const float> beta, float eps);
inline Mat layer_norm(const Mat &x, const LayerNormParams &p) {
    return layer_norm(x, p.gamma, p.beta, p.eps);
}

std::size_t conv_output_length(std::size_t frames, std::size_t width, std::size_t stride);

// Valid (unpadded) strided convolution. Each output row depends only on its
// own input window, so results are independent of where a window is cut.
Mat conv1d(const Mat &x, const ConvKernel &kernel, std::size_t stride);

void relu_inplace(Mat &x);
Mat add(const Mat &a, const Mat &b);
void add_inplace(Mat &a, const Mat &b);

Mat transpose(const Mat &x);
Mat slice_rows(const Mat &x, std::size_t begin, std::size_t end);
Mat slice_cols(const Mat &x, std::size_t begin, std::size_t end);
Mat tail_rows(const Mat &x, std::size_t count);

// Concatenate along rows. Empty (0-row) parts are skipped; the rest must
// agree on cols.
Mat vstack(std::initializer_list<const Mat *> parts);
Mat vstack(std::span<const Mat *const> parts);

bool all_finite(const Mat &x);
float max_abs_diff(const Mat &a, const Mat &b);

} // namespace segstream
