// SPDX-License-Identifier: Apache-2.0

#include "segstream/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace segstream {

Mat::Mat(std::size_t r, std::size_t c, std::vector<float> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
        throw ShapeError("Mat: " + std::to_string(data.size()) + " values for shape " +
                         std::to_string(r) + "x" + std::to_string(c));
    }
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    Mat m;
    m.rows = rows.size();
    m.cols = rows.size() ? rows.begin()->size() : 0;
    m.data.reserve(m.rows * m.cols);
    for (const auto &r : rows) {
        if (r.size() != m.cols) {
            throw ShapeError("Mat::from_rows: ragged rows");
        }
        m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
}

std::string Mat::shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Mat matmul(const Mat &a, const Mat &b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: shape mismatch " + a.shape_str() + " x " + b.shape_str());
    }
    Mat out(a.rows, b.cols);
    const std::size_t inner = a.cols;
    const std::size_t n = b.cols;
    constexpr std::size_t kColBlock = 256;

    // Every output element accumulates a(i,k) * b(k,j) in ascending k, in
    // both the 4-row and the tail path, so a row's result never depends on
    // which other rows share the call.
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
        const std::size_t jn = std::min(kColBlock, n - j0);
        std::size_t i = 0;
        for (; i + 4 <= a.rows; i += 4) {
            float *__restrict c0 = out.data.data() + (i + 0) * n + j0;
            float *__restrict c1 = out.data.data() + (i + 1) * n + j0;
            float *__restrict c2 = out.data.data() + (i + 2) * n + j0;
            float *__restrict c3 = out.data.data() + (i + 3) * n + j0;
            const float *a0 = a.data.data() + (i + 0) * inner;
            const float *a1 = a.data.data() + (i + 1) * inner;
            const float *a2 = a.data.data() + (i + 2) * inner;
            const float *a3 = a.data.data() + (i + 3) * inner;
            for (std::size_t k = 0; k < inner; ++k) {
                const float *__restrict bk = b.data.data() + k * n + j0;
                const float x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
                for (std::size_t j = 0; j < jn; ++j) {
                    const float bv = bk[j];
                    c0[j] += x0 * bv;
                    c1[j] += x1 * bv;
                    c2[j] += x2 * bv;
                    c3[j] += x3 * bv;
                }
            }
        }
        for (; i < a.rows; ++i) {
            float *__restrict c0 = out.data.data() + i * n + j0;
            const float *a0 = a.data.data() + i * inner;
            for (std::size_t k = 0; k < inner; ++k) {
                const float *__restrict bk = b.data.data() + k * n + j0;
                const float x0 = a0[k];
                for (std::size_t j = 0; j < jn; ++j) {
                    c0[j] += x0 * bk[j];
                }
            }
        }
    }
    return out;
}

Mat linear(const Mat &x, const Mat &w, std::span<const float> bias) {
    Mat out = matmul(x, w);
    if (!bias.empty()) {
        if (bias.size() != out.cols) {
            throw ShapeError("linear: bias length " + std::to_string(bias.size()) +
                             " for output " + out.shape_str());
        }
        for (std::size_t r = 0; r < out.rows; ++r) {
            auto row = out.row(r);
            for (std::size_t c = 0; c < out.cols; ++c) {
                row[c] += bias[c];
            }
        }
    }
    return out;
}

Mat softmax_rows(const Mat &x) {
    Mat out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto in = x.row(r);
        auto dst = out.row(r);
        const float peak = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            dst[c] = std::exp(in[c] - peak);
            total += dst[c];
        }
        const double inv = 1.0 / total;
        for (std::size_t c = 0; c < x.cols; ++c) {
            dst[c] = static_cast<float>(dst[c] * inv);
        }
    }
    return out;
}

Mat layer_norm(const Mat &x, std::span<const float> gamma, std::span<const float> beta,
               float eps) {
    if (gamma.size() != x.cols || beta.size() != x.cols) {
        throw ShapeError("layer_norm: gamma/beta lengths " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()) + " for input " + x.shape_str());
    }
    Mat out(x.rows, x.cols);
    const double n = static_cast<double>(x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto in = x.row(r);
        auto dst = out.row(r);
        double mean = 0.0;
        for (float v : in) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (float v : in) {
            const double d = v - mean;
            var += d * d;
        }
        var /= n;
        const double denom = var + static_cast<double>(eps);
        // Zero-variance row with eps = 0 normalizes to 0 and so maps to beta.
        const double inv = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            dst[c] = static_cast<float>((in[c] - mean) * inv * gamma[c] + beta[c]);
        }
    }
    return out;
}

std::size_t conv_output_length(std::size_t frames, std::size_t width, std::size_t stride) {
    if (frames < width) {
        return 0;
    }
    return (frames - width) / stride + 1;
}

Mat conv1d(const Mat &x, const ConvKernel &kernel, std::size_t stride) {
    if (stride == 0 || kernel.width == 0) {
        throw ShapeError("conv1d: width and stride must be positive");
    }
    if (x.cols != kernel.in_dim) {
        throw ShapeError("conv1d: input " + x.shape_str() + " but kernel expects in_dim " +
                         std::to_string(kernel.in_dim));
    }
    if (kernel.weight.rows != kernel.width * kernel.in_dim || kernel.weight.cols != kernel.out_dim) {
        throw ShapeError("conv1d: kernel weight " + kernel.weight.shape_str() +
                         " inconsistent with width/in/out");
    }
    if (x.rows < kernel.width) {
        throw BufferUnderflow("conv1d: " + std::to_string(x.rows) + " frames < kernel width " +
                              std::to_string(kernel.width) + "; buffer more frames");
    }
    const std::size_t out_len = conv_output_length(x.rows, kernel.width, stride);
    const std::size_t window = kernel.width * kernel.in_dim;
    Mat cols(out_len, window);
    for (std::size_t t = 0; t < out_len; ++t) {
        std::memcpy(cols.data.data() + t * window, x.data.data() + t * stride * x.cols,
                    window * sizeof(float));
    }
    return linear(cols, kernel.weight, kernel.bias);
}

void relu_inplace(Mat &x) {
    for (float &v : x.data) {
        v = v > 0.0f ? v : 0.0f;
    }
}

Mat add(const Mat &a, const Mat &b) {
    Mat out = a;
    add_inplace(out, b);
    return out;
}

void add_inplace(Mat &a, const Mat &b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw ShapeError("add: shape mismatch " + a.shape_str() + " + " + b.shape_str());
    }
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        a.data[i] += b.data[i];
    }
}

Mat transpose(const Mat &x) {
    Mat out(x.cols, x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            out(c, r) = x(r, c);
        }
    }
    return out;
}

Mat slice_rows(const Mat &x, std::size_t begin, std::size_t end) {
    if (begin > end || end > x.rows) {
        throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + x.shape_str());
    }
    Mat out(end - begin, x.cols);
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(begin * x.cols),
              x.data.begin() + static_cast<std::ptrdiff_t>(end * x.cols), out.data.begin());
    return out;
}

Mat slice_cols(const Mat &x, std::size_t begin, std::size_t end) {
    if (begin > end || end > x.cols) {
        throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + x.shape_str());
    }
    Mat out(x.rows, end - begin);
    for (std::size_t r = 0; r < x.rows; ++r) {
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(r * x.cols + begin), end - begin,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * out.cols));
    }
    return out;
}

Mat tail_rows(const Mat &x, std::size_t count) {
    count = std::min(count, x.rows);
    return slice_rows(x, x.rows - count, x.rows);
}

Mat vstack(std::span<const Mat *const> parts) {
    std::size_t cols = 0;
    std::size_t rows = 0;
    bool have_cols = false;
    for (const Mat *p : parts) {
        if (p->rows == 0) {
            continue;
        }
        if (have_cols && p->cols != cols) {
            throw ShapeError("vstack: column mismatch " + std::to_string(cols) + " vs " +
                             p->shape_str());
        }
        cols = p->cols;
        have_cols = true;
        rows += p->rows;
    }
    if (!have_cols && !parts.empty()) {
        cols = parts.front()->cols;
    }
    Mat out(rows, cols);
    auto dst = out.data.begin();
    for (const Mat *p : parts) {
        if (p->rows != 0) {
            dst = std::copy(p->data.begin(), p->data.end(), dst);
        }
    }
    return out;
}

Mat vstack(std::initializer_list<const Mat *> parts) {
    return vstack(std::span<const Mat *const>(parts.begin(), parts.size()));
}

bool all_finite(const Mat &x) {
    return std::all_of(x.data.begin(), x.data.end(), [](float v) { return std::isfinite(v); });
}

float max_abs_diff(const Mat &a, const Mat &b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw ShapeError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

} // namespace segstream
