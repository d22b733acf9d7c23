// SPDX-License-Identifier: Apache-2.0

#include "segstream/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace segstream {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'G', 'T', '1'};

void put_u32(std::ostream &out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff),
                           static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream &in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char *>(bytes), 4)) {
        throw FormatError("SGT1: truncated file");
    }
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
}

} // namespace

void write_tensor(std::ostream &out, const Mat &m) {
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (m.rows > kMax || m.cols > kMax) {
        throw FormatError("SGT1: shape " + m.shape_str() + " exceeds 32-bit counts");
    }
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, static_cast<std::uint32_t>(m.rows));
    put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (float v : m.data) {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    if (!out) {
        throw FormatError("SGT1: write failed");
    }
}

Mat read_tensor(std::istream &in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw FormatError("SGT1: bad magic");
    }
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    Mat m(rows, cols);
    for (float &v : m.data) {
        v = std::bit_cast<float>(get_u32(in));
    }
    return m;
}

void save_tensor(const std::filesystem::path &path, const Mat &m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("SGT1: cannot open " + path.string() + " for writing");
    }
    write_tensor(out, m);
}

Mat load_tensor(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("SGT1: cannot open " + path.string());
    }
    try {
        return read_tensor(in);
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace segstream
