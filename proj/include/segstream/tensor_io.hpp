// SPDX-License-Identifier: Apache-2.0
//
// SGT1 raw tensor files: the 4 magic bytes "SGT1", rows and cols as
// little-endian uint32, then rows*cols little-endian float32 values.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "segstream/tensor.hpp"

namespace segstream {

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void write_tensor(std::ostream &out, const Mat &m);
Mat read_tensor(std::istream &in);

void save_tensor(const std::filesystem::path &path, const Mat &m);
Mat load_tensor(const std::filesystem::path &path);

} // namespace segstream
