// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` encoder configuration. Blank lines and `#` comments are
// ignored; unknown keys and malformed values raise ConfigError. Any key left
// out keeps its default.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "segstream/encoder.hpp"

namespace segstream {

EncoderConfig parse_config(std::istream &in, EncoderConfig base = {});
EncoderConfig load_config(const std::filesystem::path &path, EncoderConfig base = {});

// Every key, one per line, in a form parse_config reads back.
std::string format_config(const EncoderConfig &cfg);

} // namespace segstream
