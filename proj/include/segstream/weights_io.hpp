// SPDX-License-Identifier: Apache-2.0
//
// Weight fixtures: one SGT1 file per matrix plus a text manifest of
// `name path` lines (paths relative to the manifest's directory). Vectors are
// stored as 1 x n tensors. Names:
//
//   frontend.conv1.weight  frontend.conv1.bias  frontend.conv2.weight
//   frontend.conv2.bias    frontend.proj.weight frontend.proj.bias
//   layer<i>.attn_norm.gamma layer<i>.attn_norm.beta
//   layer<i>.wq layer<i>.wk layer<i>.wv layer<i>.wo layer<i>.rel_table
//   layer<i>.ffn_norm.gamma layer<i>.ffn_norm.beta
//   layer<i>.ffn1.weight layer<i>.ffn1.bias layer<i>.ffn2.weight layer<i>.ffn2.bias

#pragma once

#include <filesystem>

#include "segstream/encoder.hpp"

namespace segstream {

// Writes every tensor into `dir` and returns the manifest path.
std::filesystem::path save_weights(const std::filesystem::path &dir, const EncoderWeights &w);

// Loads and validates against `cfg`; every name above must be present.
EncoderWeights load_weights(const std::filesystem::path &manifest, const EncoderConfig &cfg);

} // namespace segstream
