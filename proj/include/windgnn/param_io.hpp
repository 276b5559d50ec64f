// SPDX-License-Identifier: Apache-2.0
#pragma once

// Parameter serialization: a JSON list of {name, shape, offset} entries plus a
// flat little-endian f64 blob. Offsets count doubles from the blob start.

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "windgnn/autodiff.hpp"

namespace windgnn::io {

/// Writes all tensors back to back and returns the manifest entries.
nlohmann::json write_tensor_blob(const std::filesystem::path& blob,
                                 std::span<const ad::Parameter* const> params);

/// Fills `params` from a blob, matching entries by name and checking shapes.
void read_tensor_blob(const std::filesystem::path& blob, const nlohmann::json& entries,
                      std::span<ad::Parameter* const> params);

/// Little-endian encode/decode of f64 arrays.
std::vector<unsigned char> encode_f64_le(std::span<const double> values);
std::vector<double> decode_f64_le(std::span<const unsigned char> bytes);

}  // namespace windgnn::io
