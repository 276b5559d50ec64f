// SPDX-License-Identifier: Apache-2.0
#include "windgnn/param_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "windgnn/errors.hpp"

namespace windgnn::io {

std::vector<unsigned char> encode_f64_le(std::span<const double> values) {
  std::vector<unsigned char> out;
  out.reserve(values.size() * 8);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu));
  }
  return out;
}

std::vector<double> decode_f64_le(std::span<const unsigned char> bytes) {
  if (bytes.size() % 8 != 0) throw DataError("tensor blob length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[i * 8 + b]} << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

nlohmann::json write_tensor_blob(const std::filesystem::path& blob,
                                 std::span<const ad::Parameter* const> params) {
  std::ofstream os(blob, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + blob.string());
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const ad::Parameter* p : params) {
    const auto bytes = encode_f64_le(p->value.data());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    entries.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
    offset += p->value.size();
  }
  if (!os) throw DataError("short write to " + blob.string());
  return entries;
}

void read_tensor_blob(const std::filesystem::path& blob, const nlohmann::json& entries,
                      std::span<ad::Parameter* const> params) {
  std::ifstream is(blob, std::ios::binary);
  if (!is) throw DataError("cannot read " + blob.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                         std::istreambuf_iterator<char>());
  const std::vector<double> values = decode_f64_le(bytes);

  std::unordered_map<std::string, const nlohmann::json*> by_name;
  for (const auto& e : entries) by_name[e.at("name").get<std::string>()] = &e;
  for (ad::Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + p->name);
    const auto shape = it->second->at("shape").get<Shape>();
    if (shape != p->value.shape())
      throw DataError("checkpoint shape " + to_string(shape) + " for " + p->name + ", model expects " +
                      to_string(p->value.shape()));
    const auto offset = it->second->at("offset").get<std::size_t>();
    if (offset + p->value.size() > values.size())
      throw DataError("checkpoint blob truncated at " + p->name);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), p->value.size(),
                p->value.storage().begin());
    p->grad = Tensor(p->value.shape());
  }
}

}  // namespace windgnn::io
