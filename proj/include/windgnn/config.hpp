// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration read from TOML (or JSON, chosen by a ".json" extension).
// Unknown keys and mistyped values raise ConfigError naming the field.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "windgnn/graph.hpp"
#include "windgnn/model.hpp"
#include "windgnn/train.hpp"
#include "windgnn/wake.hpp"

namespace windgnn::config {

/// Per-kind training overrides; unset fields fall back to [train].
struct TrainOverride {
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> max_epochs;
  std::optional<std::size_t> patience;
};

struct RunConfig {
  std::uint64_t seed = 0;
  wake::SimulationConfig simulation = wake::desk_config();
  graph::NeighborOptions neighbors;
  train::TrainConfig train;
  std::map<model::Kind, TrainOverride> overrides;
  model::ModelOptions model;

  /// Propagates `seed` into every component that draws randomness.
  void set_seed(std::uint64_t s);
  /// Training settings for one model kind, overrides applied.
  train::TrainConfig train_for(model::Kind kind) const;
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

RunConfig from_json(const nlohmann::json& j);
RunConfig parse_toml(const std::string& text);
RunConfig load(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
/// SHA-256 of the canonical JSON form; stamped on every artifact.
std::string config_hash(const RunConfig& c);

}  // namespace windgnn::config
