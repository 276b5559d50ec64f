// SPDX-License-Identifier: Apache-2.0
#pragma once

// The seven comparison models behind one interface, the prepared (normalised)
// dataset they train on, and checkpoint files.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "windgnn/autodiff.hpp"
#include "windgnn/dataset.hpp"
#include "windgnn/gnn.hpp"
#include "windgnn/graph.hpp"

namespace windgnn::model {

enum class Kind { bs_farm, bs_turb, mlp, blstm, o_graph, n_graph, f_graph };
inline constexpr std::array<Kind, 7> kAllKinds = {Kind::bs_farm, Kind::bs_turb, Kind::mlp,
                                                  Kind::blstm,   Kind::o_graph, Kind::n_graph,
                                                  Kind::f_graph};

/// Command-line name, e.g. "bs-farm", "f-graph".
const char* kind_name(Kind k);
/// Table name, e.g. "BS_Farm", "F-Graph".
const char* display_name(Kind k);
std::optional<Kind> parse_kind(std::string_view name);
std::string valid_kind_list();
bool is_graph(Kind k);

/// Scenarios are trained on as whole graphs (graph models, BS_Farm) or as
/// individual turbines (everything else).
enum class Unit { scenario, turbine };
Unit unit_of(Kind k);

/// One scenario with every model input and target already min-max scaled.
struct PreparedScenario {
  std::size_t id = 0;
  graph::WindGraph graph;
  std::vector<graph::UpstreamSequence> sequences;
  std::vector<double> turbine_target;
  double farm_target = 0.0;
  double turbine_count = 0.0;  // scaled
  double wind_speed = 0.0;     // scaled
};

struct PreparedData {
  std::vector<PreparedScenario> scenarios;
  data::NormStats stats;
  data::Split split;
  std::size_t max_neighbors = 0;  // longest upstream sequence in the train split

  /// Farm power (scaled) implied by per-turbine predictions (scaled).
  double farm_from_turbines(std::span<const double> turbine_scaled) const;
};

struct PrepareOptions {
  graph::NeighborOptions neighbors;
  graph::SequenceOrder order = graph::SequenceOrder::nearest_first;
};

PreparedData prepare(std::span<const wake::LabelledScenario> records, const data::SplitResult& split,
                     const PrepareOptions& options = {});

struct Sample {
  std::size_t scenario = 0;
  std::size_t turbine = 0;  // unused for scenario units
};

/// Every training unit of the listed scenarios, in order.
std::vector<Sample> samples(Unit unit, const PreparedData& data, std::span<const std::size_t> scenarios);

struct Prediction {
  std::optional<std::vector<double>> turbine;  // scaled, one per turbine
  std::optional<double> farm;                  // scaled
};

struct ModelOptions {
  std::uint64_t seed = 0;
  std::size_t n_heads = 3;
  std::size_t head_dim = 16;
  std::size_t blstm_hidden = 32;
  std::size_t max_neighbors = 0;  // padded MLP capacity
  std::optional<gnn::NetworkConfig> network;
};

class Model {
 public:
  virtual ~Model() = default;

  Kind kind() const { return kind_; }
  Unit unit() const { return unit_of(kind_); }
  std::uint64_t seed() const { return seed_; }

  virtual std::vector<ad::Parameter*> parameters() = 0;
  /// Training loss (MSE on scaled targets) over a minibatch.
  virtual ad::Var loss(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const = 0;
  virtual std::vector<Prediction> predict(const PreparedData& data,
                                          std::span<const std::size_t> scenarios) const = 0;
  virtual nlohmann::ordered_json config_json() const = 0;

 protected:
  Model(Kind kind, std::uint64_t seed) : kind_(kind), seed_(seed) {}

 private:
  Kind kind_;
  std::uint64_t seed_;
};

/// Graph-model access for attention extraction; nullptr for other kinds.
const gnn::Network* network_of(const Model& m);

std::unique_ptr<Model> make_model(Kind kind, const ModelOptions& options);
/// Rebuilds an untrained model from a checkpoint manifest's kind/seed/config.
std::unique_ptr<Model> make_model(const nlohmann::json& manifest);

// --- checkpoints -----------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "windgnn-checkpoint/1";

/// Writes <dir>/manifest.json and <dir>/params.bin. `extra` is merged into the
/// manifest (training history, optimiser state pointers, run metadata).
void save_checkpoint(const std::filesystem::path& dir, Model& model, const data::NormStats& stats,
                     const nlohmann::ordered_json& extra = {});

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  data::NormStats stats;
  nlohmann::json manifest;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace windgnn::model
