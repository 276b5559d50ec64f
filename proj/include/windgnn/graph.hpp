// SPDX-License-Identifier: Apache-2.0
#pragma once

// Graph views of a farm scenario: the directed wake graph (turbine i sends to
// j when i lies upstream of j), its edge graph, and per-turbine upstream
// sequences for the sequence models.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "windgnn/dataset.hpp"
#include "windgnn/tensor.hpp"
#include "windgnn/wake.hpp"

namespace windgnn::graph {

/// Signed angle, degrees in (-180, 180], between the downwind direction and the
/// displacement from `candidate` to `target`. Zero means the candidate sits
/// directly upwind of the target.
double upstream_angle(wake::Point target, wake::Point candidate, double wind_direction_deg);
double upstream_angle(const wake::FarmScenario& scenario, std::size_t target, std::size_t candidate);

struct NeighborOptions {
  double half_angle_deg = 30.0;  // strict: |alpha| < half_angle
  std::optional<double> max_distance;
};

/// Turbines j with |alpha(target, j)| < half angle, in ascending index order.
std::vector<std::size_t> upstream_neighbors(std::size_t target, const wake::FarmScenario& scenario,
                                            const NeighborOptions& options = {});

inline constexpr std::size_t kNodeFeatures = 1;    // [ws]
inline constexpr std::size_t kGlobalFeatures = 1;  // [ws]
inline constexpr std::size_t kEdgeFeatures = 3;    // [d, sin alpha, cos alpha]

struct WindGraph {
  std::vector<double> globals;  // u
  Tensor nodes;                 // V, n x kNodeFeatures
  Tensor edges;                 // E, m x kEdgeFeatures
  std::vector<std::size_t> senders;
  std::vector<std::size_t> receivers;
  std::vector<double> node_targets;    // empty when unlabelled
  std::optional<double> global_target;

  std::size_t node_count() const { return nodes.rows(); }
  std::size_t edge_count() const { return senders.size(); }
  /// Edge indices k with receivers[k] == node (the set R_j, by edge).
  std::vector<std::size_t> incoming_edges(std::size_t node) const;

  nlohmann::ordered_json to_json() const;
};

struct GraphOptions {
  NeighborOptions neighbors;
  /// When set, ws and distance are min-max scaled and targets attached from the record.
  const data::NormStats* stats = nullptr;
};

WindGraph build_graph(const wake::FarmScenario& scenario, const GraphOptions& options = {},
                      const wake::PowerRecord* record = nullptr);

/// Directed line graph: every parent edge becomes a node, and parent edges
/// (a -> b) and (b -> c) are joined through their shared node b.
struct EdgeGraph {
  std::size_t node_count = 0;  // number of parent edges
  Tensor node_features;        // parent edge features
  std::vector<std::size_t> first;   // parent edge sending (k, i)
  std::vector<std::size_t> second;  // parent edge receiving (i, j)
  std::vector<std::size_t> via;     // shared parent node i

  std::size_t edge_count() const { return first.size(); }
};

EdgeGraph edge_graph_transform(std::span<const std::size_t> senders,
                               std::span<const std::size_t> receivers);
EdgeGraph edge_graph_transform(const WindGraph& g);

enum class SequenceOrder { nearest_first, farthest_first };

struct UpstreamSequence {
  std::size_t target = 0;
  double wind_speed = 0.0;
  std::vector<std::array<double, 3>> steps;  // (d, sin alpha, cos alpha)
  std::vector<std::size_t> sources;          // upstream turbine of each step

  std::size_t size() const { return steps.size(); }
};

struct SequenceOptions {
  NeighborOptions neighbors;
  SequenceOrder order = SequenceOrder::nearest_first;
  const data::NormStats* stats = nullptr;
};

/// One sequence per turbine; members sorted by downwind separation from the
/// target (ties broken by crosswind offset, never by turbine index).
std::vector<UpstreamSequence> build_upstream_sequences(const wake::FarmScenario& scenario,
                                                       const SequenceOptions& options = {});

}  // namespace windgnn::graph
