// SPDX-License-Identifier: Apache-2.0
#pragma once

// Attention weights of a trained graph model on one scenario, paired with
// turbine coordinates so they can be drawn as per-(site, head) panels.

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "windgnn/gnn.hpp"
#include "windgnn/model.hpp"
#include "windgnn/wake.hpp"

namespace windgnn::viz {

struct AttentionExport {
  std::size_t scenario_id = 0;
  model::Kind kind = model::Kind::f_graph;
  double wind_speed = 0.0;
  double wind_direction = 0.0;
  std::size_t target = 0;  // turbine highlighted in the panels
  std::vector<wake::Point> turbines;
  std::vector<std::size_t> senders, receivers;         // turbine graph edges
  std::vector<std::size_t> pair_first, pair_second;    // edge graph: first feeds second
  gnn::AttentionWeights weights;

  /// Families drawn as panels (edge, e2v, node sites), in block/site/head order.
  std::vector<const gnn::AttentionFamily*> panel_families() const;
  nlohmann::ordered_json to_json() const;
};

/// The turbine with the most incoming edges; ties go to the lowest index.
std::size_t default_target(const graph::WindGraph& g);

/// Runs `m` on one scenario and records every attention family.
/// Throws NoAttentionError when the model has no attention site enabled.
AttentionExport extract_attention(const model::Model& m, const wake::FarmScenario& scenario,
                                  const graph::WindGraph& graph, std::size_t target);

/// Three turbines in a row along the wind, 5D apart; the last one is the
/// receiver. Reports how block 0's E2V heads split weight between the nearest
/// upstream turbine and the far one.
struct InlineCheck {
  std::vector<double> near_weight, far_weight;  // per head
  double near_mean = 0.0, far_mean = 0.0;
  bool near_dominant = false;

  std::string summary() const;
};
InlineCheck inline_e2v_check(const model::Model& m, const data::NormStats& stats,
                             const graph::NeighborOptions& neighbors = {});

/// One standalone SVG document for a panel family of `ex`.
std::string render_panel(const AttentionExport& ex, const gnn::AttentionFamily& family);

}  // namespace windgnn::viz
