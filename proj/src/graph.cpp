// SPDX-License-Identifier: Apache-2.0
#include "windgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "windgnn/errors.hpp"

namespace windgnn::graph {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct Relation {
  double distance;
  double alpha_deg;
  double downwind;   // projection of (target - candidate) on the wind direction
  double crosswind;
};

Relation relate(wake::Point target, wake::Point candidate, double wind_direction_deg) {
  const double dx = target.x - candidate.x, dy = target.y - candidate.y;
  const double dist = std::hypot(dx, dy);
  if (dist == 0.0) throw GeometryError("coincident turbines have no upstream angle");
  const wake::Point w = wake::downwind_unit(wind_direction_deg);
  const double along = w.x * dx + w.y * dy;
  const double across = w.x * dy - w.y * dx;
  double alpha = std::atan2(across, along) * kRadToDeg;
  if (alpha <= -180.0) alpha = 180.0;
  return {dist, alpha, along, across};
}

bool admits(const Relation& r, const NeighborOptions& opt) {
  if (!(std::abs(r.alpha_deg) < opt.half_angle_deg)) return false;
  return !opt.max_distance || r.distance <= *opt.max_distance;
}

}  // namespace

double upstream_angle(wake::Point target, wake::Point candidate, double wind_direction_deg) {
  return relate(target, candidate, wind_direction_deg).alpha_deg;
}

double upstream_angle(const wake::FarmScenario& scenario, std::size_t target, std::size_t candidate) {
  if (target == candidate) throw GeometryError("upstream_angle needs two distinct turbines");
  return upstream_angle(scenario.turbines.at(target).position(),
                        scenario.turbines.at(candidate).position(), scenario.wind_direction);
}

std::vector<std::size_t> upstream_neighbors(std::size_t target, const wake::FarmScenario& scenario,
                                            const NeighborOptions& options) {
  std::vector<std::size_t> out;
  const wake::Point p = scenario.turbines.at(target).position();
  for (std::size_t j = 0; j < scenario.turbines.size(); ++j) {
    if (j == target) continue;
    if (admits(relate(p, scenario.turbines[j].position(), scenario.wind_direction), options)) out.push_back(j);
  }
  return out;
}

std::vector<std::size_t> WindGraph::incoming_edges(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < receivers.size(); ++k)
    if (receivers[k] == node) out.push_back(k);
  return out;
}

nlohmann::ordered_json WindGraph::to_json() const {
  auto rows = [](const Tensor& t) {
    auto a = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      auto span = t.row_span(r);
      a.push_back(std::vector<double>(span.begin(), span.end()));
    }
    return a;
  };
  nlohmann::ordered_json j;
  j["u"] = globals;
  j["V"] = rows(nodes);
  j["E"] = rows(edges);
  j["senders"] = senders;
  j["receivers"] = receivers;
  return j;
}

WindGraph build_graph(const wake::FarmScenario& scenario, const GraphOptions& options,
                      const wake::PowerRecord* record) {
  const std::size_t n = scenario.turbines.size();
  const data::NormStats* stats = options.stats;
  const double ws = stats ? stats->scale(data::feature::kWindSpeed, scenario.wind_speed) : scenario.wind_speed;

  WindGraph g;
  g.globals = {ws};
  g.nodes = Tensor::zeros(n, kNodeFeatures);
  g.nodes.fill(ws);
  std::vector<double> edge_rows;
  for (std::size_t j = 0; j < n; ++j) {
    const wake::Point pj = scenario.turbines[j].position();
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      const Relation r = relate(pj, scenario.turbines[i].position(), scenario.wind_direction);
      if (!admits(r, options.neighbors)) continue;
      const double a = r.alpha_deg / kRadToDeg;
      const double d = stats ? stats->scale(data::feature::kDistance, r.distance) : r.distance;
      edge_rows.insert(edge_rows.end(), {d, std::sin(a), std::cos(a)});
      g.senders.push_back(i);
      g.receivers.push_back(j);
    }
  }
  g.edges = Tensor::matrix(g.senders.size(), kEdgeFeatures, std::move(edge_rows));
  if (record) {
    if (record->power.size() != n) throw DataError("power record does not match scenario size");
    for (double p : record->power)
      g.node_targets.push_back(stats ? stats->scale(data::feature::kTurbinePower, p) : p);
    g.global_target = stats ? stats->scale(data::feature::kFarmPower, record->farm_power) : record->farm_power;
  }
  return g;
}

EdgeGraph edge_graph_transform(std::span<const std::size_t> senders,
                               std::span<const std::size_t> receivers) {
  if (senders.size() != receivers.size()) throw ShapeError("senders and receivers differ in length");
  EdgeGraph eg;
  eg.node_count = senders.size();
  for (std::size_t b = 0; b < senders.size(); ++b)
    for (std::size_t a = 0; a < senders.size(); ++a)
      if (receivers[a] == senders[b]) {
        eg.first.push_back(a);
        eg.second.push_back(b);
        eg.via.push_back(senders[b]);
      }
  return eg;
}

EdgeGraph edge_graph_transform(const WindGraph& g) {
  EdgeGraph eg = edge_graph_transform(g.senders, g.receivers);
  eg.node_features = g.edges;
  return eg;
}

std::vector<UpstreamSequence> build_upstream_sequences(const wake::FarmScenario& scenario,
                                                       const SequenceOptions& options) {
  const data::NormStats* stats = options.stats;
  const double ws = stats ? stats->scale(data::feature::kWindSpeed, scenario.wind_speed) : scenario.wind_speed;
  std::vector<UpstreamSequence> out;
  for (std::size_t i = 0; i < scenario.turbines.size(); ++i) {
    const wake::Point pi = scenario.turbines[i].position();
    std::vector<std::pair<Relation, std::size_t>> members;
    for (std::size_t j = 0; j < scenario.turbines.size(); ++j) {
      if (j == i) continue;
      const Relation r = relate(pi, scenario.turbines[j].position(), scenario.wind_direction);
      if (admits(r, options.neighbors)) members.emplace_back(r, j);
    }
    std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
      return std::tie(a.first.downwind, a.first.crosswind) < std::tie(b.first.downwind, b.first.crosswind);
    });
    if (options.order == SequenceOrder::farthest_first) std::reverse(members.begin(), members.end());
    UpstreamSequence seq;
    seq.target = i;
    seq.wind_speed = ws;
    for (const auto& [r, j] : members) {
      const double a = r.alpha_deg / kRadToDeg;
      const double d = stats ? stats->scale(data::feature::kDistance, r.distance) : r.distance;
      seq.steps.push_back({d, std::sin(a), std::cos(a)});
      seq.sources.push_back(j);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace windgnn::graph
