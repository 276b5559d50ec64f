// SPDX-License-Identifier: Apache-2.0
#include "windgnn/attention_export.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "windgnn/errors.hpp"

namespace windgnn::viz {

namespace {

bool plotted(gnn::Site s) {
  return s == gnn::Site::edge || s == gnn::Site::e2v || s == gnn::Site::node;
}

const char* site_label(gnn::Site s) {
  switch (s) {
    case gnn::Site::edge: return "Edge";
    case gnn::Site::e2v: return "E2V";
    case gnn::Site::node: return "Node";
    case gnn::Site::e2u: return "E2U";
    case gnn::Site::v2u: return "V2U";
  }
  return "?";
}

}  // namespace

std::vector<const gnn::AttentionFamily*> AttentionExport::panel_families() const {
  std::vector<const gnn::AttentionFamily*> out;
  for (const auto& f : weights.families)
    if (plotted(f.site)) out.push_back(&f);
  std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    if (a->block != b->block) return a->block < b->block;
    if (a->site != b->site) return static_cast<int>(a->site) < static_cast<int>(b->site);
    return a->head < b->head;
  });
  return out;
}

nlohmann::ordered_json AttentionExport::to_json() const {
  nlohmann::ordered_json j;
  j["scenario_id"] = scenario_id;
  j["model"] = model::kind_name(kind);
  j["wind_speed"] = wind_speed;
  j["wind_direction"] = wind_direction;
  j["target"] = target;
  auto& t = j["turbines"] = nlohmann::ordered_json::array();
  for (const auto& p : turbines) t.push_back({p.x, p.y});
  auto& e = j["edges"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < senders.size(); ++k) e.push_back({senders[k], receivers[k]});
  auto& ep = j["edge_pairs"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < pair_first.size(); ++k) ep.push_back({pair_first[k], pair_second[k]});
  auto& fams = j["families"] = nlohmann::ordered_json::array();
  for (const auto& f : weights.families) {
    nlohmann::ordered_json fj;
    fj["site"] = gnn::site_name(f.site);
    fj["block"] = f.block;
    fj["head"] = f.head;
    fj["plotted"] = plotted(f.site);
    fj["sender"] = f.sender;
    fj["receiver"] = f.receiver;
    fj["weight"] = f.weight;
    fams.push_back(std::move(fj));
  }
  return j;
}

std::size_t default_target(const graph::WindGraph& g) {
  std::vector<std::size_t> indegree(g.node_count(), 0);
  for (std::size_t r : g.receivers) ++indegree[r];
  return static_cast<std::size_t>(std::max_element(indegree.begin(), indegree.end()) - indegree.begin());
}

AttentionExport extract_attention(const model::Model& m, const wake::FarmScenario& scenario,
                                  const graph::WindGraph& graph, std::size_t target) {
  const gnn::Network* net = model::network_of(m);
  bool any = false;
  if (net)
    for (const auto& b : net->config().blocks) any = any || b.flags.any();
  if (!any)
    throw NoAttentionError(fmt::format("model {} has no attention site enabled", model::kind_name(m.kind())));
  if (graph.node_count() != scenario.turbines.size())
    throw DataError(fmt::format("scenario {} has {} turbines but its graph has {} nodes", scenario.id,
                                scenario.turbines.size(), graph.node_count()));
  if (target >= graph.node_count())
    throw IndexError(fmt::format("target turbine {} out of range ({} turbines)", target, graph.node_count()));

  AttentionExport ex;
  ex.scenario_id = scenario.id;
  ex.kind = m.kind();
  ex.wind_speed = scenario.wind_speed;
  ex.wind_direction = scenario.wind_direction;
  ex.target = target;
  for (const auto& t : scenario.turbines) ex.turbines.push_back(t.position());
  const gnn::GraphBatch batch = gnn::GraphBatch::from_graph(graph);
  ex.senders = batch.senders;
  ex.receivers = batch.receivers;
  ex.pair_first = batch.pair_first;
  ex.pair_second = batch.pair_second;
  ad::Tape tape;
  net->forward(tape, batch, &ex.weights);
  return ex;
}

InlineCheck inline_e2v_check(const model::Model& m, const data::NormStats& stats,
                             const graph::NeighborOptions& neighbors) {
  wake::FarmScenario sc;
  sc.wind_speed = 8.0;
  sc.wind_direction = 270.0;  // from the west, so downstream is +x
  const double d = wake::TurbineModel{}.rotor_diameter;
  for (double x : {0.0, 5 * d, 10 * d}) sc.turbines.push_back({x, 0.0, {}});
  const graph::WindGraph g = graph::build_graph(sc, {neighbors, &stats});
  const AttentionExport ex = extract_attention(m, sc, g, 2);

  InlineCheck out;
  for (const auto& f : ex.weights.families) {
    if (f.site != gnn::Site::e2v || f.block != 0) continue;
    double near = 0.0, far = 0.0;
    for (std::size_t i = 0; i < f.weight.size(); ++i) {
      if (f.receiver[i] != 2) continue;
      (ex.senders[f.sender[i]] == 1 ? near : far) += f.weight[i];
    }
    out.near_weight.push_back(near);
    out.far_weight.push_back(far);
  }
  if (out.near_weight.empty())
    throw NoAttentionError(fmt::format("model {} has no E2V attention in block 0", model::kind_name(m.kind())));
  for (std::size_t h = 0; h < out.near_weight.size(); ++h) {
    out.near_mean += out.near_weight[h] / double(out.near_weight.size());
    out.far_mean += out.far_weight[h] / double(out.far_weight.size());
  }
  out.near_dominant = out.near_mean > out.far_mean;
  return out;
}

std::string InlineCheck::summary() const {
  std::string heads;
  for (std::size_t h = 0; h < near_weight.size(); ++h)
    heads += fmt::format("{}h{} {:.3f}/{:.3f}", h ? ", " : "", h, near_weight[h], far_weight[h]);
  return fmt::format("E2V weight near/far upstream: mean {:.3f}/{:.3f} ({}); dominant edge is {}", near_mean,
                     far_mean, heads, near_dominant ? "the nearest upstream turbine" : "the far upstream turbine");
}

// --- SVG ------------------------------------------------------------------------

namespace {

constexpr double kSize = 480.0;
constexpr double kMargin = 48.0;
constexpr double kDot = 6.0;
constexpr double kLabelFloor = 0.01;

struct Frame {
  double min_x, max_y, scale, off_x, off_y;

  std::pair<double, double> at(wake::Point p) const {
    return {off_x + (p.x - min_x) * scale, off_y + (max_y - p.y) * scale};
  }
};

Frame frame_for(const std::vector<wake::Point>& pts) {
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  for (const auto& p : pts) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  const double extent = std::max({hi_x - lo_x, hi_y - lo_y, 1.0});
  const double scale = (kSize - 2 * kMargin) / extent;
  // centre the shorter axis
  return {lo_x, hi_y, scale, kMargin + (extent - (hi_x - lo_x)) * scale / 2,
          kMargin + (extent - (hi_y - lo_y)) * scale / 2};
}

void arrow(std::string& out, std::pair<double, double> a, std::pair<double, double> b, double width,
           const char* colour, double weight) {
  const double dx = b.first - a.first, dy = b.second - a.second, len = std::hypot(dx, dy);
  if (len < 2 * kDot) return;
  const double ux = dx / len, uy = dy / len;
  const double x1 = a.first + ux * kDot, y1 = a.second + uy * kDot;
  const double x2 = b.first - ux * (kDot + 2), y2 = b.second - uy * (kDot + 2);
  out += fmt::format(
      R"(  <line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" stroke-width="{:.3f}" )"
      R"svg(stroke-opacity="0.8" marker-end="url(#head)"/>)svg"
      "\n",
      x1, y1, x2, y2, colour, width);
  if (weight >= kLabelFloor)
    out += fmt::format(R"(  <text x="{:.2f}" y="{:.2f}" font-size="11" fill="black">{:.2f}</text>)" "\n",
                       (x1 + x2) / 2 + 4, (y1 + y2) / 2 - 4, weight);
}

}  // namespace

std::string render_panel(const AttentionExport& ex, const gnn::AttentionFamily& f) {
  if (!plotted(f.site))
    throw ConfigError(fmt::format("site {} is exported as JSON only", gnn::site_name(f.site)));
  const Frame fr = frame_for(ex.turbines);
  std::string body;
  std::set<std::size_t> highlighted;
  std::vector<double> node_weight(ex.turbines.size(), -1.0);

  switch (f.site) {
    case gnn::Site::e2v:
      for (std::size_t i = 0; i < f.weight.size(); ++i) {
        if (f.receiver[i] != ex.target) continue;
        const std::size_t k = f.sender[i];
        highlighted.insert(ex.senders[k]);
        arrow(body, fr.at(ex.turbines[ex.senders[k]]), fr.at(ex.turbines[ex.target]), 0.5 + 8 * f.weight[i],
              "#1f5fbf", f.weight[i]);
      }
      break;
    case gnn::Site::edge:
      for (std::size_t i = 0; i < f.weight.size(); ++i) {
        const std::size_t k2 = f.receiver[i], k1 = f.sender[i];
        if (ex.receivers[k2] != ex.target) continue;
        highlighted.insert(ex.senders[k1]);
        arrow(body, fr.at(ex.turbines[ex.senders[k1]]), fr.at(ex.turbines[ex.receivers[k1]]),
              0.5 + 8 * f.weight[i], "#1f5fbf", f.weight[i]);
      }
      // the receiving edges, for context
      for (std::size_t k = 0; k < ex.senders.size(); ++k)
        if (ex.receivers[k] == ex.target)
          arrow(body, fr.at(ex.turbines[ex.senders[k]]), fr.at(ex.turbines[ex.target]), 1.0, "#999999", 0.0);
      break;
    case gnn::Site::node:
      for (std::size_t i = 0; i < f.weight.size(); ++i) {
        if (f.receiver[i] != ex.target) continue;
        highlighted.insert(f.sender[i]);
        node_weight[f.sender[i]] = f.weight[i];
      }
      break;
    default: break;
  }

  std::string out;
  out += fmt::format(
      R"(<?xml version="1.0" encoding="UTF-8"?>)" "\n"
      R"(<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">)" "\n"
      R"(  <defs><marker id="head" viewBox="0 0 10 10" refX="8" refY="5" markerWidth="4" markerHeight="4" )"
      R"(orient="auto-start-reverse"><path d="M0,0 L10,5 L0,10 z" fill="#1f5fbf"/></marker></defs>)" "\n"
      R"(  <rect width="{0}" height="{0}" fill="white"/>)" "\n"
      R"(  <text x="12" y="20" font-size="13" fill="black">{1} block {2} {3} head {4}, scenario {5}, turbine {6}</text>)" "\n"
      R"(  <text x="12" y="{7}" font-size="11" fill="#555555">wind {8:.0f} deg, {9:.1f} m/s</text>)" "\n",
      kSize, model::display_name(ex.kind), f.block, site_label(f.site), f.head, ex.scenario_id, ex.target,
      kSize - 12, ex.wind_direction, ex.wind_speed);
  out += body;
  for (std::size_t t = 0; t < ex.turbines.size(); ++t) {
    const auto [x, y] = fr.at(ex.turbines[t]);
    if (node_weight[t] >= 0.0) {
      out += fmt::format(
          R"(  <circle cx="{:.2f}" cy="{:.2f}" r="{:.2f}" fill="#1f5fbf" fill-opacity="0.35" stroke="#1f5fbf"/>)" "\n",
          x, y, kDot + 24 * node_weight[t]);
      if (node_weight[t] >= kLabelFloor)
        out += fmt::format(R"(  <text x="{:.2f}" y="{:.2f}" font-size="11" fill="black">{:.2f}</text>)" "\n",
                           x + 8, y - 8, node_weight[t]);
    }
    const char* fill = t == ex.target ? "#d62728" : highlighted.count(t) ? "#1f5fbf" : "#bbbbbb";
    out += fmt::format(R"(  <circle cx="{:.2f}" cy="{:.2f}" r="{}" fill="{}"/>)" "\n", x, y, kDot, fill);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace windgnn::viz
