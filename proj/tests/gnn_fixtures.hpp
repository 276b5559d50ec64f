// SPDX-License-Identifier: Apache-2.0
#pragma once

// Random graphs, relabelling and small network configs shared by the GNN tests
// and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gnn_oracle.hpp"
#include "windgnn/gnn.hpp"
#include "windgnn/graph.hpp"

namespace fixtures {

using namespace windgnn;
using namespace windgnn::gnn;

inline graph::WindGraph random_graph(std::mt19937_64& rng, std::size_t n, double extent = 1500.0) {
  std::uniform_real_distribution<double> c(0, extent), unit(0, 1);
  wake::FarmScenario s;
  for (std::size_t i = 0; i < n; ++i) s.turbines.push_back(wake::Turbine{c(rng), c(rng), {}});
  s.wind_direction = std::floor(std::uniform_real_distribution<double>(0, 360)(rng));
  s.wind_speed = 8.0;
  graph::WindGraph g = graph::build_graph(s);
  for (double& v : g.globals) v = unit(rng);
  for (double& v : g.nodes.storage()) v = unit(rng);
  for (std::size_t r = 0; r < g.edge_count(); ++r) g.edges(r, 0) = unit(rng);
  return g;
}

// Node i of the result is node perm[i] of g; edges are relabelled and reversed in order.
inline graph::WindGraph permute(const graph::WindGraph& g, const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  graph::WindGraph p = g;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < g.nodes.cols(); ++c) p.nodes(i, c) = g.nodes(perm[i], c);
  const std::size_t m = g.edge_count();
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t src = m - 1 - k;
    p.senders[k] = inv[g.senders[src]];
    p.receivers[k] = inv[g.receivers[src]];
    for (std::size_t c = 0; c < g.edges.cols(); ++c) p.edges(k, c) = g.edges(src, c);
  }
  return p;
}

inline NetworkConfig small_config(AttentionFlags flags, std::size_t blocks = 2) {
  NetworkConfig c;
  for (std::size_t i = 0; i < blocks; ++i) {
    BlockConfig b;
    b.flags = i == 0 ? flags : AttentionFlags{};
    b.n_heads = 2;
    b.head_dim = 3;
    b.edge_widths = {6, 5};
    b.node_widths = {6, 4};
    b.global_widths = {5, 3};
    c.blocks.push_back(b);
  }
  c.decode_widths = {5};
  return c;
}

struct Eval {
  std::vector<double> node;
  double global;
  AttentionWeights weights;
};

inline Eval run(const Network& net, const graph::WindGraph& g) {
  ad::Tape tape;
  Eval e;
  const auto out = net.forward(tape, GraphBatch::from_graph(g), &e.weights);
  const auto d = out.node.value().data();
  e.node.assign(d.begin(), d.end());
  e.global = out.global.value()[0];
  return e;
}

inline double block_diff(const BlockState& s, const oracle::Graph& o) {
  double worst = 0.0;
  for (std::size_t c = 0; c < o.u.size(); ++c) worst = std::max(worst, std::abs(s.globals.value()(0, c) - o.u[c]));
  for (std::size_t r = 0; r < o.V.size(); ++r)
    for (std::size_t c = 0; c < o.V[r].size(); ++c)
      worst = std::max(worst, std::abs(s.nodes.value()(r, c) - o.V[r][c]));
  for (std::size_t r = 0; r < o.E.size(); ++r)
    for (std::size_t c = 0; c < o.E[r].size(); ++c)
      worst = std::max(worst, std::abs(s.edges.value()(r, c) - o.E[r][c]));
  return worst;
}

inline BlockState block_forward(ad::Tape& tape, const GraphBlock& blk, const GraphBatch& b,
                         AttentionWeights* w = nullptr) {
  BlockState in{tape.constant(b.globals), tape.constant(b.nodes), tape.constant(b.edges)};
  return blk.forward(tape, b, in, w);
}


}  // namespace fixtures
