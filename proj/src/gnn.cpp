// SPDX-License-Identifier: Apache-2.0
#include "windgnn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "windgnn/errors.hpp"

namespace windgnn::gnn {

namespace {

constexpr const char* kSiteNames[] = {"edge", "e2v", "node", "e2u", "v2u"};

// Segment sum, or segment mean with empty segments left at zero.
ad::Var aggregate(ad::Var values, std::span<const std::size_t> ids, std::size_t n, Aggregation how) {
  const ad::Var total = ad::segment_sum(values, ids, n);
  if (how == Aggregation::sum) return total;
  Tensor inv({n, 1});
  for (std::size_t id : ids) inv[id] += 1.0;
  for (std::size_t j = 0; j < n; ++j) inv[j] = inv[j] > 0 ? 1.0 / inv[j] : 0.0;
  return ad::scale_rows(total, values.tape->constant(std::move(inv)));
}

std::vector<std::size_t> pick(std::span<const std::size_t> from, std::span<const std::size_t> at) {
  std::vector<std::size_t> out(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) out[k] = from[at[k]];
  return out;
}

void require_widths(const std::vector<std::size_t>& w, const char* what) {
  if (w.empty()) throw ConfigError(std::string("block config: ") + what + " MLP has no layers");
  for (std::size_t x : w)
    if (x == 0) throw ConfigError(std::string("block config: zero width in ") + what + " MLP");
}

std::vector<double> column_values(ad::Var v) {
  const auto d = v.value().data();
  return {d.begin(), d.end()};
}

}  // namespace

const char* site_name(Site s) { return kSiteNames[static_cast<std::size_t>(s)]; }

Site site_from_name(const std::string& name) {
  for (Site s : kSites)
    if (name == site_name(s)) return s;
  throw ConfigError("unknown attention site '" + name + "'");
}

bool AttentionFlags::get(Site s) const {
  switch (s) {
    case Site::edge: return edge;
    case Site::e2v: return e2v;
    case Site::node: return node;
    case Site::e2u: return e2u;
    case Site::v2u: return v2u;
  }
  return false;
}

void AttentionFlags::set(Site s, bool on) {
  switch (s) {
    case Site::edge: edge = on; break;
    case Site::e2v: e2v = on; break;
    case Site::node: node = on; break;
    case Site::e2u: e2u = on; break;
    case Site::v2u: v2u = on; break;
  }
}

const char* aggregation_name(Aggregation a) { return a == Aggregation::sum ? "sum" : "mean"; }

Aggregation aggregation_from_name(const std::string& name) {
  if (name == "sum") return Aggregation::sum;
  if (name == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation '" + name + "' (expected sum or mean)");
}

void BlockConfig::validate() const {
  if (n_heads == 0) throw ConfigError("block config: n_heads must be >= 1");
  if (head_dim == 0) throw ConfigError("block config: head_dim must be >= 1");
  require_widths(edge_widths, "edge");
  require_widths(node_widths, "node");
  require_widths(global_widths, "global");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::o_graph: return "o_graph";
    case Variant::n_graph: return "n_graph";
    case Variant::f_graph: return "f_graph";
  }
  return "?";
}

void NetworkConfig::validate() const {
  if (blocks.empty()) throw ConfigError("network config: at least one graph block is required");
  for (const BlockConfig& b : blocks) b.validate();
  for (std::size_t w : decode_widths)
    if (w == 0) throw ConfigError("network config: zero decode width");
  if (node_in == 0 || edge_in == 0 || global_in == 0)
    throw ConfigError("network config: input widths must be >= 1");
}

nlohmann::ordered_json NetworkConfig::to_json() const {
  nlohmann::ordered_json j;
  j["node_in"] = node_in;
  j["edge_in"] = edge_in;
  j["global_in"] = global_in;
  j["decode_widths"] = decode_widths;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const BlockConfig& b : blocks) {
    nlohmann::ordered_json jb;
    nlohmann::ordered_json flags;
    for (Site s : kSites) flags[site_name(s)] = b.flags.get(s);
    jb["attention"] = flags;
    jb["e2v_aggregation"] = aggregation_name(b.e2v_aggregation);
    jb["global_aggregation"] = aggregation_name(b.global_aggregation);
    jb["n_heads"] = b.n_heads;
    jb["head_dim"] = b.head_dim;
    jb["edge_widths"] = b.edge_widths;
    jb["node_widths"] = b.node_widths;
    jb["global_widths"] = b.global_widths;
    j["blocks"].push_back(jb);
  }
  return j;
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  try {
    NetworkConfig c;
    c.node_in = j.value("node_in", c.node_in);
    c.edge_in = j.value("edge_in", c.edge_in);
    c.global_in = j.value("global_in", c.global_in);
    c.decode_widths = j.value("decode_widths", c.decode_widths);
    for (const auto& jb : j.at("blocks")) {
      BlockConfig b;
      if (jb.contains("attention"))
        for (const auto& [k, v] : jb.at("attention").items()) b.flags.set(site_from_name(k), v.get<bool>());
      b.e2v_aggregation = aggregation_from_name(jb.value("e2v_aggregation", std::string("sum")));
      b.global_aggregation = aggregation_from_name(jb.value("global_aggregation", std::string("sum")));
      b.n_heads = jb.value("n_heads", b.n_heads);
      b.head_dim = jb.value("head_dim", b.head_dim);
      b.edge_widths = jb.at("edge_widths").get<std::vector<std::size_t>>();
      b.node_widths = jb.at("node_widths").get<std::vector<std::size_t>>();
      b.global_widths = jb.at("global_widths").get<std::vector<std::size_t>>();
      c.blocks.push_back(std::move(b));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
}

NetworkConfig preset(Variant v, std::size_t n_heads, std::size_t head_dim) {
  NetworkConfig c;
  const std::vector<std::vector<std::size_t>> widths = {{256, 128, 64}, {128, 64, 32}, {64, 64}};
  for (const auto& w : widths) {
    BlockConfig b;
    b.n_heads = n_heads;
    b.head_dim = head_dim;
    b.edge_widths = b.node_widths = b.global_widths = w;
    b.global_aggregation = Aggregation::mean;
    c.blocks.push_back(b);
  }
  if (v == Variant::n_graph) {
    c.blocks[0].flags.e2v = true;
    c.blocks[0].flags.node = true;
  } else if (v == Variant::f_graph) {
    c.blocks[0].flags = AttentionFlags::all();
  }
  return c;
}

GraphBatch GraphBatch::from_graphs(std::span<const graph::WindGraph* const> graphs) {
  if (graphs.empty()) throw ShapeError("GraphBatch: no graphs");
  const graph::WindGraph& first = *graphs[0];
  const std::size_t gu = first.globals.size(), nv = first.nodes.cols(), ne = first.edges.cols();
  std::size_t n_nodes = 0, n_edges = 0;
  for (const auto* g : graphs) {
    if (g->globals.size() != gu || g->nodes.cols() != nv || g->edges.cols() != ne)
      throw ShapeError("GraphBatch: feature widths differ between graphs");
    n_nodes += g->node_count();
    n_edges += g->edge_count();
  }
  GraphBatch b;
  b.globals = Tensor::zeros(graphs.size(), gu);
  b.nodes = Tensor::zeros(n_nodes, nv);
  b.edges = Tensor::zeros(n_edges, ne);
  b.node_offset.push_back(0);
  b.edge_offset.push_back(0);
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const graph::WindGraph& g = *graphs[gi];
    const std::size_t no = b.node_offset.back(), eo = b.edge_offset.back();
    for (std::size_t c = 0; c < gu; ++c) b.globals(gi, c) = g.globals[c];
    for (std::size_t r = 0; r < g.node_count(); ++r) {
      for (std::size_t c = 0; c < nv; ++c) b.nodes(no + r, c) = g.nodes(r, c);
      b.node_graph.push_back(gi);
    }
    for (std::size_t r = 0; r < g.edge_count(); ++r) {
      for (std::size_t c = 0; c < ne; ++c) b.edges(eo + r, c) = g.edges(r, c);
      b.senders.push_back(no + g.senders[r]);
      b.receivers.push_back(no + g.receivers[r]);
      b.edge_graph.push_back(gi);
    }
    b.node_offset.push_back(no + g.node_count());
    b.edge_offset.push_back(eo + g.edge_count());
  }
  const graph::EdgeGraph eg = graph::edge_graph_transform(b.senders, b.receivers);
  b.pair_first = eg.first;
  b.pair_second = eg.second;
  return b;
}

GraphBatch GraphBatch::from_graph(const graph::WindGraph& g) {
  const graph::WindGraph* one[] = {&g};
  return from_graphs(one);
}

AttentionWeights::Check AttentionWeights::check() const {
  Check c;
  for (const AttentionFamily& f : families) {
    std::map<std::pair<std::size_t, std::size_t>, double> sums;
    for (std::size_t m = 0; m < f.weight.size(); ++m) {
      sums[{f.graph[m], f.receiver[m]}] += f.weight[m];
      c.min_weight = std::min(c.min_weight, f.weight[m]);
      c.max_weight = std::max(c.max_weight, f.weight[m]);
    }
    for (const auto& [key, s] : sums) c.max_sum_error = std::max(c.max_sum_error, std::abs(s - 1.0));
    c.groups += sums.size();
  }
  return c;
}

GraphBlock::GraphBlock(const std::string& name, const BlockConfig& config, std::size_t gu,
                       std::size_t nv, std::size_t ne, nn::Rng& rng)
    : config_(config) {
  config_.validate();
  const AttentionFlags& f = config_.flags;
  const std::size_t heads = config_.n_heads, d = config_.head_dim;
  const std::size_t we = config_.edge_widths.back(), wv = config_.node_widths.back();

  if (f.edge)
    sites_[0] = attn::MultiHeadAttention(name + ".edge_attn", gu + ne + nv, ne + nv, ne, true,
                                         heads, d, ne, rng);
  phi_e_ = nn::Mlp(name + ".phi_e", ne + (f.edge ? ne : 0) + 2 * nv + gu, config_.edge_widths,
                   true, rng);
  if (f.e2v)
    sites_[1] = attn::MultiHeadAttention(name + ".e2v_attn", nv + we, nv + we + gu, we, false,
                                         heads, d, we, rng);
  if (f.node)
    sites_[2] = attn::MultiHeadAttention(name + ".node_attn", gu + we + nv, nv + we, nv, true,
                                         heads, d, nv, rng);
  phi_v_ = nn::Mlp(name + ".phi_v", nv + (f.node ? nv : 0) + we + gu, config_.node_widths, true,
                   rng);
  if (f.e2u)
    sites_[3] = attn::MultiHeadAttention(name + ".e2u_attn", we, gu, we, false, heads, d, we, rng);
  if (f.v2u)
    sites_[4] = attn::MultiHeadAttention(name + ".v2u_attn", wv, gu, wv, false, heads, d, wv, rng);
  phi_u_ = nn::Mlp(name + ".phi_u", wv + we + gu, config_.global_widths, true, rng);
}

BlockState GraphBlock::forward(ad::Tape& tape, const GraphBatch& b, const BlockState& in,
                               AttentionWeights* record, std::size_t block_index) const {
  using ad::Var;
  const AttentionFlags& f = config_.flags;
  const std::size_t n_nodes = b.node_count(), n_edges = b.edge_count(), n_graphs = b.graph_count();
  const Var u = in.globals, v = in.nodes, e = in.edges;

  auto keep = [&](Site site, const std::vector<Var>& alphas, std::span<const std::size_t> graph,
                  std::span<const std::size_t> sender, std::span<const std::size_t> receiver) {
    if (!record) return;
    for (std::size_t n = 0; n < alphas.size(); ++n) {
      AttentionFamily fam;
      fam.site = site;
      fam.block = block_index;
      fam.head = n;
      fam.graph.assign(graph.begin(), graph.end());
      fam.sender.assign(sender.begin(), sender.end());
      fam.receiver.assign(receiver.begin(), receiver.end());
      fam.weight = column_values(alphas[n]);
      record->families.push_back(std::move(fam));
    }
  };
  // Local (per-graph) index of a global node or edge id.
  auto local_nodes = [&](std::span<const std::size_t> ids) {
    std::vector<std::size_t> out(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) out[k] = ids[k] - b.node_offset[b.node_graph[ids[k]]];
    return out;
  };
  auto local_edges = [&](std::span<const std::size_t> ids) {
    std::vector<std::size_t> out(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) out[k] = ids[k] - b.edge_offset[b.edge_graph[ids[k]]];
    return out;
  };

  const Var u_edge = ad::gather_rows(u, b.edge_graph);
  const Var u_node = ad::gather_rows(u, b.node_graph);
  const Var v_send = ad::gather_rows(v, b.senders);
  const Var v_recv = ad::gather_rows(v, b.receivers);

  // Edge update, with attention over edges (k, i) feeding (i, j).
  std::vector<Var> edge_in{e};
  if (f.edge) {
    const attn::MultiHeadAttention& site = sites_[0];
    const std::vector<std::size_t> via = pick(b.senders, b.pair_second);
    const Var e_ki = ad::gather_rows(e, b.pair_first);
    const Var e_ij = ad::gather_rows(e, b.pair_second);
    const Var v_i = ad::gather_rows(v, via);
    const Var u_p = ad::gather_rows(u, pick(b.edge_graph, b.pair_second));
    const Var keys = ad::concat_cols({u_p, e_ki, v_i});
    const Var queries = ad::concat_cols({e_ij, v_i});
    const std::vector<Var> alphas = site.weights(tape, keys, queries, b.pair_second, n_edges);
    std::vector<Var> heads;
    for (std::size_t n = 0; n < alphas.size(); ++n) {
      Var weighted = ad::scale_rows(site.head_values(tape, n, e_ki), alphas[n]);
      heads.push_back(ad::leaky_relu(ad::segment_sum(weighted, b.pair_second, n_edges), nn::kLeakySlope));
    }
    edge_in.push_back(site.combine(tape, heads));
    keep(Site::edge, alphas, pick(b.edge_graph, b.pair_second), local_edges(b.pair_first),
         local_edges(b.pair_second));
  }
  edge_in.insert(edge_in.end(), {v_send, v_recv, u_edge});
  const Var e_new = phi_e_.forward(tape, ad::concat_cols(edge_in));

  // Edge-to-node aggregation.
  Var e_bar;
  if (f.e2v) {
    const attn::MultiHeadAttention& site = sites_[1];
    const Var keys = ad::concat_cols({v_send, e_new});
    const Var queries = ad::concat_cols({v_recv, e_new, u_edge});
    const std::vector<Var> alphas = site.weights(tape, keys, queries, b.receivers, n_nodes);
    std::vector<Var> heads;
    for (const Var& a : alphas) heads.push_back(ad::scale_rows(e_new, a));
    e_bar = ad::segment_sum(site.combine(tape, heads), b.receivers, n_nodes);
    keep(Site::e2v, alphas, b.edge_graph, local_nodes(b.senders), local_nodes(b.receivers));
  } else {
    e_bar = aggregate(e_new, b.receivers, n_nodes, config_.e2v_aggregation);
  }

  // Node update, with attention over sending nodes.
  std::vector<Var> node_in{v};
  if (f.node) {
    const attn::MultiHeadAttention& site = sites_[2];
    const Var keys = ad::concat_cols({u_edge, e_new, v_send});
    const Var queries = ad::concat_cols({v_recv, ad::gather_rows(e_bar, b.receivers)});
    const std::vector<Var> alphas = site.weights(tape, keys, queries, b.receivers, n_nodes);
    std::vector<Var> heads;
    for (std::size_t n = 0; n < alphas.size(); ++n) {
      Var weighted = ad::scale_rows(site.head_values(tape, n, v_send), alphas[n]);
      heads.push_back(ad::leaky_relu(ad::segment_sum(weighted, b.receivers, n_nodes), nn::kLeakySlope));
    }
    node_in.push_back(site.combine(tape, heads));
    keep(Site::node, alphas, b.edge_graph, local_nodes(b.senders), local_nodes(b.receivers));
  }
  node_in.insert(node_in.end(), {e_bar, u_node});
  const Var v_new = phi_v_.forward(tape, ad::concat_cols(node_in));

  // Global aggregations over the full graph, no mask.
  const std::vector<std::size_t> zeros_e(n_edges, 0), zeros_v(n_nodes, 0);
  Var e_glob, v_glob;
  if (f.e2u) {
    const attn::MultiHeadAttention& site = sites_[3];
    const std::vector<Var> alphas = site.weights(tape, e_new, u_edge, b.edge_graph, n_graphs);
    std::vector<Var> heads;
    for (const Var& a : alphas) heads.push_back(ad::scale_rows(e_new, a));
    e_glob = ad::segment_sum(site.combine(tape, heads), b.edge_graph, n_graphs);
    std::vector<std::size_t> all(n_edges);
    for (std::size_t k = 0; k < n_edges; ++k) all[k] = k;
    keep(Site::e2u, alphas, b.edge_graph, local_edges(all), zeros_e);
  } else {
    e_glob = aggregate(e_new, b.edge_graph, n_graphs, config_.global_aggregation);
  }
  if (f.v2u) {
    const attn::MultiHeadAttention& site = sites_[4];
    const std::vector<Var> alphas = site.weights(tape, v_new, u_node, b.node_graph, n_graphs);
    std::vector<Var> heads;
    for (const Var& a : alphas) heads.push_back(ad::scale_rows(v_new, a));
    v_glob = ad::segment_sum(site.combine(tape, heads), b.node_graph, n_graphs);
    std::vector<std::size_t> all(n_nodes);
    for (std::size_t k = 0; k < n_nodes; ++k) all[k] = k;
    keep(Site::v2u, alphas, b.node_graph, local_nodes(all), zeros_v);
  } else {
    v_glob = aggregate(v_new, b.node_graph, n_graphs, config_.global_aggregation);
  }
  const Var u_new = phi_u_.forward(tape, ad::concat_cols({v_glob, e_glob, u}));
  return {u_new, v_new, e_new};
}

void GraphBlock::collect(std::vector<ad::Parameter*>& out) {
  const AttentionFlags& f = config_.flags;
  if (f.edge) sites_[0].collect(out);
  phi_e_.collect(out);
  if (f.e2v) sites_[1].collect(out);
  if (f.node) sites_[2].collect(out);
  phi_v_.collect(out);
  if (f.e2u) sites_[3].collect(out);
  if (f.v2u) sites_[4].collect(out);
  phi_u_.collect(out);
}

Network::Network(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  std::size_t gu = config_.global_in, nv = config_.node_in, ne = config_.edge_in;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    blocks_.emplace_back("block" + std::to_string(i), config_.blocks[i], gu, nv, ne, rng);
    gu = blocks_.back().global_out();
    nv = blocks_.back().node_out();
    ne = blocks_.back().edge_out();
  }
  std::vector<std::size_t> head = config_.decode_widths;
  head.push_back(1);
  decode_v_ = nn::Mlp("decode_node", nv, head, false, rng);
  decode_e_ = nn::Mlp("decode_edge", ne, head, false, rng);
  decode_u_ = nn::Mlp("decode_global", gu, head, false, rng);
}

NetworkOutput Network::forward(ad::Tape& tape, const GraphBatch& batch,
                               AttentionWeights* record) const {
  BlockState s{tape.constant(batch.globals), tape.constant(batch.nodes), tape.constant(batch.edges)};
  for (std::size_t i = 0; i < blocks_.size(); ++i) s = blocks_[i].forward(tape, batch, s, record, i);
  return {decode_v_.forward(tape, s.nodes), decode_u_.forward(tape, s.globals),
          decode_e_.forward(tape, s.edges)};
}

std::vector<ad::Parameter*> Network::parameters() {
  std::vector<ad::Parameter*> out;
  for (GraphBlock& b : blocks_) b.collect(out);
  decode_v_.collect(out);
  decode_e_.collect(out);
  decode_u_.collect(out);
  return out;
}

}  // namespace windgnn::gnn
