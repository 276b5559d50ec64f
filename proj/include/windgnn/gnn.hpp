// SPDX-License-Identifier: Apache-2.0
#pragma once

// Graph blocks with optional attention at five sites, stacked into a network
// with node, edge and global decoders. Graphs are processed as batches: a
// disjoint union of WindGraphs with per-node and per-edge graph ids.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "windgnn/attention.hpp"
#include "windgnn/autodiff.hpp"
#include "windgnn/graph.hpp"
#include "windgnn/nn.hpp"

namespace windgnn::gnn {

enum class Site { edge, e2v, node, e2u, v2u };
inline constexpr std::array<Site, 5> kSites = {Site::edge, Site::e2v, Site::node, Site::e2u,
                                               Site::v2u};
const char* site_name(Site s);
Site site_from_name(const std::string& name);

struct AttentionFlags {
  bool edge = false;
  bool e2v = false;
  bool node = false;
  bool e2u = false;
  bool v2u = false;

  bool get(Site s) const;
  void set(Site s, bool on);
  bool any() const { return edge || e2v || node || e2u || v2u; }
  static AttentionFlags all() { return {true, true, true, true, true}; }
  bool operator==(const AttentionFlags&) const = default;
};

/// Reduction used by an aggregation site without attention. Attention sites
/// always sum their alpha-weighted values.
enum class Aggregation { sum, mean };
const char* aggregation_name(Aggregation a);
Aggregation aggregation_from_name(const std::string& name);

struct BlockConfig {
  AttentionFlags flags;
  Aggregation e2v_aggregation = Aggregation::sum;
  Aggregation global_aggregation = Aggregation::sum;  // e2u and v2u
  std::size_t n_heads = 3;
  std::size_t head_dim = 16;
  std::vector<std::size_t> edge_widths;
  std::vector<std::size_t> node_widths;
  std::vector<std::size_t> global_widths;

  void validate() const;
};

enum class Variant { o_graph, n_graph, f_graph };
const char* variant_name(Variant v);

struct NetworkConfig {
  std::vector<BlockConfig> blocks;
  std::vector<std::size_t> decode_widths{64, 64};
  std::size_t node_in = graph::kNodeFeatures;
  std::size_t edge_in = graph::kEdgeFeatures;
  std::size_t global_in = graph::kGlobalFeatures;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

/// Three blocks [256,128,64], [128,64,32], [64,64]; attention (if any) only in
/// the first block: none for O, {e2v, node} for N, all five for F. Edge-to-node
/// aggregation sums; the global aggregations average.
NetworkConfig preset(Variant v, std::size_t n_heads = 3, std::size_t head_dim = 16);

/// Disjoint union of graphs. Node and edge indices are global to the batch.
struct GraphBatch {
  Tensor globals;  // G x gu
  Tensor nodes;    // N x nv
  Tensor edges;    // E x ne
  std::vector<std::size_t> senders, receivers;
  std::vector<std::size_t> node_graph, edge_graph;
  std::vector<std::size_t> node_offset, edge_offset;  // size G + 1
  // Edge-graph pairs: parent edge pair_first[p] = (k, i) feeds pair_second[p] = (i, j).
  std::vector<std::size_t> pair_first, pair_second;

  std::size_t graph_count() const { return globals.rows(); }
  std::size_t node_count() const { return nodes.rows(); }
  std::size_t edge_count() const { return edges.rows(); }

  static GraphBatch from_graphs(std::span<const graph::WindGraph* const> graphs);
  static GraphBatch from_graph(const graph::WindGraph& g);
};

/// One attention family: a single site, block and head. Index pairs are local
/// to the graph: edge sites use edge indices, node sites node indices, global
/// sites use receiver 0.
struct AttentionFamily {
  Site site = Site::edge;
  std::size_t block = 0;
  std::size_t head = 0;
  std::vector<std::size_t> graph;
  std::vector<std::size_t> sender;
  std::vector<std::size_t> receiver;
  std::vector<double> weight;
};

struct AttentionWeights {
  std::vector<AttentionFamily> families;

  /// Largest |sum - 1| over every (family, graph, receiver) group, and the
  /// smallest/largest weight seen.
  struct Check {
    double max_sum_error = 0.0;
    double min_weight = 1.0;
    double max_weight = 0.0;
    std::size_t groups = 0;
  };
  Check check() const;
};

struct BlockState {
  ad::Var globals, nodes, edges;
};

class GraphBlock {
 public:
  GraphBlock() = default;
  GraphBlock(const std::string& name, const BlockConfig& config, std::size_t global_in,
             std::size_t node_in, std::size_t edge_in, nn::Rng& rng);

  BlockState forward(ad::Tape& tape, const GraphBatch& batch, const BlockState& in,
                     AttentionWeights* record = nullptr, std::size_t block_index = 0) const;

  const BlockConfig& config() const { return config_; }
  std::size_t global_out() const { return phi_u_.out_width(); }
  std::size_t node_out() const { return phi_v_.out_width(); }
  std::size_t edge_out() const { return phi_e_.out_width(); }

  nn::Mlp& phi_e() { return phi_e_; }
  nn::Mlp& phi_v() { return phi_v_; }
  nn::Mlp& phi_u() { return phi_u_; }
  const nn::Mlp& phi_e() const { return phi_e_; }
  const nn::Mlp& phi_v() const { return phi_v_; }
  const nn::Mlp& phi_u() const { return phi_u_; }
  attn::MultiHeadAttention& site(Site s) { return sites_[static_cast<std::size_t>(s)]; }
  const attn::MultiHeadAttention& site(Site s) const { return sites_[static_cast<std::size_t>(s)]; }

  void collect(std::vector<ad::Parameter*>& out);

 private:
  BlockConfig config_;
  nn::Mlp phi_e_, phi_v_, phi_u_;
  std::array<attn::MultiHeadAttention, 5> sites_;
};

struct NetworkOutput {
  ad::Var node;    // N x 1
  ad::Var global;  // G x 1
  ad::Var edge;    // E x 1, not used as a prediction
};

class Network {
 public:
  Network() = default;
  Network(const NetworkConfig& config, std::uint64_t seed);

  NetworkOutput forward(ad::Tape& tape, const GraphBatch& batch,
                        AttentionWeights* record = nullptr) const;

  const NetworkConfig& config() const { return config_; }
  std::vector<GraphBlock>& blocks() { return blocks_; }
  const std::vector<GraphBlock>& blocks() const { return blocks_; }
  nn::Mlp& node_decoder() { return decode_v_; }
  nn::Mlp& edge_decoder() { return decode_e_; }
  nn::Mlp& global_decoder() { return decode_u_; }
  const nn::Mlp& node_decoder() const { return decode_v_; }
  const nn::Mlp& global_decoder() const { return decode_u_; }

  std::vector<ad::Parameter*> parameters();

 private:
  NetworkConfig config_;
  std::vector<GraphBlock> blocks_;
  nn::Mlp decode_v_, decode_e_, decode_u_;
};

}  // namespace windgnn::gnn
