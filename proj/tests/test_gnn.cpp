// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gnn_fixtures.hpp"
#include "gnn_oracle.hpp"
#include "windgnn/attention.hpp"
#include "windgnn/errors.hpp"
#include "windgnn/gnn.hpp"

using namespace windgnn;
using namespace windgnn::gnn;

using namespace fixtures;

TEST(AttnScores, IdenticalKeysAreUniform) {
  nn::Rng rng(1);
  attn::MultiHeadAttention mha("a", 3, 2, 3, false, 1, 4, 3, rng);
  const Tensor keys = Tensor::matrix({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  const Tensor w = attn::attn_scores(keys, Tensor::row({0.5, -1}), mha.head(0));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], 0.25, 1e-15);
}

TEST(AttnScores, SingleKeyWeightOne) {
  nn::Rng rng(2);
  attn::MultiHeadAttention mha("a", 2, 2, 2, false, 1, 4, 2, rng);
  EXPECT_EQ(attn::attn_scores(Tensor::row({3, -2}), Tensor::row({1, 1}), mha.head(0))[0], 1.0);
}

TEST(AttnScores, LogitGapOfLnTwo) {
  nn::Rng rng(3);
  attn::MultiHeadAttention mha("a", 1, 1, 1, false, 1, 1, 1, rng);
  mha.head(0).key.weight().value = Tensor::matrix({{1.0}});
  mha.head(0).query.weight().value = Tensor::matrix({{1.0}});
  const Tensor w = attn::attn_scores(Tensor::matrix({{0.0}, {std::log(2.0)}}), Tensor::row({1.0}),
                                     mha.head(0));
  EXPECT_NEAR(w[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 2.0 / 3.0, 1e-15);
}

TEST(AttnScores, EmptyNeighbourhood) {
  nn::Rng rng(4);
  attn::MultiHeadAttention mha("a", 2, 2, 2, false, 1, 4, 2, rng);
  EXPECT_THROW(attn::attn_scores(Tensor::zeros(0, 2), Tensor::row({1, 1}), mha.head(0)),
               DegenerateNeighborhood);
}

TEST(Config, Validation) {
  BlockConfig b;
  EXPECT_THROW(b.validate(), ConfigError);
  b.edge_widths = b.node_widths = b.global_widths = {4};
  b.validate();
  b.n_heads = 0;
  EXPECT_THROW(b.validate(), ConfigError);
  b.n_heads = 1;
  b.head_dim = 0;
  EXPECT_THROW(b.validate(), ConfigError);
}

TEST(Config, PresetsAndJsonRoundTrip) {
  const auto o = preset(Variant::o_graph), n = preset(Variant::n_graph), f = preset(Variant::f_graph);
  ASSERT_EQ(f.blocks.size(), 3u);
  EXPECT_FALSE(o.blocks[0].flags.any());
  EXPECT_TRUE(n.blocks[0].flags.e2v && n.blocks[0].flags.node);
  EXPECT_FALSE(n.blocks[0].flags.edge || n.blocks[0].flags.e2u || n.blocks[0].flags.v2u);
  EXPECT_EQ(f.blocks[0].flags, AttentionFlags::all());
  for (const auto* c : {&o, &n, &f}) {
    EXPECT_FALSE(c->blocks[1].flags.any());
    EXPECT_FALSE(c->blocks[2].flags.any());
  }
  EXPECT_EQ(f.blocks[0].edge_widths, (std::vector<std::size_t>{256, 128, 64}));
  EXPECT_EQ(f.blocks[2].global_widths, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(f.blocks[0].n_heads, 3u);
  const auto back = NetworkConfig::from_json(f.to_json());
  EXPECT_EQ(back.to_json().dump(), f.to_json().dump());
}

TEST(Batch, DisjointUnionOffsets) {
  std::mt19937_64 rng(5);
  const auto a = random_graph(rng, 5), b = random_graph(rng, 7);
  const graph::WindGraph* gs[] = {&a, &b};
  const auto batch = GraphBatch::from_graphs(gs);
  EXPECT_EQ(batch.node_count(), 12u);
  EXPECT_EQ(batch.edge_count(), a.edge_count() + b.edge_count());
  EXPECT_EQ(batch.node_offset, (std::vector<std::size_t>{0, 5, 12}));
  for (std::size_t p = 0; p < batch.pair_first.size(); ++p)
    EXPECT_EQ(batch.edge_graph[batch.pair_first[p]], batch.edge_graph[batch.pair_second[p]]);
}

TEST(Block, VanillaWithAttentionOffMatchesOracle) {
  std::mt19937_64 rng(6);
  NetworkConfig cfg = preset(Variant::f_graph);
  for (auto& b : cfg.blocks) b.flags = {};
  const Network net(cfg, 11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = random_graph(rng, 2 + rng() % 11);
    const Eval e = run(net, g);
    const auto o = oracle::network(net, oracle::from_wind_graph(g));
    for (std::size_t i = 0; i < o.node.size(); ++i) EXPECT_NEAR(e.node[i], o.node[i], 1e-12);
    EXPECT_NEAR(e.global, o.global, 1e-12);
    EXPECT_TRUE(e.weights.families.empty());
  }
}

TEST(Block, VanillaAggregationsAreSums) {
  // phi_v sees [v | sum of incoming e' | u]; check via a single block whose
  // phi_e is the identity on the edge feature.
  nn::Rng rng(7);
  BlockConfig b;
  b.edge_widths = {1};
  b.node_widths = {1};
  b.global_widths = {1};
  GraphBlock blk("b", b, 1, 1, 1, rng);
  blk.phi_e().layers()[0].weight().value = Tensor::column({1, 0, 0, 0});
  blk.phi_v().layers()[0].weight().value = Tensor::column({0, 1, 0});
  blk.phi_u().layers()[0].weight().value = Tensor::column({1, 0, 0});
  graph::WindGraph g;
  g.globals = {0};
  g.nodes = Tensor::zeros(4, 1);
  g.edges = Tensor::column({1, 2, 3});
  g.senders = {0, 1, 2};
  g.receivers = {3, 3, 3};
  ad::Tape tape;
  const auto out = block_forward(tape, blk, GraphBatch::from_graph(g));
  EXPECT_EQ(out.nodes.value()(3, 0), 6.0);
  EXPECT_EQ(out.nodes.value()(0, 0), 0.0);
  // Global sums node outputs: only node 3 is nonzero.
  EXPECT_EQ(out.globals.value()(0, 0), 6.0);
}

TEST(Block, MeanAggregationDividesByCount) {
  nn::Rng rng(7);
  BlockConfig b;
  b.e2v_aggregation = Aggregation::mean;
  b.global_aggregation = Aggregation::mean;
  b.edge_widths = {1};
  b.node_widths = {1};
  b.global_widths = {1};
  GraphBlock blk("b", b, 1, 1, 1, rng);
  blk.phi_e().layers()[0].weight().value = Tensor::column({1, 0, 0, 0});
  blk.phi_v().layers()[0].weight().value = Tensor::column({0, 1, 0});
  blk.phi_u().layers()[0].weight().value = Tensor::column({1, 0, 0});
  graph::WindGraph g;
  g.globals = {0};
  g.nodes = Tensor::zeros(4, 1);
  g.edges = Tensor::column({1, 2, 3});
  g.senders = {0, 1, 2};
  g.receivers = {3, 3, 3};
  ad::Tape tape;
  const auto out = block_forward(tape, blk, GraphBatch::from_graph(g));
  EXPECT_EQ(out.nodes.value()(3, 0), 2.0);
  EXPECT_EQ(out.nodes.value()(0, 0), 0.0);  // no incoming edges
  EXPECT_EQ(out.globals.value()(0, 0), 0.5);
}

TEST(Block, AggregationChoicesMatchOracle) {
  std::mt19937_64 rng(12);
  for (Aggregation e2v : {Aggregation::sum, Aggregation::mean})
    for (Aggregation glob : {Aggregation::sum, Aggregation::mean}) {
      NetworkConfig cfg = small_config({});
      for (auto& b : cfg.blocks) {
        b.e2v_aggregation = e2v;
        b.global_aggregation = glob;
      }
      EXPECT_EQ(NetworkConfig::from_json(cfg.to_json()).to_json().dump(), cfg.to_json().dump());
      const Network net(cfg, 4);
      for (int trial = 0; trial < 20; ++trial) {
        const auto g = random_graph(rng, 2 + rng() % 11);
        const Eval e = run(net, g);
        const auto o = oracle::network(net, oracle::from_wind_graph(g));
        for (std::size_t i = 0; i < o.node.size(); ++i) EXPECT_NEAR(e.node[i], o.node[i], 1e-12);
        EXPECT_NEAR(e.global, o.global, 1e-12);
      }
    }
}

TEST(Block, FullAttentionMatchesOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    nn::Rng prng(trial);
    BlockConfig b = small_config(AttentionFlags::all()).blocks[0];
    GraphBlock blk("b", b, 1, 1, 3, prng);
    const auto g = random_graph(rng, 2 + rng() % 11);
    ad::Tape tape;
    AttentionWeights w;
    const auto out = block_forward(tape, blk, GraphBatch::from_graph(g), &w);
    oracle::Weights ow;
    const auto o = oracle::block(blk, oracle::from_wind_graph(g), &ow);
    EXPECT_LT(block_diff(out, o), 1e-12);
    std::size_t compared = 0;
    for (const auto& fam : w.families)
      for (std::size_t m = 0; m < fam.weight.size(); ++m) {
        EXPECT_NEAR(fam.weight[m], (ow.at({fam.site, fam.head}).at({fam.sender[m], fam.receiver[m]})), 1e-12);
        ++compared;
      }
    std::size_t expected = 0;
    for (const auto& [k, v] : ow) expected += v.size();
    EXPECT_EQ(compared, expected);
  }
}

TEST(Block, EachSiteAloneMatchesOracle) {
  std::mt19937_64 rng(9);
  for (Site s : kSites) {
    AttentionFlags f;
    f.set(s, true);
    nn::Rng prng(3);
    GraphBlock blk("b", small_config(f).blocks[0], 1, 1, 3, prng);
    for (int trial = 0; trial < 10; ++trial) {
      const auto g = random_graph(rng, 2 + rng() % 11);
      ad::Tape tape;
      const auto out = block_forward(tape, blk, GraphBatch::from_graph(g));
      EXPECT_LT(block_diff(out, oracle::block(blk, oracle::from_wind_graph(g))), 1e-12) << site_name(s);
    }
  }
}

TEST(Block, ChainEdgeAttendsWithWeightOne) {
  nn::Rng prng(10);
  GraphBlock blk("b", small_config(AttentionFlags::all()).blocks[0], 1, 1, 3, prng);
  graph::WindGraph g;
  g.globals = {0.3};
  g.nodes = Tensor::column({0.1, 0.5, 0.9});
  g.edges = Tensor::matrix({{0.4, 0.0, 1.0}, {0.6, 0.1, 0.99}});
  g.senders = {0, 1};
  g.receivers = {1, 2};
  ad::Tape tape;
  AttentionWeights w;
  block_forward(tape, blk, GraphBatch::from_graph(g), &w);
  for (const auto& fam : w.families) {
    if (fam.site != Site::edge) continue;
    ASSERT_EQ(fam.weight.size(), 1u);
    EXPECT_EQ(fam.sender[0], 0u);
    EXPECT_EQ(fam.receiver[0], 1u);
    EXPECT_EQ(fam.weight[0], 1.0);
  }
}

TEST(Block, FrontRowContextIsZero) {
  // Scaling H of the edge and node sites must not change anything that has
  // an empty neighbourhood: edge 0 (sender is front row) and node 0.
  nn::Rng prng(11);
  AttentionFlags f;
  f.edge = f.node = true;
  GraphBlock blk("b", small_config(f).blocks[0], 1, 1, 3, prng);
  graph::WindGraph g;
  g.globals = {0.3};
  g.nodes = Tensor::column({0.1, 0.5, 0.9});
  g.edges = Tensor::matrix({{0.4, 0.0, 1.0}, {0.6, 0.1, 0.99}});
  g.senders = {0, 1};
  g.receivers = {1, 2};
  ad::Tape t1;
  const auto a = block_forward(t1, blk, GraphBatch::from_graph(g));
  for (Site s : {Site::edge, Site::node})
    for (double& v : blk.site(s).combiner().weight().value.storage()) v *= 2.0;
  ad::Tape t2;
  const auto b = block_forward(t2, blk, GraphBatch::from_graph(g));
  EXPECT_EQ(a.edges.value()(0, 0), b.edges.value()(0, 0));
  EXPECT_EQ(a.nodes.value()(0, 0), b.nodes.value()(0, 0));
  EXPECT_NE(a.edges.value()(1, 0), b.edges.value()(1, 0));
  EXPECT_NE(a.nodes.value()(1, 0), b.nodes.value()(1, 0));
}

TEST(Block, ZeroEdgeGraphRuns) {
  nn::Rng prng(12);
  GraphBlock blk("b", small_config(AttentionFlags::all()).blocks[0], 1, 1, 3, prng);
  graph::WindGraph g;
  g.globals = {0.3};
  g.nodes = Tensor::column({0.1, 0.5});
  g.edges = Tensor::zeros(0, 3);
  ad::Tape tape;
  AttentionWeights w;
  const auto out = block_forward(tape, blk, GraphBatch::from_graph(g), &w);
  EXPECT_EQ(out.edges.value().rows(), 0u);
  EXPECT_LT(block_diff(out, oracle::block(blk, oracle::from_wind_graph(g))), 1e-12);
  // Only v2u has members.
  for (const auto& fam : w.families) EXPECT_EQ(fam.weight.empty(), fam.site != Site::v2u);
}

TEST(Network, PermutationEquivariance) {
  std::mt19937_64 rng(13);
  const Network net(preset(Variant::f_graph), 21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 11;
    const auto g = random_graph(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Eval a = run(net, g), b = run(net, permute(g, perm));
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(b.node[i], a.node[perm[i]], 1e-9);
    EXPECT_NEAR(a.global, b.global, 1e-9);
  }
}

TEST(Network, AttentionWeightsNormalised) {
  std::mt19937_64 rng(14);
  const Network net(preset(Variant::f_graph), 22);
  std::vector<graph::WindGraph> gs;
  for (int i = 0; i < 8; ++i) gs.push_back(random_graph(rng, 2 + rng() % 11));
  std::vector<const graph::WindGraph*> ptrs;
  for (const auto& g : gs) ptrs.push_back(&g);
  ad::Tape tape;
  AttentionWeights w;
  net.forward(tape, GraphBatch::from_graphs(ptrs), &w);
  const auto c = w.check();
  EXPECT_EQ(w.families.size(), 5u * 3u);
  EXPECT_GT(c.groups, 0u);
  EXPECT_LT(c.max_sum_error, 1e-9);
  EXPECT_GE(c.min_weight, 0.0);
  EXPECT_LE(c.max_weight, 1.0);
}

TEST(Network, BatchEqualsSeparateGraphs) {
  std::mt19937_64 rng(15);
  const Network net(preset(Variant::f_graph), 23);
  std::vector<graph::WindGraph> gs;
  for (int i = 0; i < 5; ++i) gs.push_back(random_graph(rng, 2 + rng() % 11));
  std::vector<const graph::WindGraph*> ptrs;
  for (const auto& g : gs) ptrs.push_back(&g);
  ad::Tape tape;
  const auto out = net.forward(tape, GraphBatch::from_graphs(ptrs));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < gs.size(); ++k) {
    const Eval e = run(net, gs[k]);
    for (std::size_t i = 0; i < e.node.size(); ++i) EXPECT_NEAR(out.node.value()(offset + i, 0), e.node[i], 1e-12);
    EXPECT_NEAR(out.global.value()(k, 0), e.global, 1e-12);
    offset += e.node.size();
  }
}

TEST(Network, MaskCorrectness) {
  // v'_j of a single block with {e2v, node} depends only on j, R_j and u.
  std::mt19937_64 rng(16);
  AttentionFlags f;
  f.e2v = f.node = true;
  nn::Rng prng(5);
  GraphBlock blk("b", small_config(f).blocks[0], 1, 1, 3, prng);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_graph(rng, 4 + rng() % 9);
    ad::Tape t0;
    const auto base = block_forward(t0, blk, GraphBatch::from_graph(g));
    for (std::size_t j = 0; j < g.node_count(); ++j) {
      std::vector<bool> inside(g.node_count(), false);
      inside[j] = true;
      for (std::size_t k : g.incoming_edges(j)) inside[g.senders[k]] = true;
      for (std::size_t m = 0; m < g.node_count(); ++m) {
        if (inside[m]) continue;
        graph::WindGraph z = g;
        z.nodes(m, 0) = 0.0;
        for (std::size_t k = 0; k < z.edge_count(); ++k)
          if (z.senders[k] == m || z.receivers[k] == m)
            for (std::size_t c = 0; c < 3; ++c) z.edges(k, c) = 0.0;
        ad::Tape t;
        const auto out = block_forward(t, blk, GraphBatch::from_graph(z));
        for (std::size_t c = 0; c < out.nodes.value().cols(); ++c)
          EXPECT_EQ(out.nodes.value()(j, c), base.nodes.value()(j, c));
      }
    }
  }
}

TEST(Network, VariableTopology) {
  std::mt19937_64 rng(17);
  const Network net(preset(Variant::f_graph), 24);
  for (std::size_t n : {1u, 4u, 16u}) {
    const Eval e = run(net, random_graph(rng, n));
    EXPECT_EQ(e.node.size(), n);
  }
}

TEST(Network, EveryAttentionParameterGetsGradient) {
  std::mt19937_64 rng(18);
  Network net(preset(Variant::f_graph), 25);
  graph::WindGraph g;
  do g = random_graph(rng, 12, 1200.0);
  while (graph::edge_graph_transform(g).edge_count() < 6);
  ad::Tape tape;
  const auto out = net.forward(tape, GraphBatch::from_graph(g));
  tape.backward(ad::add(ad::sum(ad::mul(out.node, out.node)), ad::sum(out.global)));
  for (ad::Parameter* p : net.parameters()) {
    if (p->name.find("attn") == std::string::npos) continue;
    double mx = 0.0;
    for (double v : p->grad.data()) mx = std::max(mx, std::abs(v));
    EXPECT_GT(mx, 0.0) << p->name;
  }
}

namespace {

ad::GradCheckResult grad_check_network(AttentionFlags flags, std::uint64_t seed) {
  Network net(small_config(flags), seed);
  std::mt19937_64 rng(seed);
  const auto g = random_graph(rng, 3 + seed % 4, 1000.0);
  const auto batch = GraphBatch::from_graph(g);
  std::uniform_real_distribution<double> unit(0, 1);
  Tensor node_target = Tensor::zeros(g.node_count(), 1);
  for (double& v : node_target.storage()) v = unit(rng);
  const Tensor global_target = Tensor::matrix({{unit(rng)}});
  auto params = net.parameters();
  return ad::grad_check(
             [&](ad::Tape& t) {
               const auto out = net.forward(t, batch);
               return ad::add(ad::mse(out.node, t.constant(node_target)),
                              ad::mse(out.global, t.constant(global_target)));
             },
             params, 1e-5, 12);
}

}  // namespace

TEST(Network, GradCheckVanilla) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = grad_check_network({}, seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << seed << " " << r.worst_parameter;
    EXPECT_LT(r.kink_max_rel_error, 1e-3) << seed;
    EXPECT_LE(r.kinks * 10, r.components_checked) << seed;
  }
}

TEST(Network, GradCheckFullAttention) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = grad_check_network(AttentionFlags::all(), seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << seed << " " << r.worst_parameter;
    EXPECT_LT(r.kink_max_rel_error, 1e-3) << seed;
    EXPECT_LE(r.kinks * 10, r.components_checked) << seed;
  }
}
