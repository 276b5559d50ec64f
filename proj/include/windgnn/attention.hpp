// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-head scaled dot-product attention over neighbourhoods given as
// member lists. Every attention site in a graph block reduces to: a set of
// members (edges, edge pairs or nodes), a key row and a query row per member,
// and a segment id naming the receiver the member belongs to.

#include <cstddef>
#include <string>
#include <vector>

#include "windgnn/autodiff.hpp"
#include "windgnn/nn.hpp"
#include "windgnn/tensor.hpp"

namespace windgnn::attn {

/// K and Q map keys and queries to head_dim; F (optional) maps values to head_dim.
struct AttentionHead {
  nn::Linear key;
  nn::Linear query;
  nn::Linear value;  // only for sites that carry F
  bool has_value = false;

  std::size_t head_dim() const { return key.out_width(); }
};

/// Weights of one neighbourhood for a single key set and query:
/// softmax_i((K key_i) . (Q query) / sqrt(d)). Throws DegenerateNeighborhood
/// when `keys` has no rows.
Tensor attn_scores(const Tensor& keys, const Tensor& query, const AttentionHead& head);

/// Heads plus the combiner H that maps the concatenated head outputs back to
/// `out_width`. None of K, Q, F, H carries a bias.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  /// `value_width` is the per-member value width before F (or the raw value
  /// width when `with_value_map` is false).
  MultiHeadAttention(const std::string& name, std::size_t key_width, std::size_t query_width,
                     std::size_t value_width, bool with_value_map, std::size_t n_heads,
                     std::size_t head_dim, std::size_t out_width, nn::Rng& rng);

  /// Per-head member weights, each m x 1, normalised within every segment.
  std::vector<ad::Var> weights(ad::Tape& tape, ad::Var keys, ad::Var queries,
                               std::span<const std::size_t> segment,
                               std::size_t n_segments) const;

  /// Per-head member values: F v when the site has F, otherwise v itself.
  ad::Var head_values(ad::Tape& tape, std::size_t head, ad::Var values) const;

  /// H applied to the column-wise concatenation of per-head blocks.
  ad::Var combine(ad::Tape& tape, std::span<const ad::Var> per_head) const;

  std::size_t n_heads() const { return heads_.size(); }
  std::size_t head_dim() const { return heads_.empty() ? 0 : heads_[0].head_dim(); }
  std::size_t out_width() const { return combiner_.out_width(); }
  const AttentionHead& head(std::size_t n) const { return heads_.at(n); }
  AttentionHead& head(std::size_t n) { return heads_.at(n); }
  nn::Linear& combiner() { return combiner_; }
  const nn::Linear& combiner() const { return combiner_; }

  void collect(std::vector<ad::Parameter*>& out);

 private:
  std::vector<AttentionHead> heads_;
  nn::Linear combiner_;
};

}  // namespace windgnn::attn
