// SPDX-License-Identifier: Apache-2.0
#include "windgnn/attention.hpp"

#include <cmath>

#include "windgnn/errors.hpp"

namespace windgnn::attn {

Tensor attn_scores(const Tensor& keys, const Tensor& query, const AttentionHead& head) {
  if (keys.rank() != 2 || keys.rows() == 0)
    throw DegenerateNeighborhood("attn_scores: empty neighbourhood");
  if (query.rank() != 2 || query.rows() != 1)
    throw ShapeError("attn_scores: query must be a single row, got " + to_string(query.shape()));
  const Tensor k = ad::matmul(keys, head.key.weight().value);
  const Tensor q = ad::matmul(query, head.query.weight().value);
  const double inv = 1.0 / std::sqrt(static_cast<double>(head.head_dim()));
  Tensor scores = Tensor::zeros(keys.rows(), 1);
  for (std::size_t r = 0; r < keys.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < k.cols(); ++c) s += k(r, c) * q(0, c);
    scores[r] = s * inv;
  }
  std::vector<std::size_t> all(keys.rows());
  for (std::size_t r = 0; r < all.size(); ++r) all[r] = r;
  return ad::masked_softmax(scores, all);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t key_width,
                                       std::size_t query_width, std::size_t value_width,
                                       bool with_value_map, std::size_t n_heads,
                                       std::size_t head_dim, std::size_t out_width, nn::Rng& rng) {
  if (n_heads == 0 || head_dim == 0) throw ConfigError(name + ": n_heads and head_dim must be >= 1");
  for (std::size_t n = 0; n < n_heads; ++n) {
    const std::string h = name + ".head" + std::to_string(n);
    AttentionHead head;
    head.key = nn::Linear(h + ".K", key_width, head_dim, false, rng);
    head.query = nn::Linear(h + ".Q", query_width, head_dim, false, rng);
    if (with_value_map) {
      head.value = nn::Linear(h + ".F", value_width, head_dim, false, rng);
      head.has_value = true;
    }
    heads_.push_back(std::move(head));
  }
  const std::size_t per_head = with_value_map ? head_dim : value_width;
  combiner_ = nn::Linear(name + ".H", n_heads * per_head, out_width, false, rng);
}

std::vector<ad::Var> MultiHeadAttention::weights(ad::Tape& tape, ad::Var keys, ad::Var queries,
                                                 std::span<const std::size_t> segment,
                                                 std::size_t n_segments) const {
  const double inv = 1.0 / std::sqrt(static_cast<double>(head_dim()));
  std::vector<ad::Var> out;
  out.reserve(heads_.size());
  for (const AttentionHead& h : heads_) {
    ad::Var k = h.key.forward(tape, keys);
    ad::Var q = h.query.forward(tape, queries);
    ad::Var s = ad::scale(ad::row_dot(k, q), inv);
    out.push_back(ad::segment_softmax(s, segment, n_segments));
  }
  return out;
}

ad::Var MultiHeadAttention::head_values(ad::Tape& tape, std::size_t head, ad::Var values) const {
  const AttentionHead& h = heads_.at(head);
  return h.has_value ? h.value.forward(tape, values) : values;
}

ad::Var MultiHeadAttention::combine(ad::Tape& tape, std::span<const ad::Var> per_head) const {
  if (per_head.size() != heads_.size())
    throw ShapeError("combine: " + std::to_string(per_head.size()) + " head outputs for " +
                     std::to_string(heads_.size()) + " heads");
  ad::Var cat = per_head.size() == 1 ? per_head[0] : ad::concat_cols(per_head);
  return combiner_.forward(tape, cat);
}

void MultiHeadAttention::collect(std::vector<ad::Parameter*>& out) {
  for (AttentionHead& h : heads_) {
    h.key.collect(out);
    h.query.collect(out);
    if (h.has_value) h.value.collect(out);
  }
  combiner_.collect(out);
}

}  // namespace windgnn::attn
