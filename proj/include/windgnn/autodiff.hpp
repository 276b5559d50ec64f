// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode differentiation over rank-2 f64 tensors. A Tape records every
// operation in execution order; backward() walks it once in reverse and
// accumulates into the Parameters that were bound with Tape::parameter().
//
// A Tape and the Vars it hands out are confined to one thread.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "windgnn/tensor.hpp"

namespace windgnn::ad {

/// A learned tensor that outlives tapes. `grad` has the same shape as `value`.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v);

  std::string name;
  Tensor value;
  // Gradient accumulator written by Tape::backward(); not part of the value.
  mutable Tensor grad;

  void zero_grad() const { grad.fill(0.0); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(const Parameter& p);

  /// Records an op output. `backward` receives the output gradient and must
  /// push contributions to its inputs via accumulate_grad().
  Var record(Tensor value, std::span<const Var> inputs, Backward backward, const char* op_name);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward,
             const char* op_name) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward), op_name);
  }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer for `v`, created zeroed on first touch. Only valid
  /// inside backward().
  Tensor& grad_buffer(Var v);

  /// Seeds d(loss)/d(loss)=1 on a 1x1 loss and propagates to every bound
  /// Parameter. May be called once per tape.
  void backward(Var loss);

  /// Gradient w.r.t. an arbitrary recorded Var after backward(); zeros if untouched.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// --- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// x[m x n] + bias[1 x n] broadcast over rows.
Var add_bias(Var x, Var bias);
Var scale(Var x, double s);
Var leaky_relu(Var x, double slope = 0.2);
Var sigmoid(Var x);
Var tanh(Var x);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var gather_rows(Var x, std::span<const std::size_t> index);
/// Row j of the result sums every row r of `values` with segment_ids[r] == j.
Var segment_sum(Var values, std::span<const std::size_t> segment_ids, std::size_t n_segments);
/// Per-row inner product of two m x d matrices, giving m x 1.
Var row_dot(Var a, Var b);
/// Scales row r of x[m x n] by w[r] where w is m x 1.
Var scale_rows(Var x, Var w);
/// Softmax of an m x 1 score column within each segment; members of a
/// segment sum to one. Segments without members simply produce no output rows.
Var segment_softmax(Var scores, std::span<const std::size_t> segment_ids, std::size_t n_segments);
/// Softmax restricted to `mask` over an n x 1 (or 1 x n) score vector; entries
/// outside the mask are exactly zero. Throws DegenerateNeighborhood on an empty mask.
Var masked_softmax(Var scores, std::span<const std::size_t> mask);
Var sum(Var x);
Var mean(Var x);
/// Mean squared error over all entries, 1 x 1.
Var mse(Var prediction, Var target);

// --- plain-tensor helpers ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor masked_softmax(const Tensor& scores, std::span<const std::size_t> mask);
Tensor segment_sum(const Tensor& values, std::span<const std::size_t> segment_ids,
                   std::size_t n_segments);

// --- gradient checking ----------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t components_checked = 0;
  // Components whose probe interval straddles a kink (the one-sided slopes
  // disagree). They are excluded from max_rel_error; instead the analytic
  // value is compared with the nearer one-sided slope.
  std::size_t kinks = 0;
  double kink_max_rel_error = 0.0;
};

using ScalarFunction = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `f` w.r.t. `params` against central
/// finite differences with step `eps` (1e-7..1e-4). Relative error per
/// component is |a - n| / max(|a|, |n|, 1e-6). `max_components` caps how many
/// entries of each parameter are probed (spread evenly over the tensor).
/// A component is treated as a kink when its one-sided slopes differ by more
/// than 1e-3 relative, with an absolute floor of 100 eps.
GradCheckResult grad_check(const ScalarFunction& f, std::span<Parameter* const> params,
                           double eps, std::size_t max_components = SIZE_MAX);

}  // namespace windgnn::ad
