// SPDX-License-Identifier: Apache-2.0
#include "windgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "windgnn/errors.hpp"
#include "windgnn/simd.hpp"

namespace windgnn::ad {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  value.require_finite("constant");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(const Parameter& p) {
  p.value.require_finite("parameter " + p.name);
  Node n;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward,
                 const char* op_name) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite output from ") + op_name);
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    if (in.tape != this) throw Error(std::string(op_name) + ": input belongs to another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.param ? n.param->value : n.value;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Tensor(value(v).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw Error("backward() already ran on this tape");
  backward_done_ = true;
  const Tensor& lv = value(loss);
  if (lv.size() != 1) throw ShapeError("backward() needs a 1x1 loss, got " + to_string(lv.shape()));
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      if (!n.grad.all_finite()) throw NumericError("non-finite gradient for parameter " + n.param->name);
      if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Tensor(n.param->value.shape());
      auto& dst = n.param->grad.storage();
      const auto& src = n.grad.storage();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : Tensor(value(v).shape());
}

// ---------------------------------------------------------------------------

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2, got " + to_string(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

void check_segments(std::span<const std::size_t> ids, std::size_t n, const char* op) {
  for (std::size_t id : ids)
    if (id >= n)
      throw IndexError(std::string(op) + ": segment id " + std::to_string(id) + " >= " +
                       std::to_string(n));
}

template <class F>
Var unary_map(Var x, const char* op, F&& fwd_and_deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  auto deriv = std::make_shared<std::vector<double>>(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    auto [y, dy] = fwd_and_deriv(xv[i]);
    out[i] = y;
    (*deriv)[i] = dy;
  }
  return x.tape->record(std::move(out), {x},
                        [x, deriv](Tape& t, const Tensor& g) {
                          if (!t.requires_grad(x)) return;
                          Tensor& gx = t.grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*deriv)[i];
                        },
                        op);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  Tensor c = Tensor::zeros(a.rows(), b.cols());
  simd::active().gemm_nn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(),
                         b.cols(), false);
  return c;
}

Var matmul(Var a, Var b) {
  Tensor c = matmul(a.value(), b.value());
  return a.tape->record(std::move(c), {a, b},
                        [a, b](Tape& t, const Tensor& g) {
                          const auto& k = simd::active();
                          const Tensor& av = t.value(a);
                          const Tensor& bv = t.value(b);
                          const std::size_t m = av.rows(), inner = av.cols(), n = bv.cols();
                          if (t.requires_grad(a))  // dA = dC * B^T
                            k.gemm_nt(g.data().data(), bv.data().data(),
                                      t.grad_buffer(a).data().data(), m, n, inner);
                          if (t.requires_grad(b))  // dB = A^T * dC
                            k.gemm_tn(av.data().data(), g.data().data(),
                                      t.grad_buffer(b).data().data(), m, inner, n);
                        },
                        "matmul");
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape->record(std::move(out), {a, b},
                        [a, b](Tape& t, const Tensor& g) {
                          for (Var v : {a, b}) {
                            if (!t.requires_grad(v)) continue;
                            Tensor& gv = t.grad_buffer(v);
                            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
                          }
                        },
                        "add");
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record(std::move(out), {a, b},
                        [a, b](Tape& t, const Tensor& g) {
                          if (t.requires_grad(a)) {
                            Tensor& ga = t.grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (t.requires_grad(b)) {
                            Tensor& gb = t.grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                          }
                        },
                        "sub");
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record(std::move(out), {a, b},
                        [a, b](Tape& t, const Tensor& g) {
                          const Tensor& av = t.value(a);
                          const Tensor& bv = t.value(b);
                          if (t.requires_grad(a)) {
                            Tensor& ga = t.grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                          }
                          if (t.requires_grad(b)) {
                            Tensor& gb = t.grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                          }
                        },
                        "mul");
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank2(xv, "add_bias");
  if (bv.rank() != 2 || bv.rows() != 1 || bv.cols() != xv.cols())
    throw ShapeError("add_bias: bias " + to_string(bv.shape()) + " does not match " +
                     to_string(xv.shape()));
  Tensor out = xv;
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  return x.tape->record(std::move(out), {x, bias},
                        [x, bias](Tape& t, const Tensor& g) {
                          if (t.requires_grad(x)) {
                            Tensor& gx = t.grad_buffer(x);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          }
                          if (t.requires_grad(bias)) {
                            Tensor& gb = t.grad_buffer(bias);
                            const std::size_t cols = gb.size();
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
                          }
                        },
                        "add_bias");
}

Var scale(Var x, double s) {
  Tensor out = x.value();
  for (double& v : out.storage()) v *= s;
  return x.tape->record(std::move(out), {x},
                        [x, s](Tape& t, const Tensor& g) {
                          Tensor& gx = t.grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
                        },
                        "scale");
}

Var leaky_relu(Var x, double slope) {
  return unary_map(x, "leaky_relu", [slope](double v) {
    return v > 0.0 ? std::pair{v, 1.0} : std::pair{slope * v, slope};
  });
}

Var sigmoid(Var x) {
  return unary_map(x, "sigmoid", [](double v) {
    const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::pair{y, y * (1.0 - y)};
  });
}

Var tanh(Var x) {
  return unary_map(x, "tanh", [](double v) {
    const double y = std::tanh(v);
    return std::pair{y, 1.0 - y * y};
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape* tape = parts.front().tape;
  const std::size_t rows = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    require_rank2(v, "concat_cols");
    if (v.rows() != rows)
      throw ShapeError("concat_cols: row counts differ (" + std::to_string(rows) + " vs " +
                       std::to_string(v.rows()) + ")");
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor out = Tensor::zeros(rows, total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().data() + r * widths[p], widths[p], out.data().data() + r * total + offset);
    offset += widths[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  auto backward = [inputs, widths, total, rows](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (t.requires_grad(inputs[p])) {
        Tensor& gp = t.grad_buffer(inputs[p]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) gp[r * widths[p] + c] += g[r * total + off + c];
      }
      off += widths[p];
    }
  };
  return tape->record(std::move(out), std::span<const Var>(inputs), std::move(backward),
                      "concat_cols");
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_cols");
  const std::size_t n = xv.cols();
  if (begin + count > n)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + to_string(xv.shape()));
  const std::size_t rows = xv.rows();
  Tensor out = Tensor::zeros(rows, count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data().data() + r * n + begin, count, out.data().data() + r * count);
  return x.tape->record(std::move(out), {x},
                        [x, begin, count, n, rows](Tape& t, const Tensor& g) {
                          Tensor& gx = t.grad_buffer(x);
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < count; ++c) gx[r * n + begin + c] += g[r * count + c];
                        },
                        "slice_cols");
}

Var gather_rows(Var x, std::span<const std::size_t> index) {
  const Tensor& xv = x.value();
  require_rank2(xv, "gather_rows");
  const std::size_t n = xv.cols();
  check_segments(index, xv.rows(), "gather_rows");
  Tensor out = Tensor::zeros(index.size(), n);
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy_n(xv.data().data() + index[r] * n, n, out.data().data() + r * n);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape->record(std::move(out), {x},
                        [x, idx = std::move(idx), n](Tape& t, const Tensor& g) {
                          Tensor& gx = t.grad_buffer(x);
                          for (std::size_t r = 0; r < idx.size(); ++r)
                            for (std::size_t c = 0; c < n; ++c) gx[idx[r] * n + c] += g[r * n + c];
                        },
                        "gather_rows");
}

Tensor segment_sum(const Tensor& values, std::span<const std::size_t> segment_ids,
                   std::size_t n_segments) {
  require_rank2(values, "segment_sum");
  if (segment_ids.size() != values.rows())
    throw ShapeError("segment_sum: " + std::to_string(segment_ids.size()) + " ids for " +
                     std::to_string(values.rows()) + " rows");
  check_segments(segment_ids, n_segments, "segment_sum");
  const std::size_t d = values.cols();
  Tensor out = Tensor::zeros(n_segments, d);
  for (std::size_t r = 0; r < segment_ids.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) out[segment_ids[r] * d + c] += values[r * d + c];
  return out;
}

Var segment_sum(Var values, std::span<const std::size_t> segment_ids, std::size_t n_segments) {
  Tensor out = segment_sum(values.value(), segment_ids, n_segments);
  const std::size_t d = out.cols();
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  return values.tape->record(std::move(out), {values},
                             [values, ids = std::move(ids), d](Tape& t, const Tensor& g) {
                               Tensor& gv = t.grad_buffer(values);
                               for (std::size_t r = 0; r < ids.size(); ++r)
                                 for (std::size_t c = 0; c < d; ++c) gv[r * d + c] += g[ids[r] * d + c];
                             },
                             "segment_sum");
}

Var row_dot(Var a, Var b) {
  require_same(a.value(), b.value(), "row_dot");
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), d = av.cols();
  Tensor out = Tensor::zeros(m, 1);
  const auto& k = simd::active();
  for (std::size_t r = 0; r < m; ++r)
    out[r] = k.dot(av.data().data() + r * d, b.value().data().data() + r * d, d);
  return a.tape->record(std::move(out), {a, b},
                        [a, b, m, d](Tape& t, const Tensor& g) {
                          const auto& k = simd::active();
                          if (t.requires_grad(a)) {
                            Tensor& ga = t.grad_buffer(a);
                            const Tensor& bv = t.value(b);
                            for (std::size_t r = 0; r < m; ++r)
                              k.axpy(g[r], bv.data().data() + r * d, ga.data().data() + r * d, d);
                          }
                          if (t.requires_grad(b)) {
                            Tensor& gb = t.grad_buffer(b);
                            const Tensor& av = t.value(a);
                            for (std::size_t r = 0; r < m; ++r)
                              k.axpy(g[r], av.data().data() + r * d, gb.data().data() + r * d, d);
                          }
                        },
                        "row_dot");
}

Var scale_rows(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank2(xv, "scale_rows");
  if (wv.rank() != 2 || wv.cols() != 1 || wv.rows() != xv.rows())
    throw ShapeError("scale_rows: weights " + to_string(wv.shape()) + " for " + to_string(xv.shape()));
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out = xv;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] *= wv[r];
  return x.tape->record(std::move(out), {x, w},
                        [x, w, m, n](Tape& t, const Tensor& g) {
                          const Tensor& xv = t.value(x);
                          const Tensor& wv = t.value(w);
                          if (t.requires_grad(x)) {
                            Tensor& gx = t.grad_buffer(x);
                            for (std::size_t r = 0; r < m; ++r)
                              for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g[r * n + c] * wv[r];
                          }
                          if (t.requires_grad(w)) {
                            Tensor& gw = t.grad_buffer(w);
                            for (std::size_t r = 0; r < m; ++r) {
                              double s = 0.0;
                              for (std::size_t c = 0; c < n; ++c) s += g[r * n + c] * xv[r * n + c];
                              gw[r] += s;
                            }
                          }
                        },
                        "scale_rows");
}

namespace {

// Max-subtracted softmax of `scores` within each segment.
std::vector<double> softmax_by_segment(std::span<const double> scores,
                                       std::span<const std::size_t> ids, std::size_t n) {
  std::vector<double> peak(n, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < ids.size(); ++r) peak[ids[r]] = std::max(peak[ids[r]], scores[r]);
  std::vector<double> out(ids.size());
  std::vector<double> total(n, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out[r] = std::exp(scores[r] - peak[ids[r]]);
    total[ids[r]] += out[r];
  }
  for (std::size_t r = 0; r < ids.size(); ++r) out[r] /= total[ids[r]];
  return out;
}

}  // namespace

Var segment_softmax(Var scores, std::span<const std::size_t> segment_ids, std::size_t n_segments) {
  const Tensor& sv = scores.value();
  if (sv.rank() != 2 || sv.cols() != 1 || sv.rows() != segment_ids.size())
    throw ShapeError("segment_softmax: scores " + to_string(sv.shape()) + " for " +
                     std::to_string(segment_ids.size()) + " segment ids");
  check_segments(segment_ids, n_segments, "segment_softmax");
  std::vector<double> y = softmax_by_segment(sv.data(), segment_ids, n_segments);
  Tensor out = Tensor::column(y);
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  return scores.tape->record(
      std::move(out), {scores},
      [scores, ids = std::move(ids), y = std::move(y), n_segments](Tape& t, const Tensor& g) {
        std::vector<double> inner(n_segments, 0.0);
        for (std::size_t r = 0; r < ids.size(); ++r) inner[ids[r]] += y[r] * g[r];
        Tensor& gs = t.grad_buffer(scores);
        for (std::size_t r = 0; r < ids.size(); ++r) gs[r] += y[r] * (g[r] - inner[ids[r]]);
      },
      "segment_softmax");
}

Tensor masked_softmax(const Tensor& scores, std::span<const std::size_t> mask) {
  if (mask.empty()) throw DegenerateNeighborhood("masked_softmax: empty mask");
  check_segments(mask, scores.size(), "masked_softmax");
  std::vector<double> picked;
  for (std::size_t i : mask) picked.push_back(scores[i]);
  std::vector<std::size_t> zeros(mask.size(), 0);
  std::vector<double> y = softmax_by_segment(picked, zeros, 1);
  Tensor out(scores.shape());
  for (std::size_t k = 0; k < mask.size(); ++k) out[mask[k]] = y[k];
  return out;
}

Var masked_softmax(Var scores, std::span<const std::size_t> mask) {
  Tensor out = masked_softmax(scores.value(), mask);
  std::vector<std::size_t> m(mask.begin(), mask.end());
  Tensor y = out;
  return scores.tape->record(std::move(out), {scores},
                             [scores, m = std::move(m), y = std::move(y)](Tape& t, const Tensor& g) {
                               double inner = 0.0;
                               for (std::size_t i : m) inner += y[i] * g[i];
                               Tensor& gs = t.grad_buffer(scores);
                               for (std::size_t i : m) gs[i] += y[i] * (g[i] - inner);
                             },
                             "masked_softmax");
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->record(Tensor::scalar(s), {x},
                        [x](Tape& t, const Tensor& g) {
                          Tensor& gx = t.grad_buffer(x);
                          for (double& v : gx.storage()) v += g[0];
                        },
                        "sum");
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mse(Var prediction, Var target) {
  Var diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const ScalarFunction& f, std::span<Parameter* const> params, double eps,
                           std::size_t max_components) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-4]");
  for (Parameter* p : params) p->grad = Tensor(p->value.shape());
  {
    Tape tape;
    Var out = f(tape);
    if (out.value().size() != 1) throw ShapeError("grad_check: function must return a 1x1 value");
    tape.backward(out);
  }
  auto evaluate = [&] {
    Tape tape;
    const double v = f(tape).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  GradCheckResult result;
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    const std::size_t probes = std::min(n, max_components);
    for (std::size_t q = 0; q < probes; ++q) {
      const std::size_t i = probes == n ? q : (q * n) / probes;
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate();
      p->value[i] = saved - eps;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      ++result.components_checked;
      auto rel_to = [&](double n) {
        return std::abs(analytic - n) / std::max({std::abs(analytic), std::abs(n), 1e-6});
      };
      const double centre = evaluate();
      const double right = (up - centre) / eps, left = (centre - down) / eps;
      if (std::abs(right - left) > std::max(1e-3 * std::max(std::abs(right), std::abs(left)), 100.0 * eps)) {
        ++result.kinks;
        result.kink_max_rel_error =
            std::max(result.kink_max_rel_error, std::min(rel_to(right), rel_to(left)));
        continue;
      }
      const double rel = rel_to(numeric);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = p->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace windgnn::ad
