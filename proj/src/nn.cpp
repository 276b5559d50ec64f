// SPDX-License-Identifier: Apache-2.0
#include "windgnn/nn.hpp"

#include <cmath>

#include "windgnn/errors.hpp"

namespace windgnn::nn {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w = Tensor::zeros(fan_in, fan_out);
  for (double& v : w.storage()) v = dist(rng);
  return w;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng)
    : weight_(name + ".weight", glorot_uniform(in, out, rng)), has_bias_(bias) {
  if (in == 0 || out == 0) throw ConfigError(name + ": zero-width linear layer");
  if (bias) bias_ = Parameter(name + ".bias", Tensor::zeros(1, out));
}

ad::Var Linear::forward(ad::Tape& tape, ad::Var x) const {
  if (x.cols() != in_width())
    throw ShapeError(weight_.name + ": input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(in_width()));
  ad::Var y = ad::matmul(x, tape.parameter(weight_));
  return has_bias_ ? ad::add_bias(y, tape.parameter(bias_)) : y;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

Mlp::Mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& widths,
         bool activate_last, Rng& rng)
    : in_(in), activate_last_(activate_last) {
  if (widths.empty()) throw ConfigError(name + ": MLP needs at least one layer");
  std::size_t prev = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), prev, widths[i], true, rng);
    prev = widths[i];
  }
}

ad::Var Mlp::forward(ad::Tape& tape, ad::Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(tape, x);
    if (i + 1 < layers_.size() || activate_last_) x = ad::leaky_relu(x, kLeakySlope);
  }
  return x;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (Linear& l : layers_) l.collect(out);
}

}  // namespace windgnn::nn
