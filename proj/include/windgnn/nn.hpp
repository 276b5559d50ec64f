// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "windgnn/autodiff.hpp"

namespace windgnn::nn {

using ad::Parameter;
using Rng = std::mt19937_64;

inline constexpr double kLeakySlope = 0.2;

/// Glorot/Xavier uniform: U(-sqrt(6/(in+out)), +sqrt(6/(in+out))).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// y = x W (+ b). W is in x out.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  std::size_t in_width() const { return weight_.value.rows(); }
  std::size_t out_width() const { return weight_.value.cols(); }
  bool has_bias() const { return has_bias_; }

  void collect(std::vector<Parameter*>& out);
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  bool has_bias_ = false;
};

/// Stack of affine layers with leaky-ReLU between them. The last layer is
/// linear unless `activate_last` is set.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& widths,
      bool activate_last, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  std::size_t in_width() const { return in_; }
  std::size_t out_width() const { return layers_.empty() ? in_ : layers_.back().out_width(); }
  bool activate_last() const { return activate_last_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

  void collect(std::vector<Parameter*>& out);

 private:
  std::size_t in_ = 0;
  std::vector<Linear> layers_;
  bool activate_last_ = false;
};

}  // namespace windgnn::nn
