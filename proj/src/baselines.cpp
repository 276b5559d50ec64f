// SPDX-License-Identifier: Apache-2.0
#include "windgnn/baselines.hpp"

#include "windgnn/errors.hpp"

namespace windgnn::baselines {

namespace {

std::vector<std::size_t> with_output(std::vector<std::size_t> widths) {
  widths.push_back(1);
  return widths;
}

}  // namespace

LstmCell::LstmCell(const std::string& name, std::size_t input_width, std::size_t hidden,
                   nn::Rng& rng)
    : input_(input_width), hidden_(hidden) {
  if (input_width == 0 || hidden == 0) throw ConfigError(name + ": zero-width LSTM");
  weight_ = ad::Parameter(name + ".weight", nn::glorot_uniform(input_width + hidden, 4 * hidden, rng));
  // forget gate starts open
  Tensor b = Tensor::zeros(1, 4 * hidden);
  for (std::size_t k = hidden; k < 2 * hidden; ++k) b[k] = 1.0;
  bias_ = ad::Parameter(name + ".bias", std::move(b));
}

LstmCell::State LstmCell::step(ad::Tape& tape, ad::Var x, const State& prev) const {
  const ad::Var z = ad::add_bias(ad::matmul(ad::concat_cols({x, prev.h}), tape.parameter(weight_)),
                                 tape.parameter(bias_));
  const ad::Var i = ad::sigmoid(ad::slice_cols(z, 0, hidden_));
  const ad::Var f = ad::sigmoid(ad::slice_cols(z, hidden_, hidden_));
  const ad::Var g = ad::tanh(ad::slice_cols(z, 2 * hidden_, hidden_));
  const ad::Var o = ad::sigmoid(ad::slice_cols(z, 3 * hidden_, hidden_));
  const ad::Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

LstmCell::State LstmCell::zero_state(ad::Tape& tape, std::size_t batch) const {
  return {tape.constant(Tensor::zeros(batch, hidden_)), tape.constant(Tensor::zeros(batch, hidden_))};
}

void LstmCell::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

SequenceBatch SequenceBatch::from(std::span<const graph::UpstreamSequence* const> sequences) {
  SequenceBatch b;
  const std::size_t n = sequences.size();
  std::size_t longest = 0;
  b.wind_speed = Tensor::zeros(n, 1);
  for (std::size_t s = 0; s < n; ++s) {
    b.lengths.push_back(sequences[s]->size());
    longest = std::max(longest, sequences[s]->size());
    b.wind_speed[s] = sequences[s]->wind_speed;
  }
  for (std::size_t t = 0; t < longest; ++t) {
    Tensor fwd = Tensor::zeros(n, kStepFeatures), rev = Tensor::zeros(n, kStepFeatures);
    Tensor mask = Tensor::zeros(n, 1);
    for (std::size_t s = 0; s < n; ++s) {
      const auto& steps = sequences[s]->steps;
      if (t >= steps.size()) continue;
      mask[s] = 1.0;
      for (std::size_t c = 0; c < kStepFeatures; ++c) {
        fwd(s, c) = steps[t][c];
        rev(s, c) = steps[steps.size() - 1 - t][c];
      }
    }
    b.forward.push_back(std::move(fwd));
    b.reversed.push_back(std::move(rev));
    b.mask.push_back(std::move(mask));
  }
  return b;
}

BlstmModel::BlstmModel(const BlstmConfig& config, std::uint64_t seed) : config_(config) {
  nn::Rng rng(seed);
  forward_ = LstmCell("blstm.forward", kStepFeatures, config_.hidden, rng);
  backward_ = LstmCell("blstm.backward", kStepFeatures, config_.hidden, rng);
  head_ = nn::Mlp("blstm.head", 1 + 2 * config_.hidden, with_output(config_.head_widths), false, rng);
}

ad::Var BlstmModel::encode(ad::Tape& tape, const SequenceBatch& batch) const {
  auto run = [&](const LstmCell& cell, const std::vector<Tensor>& steps) {
    LstmCell::State s = cell.zero_state(tape, batch.batch());
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const LstmCell::State next = cell.step(tape, tape.constant(steps[t]), s);
      // Samples already past their length keep their state.
      Tensor keep = batch.mask[t];
      for (double& v : keep.storage()) v = 1.0 - v;
      const ad::Var on = tape.constant(batch.mask[t]), off = tape.constant(std::move(keep));
      s.h = ad::add(ad::scale_rows(next.h, on), ad::scale_rows(s.h, off));
      s.c = ad::add(ad::scale_rows(next.c, on), ad::scale_rows(s.c, off));
    }
    return s.h;
  };
  return ad::concat_cols({run(forward_, batch.forward), run(backward_, batch.reversed)});
}

ad::Var BlstmModel::forward(ad::Tape& tape, const SequenceBatch& batch) const {
  return head_.forward(tape, ad::concat_cols({tape.constant(batch.wind_speed), encode(tape, batch)}));
}

std::vector<ad::Parameter*> BlstmModel::parameters() {
  std::vector<ad::Parameter*> out;
  forward_.collect(out);
  backward_.collect(out);
  head_.collect(out);
  return out;
}

PaddedMlpModel::PaddedMlpModel(const PaddedMlpConfig& config, std::uint64_t seed) : config_(config) {
  nn::Rng rng(seed);
  mlp_ = nn::Mlp("padded_mlp", input_width(), with_output(config_.widths), false, rng);
}

Tensor PaddedMlpModel::pad(std::span<const graph::UpstreamSequence* const> sequences,
                           std::size_t capacity, std::span<const std::string> labels) {
  Tensor out = Tensor::zeros(sequences.size(), 1 + kStepFeatures * capacity);
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const graph::UpstreamSequence& seq = *sequences[s];
    if (seq.size() > capacity) {
      const std::string where = s < labels.size() ? labels[s] : "turbine " + std::to_string(seq.target);
      throw CapacityError(where + ": " + std::to_string(seq.size()) +
                          " upstream neighbours exceed the padded MLP capacity of " +
                          std::to_string(capacity));
    }
    out(s, 0) = seq.wind_speed;
    for (std::size_t t = 0; t < seq.size(); ++t)
      for (std::size_t c = 0; c < kStepFeatures; ++c) out(s, 1 + kStepFeatures * t + c) = seq.steps[t][c];
  }
  return out;
}

ad::Var PaddedMlpModel::forward(ad::Tape& tape, const Tensor& padded) const {
  if (padded.cols() != input_width())
    throw ShapeError("padded MLP: input width " + std::to_string(padded.cols()) + ", expected " +
                     std::to_string(input_width()));
  return mlp_.forward(tape, tape.constant(padded));
}

std::vector<ad::Parameter*> PaddedMlpModel::parameters() {
  std::vector<ad::Parameter*> out;
  mlp_.collect(out);
  return out;
}

BaselineModel::BaselineModel(const BaselineConfig& config, std::uint64_t seed) : config_(config) {
  nn::Rng rng(seed);
  const char* name = config_.target == BaselineTarget::farm ? "bs_farm" : "bs_turb";
  mlp_ = nn::Mlp(name, 2, with_output(config_.widths), false, rng);
}

ad::Var BaselineModel::forward(ad::Tape& tape, const Tensor& inputs) const {
  if (inputs.cols() != 2) throw ShapeError("baseline: expected [n_turbines, ws] rows");
  return mlp_.forward(tape, tape.constant(inputs));
}

std::vector<ad::Parameter*> BaselineModel::parameters() {
  std::vector<ad::Parameter*> out;
  mlp_.collect(out);
  return out;
}

}  // namespace windgnn::baselines
