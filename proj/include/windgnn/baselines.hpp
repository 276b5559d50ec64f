// SPDX-License-Identifier: Apache-2.0
#pragma once

// Turbine-level comparison models: a bidirectional LSTM over the upstream
// neighbour sequence, an MLP over the zero-padded sequence, and MLPs that see
// only the turbine count and the free-stream wind speed.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "windgnn/autodiff.hpp"
#include "windgnn/graph.hpp"
#include "windgnn/nn.hpp"

namespace windgnn::baselines {

inline constexpr std::size_t kStepFeatures = 3;  // (d, sin alpha, cos alpha)

/// Standard LSTM without peepholes. Gates are computed as [x | h] W + b with
/// W of shape (in + hidden) x 4 hidden, column blocks ordered i, f, g, o.
class LstmCell {
 public:
  struct State {
    ad::Var h, c;
  };

  LstmCell() = default;
  LstmCell(const std::string& name, std::size_t input_width, std::size_t hidden, nn::Rng& rng);

  State step(ad::Tape& tape, ad::Var x, const State& prev) const;
  State zero_state(ad::Tape& tape, std::size_t batch) const;

  std::size_t input_width() const { return input_; }
  std::size_t hidden() const { return hidden_; }
  ad::Parameter& weight() { return weight_; }
  ad::Parameter& bias() { return bias_; }

  void collect(std::vector<ad::Parameter*>& out);

 private:
  std::size_t input_ = 0, hidden_ = 0;
  ad::Parameter weight_, bias_;
};

/// Right-padded, time-major batch of upstream sequences. `reversed` holds each
/// sample's own steps in reverse order, also right-padded, so both directions
/// start from their first real element.
struct SequenceBatch {
  std::vector<Tensor> forward;   // per step: B x 3
  std::vector<Tensor> reversed;  // per step: B x 3
  std::vector<Tensor> mask;      // per step: B x 1, 1 while t < length
  std::vector<std::size_t> lengths;
  Tensor wind_speed;  // B x 1

  std::size_t batch() const { return lengths.size(); }
  std::size_t max_length() const { return forward.size(); }

  static SequenceBatch from(std::span<const graph::UpstreamSequence* const> sequences);
};

struct BlstmConfig {
  std::size_t hidden = 32;
  std::vector<std::size_t> head_widths{64, 64};
};

/// P = h(ws, g(sequence)) with g = [forward final h | backward final h].
class BlstmModel {
 public:
  BlstmModel() = default;
  BlstmModel(const BlstmConfig& config, std::uint64_t seed);

  /// B x 2 hidden; zero rows for empty sequences.
  ad::Var encode(ad::Tape& tape, const SequenceBatch& batch) const;
  /// B x 1 normalised turbine power.
  ad::Var forward(ad::Tape& tape, const SequenceBatch& batch) const;

  const BlstmConfig& config() const { return config_; }
  LstmCell& forward_cell() { return forward_; }
  LstmCell& backward_cell() { return backward_; }
  std::vector<ad::Parameter*> parameters();

 private:
  BlstmConfig config_;
  LstmCell forward_, backward_;
  nn::Mlp head_;
};

struct PaddedMlpConfig {
  std::size_t max_neighbors = 0;
  std::vector<std::size_t> widths{256, 128, 64, 64};
};

/// MLP over [ws | d, sin, cos of each neighbour in order | zero padding].
class PaddedMlpModel {
 public:
  PaddedMlpModel() = default;
  PaddedMlpModel(const PaddedMlpConfig& config, std::uint64_t seed);

  /// B x (1 + 3 capacity). Throws CapacityError naming `labels[b]` when a
  /// sequence is longer than the capacity.
  static Tensor pad(std::span<const graph::UpstreamSequence* const> sequences, std::size_t capacity,
                    std::span<const std::string> labels = {});

  ad::Var forward(ad::Tape& tape, const Tensor& padded) const;

  const PaddedMlpConfig& config() const { return config_; }
  std::size_t input_width() const { return 1 + kStepFeatures * config_.max_neighbors; }
  nn::Mlp& mlp() { return mlp_; }
  std::vector<ad::Parameter*> parameters();

 private:
  PaddedMlpConfig config_;
  nn::Mlp mlp_;
};

enum class BaselineTarget { farm, turbine };

struct BaselineConfig {
  BaselineTarget target = BaselineTarget::turbine;
  std::vector<std::size_t> widths{64, 64, 32};
};

/// MLP over [n_turbines, ws], both normalised. Layout-blind by construction.
class BaselineModel {
 public:
  BaselineModel() = default;
  BaselineModel(const BaselineConfig& config, std::uint64_t seed);

  ad::Var forward(ad::Tape& tape, const Tensor& inputs) const;

  const BaselineConfig& config() const { return config_; }
  std::vector<ad::Parameter*> parameters();

 private:
  BaselineConfig config_;
  nn::Mlp mlp_;
};

}  // namespace windgnn::baselines
