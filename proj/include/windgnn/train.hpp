// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minibatch Adam training on MSE with early stopping on validation MAE.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "windgnn/autodiff.hpp"
#include "windgnn/model.hpp"

namespace windgnn::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;
};

/// One bias-corrected Adam update from each parameter's `grad`. Throws
/// NumericError naming the parameter when a gradient is not finite; nothing
/// is updated in that case.
void adam_step(std::span<ad::Parameter* const> params, AdamState& state, double lr,
               const AdamConfig& config = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mae = 0.0;
  std::size_t steps = 0;
  double seconds = 0.0;
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 0;  // 0: 16 scenarios or 128 turbines
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  double divergence_factor = 10.0;
  std::size_t max_steps = 0;  // 0: unlimited
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
  std::size_t batch_for(model::Unit unit) const;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double initial_val_mae = 0.0;
  std::size_t best_epoch = 0;  // 0: the untrained model was best
  double best_val_mae = 0.0;
  bool early_stopped = false;
  std::size_t steps = 0;
  double seconds = 0.0;

  nlohmann::ordered_json to_json() const;
};

class Trainer {
 public:
  /// Trains on `train_ids` and selects on `val_ids` (the data's own split by default).
  Trainer(model::Model& m, const model::PreparedData& data, TrainConfig config);
  Trainer(model::Model& m, const model::PreparedData& data, TrainConfig config,
          std::vector<std::size_t> train_ids, std::vector<std::size_t> val_ids);
  /// Trains on exactly `units` (which must match the model's unit).
  Trainer(model::Model& m, const model::PreparedData& data, TrainConfig config,
          std::vector<model::Sample> units, std::vector<std::size_t> val_ids);

  /// One pass over the training units in an order drawn from (seed, epoch).
  EpochRecord run_epoch();
  /// Epochs until max_epochs, max_steps or patience runs out; leaves the
  /// best-validation parameters in the model. Throws NumericError on divergence.
  TrainResult run();

  double validation_metric() const;
  /// MAE over the training units: turbine MAE, or farm MAE for BS_Farm.
  double training_mae() const;

  std::size_t epoch() const { return epoch_; }
  std::size_t steps() const { return adam_.step; }
  const AdamState& optimizer() const { return adam_; }

  /// Model checkpoint plus optimiser moments and the epoch counter, enough to
  /// continue bit-for-bit.
  void save(const std::filesystem::path& dir, const nlohmann::ordered_json& extra = {}) const;
  /// Restores optimiser state written by save() into this trainer; the model
  /// must already hold the checkpoint's parameters.
  void resume(const std::filesystem::path& dir);

 private:
  model::Model& model_;
  const model::PreparedData& data_;
  TrainConfig config_;
  std::vector<std::size_t> train_ids_, val_ids_;
  std::vector<model::Sample> units_;
  std::vector<ad::Parameter*> params_;
  AdamState adam_;
  std::size_t epoch_ = 0;
};

/// Convenience: Trainer(m, data, config).run().
TrainResult train(model::Model& m, const model::PreparedData& data, const TrainConfig& config);

}  // namespace windgnn::train
