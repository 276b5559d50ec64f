// SPDX-License-Identifier: Apache-2.0
#include "windgnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "windgnn/errors.hpp"
#include "windgnn/evaluate.hpp"
#include "windgnn/param_io.hpp"

namespace windgnn::train {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<Tensor> snapshot(std::span<ad::Parameter* const> params) {
  std::vector<Tensor> out;
  for (const ad::Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(std::span<ad::Parameter* const> params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

void adam_step(std::span<ad::Parameter* const> params, AdamState& s, double lr, const AdamConfig& c) {
  for (const ad::Parameter* p : params)
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p->name);
  if (s.m.empty()) {
    for (const ad::Parameter* p : params) {
      s.m.emplace_back(p->value.shape());
      s.v.emplace_back(p->value.shape());
    }
  }
  if (s.m.size() != params.size()) throw ShapeError("adam_step: optimiser state does not match parameters");
  ++s.step;
  const double b1t = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double b2t = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Parameter& p = *params[k];
    auto& m = s.m[k].storage();
    auto& v = s.v[k].storage();
    auto& w = p.value.storage();
    const auto g = p.grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + c.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be > 0");
  if (patience == 0) throw ConfigError("train: patience must be >= 1");
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
  if (!(divergence_factor > 1.0)) throw ConfigError("train: divergence_factor must be > 1");
}

std::size_t TrainConfig::batch_for(model::Unit unit) const {
  if (batch_size != 0) return batch_size;
  return unit == model::Unit::scenario ? 16 : 128;
}

nlohmann::ordered_json TrainResult::to_json() const {
  nlohmann::ordered_json j;
  j["initial_val_mae"] = initial_val_mae;
  j["best_epoch"] = best_epoch;
  j["best_val_mae"] = best_val_mae;
  j["early_stopped"] = early_stopped;
  j["steps"] = steps;
  j["seconds"] = seconds;
  j["history"] = nlohmann::ordered_json::array();
  for (const EpochRecord& e : history)
    j["history"].push_back({{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_mae", e.val_mae},
                            {"steps", e.steps},
                            {"seconds", e.seconds}});
  return j;
}

Trainer::Trainer(model::Model& m, const model::PreparedData& data, TrainConfig config)
    : Trainer(m, data, std::move(config), data.split.train, data.split.val) {}

Trainer::Trainer(model::Model& m, const model::PreparedData& data, TrainConfig config,
                 std::vector<std::size_t> train_ids, std::vector<std::size_t> val_ids)
    : model_(m),
      data_(data),
      config_(std::move(config)),
      train_ids_(std::move(train_ids)),
      val_ids_(std::move(val_ids)) {
  config_.validate();
  if (train_ids_.empty()) throw DataError("train: empty training split");
  if (val_ids_.empty()) throw DataError("train: empty validation split");
  units_ = model::samples(model_.unit(), data_, train_ids_);
  params_ = model_.parameters();
}

Trainer::Trainer(model::Model& m, const model::PreparedData& data, TrainConfig config,
                 std::vector<model::Sample> units, std::vector<std::size_t> val_ids)
    : model_(m), data_(data), config_(std::move(config)), val_ids_(std::move(val_ids)), units_(std::move(units)) {
  config_.validate();
  if (units_.empty()) throw DataError("train: no training units");
  if (val_ids_.empty()) throw DataError("train: empty validation split");
  for (const model::Sample& s : units_) {
    if (s.scenario >= data_.scenarios.size() ||
        (model_.unit() == model::Unit::turbine && s.turbine >= data_.scenarios[s.scenario].turbine_target.size()))
      throw IndexError("train: unit out of range");
    if (std::find(train_ids_.begin(), train_ids_.end(), s.scenario) == train_ids_.end())
      train_ids_.push_back(s.scenario);
  }
  params_ = model_.parameters();
}

EpochRecord Trainer::run_epoch() {
  const auto t0 = Clock::now();
  ++epoch_;
  std::vector<model::Sample> order = units_;
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(epoch_)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t batch = config_.batch_for(model_.unit());
  double loss_sum = 0.0;
  std::size_t seen = 0, steps = 0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    if (config_.max_steps != 0 && adam_.step >= config_.max_steps) break;
    const std::span<const model::Sample> mb(order.data() + start, std::min(batch, order.size() - start));
    for (ad::Parameter* p : params_) p->grad = Tensor(p->value.shape());
    ad::Tape tape;
    const ad::Var loss = model_.loss(tape, data_, mb);
    tape.backward(loss);
    adam_step(params_, adam_, config_.lr);
    loss_sum += loss.value()[0] * static_cast<double>(mb.size());
    seen += mb.size();
    ++steps;
  }
  EpochRecord r;
  r.epoch = epoch_;
  r.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
  r.val_mae = validation_metric();
  r.steps = steps;
  r.seconds = since(t0);
  return r;
}

double Trainer::validation_metric() const {
  return eval::selection_metric(model_.kind(), eval::evaluate_split(model_, data_, val_ids_));
}

double Trainer::training_mae() const {
  if (model_.unit() == model::Unit::scenario)
    return eval::selection_metric(model_.kind(), eval::evaluate_split(model_, data_, train_ids_));
  const std::vector<model::Prediction> preds = model_.predict(data_, train_ids_);
  std::vector<double> p, y;
  for (const model::Sample& s : units_) {
    const std::size_t k = std::size_t(std::find(train_ids_.begin(), train_ids_.end(), s.scenario) - train_ids_.begin());
    p.push_back(preds[k].turbine->at(s.turbine));
    y.push_back(data_.scenarios[s.scenario].turbine_target[s.turbine]);
  }
  return eval::mae(p, y);
}

TrainResult Trainer::run() {
  const auto t0 = Clock::now();
  TrainResult res;
  res.initial_val_mae = validation_metric();
  res.best_val_mae = res.initial_val_mae;
  std::vector<Tensor> best = snapshot(params_);
  std::size_t stale = 0;
  while (epoch_ < config_.max_epochs) {
    if (config_.max_steps != 0 && adam_.step >= config_.max_steps) break;
    const EpochRecord r = run_epoch();
    res.history.push_back(r);
    if (config_.on_epoch) config_.on_epoch(r);
    if (!std::isfinite(r.val_mae) || r.val_mae > config_.divergence_factor * res.initial_val_mae)
      throw NumericError("training diverged at epoch " + std::to_string(r.epoch) + ": validation MAE " +
                         std::to_string(r.val_mae) + " exceeds " + std::to_string(config_.divergence_factor) +
                         "x the initial " + std::to_string(res.initial_val_mae));
    if (r.val_mae < res.best_val_mae) {
      res.best_val_mae = r.val_mae;
      res.best_epoch = r.epoch;
      best = snapshot(params_);
      stale = 0;
    } else if (++stale >= config_.patience) {
      res.early_stopped = true;
      break;
    }
  }
  restore(params_, best);
  res.steps = adam_.step;
  res.seconds = since(t0);
  return res;
}

void Trainer::save(const std::filesystem::path& dir, const nlohmann::ordered_json& extra) const {
  nlohmann::ordered_json meta = extra;
  std::vector<ad::Parameter> moments;
  moments.reserve(2 * params_.size());
  for (std::size_t k = 0; k < adam_.m.size(); ++k) {
    moments.emplace_back("m/" + params_[k]->name, adam_.m[k]);
    moments.emplace_back("v/" + params_[k]->name, adam_.v[k]);
  }
  std::vector<const ad::Parameter*> ptrs;
  for (const ad::Parameter& p : moments) ptrs.push_back(&p);
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json opt;
  opt["epoch"] = epoch_;
  opt["step"] = adam_.step;
  opt["seed"] = config_.seed;
  opt["lr"] = config_.lr;
  opt["moments"] = io::write_tensor_blob(dir / "optimizer.bin", ptrs);
  meta["optimizer"] = opt;
  model::save_checkpoint(dir, model_, data_.stats, meta);
}

void Trainer::resume(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is) throw DataError("no checkpoint manifest in " + dir.string());
  const nlohmann::json manifest = nlohmann::json::parse(is);
  if (!manifest.contains("optimizer")) throw DataError("checkpoint has no optimiser state: " + dir.string());
  const nlohmann::json& opt = manifest.at("optimizer");
  AdamState s;
  s.step = opt.at("step").get<std::uint64_t>();
  std::vector<ad::Parameter> moments;
  if (s.step > 0) {
    moments.reserve(2 * params_.size());
    for (const ad::Parameter* p : params_) {
      moments.emplace_back("m/" + p->name, Tensor(p->value.shape()));
      moments.emplace_back("v/" + p->name, Tensor(p->value.shape()));
    }
    std::vector<ad::Parameter*> ptrs;
    for (ad::Parameter& p : moments) ptrs.push_back(&p);
    io::read_tensor_blob(dir / "optimizer.bin", opt.at("moments"), ptrs);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      s.m.push_back(moments[2 * k].value);
      s.v.push_back(moments[2 * k + 1].value);
    }
  }
  adam_ = std::move(s);
  epoch_ = opt.at("epoch").get<std::size_t>();
}

TrainResult train(model::Model& m, const model::PreparedData& data, const TrainConfig& config) {
  return Trainer(m, data, config).run();
}

}  // namespace windgnn::train
