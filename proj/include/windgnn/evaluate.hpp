// SPDX-License-Identifier: Apache-2.0
#pragma once

// Mean absolute error on scaled targets and the seven-row comparison table.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "windgnn/model.hpp"

namespace windgnn::eval {

/// (1/T) sum |pred - y|. Throws ShapeError on length mismatch or empty input.
double mae(std::span<const double> prediction, std::span<const double> target);

struct Metrics {
  std::optional<double> turbine_mae;
  std::optional<double> farm_mae;
  std::size_t scenarios = 0;
  std::size_t turbines = 0;
};

/// Turbine MAE pools every turbine of the listed scenarios; farm MAE is per scenario.
Metrics evaluate_split(const model::Model& m, const model::PreparedData& data,
                       std::span<const std::size_t> scenarios);

/// Farm MAE for BS_Farm, turbine MAE for every other model.
double selection_metric(model::Kind kind, const Metrics& m);

struct ReportRow {
  model::Kind kind = model::Kind::bs_farm;
  bool present = false;
  std::optional<double> mae_turbine;
  std::optional<double> mae_farm;
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> rows;  // always seven, in table order
  std::size_t scenarios = 0;
  std::size_t turbines = 0;

  const ReportRow& row(model::Kind k) const;
  ReportRow& row(model::Kind k);

  /// model,mae_turbine,mae_farm,epochs,wall_seconds; undefined values are empty.
  std::string to_csv() const;
  static EvalReport from_csv(const std::string& csv);
  /// Fixed-width table; "-" where a metric is undefined, "absent" for missing models.
  std::string to_table() const;
};

struct Entry {
  const model::Model* model = nullptr;  // nullptr: checkpoint missing
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
};

/// Evaluates every present model on `scenarios`. BS_Farm keeps no turbine MAE
/// and BS_Turb no farm MAE.
EvalReport evaluate(std::span<const std::pair<model::Kind, Entry>> models,
                    const model::PreparedData& data, std::span<const std::size_t> scenarios);

}  // namespace windgnn::eval
