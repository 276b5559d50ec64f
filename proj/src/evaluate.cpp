// SPDX-License-Identifier: Apache-2.0
#include "windgnn/evaluate.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "windgnn/errors.hpp"

namespace windgnn::eval {

double mae(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size() || prediction.empty())
    throw ShapeError(fmt::format("mae: {} predictions for {} targets", prediction.size(), target.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) s += std::abs(prediction[i] - target[i]);
  return s / static_cast<double>(target.size());
}

Metrics evaluate_split(const model::Model& m, const model::PreparedData& data,
                       std::span<const std::size_t> scenarios) {
  const std::vector<model::Prediction> preds = m.predict(data, scenarios);
  std::vector<double> tp, ty, fp, fy;
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const model::PreparedScenario& s = data.scenarios[scenarios[k]];
    if (preds[k].turbine) {
      tp.insert(tp.end(), preds[k].turbine->begin(), preds[k].turbine->end());
      ty.insert(ty.end(), s.turbine_target.begin(), s.turbine_target.end());
    }
    if (preds[k].farm) {
      fp.push_back(*preds[k].farm);
      fy.push_back(s.farm_target);
    }
  }
  Metrics out;
  out.scenarios = scenarios.size();
  for (std::size_t sid : scenarios) out.turbines += data.scenarios[sid].turbine_target.size();
  if (!tp.empty()) out.turbine_mae = mae(tp, ty);
  if (!fp.empty()) out.farm_mae = mae(fp, fy);
  return out;
}

double selection_metric(model::Kind kind, const Metrics& m) {
  const auto& v = kind == model::Kind::bs_farm ? m.farm_mae : m.turbine_mae;
  if (!v) throw DataError("no validation metric for " + std::string(model::display_name(kind)));
  return *v;
}

const ReportRow& EvalReport::row(model::Kind k) const {
  for (const ReportRow& r : rows)
    if (r.kind == k) return r;
  throw DataError(std::string("report has no row for ") + model::display_name(k));
}

ReportRow& EvalReport::row(model::Kind k) {
  return const_cast<ReportRow&>(static_cast<const EvalReport&>(*this).row(k));
}

namespace {

std::string number(const std::optional<double>& v) { return v ? fmt::format("{:.9g}", *v) : ""; }

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw DataError("metrics CSV: bad number '" + s + "'");
  }
}

EvalReport empty_report() {
  EvalReport r;
  for (model::Kind k : model::kAllKinds) r.rows.push_back(ReportRow{k});
  return r;
}

}  // namespace

std::string EvalReport::to_csv() const {
  std::string out = "model,mae_turbine,mae_farm,epochs,wall_seconds\n";
  for (const ReportRow& r : rows) {
    if (!r.present) {
      out += fmt::format("{},,,,\n", model::kind_name(r.kind));
      continue;
    }
    out += fmt::format("{},{},{},{},{:.3f}\n", model::kind_name(r.kind), number(r.mae_turbine),
                       number(r.mae_farm), r.epochs, r.wall_seconds);
  }
  return out;
}

EvalReport EvalReport::from_csv(const std::string& csv) {
  EvalReport rep = empty_report();
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "model,mae_turbine,mae_farm,epochs,wall_seconds")
    throw DataError("metrics CSV: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    while (cells.size() < 5) cells.emplace_back();
    const auto kind = model::parse_kind(cells[0]);
    if (!kind) throw DataError("metrics CSV: unknown model '" + cells[0] + "'");
    ReportRow& r = rep.row(*kind);
    r.present = !cells[3].empty();
    r.mae_turbine = parse_number(cells[1]);
    r.mae_farm = parse_number(cells[2]);
    r.epochs = cells[3].empty() ? 0 : std::stoul(cells[3]);
    r.wall_seconds = parse_number(cells[4]).value_or(0.0);
  }
  return rep;
}

std::string EvalReport::to_table() const {
  std::string out = fmt::format("{:<10}{:>14}{:>14}{:>8}{:>10}\n", "Model", "MAE Turbine", "MAE Farm",
                                "Epochs", "Seconds");
  for (const ReportRow& r : rows) {
    if (!r.present) {
      out += fmt::format("{:<10}{:>14}\n", model::display_name(r.kind), "absent");
      continue;
    }
    auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string("-"); };
    out += fmt::format("{:<10}{:>14}{:>14}{:>8}{:>10.1f}\n", model::display_name(r.kind), cell(r.mae_turbine),
                       cell(r.mae_farm), r.epochs, r.wall_seconds);
  }
  return out;
}

EvalReport evaluate(std::span<const std::pair<model::Kind, Entry>> models, const model::PreparedData& data,
                    std::span<const std::size_t> scenarios) {
  EvalReport rep = empty_report();
  rep.scenarios = scenarios.size();
  for (std::size_t sid : scenarios) rep.turbines += data.scenarios.at(sid).turbine_target.size();
  for (const auto& [kind, entry] : models) {
    ReportRow& r = rep.row(kind);
    if (!entry.model) continue;
    const Metrics m = evaluate_split(*entry.model, data, scenarios);
    r.present = true;
    r.mae_turbine = kind == model::Kind::bs_farm ? std::nullopt : m.turbine_mae;
    r.mae_farm = kind == model::Kind::bs_turb ? std::nullopt : m.farm_mae;
    r.epochs = entry.epochs;
    r.wall_seconds = entry.wall_seconds;
  }
  return rep;
}

}  // namespace windgnn::eval
