// SPDX-License-Identifier: Apache-2.0
#include "windgnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "windgnn/errors.hpp"

namespace windgnn::data {

const FeatureRange& NormStats::at(const std::string& name) const {
  auto it = ranges_.find(name);
  if (it == ranges_.end()) throw DataError("norm stats lack feature '" + name + "'");
  return it->second;
}

nlohmann::ordered_json NormStats::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, r] : ranges_) j[name] = {{"min", r.min}, {"max", r.max}};
  return j;
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats s;
  for (const auto& [name, r] : j.items())
    s.set(name, FeatureRange{r.at("min").get<double>(), r.at("max").get<double>()});
  return s;
}

FeatureRange fit_range(const std::string& name, std::span<const double> values) {
  if (values.empty()) {
    std::clog << "warning: feature '" << name << "' has no training values; it maps to 0\n";
    return FeatureRange{0.0, 0.0};
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  FeatureRange r{*lo, *hi};
  if (r.constant()) std::clog << "warning: feature '" << name << "' is constant on the training split; it maps to 0\n";
  return r;
}

Split split_indices(std::size_t n_records, std::uint64_t seed) {
  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n_records)));
  const std::size_t rest = n_records - n_test;
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(rest)));
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
               order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
  return s;
}

NormStats fit_norm_stats(std::span<const wake::LabelledScenario> records,
                         std::span<const std::size_t> train) {
  std::vector<double> ws, dist, count, power, farm;
  for (std::size_t idx : train) {
    const auto& [s, rec] = records[idx];
    ws.push_back(s.wind_speed);
    count.push_back(static_cast<double>(s.turbines.size()));
    farm.push_back(rec.farm_power);
    power.insert(power.end(), rec.power.begin(), rec.power.end());
    for (std::size_t i = 0; i < s.turbines.size(); ++i)
      for (std::size_t j = i + 1; j < s.turbines.size(); ++j)
        dist.push_back(std::hypot(s.turbines[i].x - s.turbines[j].x, s.turbines[i].y - s.turbines[j].y));
  }
  NormStats stats;
  stats.set(feature::kWindSpeed, fit_range(feature::kWindSpeed, ws));
  stats.set(feature::kDistance, fit_range(feature::kDistance, dist));
  stats.set(feature::kTurbineCount, fit_range(feature::kTurbineCount, count));
  stats.set(feature::kTurbinePower, fit_range(feature::kTurbinePower, power));
  stats.set(feature::kFarmPower, fit_range(feature::kFarmPower, farm));
  return stats;
}

SplitResult normalize_and_split(std::span<const wake::LabelledScenario> records, std::uint64_t seed) {
  if (records.size() < 5) throw DataError("need at least 5 records to split, got " + std::to_string(records.size()));
  SplitResult r;
  r.split = split_indices(records.size(), seed);
  r.stats = fit_norm_stats(records, r.split.train);
  return r;
}

std::string to_jsonl_line(const wake::LabelledScenario& s) {
  nlohmann::ordered_json j;
  j["id"] = s.scenario.id;
  j["ws"] = s.scenario.wind_speed;
  j["theta"] = s.scenario.wind_direction;
  auto turbines = nlohmann::ordered_json::array();
  for (const auto& t : s.scenario.turbines) {
    nlohmann::ordered_json tj;
    tj["x"] = t.x;
    tj["y"] = t.y;
    turbines.push_back(std::move(tj));
  }
  j["turbines"] = std::move(turbines);
  j["powers"] = s.record.power;
  j["farm_power"] = s.record.farm_power;
  return j.dump();
}

wake::LabelledScenario from_jsonl_line(const std::string& line, const wake::TurbineModel& model) {
  const auto j = nlohmann::json::parse(line);
  wake::LabelledScenario s;
  s.scenario.id = j.at("id").get<std::size_t>();
  s.scenario.wind_speed = j.at("ws").get<double>();
  s.scenario.wind_direction = j.at("theta").get<double>();
  for (const auto& t : j.at("turbines"))
    s.scenario.turbines.push_back(wake::Turbine{t.at("x").get<double>(), t.at("y").get<double>(), model});
  s.record.scenario_id = s.scenario.id;
  s.record.power = j.at("powers").get<std::vector<double>>();
  s.record.farm_power = j.at("farm_power").get<double>();
  if (s.record.power.size() != s.scenario.turbines.size())
    throw DataError("scenario " + std::to_string(s.scenario.id) + ": power count differs from turbine count");
  return s;
}

void write_jsonl(const std::filesystem::path& path, std::span<const wake::LabelledScenario> records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& r : records) os << to_jsonl_line(r) << '\n';
  if (!os) throw DataError("short write to " + path.string());
}

std::vector<wake::LabelledScenario> read_jsonl(const std::filesystem::path& path,
                                               const wake::TurbineModel& model) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path.string());
  std::vector<wake::LabelledScenario> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_jsonl_line(line, model));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace windgnn::data
