// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "windgnn/wake.hpp"

namespace windgnn::data {

namespace feature {
inline constexpr const char* kWindSpeed = "ws";
inline constexpr const char* kDistance = "distance";
inline constexpr const char* kTurbineCount = "n_turbines";
inline constexpr const char* kTurbinePower = "turbine_power";
inline constexpr const char* kFarmPower = "farm_power";
}  // namespace feature

/// Min-max range of one feature. A constant feature scales to 0.
struct FeatureRange {
  double min = 0.0;
  double max = 1.0;

  bool constant() const { return !(max > min); }
  double scale(double v) const { return constant() ? 0.0 : (v - min) / (max - min); }
  double unscale(double s) const { return constant() ? min : min + s * (max - min); }
  double span() const { return constant() ? 0.0 : max - min; }

  bool operator==(const FeatureRange&) const = default;
};

class NormStats {
 public:
  void set(const std::string& name, FeatureRange range) { ranges_[name] = range; }
  const FeatureRange& at(const std::string& name) const;
  bool has(const std::string& name) const { return ranges_.count(name) != 0; }
  double scale(const std::string& name, double v) const { return at(name).scale(v); }
  double unscale(const std::string& name, double s) const { return at(name).unscale(s); }

  nlohmann::ordered_json to_json() const;
  static NormStats from_json(const nlohmann::json& j);

  bool operator==(const NormStats&) const = default;

 private:
  std::map<std::string, FeatureRange> ranges_;
};

/// Min-max range of `values`; logs a warning to std::clog when constant.
FeatureRange fit_range(const std::string& name, std::span<const double> values);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// 20% test, then 80/20 train/val of the remainder, after a seeded shuffle.
Split split_indices(std::size_t n_records, std::uint64_t seed);

/// Stats for every model feature, fitted on `train` only.
NormStats fit_norm_stats(std::span<const wake::LabelledScenario> records,
                         std::span<const std::size_t> train);

struct SplitResult {
  Split split;
  NormStats stats;
};

/// Requires at least five records.
SplitResult normalize_and_split(std::span<const wake::LabelledScenario> records, std::uint64_t seed);

// --- JSON-lines dataset file ---------------------------------------------------

/// {"id","ws","theta","turbines":[{"x","y"}],"powers":[...],"farm_power"}
std::string to_jsonl_line(const wake::LabelledScenario& s);
wake::LabelledScenario from_jsonl_line(const std::string& line, const wake::TurbineModel& model);

void write_jsonl(const std::filesystem::path& path, std::span<const wake::LabelledScenario> records);
std::vector<wake::LabelledScenario> read_jsonl(const std::filesystem::path& path,
                                               const wake::TurbineModel& model = {});

}  // namespace windgnn::data
