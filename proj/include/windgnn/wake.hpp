// SPDX-License-Identifier: Apache-2.0
#pragma once

// Jensen top-hat wake simulator used to label synthetic wind-farm scenarios.
//
// Coordinates are metres with x east and y north. Wind direction follows the
// meteorological convention: the bearing the wind blows FROM, clockwise from
// north, in degrees. Deficits from several upstream rotors combine by root sum
// of squares against the free-stream speed.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace windgnn::wake {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Reference 5 MW machine by default.
struct TurbineModel {
  double rotor_diameter = 126.0;
  double power_coefficient = 0.45;
  double rated_power = 5.0e6;
  double cut_in = 3.0;
  double rated_speed = 11.4;
  double cut_out = 25.0;

  void validate() const;
};

struct Turbine {
  double x = 0.0;
  double y = 0.0;
  TurbineModel model;

  Point position() const { return {x, y}; }
};

struct FarmScenario {
  std::size_t id = 0;
  std::vector<Turbine> turbines;
  double wind_speed = 8.0;
  double wind_direction = 270.0;

  /// Checks the scenario invariants; min_spacing <= 0 skips the spacing check.
  void validate(double min_spacing = 0.0) const;
};

struct PowerRecord {
  std::size_t scenario_id = 0;
  std::vector<double> effective_speed;
  std::vector<double> power;
  double farm_power = 0.0;
};

struct WakeParameters {
  double decay = 0.05;           // k
  double induction = 1.0 / 3.0;  // a
  double air_density = 1.225;    // kg/m^3
};

/// Unit vector the wind travels along for a meteorological direction.
Point downwind_unit(double wind_direction_deg);

/// Downstream distance and signed crosswind offset of `query` relative to `origin`.
struct WindFrame {
  double downstream;
  double crosswind;
};
WindFrame to_wind_frame(Point origin, Point query, double wind_direction_deg);

/// Fractional speed deficit at `query` caused by `upstream`:
/// 2a / (1 + 2kx/D)^2 inside the cone |r| < D/2 + kx with x > 0, zero elsewhere.
double jensen_deficit(const Turbine& upstream, Point query, double wind_direction_deg, double k,
                      double a);

double effective_wind_speed(std::size_t target, const FarmScenario& scenario,
                            const WakeParameters& params = {});

/// Power curve: zero outside [cut_in, cut_out], otherwise
/// min(rated, 0.5 rho (pi D^2 / 4) Cp v^3).
double power_from_wind(double v, const TurbineModel& model, double air_density = 1.225);

PowerRecord simulate_scenario(const FarmScenario& scenario, const WakeParameters& params = {});

// --- dataset generation -------------------------------------------------------

using Layout = std::vector<Point>;

struct LayoutSpec {
  std::size_t n_farms = 1;
  std::size_t min_turbines = 4;
  std::size_t max_turbines = 16;
  double area = 2500.0 * 2500.0;  // m^2, placed as a square
  double min_spacing = 400.0;
  std::uint64_t seed = 0;
  TurbineModel model;
};

inline constexpr std::size_t kPlacementBudget = 10000;

/// Rejection-samples turbine positions. Farm f draws from an RNG seeded by
/// (seed, f), so layouts do not depend on how many farms are requested.
std::vector<Layout> generate_layouts(const LayoutSpec& spec);

struct SimulationConfig {
  LayoutSpec layout;
  std::size_t conditions_per_layout = 5;
  double ws_min = 4.0;
  double ws_max = 12.0;
  std::size_t n_directions = 36;  // grid of 360/n degrees
  WakeParameters wake;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency

  std::size_t scenario_count() const { return layout.n_farms * conditions_per_layout; }
  void validate() const;
};

struct LabelledScenario {
  FarmScenario scenario;
  PowerRecord record;
};

/// Scenario i = layout i / conditions_per_layout under the (i % conditions)-th
/// wind draw of that layout. Pure in (config, i); output is in index order.
std::vector<LabelledScenario> simulate_dataset(const SimulationConfig& config);

/// 100 layouts x 5 wind draws, 4-16 turbines, ws in [4, 12], 36 directions.
SimulationConfig desk_config();

/// Published full-scale protocol sizes, for reference.
inline constexpr std::size_t kPaperScenarioCount = 18280;
inline constexpr std::size_t kPaperTurbineValueCount = 1200862;

}  // namespace windgnn::wake
