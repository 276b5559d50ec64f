// SPDX-License-Identifier: Apache-2.0
#include "windgnn/wake.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <thread>

#include "windgnn/errors.hpp"

namespace windgnn::wake {

namespace {

constexpr double kBetz = 16.0 / 27.0;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

void TurbineModel::validate() const {
  if (!(rotor_diameter > 0.0)) throw ConfigError("rotor_diameter must be positive");
  if (!(power_coefficient > 0.0 && power_coefficient < kBetz))
    throw ConfigError("power_coefficient must lie in (0, 16/27)");
  if (!(cut_in < rated_speed && rated_speed < cut_out))
    throw ConfigError("need cut_in < rated_speed < cut_out");
  if (!(rated_power > 0.0)) throw ConfigError("rated_power must be positive");
}

void FarmScenario::validate(double min_spacing) const {
  if (turbines.empty()) throw DataError("scenario " + std::to_string(id) + " has no turbines");
  if (!(wind_direction >= 0.0 && wind_direction < 360.0))
    throw DataError("scenario " + std::to_string(id) + ": wind direction outside [0, 360)");
  for (const Turbine& t : turbines) {
    t.model.validate();
    if (wind_speed < t.model.cut_in || wind_speed > t.model.cut_out)
      throw DataError("scenario " + std::to_string(id) + ": wind speed outside the operating range");
  }
  if (min_spacing <= 0.0) return;
  for (std::size_t i = 0; i < turbines.size(); ++i)
    for (std::size_t j = i + 1; j < turbines.size(); ++j)
      if (std::hypot(turbines[i].x - turbines[j].x, turbines[i].y - turbines[j].y) < min_spacing)
        throw DataError("scenario " + std::to_string(id) + ": turbines " + std::to_string(i) +
                        " and " + std::to_string(j) + " closer than min_spacing");
}

Point downwind_unit(double wind_direction_deg) {
  const double th = deg2rad(wind_direction_deg);
  return {-std::sin(th), -std::cos(th)};
}

WindFrame to_wind_frame(Point origin, Point query, double wind_direction_deg) {
  const Point w = downwind_unit(wind_direction_deg);
  const double dx = query.x - origin.x, dy = query.y - origin.y;
  return {dx * w.x + dy * w.y, w.x * dy - w.y * dx};
}

double jensen_deficit(const Turbine& upstream, Point query, double wind_direction_deg, double k,
                      double a) {
  if (!(k > 0.0)) throw ConfigError("wake decay k must be positive");
  if (!(a > 0.0 && a < 0.5)) throw ConfigError("induction factor must lie in (0, 0.5)");
  const WindFrame f = to_wind_frame(upstream.position(), query, wind_direction_deg);
  if (f.downstream <= 0.0) return 0.0;
  const double d = upstream.model.rotor_diameter;
  if (std::abs(f.crosswind) >= 0.5 * d + k * f.downstream) return 0.0;
  const double expansion = 1.0 + 2.0 * k * f.downstream / d;
  return 2.0 * a / (expansion * expansion);
}

double effective_wind_speed(std::size_t target, const FarmScenario& scenario,
                            const WakeParameters& params) {
  if (target >= scenario.turbines.size()) throw IndexError("target turbine outside scenario");
  const Point hub = scenario.turbines[target].position();
  double squares = 0.0;
  for (std::size_t j = 0; j < scenario.turbines.size(); ++j) {
    if (j == target) continue;
    const double d = jensen_deficit(scenario.turbines[j], hub, scenario.wind_direction, params.decay,
                                    params.induction);
    squares += d * d;
  }
  return std::max(0.0, scenario.wind_speed * (1.0 - std::sqrt(squares)));
}

double power_from_wind(double v, const TurbineModel& model, double air_density) {
  if (v < model.cut_in || v > model.cut_out) return 0.0;
  const double swept = std::numbers::pi * model.rotor_diameter * model.rotor_diameter / 4.0;
  return std::min(model.rated_power, 0.5 * air_density * swept * model.power_coefficient * v * v * v);
}

PowerRecord simulate_scenario(const FarmScenario& scenario, const WakeParameters& params) {
  PowerRecord rec;
  rec.scenario_id = scenario.id;
  for (std::size_t i = 0; i < scenario.turbines.size(); ++i) {
    const double v = effective_wind_speed(i, scenario, params);
    rec.effective_speed.push_back(v);
    rec.power.push_back(power_from_wind(v, scenario.turbines[i].model, params.air_density));
  }
  for (double p : rec.power) rec.farm_power += p;
  return rec;
}

std::vector<Layout> generate_layouts(const LayoutSpec& spec) {
  spec.model.validate();
  if (spec.min_turbines < 1 || spec.min_turbines > spec.max_turbines)
    throw ConfigError("turbine_count_range must satisfy 1 <= min <= max");
  if (spec.min_spacing < 2.0 * spec.model.rotor_diameter)
    throw ConfigError("min_spacing must be at least two rotor diameters");
  if (!(spec.area > 0.0)) throw ConfigError("area must be positive");
  const double side = std::sqrt(spec.area);

  std::vector<Layout> layouts;
  layouts.reserve(spec.n_farms);
  for (std::size_t f = 0; f < spec.n_farms; ++f) {
    auto rng = stream(spec.seed, 0x1a70u, f);
    std::uniform_int_distribution<std::size_t> count(spec.min_turbines, spec.max_turbines);
    std::uniform_real_distribution<double> coord(0.0, side);
    const std::size_t n = count(rng);
    Layout layout;
    std::size_t attempts = 0;
    while (layout.size() < n) {
      if (attempts++ >= kPlacementBudget)
        throw InfeasibleLayout(f, "farm " + std::to_string(f) + ": could not place " + std::to_string(n) +
                                      " turbines within the placement budget");
      const Point p{coord(rng), coord(rng)};
      const bool clear = std::all_of(layout.begin(), layout.end(), [&](const Point& q) {
        return std::hypot(p.x - q.x, p.y - q.y) >= spec.min_spacing;
      });
      if (clear) layout.push_back(p);
    }
    layouts.push_back(std::move(layout));
  }
  return layouts;
}

void SimulationConfig::validate() const {
  layout.model.validate();
  if (conditions_per_layout == 0) throw ConfigError("conditions_per_layout must be >= 1");
  if (n_directions == 0) throw ConfigError("n_directions must be >= 1");
  if (!(ws_min <= ws_max)) throw ConfigError("ws_min must not exceed ws_max");
  if (ws_min < layout.model.cut_in || ws_max > layout.model.cut_out)
    throw ConfigError("wind speed range must lie within [cut_in, cut_out]");
  if (!(wake.decay > 0.0)) throw ConfigError("wake decay must be positive");
  if (!(wake.induction > 0.0 && wake.induction < 0.5)) throw ConfigError("induction must lie in (0, 0.5)");
  if (!(wake.air_density > 0.0)) throw ConfigError("air_density must be positive");
}

std::vector<LabelledScenario> simulate_dataset(const SimulationConfig& config) {
  config.validate();
  LayoutSpec spec = config.layout;
  spec.seed = config.seed;
  const std::vector<Layout> layouts = generate_layouts(spec);
  const std::size_t total = config.scenario_count();
  std::vector<LabelledScenario> out(total);

  auto build = [&](std::size_t i) {
    auto rng = stream(config.seed, 0x3b1du, i);
    std::uniform_real_distribution<double> speed(config.ws_min, config.ws_max);
    std::uniform_int_distribution<std::size_t> dir(0, config.n_directions - 1);
    FarmScenario s;
    s.id = i;
    s.wind_speed = speed(rng);
    s.wind_direction = static_cast<double>(dir(rng)) * 360.0 / static_cast<double>(config.n_directions);
    for (const Point& p : layouts[i / config.conditions_per_layout])
      s.turbines.push_back(Turbine{p.x, p.y, config.layout.model});
    out[i].record = simulate_scenario(s, config.wake);
    out[i].scenario = std::move(s);
  };

  std::size_t workers = config.threads ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(total, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < total; ++i) build(i);
    return out;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < total; i += workers) build(i);
    });
  pool.clear();
  return out;
}

SimulationConfig desk_config() {
  SimulationConfig c;
  c.layout.n_farms = 100;
  c.layout.min_turbines = 4;
  c.layout.max_turbines = 16;
  c.layout.area = 2500.0 * 2500.0;
  c.layout.min_spacing = 400.0;
  c.conditions_per_layout = 5;
  c.ws_min = 4.0;
  c.ws_max = 12.0;
  c.n_directions = 36;
  return c;
}

}  // namespace windgnn::wake
