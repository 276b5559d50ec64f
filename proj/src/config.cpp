// SPDX-License-Identifier: Apache-2.0
#include "windgnn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <toml.hpp>

#include "windgnn/errors.hpp"

namespace windgnn::config {

namespace {

using json = nlohmann::json;

// Reads fields out of one JSON object, remembering which keys were consumed so
// leftovers can be reported by their dotted path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("{}: expected a table", where()));
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    const std::string field = name(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(fmt::format("{}: expected a boolean", field));
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0))
        throw ConfigError(fmt::format("{}: expected a non-negative integer", field));
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(fmt::format("{}: expected a number", field));
      out = v.get<T>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported field type");
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    if (!j_.contains(key)) {
      seen_.insert(key);
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, name(key));
  }

  const json& raw() const { return j_; }
  void mark(const std::string& key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(fmt::format("{}: unknown field", name(k)));
  }

 private:
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = n.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = n.as_string()) return v->get();
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  throw ConfigError("dates and times are not valid configuration values");
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  simulation.seed = s;
  simulation.layout.seed = s;
  train.seed = s;
  model.seed = s;
}

train::TrainConfig RunConfig::train_for(model::Kind kind) const {
  train::TrainConfig c = train;
  if (auto it = overrides.find(kind); it != overrides.end()) {
    const TrainOverride& o = it->second;
    if (o.lr) c.lr = *o.lr;
    if (o.batch_size) c.batch_size = *o.batch_size;
    if (o.max_epochs) c.max_epochs = *o.max_epochs;
    if (o.patience) c.patience = *o.patience;
  }
  return c;
}

void RunConfig::validate() const {
  simulation.validate();
  if (!(neighbors.half_angle_deg > 0.0 && neighbors.half_angle_deg <= 180.0))
    throw ConfigError(fmt::format("graph.half_angle_deg: must lie in (0, 180], got {}", neighbors.half_angle_deg));
  if (neighbors.max_distance && !(*neighbors.max_distance > 0.0))
    throw ConfigError("graph.max_distance: must be positive");
  train.validate();
  for (model::Kind k : model::kAllKinds) {
    try {
      train_for(k).validate();
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("train.{}: {}", model::kind_name(k), e.what()));
    }
  }
  if (model.n_heads == 0) throw ConfigError("model.n_heads: must be at least 1");
  if (model.head_dim == 0) throw ConfigError("model.head_dim: must be at least 1");
  if (model.blstm_hidden == 0) throw ConfigError("model.blstm_hidden: must be at least 1");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  const auto& s = simulation;
  j["simulation"] = {{"n_farms", s.layout.n_farms},
                     {"min_turbines", s.layout.min_turbines},
                     {"max_turbines", s.layout.max_turbines},
                     {"area", s.layout.area},
                     {"min_spacing", s.layout.min_spacing},
                     {"conditions_per_layout", s.conditions_per_layout},
                     {"ws_min", s.ws_min},
                     {"ws_max", s.ws_max},
                     {"n_directions", s.n_directions},
                     {"threads", s.threads}};
  j["wake"] = {{"decay", s.wake.decay}, {"induction", s.wake.induction}, {"air_density", s.wake.air_density}};
  const auto& t = s.layout.model;
  j["turbine"] = {{"rotor_diameter", t.rotor_diameter}, {"power_coefficient", t.power_coefficient},
                  {"rated_power", t.rated_power},       {"cut_in", t.cut_in},
                  {"rated_speed", t.rated_speed},       {"cut_out", t.cut_out}};
  j["graph"] = {{"half_angle_deg", neighbors.half_angle_deg}};
  if (neighbors.max_distance) j["graph"]["max_distance"] = *neighbors.max_distance;
  auto& tr = j["train"];
  tr = {{"lr", train.lr},
        {"batch_size", train.batch_size},
        {"max_epochs", train.max_epochs},
        {"patience", train.patience},
        {"divergence_factor", train.divergence_factor}};
  for (const auto& [k, o] : overrides) {
    nlohmann::ordered_json oj = nlohmann::ordered_json::object();
    if (o.lr) oj["lr"] = *o.lr;
    if (o.batch_size) oj["batch_size"] = *o.batch_size;
    if (o.max_epochs) oj["max_epochs"] = *o.max_epochs;
    if (o.patience) oj["patience"] = *o.patience;
    tr[model::kind_name(k)] = oj;
  }
  j["model"] = {{"n_heads", model.n_heads}, {"head_dim", model.head_dim}, {"blstm_hidden", model.blstm_hidden}};
  return j;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  std::uint64_t seed = 0;
  root.get("seed", seed);
  {
    Section s = root.sub("simulation");
    auto& sim = c.simulation;
    s.get("n_farms", sim.layout.n_farms);
    s.get("min_turbines", sim.layout.min_turbines);
    s.get("max_turbines", sim.layout.max_turbines);
    s.get("area", sim.layout.area);
    s.get("min_spacing", sim.layout.min_spacing);
    s.get("conditions_per_layout", sim.conditions_per_layout);
    s.get("ws_min", sim.ws_min);
    s.get("ws_max", sim.ws_max);
    s.get("n_directions", sim.n_directions);
    s.get("threads", sim.threads);
    s.finish();
  }
  {
    Section s = root.sub("wake");
    s.get("decay", c.simulation.wake.decay);
    s.get("induction", c.simulation.wake.induction);
    s.get("air_density", c.simulation.wake.air_density);
    s.finish();
  }
  {
    Section s = root.sub("turbine");
    auto& t = c.simulation.layout.model;
    s.get("rotor_diameter", t.rotor_diameter);
    s.get("power_coefficient", t.power_coefficient);
    s.get("rated_power", t.rated_power);
    s.get("cut_in", t.cut_in);
    s.get("rated_speed", t.rated_speed);
    s.get("cut_out", t.cut_out);
    s.finish();
  }
  {
    Section s = root.sub("graph");
    s.get("half_angle_deg", c.neighbors.half_angle_deg);
    s.get("max_distance", c.neighbors.max_distance);
    s.finish();
  }
  {
    Section s = root.sub("train");
    s.get("lr", c.train.lr);
    s.get("batch_size", c.train.batch_size);
    s.get("max_epochs", c.train.max_epochs);
    s.get("patience", c.train.patience);
    s.get("divergence_factor", c.train.divergence_factor);
    for (model::Kind k : model::kAllKinds) {
      const char* name = model::kind_name(k);
      if (!s.has(name)) continue;
      Section o = s.sub(name);
      TrainOverride ov;
      o.get("lr", ov.lr);
      o.get("batch_size", ov.batch_size);
      o.get("max_epochs", ov.max_epochs);
      o.get("patience", ov.patience);
      o.finish();
      c.overrides[k] = ov;
    }
    s.finish();
  }
  {
    Section s = root.sub("model");
    s.get("n_heads", c.model.n_heads);
    s.get("head_dim", c.model.head_dim);
    s.get("blstm_hidden", c.model.blstm_hidden);
    s.finish();
  }
  root.finish();
  c.set_seed(seed);
  c.validate();
  return c;
}

RunConfig parse_toml(const std::string& text) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("TOML parse error at line {}: {}", e.source().begin.line, e.description()));
  }
  return from_json(toml_to_json(t));
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".json") {
    json j;
    try {
      j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ConfigError(fmt::format("JSON parse error in {}: {}", path.string(), e.what()));
    }
    return from_json(j);
  }
  return parse_toml(ss.str());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string config_hash(const RunConfig& c) { return sha256_hex(c.to_json().dump()); }

}  // namespace windgnn::config
