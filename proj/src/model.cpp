// SPDX-License-Identifier: Apache-2.0
#include "windgnn/model.hpp"

#include <algorithm>
#include <fstream>

#include "windgnn/baselines.hpp"
#include "windgnn/errors.hpp"
#include "windgnn/param_io.hpp"

namespace windgnn::model {

namespace {

struct KindInfo {
  Kind kind;
  const char* cli;
  const char* table;
};

constexpr KindInfo kKinds[] = {
    {Kind::bs_farm, "bs-farm", "BS_Farm"}, {Kind::bs_turb, "bs-turb", "BS_Turb"},
    {Kind::mlp, "mlp", "MLP"},             {Kind::blstm, "blstm", "BLSTM"},
    {Kind::o_graph, "o-graph", "O-Graph"}, {Kind::n_graph, "n-graph", "N-Graph"},
    {Kind::f_graph, "f-graph", "F-Graph"},
};

// Scenarios per forward pass when predicting.
constexpr std::size_t kPredictChunk = 32;

Tensor column(const std::vector<double>& v) { return Tensor::column(v); }

std::vector<const graph::UpstreamSequence*> sequences_of(const PreparedData& data,
                                                         std::span<const Sample> batch) {
  std::vector<const graph::UpstreamSequence*> out;
  out.reserve(batch.size());
  for (const Sample& s : batch) out.push_back(&data.scenarios.at(s.scenario).sequences.at(s.turbine));
  return out;
}

Tensor turbine_targets(const PreparedData& data, std::span<const Sample> batch) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const Sample& s : batch) y.push_back(data.scenarios[s.scenario].turbine_target.at(s.turbine));
  return column(y);
}

/// Turbine-unit models share the prediction loop: predict every turbine of a
/// chunk of scenarios at once, then regroup per scenario.
class TurbineModel : public Model {
 public:
  using Model::Model;

  std::vector<Prediction> predict(const PreparedData& data,
                                  std::span<const std::size_t> scenarios) const override {
    std::vector<Prediction> out;
    for (std::size_t start = 0; start < scenarios.size(); start += kPredictChunk) {
      const auto chunk = scenarios.subspan(start, std::min(kPredictChunk, scenarios.size() - start));
      const std::vector<Sample> batch = samples(Unit::turbine, data, chunk);
      ad::Tape tape;
      const Tensor p = forward(tape, data, batch).value();
      std::size_t row = 0;
      for (std::size_t sid : chunk) {
        Prediction pred;
        std::vector<double> t(data.scenarios[sid].turbine_target.size());
        for (double& v : t) v = p[row++];
        if (sums_to_farm()) pred.farm = data.farm_from_turbines(t);
        pred.turbine = std::move(t);
        out.push_back(std::move(pred));
      }
    }
    return out;
  }

  ad::Var loss(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const override {
    return ad::mse(forward(tape, data, batch), tape.constant(turbine_targets(data, batch)));
  }

 protected:
  virtual ad::Var forward(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const = 0;
  virtual bool sums_to_farm() const { return true; }
};

class BlstmWrapper final : public TurbineModel {
 public:
  BlstmWrapper(const baselines::BlstmConfig& c, std::uint64_t seed)
      : TurbineModel(Kind::blstm, seed), net_(c, seed) {}

  std::vector<ad::Parameter*> parameters() override { return net_.parameters(); }
  nlohmann::ordered_json config_json() const override {
    return {{"hidden", net_.config().hidden}, {"head_widths", net_.config().head_widths}};
  }

 protected:
  ad::Var forward(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const override {
    const auto seqs = sequences_of(data, batch);
    return net_.forward(tape, baselines::SequenceBatch::from(seqs));
  }

 private:
  baselines::BlstmModel net_;
};

class PaddedMlpWrapper final : public TurbineModel {
 public:
  PaddedMlpWrapper(const baselines::PaddedMlpConfig& c, std::uint64_t seed)
      : TurbineModel(Kind::mlp, seed), net_(c, seed) {}

  std::vector<ad::Parameter*> parameters() override { return net_.parameters(); }
  nlohmann::ordered_json config_json() const override {
    return {{"max_neighbors", net_.config().max_neighbors}, {"widths", net_.config().widths}};
  }

 protected:
  ad::Var forward(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const override {
    const auto seqs = sequences_of(data, batch);
    std::vector<std::string> labels;
    for (const Sample& s : batch)
      labels.push_back("scenario " + std::to_string(data.scenarios[s.scenario].id) + " turbine " +
                       std::to_string(s.turbine));
    return net_.forward(tape, baselines::PaddedMlpModel::pad(seqs, net_.config().max_neighbors, labels));
  }

 private:
  baselines::PaddedMlpModel net_;
};

class TurbineBaseline final : public TurbineModel {
 public:
  TurbineBaseline(const baselines::BaselineConfig& c, std::uint64_t seed)
      : TurbineModel(Kind::bs_turb, seed), net_(c, seed) {}

  std::vector<ad::Parameter*> parameters() override { return net_.parameters(); }
  nlohmann::ordered_json config_json() const override { return {{"widths", net_.config().widths}}; }

 protected:
  ad::Var forward(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const override {
    Tensor x = Tensor::zeros(batch.size(), 2);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const PreparedScenario& s = data.scenarios[batch[r].scenario];
      x(r, 0) = s.turbine_count;
      x(r, 1) = s.wind_speed;
    }
    return net_.forward(tape, x);
  }
  bool sums_to_farm() const override { return false; }

 private:
  baselines::BaselineModel net_;
};

class FarmBaseline final : public Model {
 public:
  FarmBaseline(const baselines::BaselineConfig& c, std::uint64_t seed)
      : Model(Kind::bs_farm, seed), net_(c, seed) {}

  std::vector<ad::Parameter*> parameters() override { return net_.parameters(); }
  nlohmann::ordered_json config_json() const override { return {{"widths", net_.config().widths}}; }

  ad::Var loss(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const override {
    std::vector<std::size_t> ids;
    std::vector<double> y;
    for (const Sample& s : batch) {
      ids.push_back(s.scenario);
      y.push_back(data.scenarios[s.scenario].farm_target);
    }
    return ad::mse(forward(tape, data, ids), tape.constant(column(y)));
  }

  std::vector<Prediction> predict(const PreparedData& data,
                                  std::span<const std::size_t> scenarios) const override {
    ad::Tape tape;
    const Tensor p = forward(tape, data, scenarios).value();
    std::vector<Prediction> out(scenarios.size());
    for (std::size_t k = 0; k < scenarios.size(); ++k) out[k].farm = p[k];
    return out;
  }

 private:
  ad::Var forward(ad::Tape& tape, const PreparedData& data, std::span<const std::size_t> ids) const {
    Tensor x = Tensor::zeros(ids.size(), 2);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      x(r, 0) = data.scenarios[ids[r]].turbine_count;
      x(r, 1) = data.scenarios[ids[r]].wind_speed;
    }
    return net_.forward(tape, x);
  }

  baselines::BaselineModel net_;
};

class GraphModel final : public Model {
 public:
  GraphModel(Kind kind, const gnn::NetworkConfig& c, std::uint64_t seed)
      : Model(kind, seed), net_(c, seed) {}

  std::vector<ad::Parameter*> parameters() override { return net_.parameters(); }
  nlohmann::ordered_json config_json() const override { return {{"network", net_.config().to_json()}}; }
  const gnn::Network& network() const { return net_; }

  ad::Var loss(ad::Tape& tape, const PreparedData& data, std::span<const Sample> batch) const override {
    std::vector<const graph::WindGraph*> graphs;
    std::vector<double> node_y, farm_y;
    for (const Sample& s : batch) {
      const PreparedScenario& p = data.scenarios[s.scenario];
      graphs.push_back(&p.graph);
      node_y.insert(node_y.end(), p.turbine_target.begin(), p.turbine_target.end());
      farm_y.push_back(p.farm_target);
    }
    const gnn::NetworkOutput out = net_.forward(tape, gnn::GraphBatch::from_graphs(graphs));
    return ad::add(ad::mse(out.node, tape.constant(column(node_y))),
                   ad::mse(out.global, tape.constant(column(farm_y))));
  }

  std::vector<Prediction> predict(const PreparedData& data,
                                  std::span<const std::size_t> scenarios) const override {
    std::vector<Prediction> out;
    for (std::size_t start = 0; start < scenarios.size(); start += kPredictChunk) {
      const auto chunk = scenarios.subspan(start, std::min(kPredictChunk, scenarios.size() - start));
      std::vector<const graph::WindGraph*> graphs;
      for (std::size_t sid : chunk) graphs.push_back(&data.scenarios.at(sid).graph);
      ad::Tape tape;
      const gnn::NetworkOutput o = net_.forward(tape, gnn::GraphBatch::from_graphs(graphs));
      std::size_t row = 0;
      for (std::size_t k = 0; k < chunk.size(); ++k) {
        Prediction p;
        std::vector<double> t(graphs[k]->node_count());
        for (double& v : t) v = o.node.value()[row++];
        p.turbine = std::move(t);
        p.farm = o.global.value()[k];
        out.push_back(std::move(p));
      }
    }
    return out;
  }

 private:
  gnn::Network net_;
};

std::vector<std::size_t> widths_from(const nlohmann::json& j, const char* key) {
  return j.at(key).get<std::vector<std::size_t>>();
}

}  // namespace

const char* kind_name(Kind k) { return kKinds[static_cast<std::size_t>(k)].cli; }
const char* display_name(Kind k) { return kKinds[static_cast<std::size_t>(k)].table; }

std::optional<Kind> parse_kind(std::string_view name) {
  for (const KindInfo& k : kKinds)
    if (name == k.cli) return k.kind;
  return std::nullopt;
}

std::string valid_kind_list() {
  std::string out;
  for (const KindInfo& k : kKinds) {
    if (!out.empty()) out += ", ";
    out += k.cli;
  }
  return out;
}

bool is_graph(Kind k) { return k == Kind::o_graph || k == Kind::n_graph || k == Kind::f_graph; }

Unit unit_of(Kind k) { return is_graph(k) || k == Kind::bs_farm ? Unit::scenario : Unit::turbine; }

double PreparedData::farm_from_turbines(std::span<const double> turbine_scaled) const {
  double total = 0.0;
  for (double p : turbine_scaled) total += stats.unscale(data::feature::kTurbinePower, p);
  return stats.scale(data::feature::kFarmPower, total);
}

PreparedData prepare(std::span<const wake::LabelledScenario> records, const data::SplitResult& split,
                     const PrepareOptions& options) {
  PreparedData out;
  out.stats = split.stats;
  out.split = split.split;
  const graph::GraphOptions go{options.neighbors, &out.stats};
  graph::SequenceOptions so;
  so.neighbors = options.neighbors;
  so.order = options.order;
  so.stats = &out.stats;
  out.scenarios.reserve(records.size());
  for (const wake::LabelledScenario& r : records) {
    PreparedScenario p;
    p.id = r.scenario.id;
    p.graph = graph::build_graph(r.scenario, go, &r.record);
    p.sequences = graph::build_upstream_sequences(r.scenario, so);
    p.turbine_target = p.graph.node_targets;
    p.farm_target = p.graph.global_target.value();
    p.turbine_count = out.stats.scale(data::feature::kTurbineCount, double(r.scenario.turbines.size()));
    p.wind_speed = out.stats.scale(data::feature::kWindSpeed, r.scenario.wind_speed);
    out.scenarios.push_back(std::move(p));
  }
  for (std::size_t i : out.split.train)
    for (const auto& s : out.scenarios.at(i).sequences) out.max_neighbors = std::max(out.max_neighbors, s.size());
  return out;
}

std::vector<Sample> samples(Unit unit, const PreparedData& data, std::span<const std::size_t> scenarios) {
  std::vector<Sample> out;
  for (std::size_t sid : scenarios) {
    if (unit == Unit::scenario) {
      out.push_back({sid, 0});
      continue;
    }
    for (std::size_t t = 0; t < data.scenarios.at(sid).turbine_target.size(); ++t) out.push_back({sid, t});
  }
  return out;
}

const gnn::Network* network_of(const Model& m) {
  const auto* g = dynamic_cast<const GraphModel*>(&m);
  return g ? &g->network() : nullptr;
}

std::unique_ptr<Model> make_model(Kind kind, const ModelOptions& o) {
  switch (kind) {
    case Kind::bs_farm:
      return std::make_unique<FarmBaseline>(baselines::BaselineConfig{baselines::BaselineTarget::farm}, o.seed);
    case Kind::bs_turb:
      return std::make_unique<TurbineBaseline>(baselines::BaselineConfig{baselines::BaselineTarget::turbine},
                                               o.seed);
    case Kind::mlp: {
      baselines::PaddedMlpConfig c;
      c.max_neighbors = o.max_neighbors;
      return std::make_unique<PaddedMlpWrapper>(c, o.seed);
    }
    case Kind::blstm: {
      baselines::BlstmConfig c;
      c.hidden = o.blstm_hidden;
      return std::make_unique<BlstmWrapper>(c, o.seed);
    }
    case Kind::o_graph:
    case Kind::n_graph:
    case Kind::f_graph: {
      const gnn::Variant v = kind == Kind::o_graph   ? gnn::Variant::o_graph
                             : kind == Kind::n_graph ? gnn::Variant::n_graph
                                                     : gnn::Variant::f_graph;
      return std::make_unique<GraphModel>(kind, o.network.value_or(gnn::preset(v, o.n_heads, o.head_dim)),
                                          o.seed);
    }
  }
  throw ConfigError("unknown model kind");
}

std::unique_ptr<Model> make_model(const nlohmann::json& manifest) {
  try {
    const std::string name = manifest.at("kind").get<std::string>();
    const auto kind = parse_kind(name);
    if (!kind) throw DataError("checkpoint: unknown model kind '" + name + "'");
    const std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();
    const nlohmann::json& c = manifest.at("config");
    switch (*kind) {
      case Kind::bs_farm:
        return std::make_unique<FarmBaseline>(
            baselines::BaselineConfig{baselines::BaselineTarget::farm, widths_from(c, "widths")}, seed);
      case Kind::bs_turb:
        return std::make_unique<TurbineBaseline>(
            baselines::BaselineConfig{baselines::BaselineTarget::turbine, widths_from(c, "widths")}, seed);
      case Kind::mlp:
        return std::make_unique<PaddedMlpWrapper>(
            baselines::PaddedMlpConfig{c.at("max_neighbors").get<std::size_t>(), widths_from(c, "widths")}, seed);
      case Kind::blstm:
        return std::make_unique<BlstmWrapper>(
            baselines::BlstmConfig{c.at("hidden").get<std::size_t>(), widths_from(c, "head_widths")}, seed);
      default:
        return std::make_unique<GraphModel>(*kind, gnn::NetworkConfig::from_json(c.at("network")), seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& dir, Model& model, const data::NormStats& stats,
                     const nlohmann::ordered_json& extra) {
  std::filesystem::create_directories(dir);
  const auto params = model.parameters();
  std::vector<const ad::Parameter*> cparams(params.begin(), params.end());
  nlohmann::ordered_json m;
  m["format"] = kCheckpointFormat;
  m["kind"] = kind_name(model.kind());
  m["seed"] = model.seed();
  m["config"] = model.config_json();
  m["norm_stats"] = stats.to_json();
  m["parameters"] = io::write_tensor_blob(dir / "params.bin", cparams);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  os << m.dump(2) << '\n';
  if (!os) throw DataError("cannot write " + (dir / "manifest.json").string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is) throw DataError("no checkpoint manifest in " + dir.string());
  LoadedCheckpoint out;
  try {
    out.manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint manifest: " + std::string(e.what()));
  }
  if (out.manifest.value("format", "") != kCheckpointFormat)
    throw DataError("checkpoint manifest: unsupported format in " + dir.string());
  out.model = make_model(out.manifest);
  const auto params = out.model->parameters();
  io::read_tensor_blob(dir / "params.bin", out.manifest.at("parameters"), params);
  out.stats = data::NormStats::from_json(out.manifest.at("norm_stats"));
  return out;
}

}  // namespace windgnn::model
