// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "windgnn/attention_export.hpp"
#include "windgnn/config.hpp"
#include "windgnn/dataset.hpp"
#include "windgnn/errors.hpp"
#include "windgnn/evaluate.hpp"
#include "windgnn/model.hpp"
#include "windgnn/train.hpp"

#ifndef WINDGNN_VERSION
#define WINDGNN_VERSION "0.0.0"
#endif

namespace windgnn::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kTool = "windgnn";

struct UsageError : Error {
  using Error::Error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read {}", p.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", p.string()));
  out << bytes;
  if (!out) throw DataError(fmt::format("failed writing {}", p.string()));
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", p.string(), e.what()));
  }
}

config::RunConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw UsageError(fmt::format("config file {} does not exist", path));
  return config::load(path);
}

model::Kind parse_kind(const std::string& name) {
  if (auto k = model::parse_kind(name)) return *k;
  throw UsageError(fmt::format("unknown model kind '{}'; valid kinds: {}", name, model::valid_kind_list()));
}

// --- dataset directory --------------------------------------------------------

struct Dataset {
  fs::path dir;
  nlohmann::json manifest;
  config::RunConfig config;
  std::vector<wake::LabelledScenario> records;
  data::SplitResult split;
};

std::vector<std::size_t> index_list(const nlohmann::json& j, const char* key, std::size_t n) {
  std::vector<std::size_t> out = j.at(key).get<std::vector<std::size_t>>();
  for (std::size_t i : out)
    if (i >= n) throw DataError(fmt::format("splits.json: {} index {} out of range ({} scenarios)", key, i, n));
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(fmt::format("dataset directory {} does not exist", dir.string()));
  Dataset d;
  d.dir = dir;
  d.manifest = read_json(dir / "manifest.json");
  try {
    d.config = config::from_json(d.manifest.at("config"));
    const std::string bytes = read_file(dir / "dataset.jsonl");
    if (config::sha256_hex(bytes) != d.manifest.at("dataset").at("sha256").get<std::string>())
      throw DataError(fmt::format("{}: contents do not match the manifest hash", (dir / "dataset.jsonl").string()));
    d.records = data::read_jsonl(dir / "dataset.jsonl", d.config.simulation.layout.model);
    const auto splits = read_json(dir / "splits.json");
    d.split.split.train = index_list(splits, "train", d.records.size());
    d.split.split.val = index_list(splits, "val", d.records.size());
    d.split.split.test = index_list(splits, "test", d.records.size());
    d.split.stats = data::NormStats::from_json(read_json(dir / "norm_stats.json").at("stats"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("dataset {}: {}", dir.string(), e.what()));
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("dataset {} manifest: {}", dir.string(), e.what()));
  }
  return d;
}

model::PreparedData prepare(const Dataset& d, const config::RunConfig& c) {
  model::PrepareOptions po;
  po.neighbors = c.neighbors;
  return model::prepare(d.records, d.split, po);
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : "-"; }

// --- simulate -------------------------------------------------------------------

int cmd_simulate(const std::optional<std::string>& config_path, const std::optional<std::uint64_t>& seed,
                 const fs::path& out_dir, std::ostream& out) {
  config::RunConfig c = config_path ? load_config(*config_path) : config::RunConfig{};
  if (seed) c.set_seed(*seed);
  c.validate();
  const std::string hash = config::config_hash(c);

  const auto records = wake::simulate_dataset(c.simulation);
  const auto split = data::normalize_and_split(records, c.seed);
  std::size_t turbines = 0;
  for (const auto& r : records) turbines += r.scenario.turbines.size();

  fs::create_directories(out_dir);
  data::write_jsonl(out_dir / "dataset.jsonl", records);
  const std::string dataset_hash = config::sha256_hex(read_file(out_dir / "dataset.jsonl"));

  ojson stats;
  stats["config_hash"] = hash;
  stats["stats"] = split.stats.to_json();
  write_file(out_dir / "norm_stats.json", stats.dump(2) + "\n");

  ojson splits;
  splits["config_hash"] = hash;
  splits["seed"] = c.seed;
  splits["train"] = split.split.train;
  splits["val"] = split.split.val;
  splits["test"] = split.split.test;
  write_file(out_dir / "splits.json", splits.dump(2) + "\n");

  ojson m;
  m["tool"] = kTool;
  m["version"] = WINDGNN_VERSION;
  m["command"] = "simulate";
  m["config_hash"] = hash;
  m["seed"] = c.seed;
  m["config"] = c.to_json();
  m["dataset"] = {{"path", "dataset.jsonl"},
                  {"sha256", dataset_hash},
                  {"scenarios", records.size()},
                  {"turbine_values", turbines}};
  write_file(out_dir / "manifest.json", m.dump(2) + "\n");

  out << fmt::format("{} scenarios, {} turbine power values (train {}, val {}, test {})\n", records.size(),
                     turbines, split.split.train.size(), split.split.val.size(), split.split.test.size());
  out << fmt::format("wrote {} (config {})\n", out_dir.string(), hash.substr(0, 12));
  return kExitOk;
}

// --- train --------------------------------------------------------------------------

int cmd_train(const std::string& kind_name, const fs::path& dataset_dir, const std::optional<std::string>& config_path,
              const std::optional<std::uint64_t>& seed, const std::optional<std::size_t>& epochs,
              const std::optional<fs::path>& out_opt, std::ostream& out) {
  const model::Kind kind = parse_kind(kind_name);
  const Dataset d = load_dataset(dataset_dir);
  config::RunConfig c = config_path ? load_config(*config_path) : d.config;
  if (seed) c.set_seed(*seed);
  train::TrainConfig tc = c.train_for(kind);
  if (epochs) {
    if (*epochs == 0) throw UsageError("--epochs must be at least 1");
    tc.max_epochs = *epochs;
  }
  tc.validate();
  const fs::path out_dir = out_opt ? *out_opt : fs::path("runs") / model::kind_name(kind);

  const model::PreparedData data = prepare(d, c);
  model::ModelOptions mo = c.model;
  mo.max_neighbors = data.max_neighbors;
  auto m = model::make_model(kind, mo);

  out << fmt::format("training {} on {} train / {} val scenarios, lr {}, up to {} epochs\n",
                     model::display_name(kind), data.split.train.size(), data.split.val.size(), tc.lr,
                     tc.max_epochs);
  tc.on_epoch = [&out](const train::EpochRecord& r) {
    if (r.epoch == 1)
      out << fmt::format("epoch 1 train loss {:.17g} val MAE {:.6f}\n", r.train_loss, r.val_mae);
    else if (r.epoch % 10 == 0)
      out << fmt::format("epoch {} train loss {:.6g} val MAE {:.6f}\n", r.epoch, r.train_loss, r.val_mae);
    out.flush();
  };
  train::Trainer trainer(*m, data, tc);
  const train::TrainResult result = trainer.run();
  const eval::Metrics test = eval::evaluate_split(*m, data, data.split.test);

  ojson extra;
  extra["run"] = {{"tool", kTool},
                  {"version", WINDGNN_VERSION},
                  {"config_hash", config::config_hash(c)},
                  {"dataset", fs::absolute(dataset_dir).lexically_normal().string()},
                  {"dataset_sha256", d.manifest.at("dataset").at("sha256")},
                  {"dataset_config_hash", d.manifest.at("config_hash")}};
  extra["train"] = result.to_json();
  extra["test"] = {{"mae_turbine", test.turbine_mae ? ojson(*test.turbine_mae) : ojson(nullptr)},
                   {"mae_farm", test.farm_mae ? ojson(*test.farm_mae) : ojson(nullptr)}};
  trainer.save(out_dir, extra);
  ojson history = result.to_json();
  history["config_hash"] = config::config_hash(c);
  write_file(out_dir / "history.json", history.dump(2) + "\n");

  out << fmt::format("best epoch {} of {} (val MAE {:.6f}){}\n", result.best_epoch, result.history.size(),
                     result.best_val_mae, result.early_stopped ? ", early stopped" : "");
  out << fmt::format("test MAE turbine {} farm {}\n", fmt_opt(test.turbine_mae), fmt_opt(test.farm_mae));
  out << fmt::format("checkpoint written to {}\n", out_dir.string());
  return kExitOk;
}

// --- compare ------------------------------------------------------------------------

int cmd_compare(const fs::path& dataset_dir, const std::vector<std::string>& checkpoints,
                const std::optional<fs::path>& out_dir, std::ostream& out) {
  const Dataset d = load_dataset(dataset_dir);
  const model::PreparedData data = prepare(d, d.config);

  std::map<model::Kind, model::LoadedCheckpoint> loaded;
  std::vector<std::pair<model::Kind, eval::Entry>> entries;
  for (const std::string& path : checkpoints) {
    model::LoadedCheckpoint ck = model::load_checkpoint(path);
    const model::Kind k = ck.model->kind();
    if (loaded.count(k)) throw UsageError(fmt::format("two checkpoints for {}", model::kind_name(k)));
    if (!(ck.stats == data.stats))
      throw DataError(fmt::format("checkpoint {} was trained with different normalization than {}", path,
                                  dataset_dir.string()));
    loaded.emplace(k, std::move(ck));
  }
  for (auto& [k, ck] : loaded) {
    eval::Entry e{ck.model.get(), 0, 0.0};
    if (ck.manifest.contains("train")) {
      e.epochs = ck.manifest["train"].at("history").size();
      e.wall_seconds = ck.manifest["train"].at("seconds").get<double>();
    }
    entries.emplace_back(k, e);
  }
  const eval::EvalReport report = eval::evaluate(entries, data, data.split.test);

  std::string text = report.to_table();
  if (auto it = loaded.find(model::Kind::f_graph); it != loaded.end())
    text += "F-Graph three-in-line check: " +
            viz::inline_e2v_check(*it->second.model, data.stats, d.config.neighbors).summary() + "\n";
  out << text;
  if (out_dir) {
    write_file(*out_dir / "metrics.csv", report.to_csv());
    write_file(*out_dir / "report.txt",
               fmt::format("dataset {} (config {})\n", dataset_dir.string(),
                           d.manifest.at("config_hash").get<std::string>()) +
                   text);
    out << fmt::format("wrote {}\n", (*out_dir / "metrics.csv").string());
  }
  return kExitOk;
}

// --- attn-export ------------------------------------------------------------------

int cmd_attn_export(const fs::path& checkpoint, const fs::path& dataset_dir, const std::optional<std::size_t>& scenario,
                    const std::optional<fs::path>& out_opt, std::ostream& out) {
  const Dataset d = load_dataset(dataset_dir);
  const model::LoadedCheckpoint ck = model::load_checkpoint(checkpoint);
  const model::PreparedData data = prepare(d, d.config);
  if (!(ck.stats == data.stats))
    throw DataError(fmt::format("checkpoint {} was trained with different normalization than {}",
                                checkpoint.string(), dataset_dir.string()));

  const std::size_t id = scenario ? *scenario : data.split.test.front();
  const auto it = std::find_if(d.records.begin(), d.records.end(),
                               [&](const wake::LabelledScenario& r) { return r.scenario.id == id; });
  if (it == d.records.end()) throw DataError(fmt::format("scenario {} not found in {}", id, dataset_dir.string()));
  const model::PreparedScenario& prepared = data.scenarios.at(std::size_t(it - d.records.begin()));

  const viz::AttentionExport ex = viz::extract_attention(*ck.model, it->scenario, prepared.graph,
                                                         viz::default_target(prepared.graph));
  const fs::path out_dir = out_opt ? *out_opt : fs::path("attention");
  std::size_t panels = 0;
  for (const gnn::AttentionFamily* f : ex.panel_families()) {
    const fs::path p = out_dir / fmt::format("scenario{}_block{}_{}_head{}.svg", id, f->block,
                                             gnn::site_name(f->site), f->head);
    write_file(p, viz::render_panel(ex, *f));
    ++panels;
  }
  ojson j = ex.to_json();
  j["checkpoint"] = checkpoint.string();
  j["dataset_config_hash"] = d.manifest.at("config_hash");
  write_file(out_dir / fmt::format("scenario{}_attention.json", id), j.dump(2) + "\n");
  out << fmt::format("{} panels for scenario {} (target turbine {}, {} attention families) in {}\n", panels, id,
                     ex.target, ex.weights.families.size(), out_dir.string());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wind farm power prediction with attention graph networks", kTool};
  app.require_subcommand(1);
  app.set_version_flag("--version", WINDGNN_VERSION);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, scenario;
  std::optional<fs::path> out_dir;
  std::string dataset, kind;
  std::vector<std::string> checkpoints;
  std::string checkpoint;

  auto* sim = app.add_subcommand("simulate", "Generate a labelled scenario dataset");
  sim->add_option("--config", config_path, "TOML or JSON run config (desk defaults when omitted)");
  sim->add_option("--seed", seed, "Seed for layouts, wind draws and the split");
  sim->add_option("--out", out_dir, "Output directory (default: data)");

  auto* tr = app.add_subcommand("train", "Train one model on a simulated dataset");
  tr->add_option("kind", kind, "Model kind: " + model::valid_kind_list());
  tr->add_option("--model", kind, "Model kind (alternative to the positional argument)");
  tr->add_option("--dataset", dataset, "Dataset directory written by simulate")->required();
  tr->add_option("--config", config_path, "Run config; defaults to the dataset's own");
  tr->add_option("--seed", seed, "Seed for initialisation and shuffling");
  tr->add_option("--epochs", epochs, "Maximum number of epochs");
  tr->add_option("--out", out_dir, "Checkpoint directory (default: runs/<kind>)");

  auto* cmp = app.add_subcommand("compare", "Evaluate checkpoints on the test split");
  cmp->add_option("--dataset", dataset, "Dataset directory written by simulate")->required();
  cmp->add_option("checkpoints", checkpoints, "Checkpoint directories")->required();
  cmp->add_option("--out", out_dir, "Directory for metrics.csv and report.txt");

  auto* ax = app.add_subcommand("attn-export", "Write attention panels (SVG) and weights (JSON)");
  ax->add_option("checkpoint", checkpoint, "Checkpoint directory of a graph model with attention")->required();
  ax->add_option("--dataset", dataset, "Dataset directory written by simulate")->required();
  ax->add_option("--scenario", scenario, "Scenario id (default: first test scenario)");
  ax->add_option("--out", out_dir, "Output directory (default: attention)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, seed, out_dir.value_or("data"), out);
    if (tr->parsed()) {
      if (kind.empty()) throw UsageError("train needs a model kind; valid kinds: " + model::valid_kind_list());
      return cmd_train(kind, dataset, config_path, seed, epochs, out_dir, out);
    }
    if (cmp->parsed()) return cmd_compare(dataset, checkpoints, out_dir, out);
    if (ax->parsed()) return cmd_attn_export(checkpoint, dataset, scenario, out_dir, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace windgnn::cli
