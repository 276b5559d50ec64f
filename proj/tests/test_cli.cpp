// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "cli.hpp"
#include "windgnn/evaluate.hpp"

namespace fs = std::filesystem;
using windgnn::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch() {
  static const fs::path root = [] {
    auto p = fs::temp_directory_path() / "windgnn_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// 10 layouts x 5 conditions; small enough to train every model for an epoch.
fs::path small_config() {
  const fs::path p = scratch() / "small.toml";
  if (!fs::exists(p)) {
    std::ofstream(p) << "seed = 11\n[simulation]\nn_farms = 10\n[train]\nlr = 1e-3\n"
                        "[model]\nn_heads = 3\nhead_dim = 8\n";
  }
  return p;
}

fs::path small_dataset() {
  const fs::path d = scratch() / "data";
  if (!fs::exists(d / "manifest.json")) {
    const auto r = cli({"simulate", "--config", small_config().string(), "--out", d.string()});
    EXPECT_EQ(r.code, 0) << r.err;
  }
  return d;
}

fs::path trained(const std::string& kind) {
  const fs::path out = scratch() / ("ck_" + kind);
  if (!fs::exists(out / "manifest.json")) {
    const auto r = cli({"train", kind, "--dataset", small_dataset().string(), "--epochs", "1", "--out", out.string()});
    EXPECT_EQ(r.code, 0) << r.err;
  }
  return out;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, windgnn::cli::kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, windgnn::cli::kExitUsage);
  EXPECT_EQ(cli({"simulate", "--config", (scratch() / "missing.toml").string()}).code, windgnn::cli::kExitUsage);
  const auto r = cli({"train", "gcn", "--dataset", small_dataset().string()});
  EXPECT_EQ(r.code, windgnn::cli::kExitUsage);
  EXPECT_NE(r.err.find("f-graph"), std::string::npos);
  EXPECT_EQ(cli({"train", "--dataset", small_dataset().string()}).code, windgnn::cli::kExitUsage);
}

TEST(Cli, InvalidConfigNamesField) {
  const fs::path p = scratch() / "bad.toml";
  std::ofstream(p) << "[simulation]\nn_farm = 3\n";
  auto r = cli({"simulate", "--config", p.string(), "--out", (scratch() / "bad").string()});
  EXPECT_EQ(r.code, windgnn::cli::kExitUsage);
  EXPECT_NE(r.err.find("simulation.n_farm"), std::string::npos);
  std::ofstream(p) << "[train]\nlr = -1.0\n";
  r = cli({"simulate", "--config", p.string(), "--out", (scratch() / "bad").string()});
  EXPECT_EQ(r.code, windgnn::cli::kExitUsage);
  EXPECT_NE(r.err.find("lr"), std::string::npos);
}

TEST(Cli, JsonConfigIsAccepted) {
  const fs::path p = scratch() / "small.json";
  std::ofstream(p) << R"({"seed": 11, "simulation": {"n_farms": 10}, "train": {"lr": 1e-3},
                          "model": {"n_heads": 3, "head_dim": 8}})";
  const auto r = cli({"simulate", "--config", p.string(), "--out", (scratch() / "json_data").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  small_dataset();
  EXPECT_EQ(slurp(scratch() / "json_data" / "manifest.json"), slurp(small_dataset() / "manifest.json"));
}

TEST(Cli, DeskSimulateIsByteIdentical) {
  const auto a = cli({"simulate", "--config", "configs/desk.toml", "--seed", "7", "--out", (scratch() / "desk_a").string()});
  const auto b = cli({"simulate", "--config", "configs/desk.toml", "--seed", "7", "--out", (scratch() / "desk_b").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(a.out.find("500 scenarios"), std::string::npos);
  EXPECT_NE(a.out.find("turbine power values"), std::string::npos);
  for (const char* f : {"dataset.jsonl", "norm_stats.json", "splits.json", "manifest.json"})
    EXPECT_EQ(slurp(scratch() / "desk_a" / f), slurp(scratch() / "desk_b" / f)) << f;
  const auto m = nlohmann::json::parse(slurp(scratch() / "desk_a" / "manifest.json"));
  EXPECT_EQ(m.at("dataset").at("scenarios"), 500);
  const auto s = nlohmann::json::parse(slurp(scratch() / "desk_a" / "splits.json"));
  EXPECT_EQ(s.at("config_hash"), m.at("config_hash"));
}

TEST(Cli, TamperedDatasetIsDataError) {
  const fs::path d = scratch() / "tampered";
  ASSERT_EQ(cli({"simulate", "--config", small_config().string(), "--out", d.string()}).code, 0);
  std::ofstream(d / "dataset.jsonl", std::ios::app) << "\n";
  EXPECT_EQ(cli({"train", "bs-turb", "--dataset", d.string(), "--epochs", "1"}).code, windgnn::cli::kExitData);
  EXPECT_EQ(cli({"train", "bs-turb", "--dataset", (scratch() / "nowhere").string()}).code,
            windgnn::cli::kExitData);
}

TEST(Cli, TrainPresetsShowAttentionFlags) {
  auto flags = [](const std::string& kind) {
    const auto m = nlohmann::json::parse(slurp(trained(kind) / "manifest.json"));
    std::map<std::string, bool> out;
    for (const auto& [k, v] : m.at("config").at("network").at("blocks").at(0).at("attention").items())
      out[k] = v.get<bool>();
    return out;
  };
  const auto o = flags("o-graph"), n = flags("n-graph"), f = flags("f-graph");
  ASSERT_EQ(f.size(), 5u);
  for (const auto& [site, on] : f) {
    EXPECT_TRUE(on) << site;
    EXPECT_FALSE(o.at(site)) << site;
    EXPECT_EQ(n.at(site), site == "e2v" || site == "node") << site;
  }
  EXPECT_TRUE(fs::exists(trained("f-graph") / "history.json"));
  EXPECT_TRUE(fs::exists(trained("f-graph") / "optimizer.bin"));
}

TEST(Cli, TrainFirstEpochLossIsReproducible) {
  auto first_loss = [](const std::string& dir) {
    const auto h = nlohmann::json::parse(slurp(fs::path(dir) / "history.json"));
    return h.at("history").at(0).at("train_loss").get<double>();
  };
  for (const std::string kind : {"f-graph", "blstm"}) {
    const std::string a = (scratch() / ("rep_a_" + kind)).string(), b = (scratch() / ("rep_b_" + kind)).string();
    ASSERT_EQ(cli({"train", kind, "--dataset", small_dataset().string(), "--epochs", "1", "--seed", "3", "--out", a}).code, 0);
    ASSERT_EQ(cli({"train", kind, "--dataset", small_dataset().string(), "--epochs", "1", "--seed", "3", "--out", b}).code, 0);
    EXPECT_EQ(first_loss(a), first_loss(b)) << kind;
    EXPECT_EQ(slurp(fs::path(a) / "params.bin"), slurp(fs::path(b) / "params.bin")) << kind;
  }
}

TEST(Cli, DivergenceExitsWithNumericFailure) {
  const fs::path p = scratch() / "hot.toml";
  std::ofstream(p) << "seed = 11\n[simulation]\nn_farms = 10\n[train]\nlr = 1e3\n";
  const auto r = cli({"train", "bs-turb", "--dataset", small_dataset().string(), "--config", p.string(),
                      "--epochs", "20", "--out", (scratch() / "hot").string()});
  EXPECT_EQ(r.code, windgnn::cli::kExitNumeric) << r.out << r.err;
}

TEST(Cli, CompareSevenRows) {
  std::vector<std::string> args{"compare", "--dataset", small_dataset().string(), "--out", (scratch() / "cmp").string()};
  for (const char* k : {"bs-farm", "bs-turb", "mlp", "blstm", "o-graph", "n-graph", "f-graph"})
    args.push_back(trained(k).string());
  const auto r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.find("absent"), std::string::npos);
  EXPECT_NE(r.out.find("three-in-line"), std::string::npos);
  const std::string csv = slurp(scratch() / "cmp" / "metrics.csv");
  const auto rep = windgnn::eval::EvalReport::from_csv(csv);
  EXPECT_EQ(rep.to_csv(), csv);
  ASSERT_EQ(rep.rows.size(), 7u);
  for (const auto& row : rep.rows) EXPECT_TRUE(row.present);
  EXPECT_FALSE(rep.row(windgnn::model::Kind::bs_farm).mae_turbine);
  EXPECT_FALSE(rep.row(windgnn::model::Kind::bs_turb).mae_farm);
  // BS_Farm's turbine column is a dash in the table.
  std::istringstream lines(r.out);
  std::string line;
  bool seen = false;
  while (std::getline(lines, line))
    if (line.rfind("BS_Farm", 0) == 0) {
      seen = true;
      std::istringstream cols(line);
      std::string name, turbine;
      cols >> name >> turbine;
      EXPECT_EQ(turbine, "-");
    }
  EXPECT_TRUE(seen);
  // Missing checkpoints leave rows absent.
  const auto partial = cli({"compare", "--dataset", small_dataset().string(), trained("mlp").string()});
  EXPECT_EQ(partial.code, 0);
  EXPECT_NE(partial.out.find("absent"), std::string::npos);
  EXPECT_EQ(cli({"compare", "--dataset", small_dataset().string(), (scratch() / "nope").string()}).code,
            windgnn::cli::kExitData);
}

TEST(Cli, AttentionExportPanels) {
  const fs::path out = scratch() / "attn";
  const auto r = cli({"attn-export", trained("f-graph").string(), "--dataset", small_dataset().string(), "--out",
                      out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t svgs = 0;
  fs::path json_path;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() == ".svg") {
      ++svgs;
      boost::property_tree::ptree tree;
      EXPECT_NO_THROW(boost::property_tree::read_xml(e.path().string(), tree)) << e.path();
      EXPECT_EQ(tree.count("svg"), 1u);
    } else if (e.path().extension() == ".json") {
      json_path = e.path();
    }
  }
  EXPECT_EQ(svgs, 9u);
  const auto j = nlohmann::json::parse(slurp(json_path));
  std::size_t global_families = 0;
  for (const auto& fam : j.at("families")) {
    std::map<std::size_t, double> sums;
    const auto recv = fam.at("receiver").get<std::vector<std::size_t>>();
    const auto w = fam.at("weight").get<std::vector<double>>();
    for (std::size_t i = 0; i < w.size(); ++i) sums[recv[i]] += w[i];
    for (const auto& [_, s] : sums) EXPECT_NEAR(s, 1.0, 1e-9);
    global_families += !fam.at("plotted").get<bool>();
  }
  EXPECT_EQ(global_families, 6u);  // e2u and v2u, three heads each

  const auto none = cli({"attn-export", trained("o-graph").string(), "--dataset", small_dataset().string(),
                         "--out", (scratch() / "attn_o").string()});
  EXPECT_EQ(none.code, windgnn::cli::kExitData);
  EXPECT_NE(none.err.find("no attention"), std::string::npos);
}
