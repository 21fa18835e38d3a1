// End-to-end checks of the command-line tool: file formats, determinism,
// exit codes, and the bookkeeping between train/eval outputs.
#include "doctest.h"

#include "gssc/graph.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using gssc::Graph;
using gssc::test::TempDir;
using nlohmann::json;

namespace {

#ifndef GSSC_CLI_PATH
#error "GSSC_CLI_PATH must point at the gssc binary"
#endif

struct CliResult {
  int exit_code;
  std::string stdout_text;
};

CliResult run_cli(const std::string& args) {
  static int call_id = 0;
  const std::string out_file =
      (std::filesystem::temp_directory_path() /
       ("gssc-cli-stdout-" + std::to_string(getpid()) + "-" + std::to_string(call_id++) +
        ".txt"))
          .string();
  const std::string cmd =
      std::string(GSSC_CLI_PATH) + " " + args + " > " + out_file + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::filesystem::remove(out_file);
  return {WEXITSTATUS(rc), text};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generate produces a loadable, reproducible dataset") {
  TempDir dir("cli-gen");
  const auto d1 = dir.path() / "a";
  const auto d2 = dir.path() / "b";
  const std::string flags =
      "generate --nodes 100 --classes 5 --p-in 0.2 --p-out 0.02 --dim 8 "
      "--feature-noise 0.5 --seed 3 --out ";
  CHECK(run_cli(flags + d1.string()).exit_code == 0);
  CHECK(run_cli(flags + d2.string()).exit_code == 0);

  Graph g = gssc::load_graph(d1);  // validates every invariant
  CHECK(g.n_nodes == 100);
  CHECK(g.n_classes == 5);

  SUBCASE("same flags and seed give byte-identical files") {
    for (const char* name : {"nodes.tsv", "edges.tsv", "splits.json", "provenance.json"}) {
      CHECK(slurp(d1 / name) == slurp(d2 / name));
    }
  }
  SUBCASE("p_out = 0 gives homophily exactly 1") {
    const auto d3 = dir.path() / "c";
    CHECK(run_cli("generate --nodes 50 --classes 5 --p-in 0.3 --p-out 0.0 --dim 8 "
                  "--seed 1 --out " +
                  d3.string())
              .exit_code == 0);
    CHECK(gssc::homophily_ratio(gssc::load_graph(d3)).value == 1.0);
  }
}

TEST_CASE("corrupt transforms without touching its input") {
  TempDir dir("cli-corrupt");
  const auto src = dir.path() / "src";
  run_cli("generate --nodes 80 --classes 4 --p-in 0.3 --p-out 0.05 --dim 8 --seed 2 --out " +
          src.string());
  const std::string before_nodes = slurp(src / "nodes.tsv");
  const std::string before_edges = slurp(src / "edges.tsv");

  SUBCASE("asymmetric ratio 1 shifts every train label by one") {
    const auto dst = dir.path() / "asym";
    CHECK(run_cli("corrupt --data " + src.string() + " --out " + dst.string() +
                  " --label-noise asym --ratio 1.0 --seed 5")
              .exit_code == 0);
    Graph g = gssc::load_graph(src);
    Graph noisy = gssc::load_graph(dst);
    for (int v : g.splits.train) CHECK(noisy.labels[v] == (g.labels[v] + 1) % 4);
    for (int v : g.splits.test) CHECK(noisy.labels[v] == g.labels[v]);
  }
  SUBCASE("edge noise preserves the edge count under the half split") {
    const auto dst = dir.path() / "edges";
    CHECK(run_cli("corrupt --data " + src.string() + " --out " + dst.string() +
                  " --edge-noise --ratio 0.3 --seed 5")
              .exit_code == 0);
    Graph g = gssc::load_graph(src);
    Graph noisy = gssc::load_graph(dst);
    CHECK(noisy.n_edges() == g.n_edges());
    std::size_t removed = 0;
    for (const auto& e : g.edges) {
      removed += !std::binary_search(noisy.edges.begin(), noisy.edges.end(), e);
    }
    CHECK(removed == g.n_edges() * 3 / 10 / 2);
  }
  SUBCASE("out-of-range ratio is a usage error with nonzero exit") {
    const auto dst = dir.path() / "bad";
    CHECK(run_cli("corrupt --data " + src.string() + " --out " + dst.string() +
                  " --edge-noise --ratio 1.5")
              .exit_code != 0);
    CHECK_FALSE(std::filesystem::exists(dst));
  }
  CHECK(slurp(src / "nodes.tsv") == before_nodes);
  CHECK(slurp(src / "edges.tsv") == before_edges);
}

TEST_CASE("train smoke run emits manifest, metrics and checkpoints quickly") {
  TempDir dir("cli-train");
  const auto data = dir.path() / "data";
  run_cli("generate --nodes 20 --classes 2 --p-in 0.4 --p-out 0.1 --dim 4 --seed 4 --out " +
          data.string());
  const auto run = dir.path() / "run";
  const auto t0 = std::chrono::steady_clock::now();
  auto res = run_cli("train --data " + data.string() + " --out " + run.string() +
                     " --epochs 1 --warmup 1 --hidden 8 --batch 16 --seed 1");
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
  CHECK(res.exit_code == 0);
  CHECK(elapsed.count() < 5.0);

  CHECK(std::filesystem::exists(run / "run_manifest.json"));
  CHECK(std::filesystem::exists(run / "best.ckpt"));
  CHECK(std::filesystem::exists(run / "final.ckpt"));
  std::ifstream metrics(run / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) ++lines;
  CHECK(lines == 1);

  SUBCASE("manifest records the dataset fingerprint") {
    json manifest = json::parse(slurp(run / "run_manifest.json"));
    CHECK(manifest["dataset"]["fingerprint"] == gssc::dataset_fingerprint(data));
    CHECK(manifest["config"]["epochs"] == 1);
  }
}

TEST_CASE("eval on best.ckpt equals the logged best-val-epoch test accuracy") {
  TempDir dir("cli-eval");
  const auto data = dir.path() / "data";
  run_cli("generate --nodes 60 --classes 3 --p-in 0.3 --p-out 0.05 --dim 6 --seed 6 --out " +
          data.string());
  const auto run = dir.path() / "run";
  REQUIRE(run_cli("train --data " + data.string() + " --out " + run.string() +
                  " --epochs 6 --warmup 3 --hidden 8 --batch 32 --seed 2")
              .exit_code == 0);

  double best_val = -1.0;
  double best_test = 0.0;
  std::ifstream metrics(run / "metrics.jsonl");
  std::string line;
  while (std::getline(metrics, line)) {
    json rec = json::parse(line);
    if (rec["val_acc"].get<double>() > best_val) {
      best_val = rec["val_acc"].get<double>();
      best_test = rec["test_acc"].get<double>();
    }
  }
  auto res = run_cli("eval --ckpt " + (run / "best.ckpt").string() + " --data " +
                     data.string() + " --split test");
  CHECK(res.exit_code == 0);
  json out = json::parse(res.stdout_text);
  CHECK(out["accuracy"].get<double>() == doctest::Approx(best_test).epsilon(1e-12));
}

TEST_CASE("bench with one repeat reports zero stddev") {
  TempDir dir("cli-bench");
  const auto data = dir.path() / "data";
  run_cli("generate --nodes 30 --classes 3 --p-in 0.3 --p-out 0.05 --dim 6 --seed 8 --out " +
          data.string());
  const auto run = dir.path() / "run";
  REQUIRE(run_cli("train --data " + data.string() + " --out " + run.string() +
                  " --epochs 1 --warmup 1 --hidden 8 --batch 16 --seed 3")
              .exit_code == 0);
  auto res = run_cli("bench --ckpt " + (run / "best.ckpt").string() + " --data " +
                     data.string() + " --repeats 1");
  CHECK(res.exit_code == 0);
  json out = json::parse(res.stdout_text);
  CHECK(out["stddev_ms"].get<double>() == 0.0);
  CHECK(out["repeats"] == 1);
}

TEST_CASE("train is byte-deterministic given config, data and seed") {
  TempDir dir("cli-det");
  const auto data = dir.path() / "data";
  run_cli("generate --nodes 40 --classes 4 --p-in 0.4 --p-out 0.05 --dim 6 --seed 9 --out " +
          data.string());
  const auto r1 = dir.path() / "r1";
  const auto r2 = dir.path() / "r2";
  const std::string flags = " --epochs 5 --warmup 2 --hidden 8 --batch 32 --seed 11";
  REQUIRE(run_cli("train --data " + data.string() + " --out " + r1.string() + flags)
              .exit_code == 0);
  REQUIRE(run_cli("train --data " + data.string() + " --out " + r2.string() + flags)
              .exit_code == 0);
  CHECK(slurp(r1 / "metrics.jsonl") == slurp(r2 / "metrics.jsonl"));
  CHECK(slurp(r1 / "best.ckpt") == slurp(r2 / "best.ckpt"));
}

TEST_CASE("config file keys are validated and overridden by flags") {
  TempDir dir("cli-config");
  const auto data = dir.path() / "data";
  run_cli("generate --nodes 20 --classes 2 --p-in 0.4 --p-out 0.1 --dim 4 --seed 4 --out " +
          data.string());
  const auto cfg_path = dir.path() / "cfg.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"epochs": 2, "warmup_epochs": 2, "hidden": 8, "batch": 16})";
  }
  const auto run = dir.path() / "run";
  auto res = run_cli("train --config " + cfg_path.string() + " --data " + data.string() +
                     " --out " + run.string() + " --epochs 1 --warmup 1 --seed 1");
  CHECK(res.exit_code == 0);
  json manifest = json::parse(slurp(run / "run_manifest.json"));
  CHECK(manifest["config"]["epochs"] == 1);  // flag wins
  CHECK(manifest["config"]["hidden"] == 8);  // file value survives

  SUBCASE("unknown config keys are hard errors") {
    {
      std::ofstream out(cfg_path);
      out << R"({"epochz": 2})";
    }
    CHECK(run_cli("train --config " + cfg_path.string() + " --data " + data.string() +
                  " --out " + (dir.path() / "run2").string())
              .exit_code != 0);
  }
}

TEST_CASE("train --dump-subgraph writes the per-edge sample table") {
  TempDir dir("cli-dump");
  const auto data = dir.path() / "data";
  run_cli("generate --nodes 40 --classes 4 --p-in 0.4 --p-out 0.05 --dim 6 --seed 9 --out " +
          data.string());
  const auto run = dir.path() / "run";
  REQUIRE(run_cli("train --data " + data.string() + " --out " + run.string() +
                  " --epochs 4 --warmup 2 --hidden 8 --batch 32 --seed 1 --dump-subgraph")
              .exit_code == 0);
  Graph g = gssc::load_graph(data);
  std::ifstream in(run / "sparsified.tsv");
  REQUIRE(in.good());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    int src = -1;
    int dst = -1;
    double soft = -1.0;
    int hard = -1;
    ss >> src >> dst >> soft >> hard;
    CHECK(src < dst);
    CHECK(soft > 0.0);
    CHECK(soft < 1.0);
    CHECK((hard == 0 || hard == 1));
    ++rows;
  }
  CHECK(rows == g.n_edges());
}

TEST_CASE("study evolution emits the three per-epoch curves") {
  TempDir dir("cli-evo");
  const auto data = dir.path() / "data";
  run_cli("generate --nodes 60 --classes 3 --p-in 0.3 --p-out 0.05 --dim 6 --seed 6 --out " +
          data.string());
  const auto csv = dir.path() / "evo.csv";
  auto res = run_cli("study evolution --data " + data.string() + " --out " + csv.string() +
                     " --objective homophily --epochs 4 --warmup 2 --hidden 8 --batch 64"
                     " --seed 1");
  CHECK(res.exit_code == 0);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,hard_edge_count,hard_homophily_true,test_accuracy");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}
