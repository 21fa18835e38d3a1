// Command-line entry points: dataset generation, corruption, training,
// evaluation, latency benchmarking, and the correlation/evolution studies.

#include "gssc/checkpoint.hpp"
#include "gssc/graph.hpp"
#include "gssc/rng.hpp"
#include "gssc/sparsifier.hpp"
#include "gssc/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

namespace {

constexpr const char* kToolVersion = "gssc 0.1.0";

using gssc::Graph;
using gssc::GsscError;
using gssc::TrainConfig;
using nlohmann::json;

int resolve_threads() {
  if (const char* env = std::getenv("GSSC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw GsscError("cannot write " + path.string());
  out << text;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct TrainCliFlags {
  CLI::App* cmd = nullptr;
  double lr_theta = 0, lr_psi = 0, weight_decay = 0, alpha = 0, tau = 0, margin = 0,
         dropout = 0;
  int epochs = 0, warmup = 0, layers = 0, hidden = 0, batch = 0, negatives = 0,
      inner_steps = 0;
  std::uint64_t seed = 0;
  std::string objective, optimizer;
  bool no_negatives = false, fixed_beta = false, include_neighbor_negatives = false,
       pseudo_true_labels = false, freeze_sparsifier = false;

  void attach(CLI::App* app) {
    cmd = app;
    app->add_option("--lr-theta", lr_theta, "backbone learning rate");
    app->add_option("--lr-psi", lr_psi, "sparsifier learning rate");
    app->add_option("--weight-decay", weight_decay, "L2 decay on theta");
    app->add_option("--epochs", epochs, "total epochs");
    app->add_option("--warmup", warmup, "warm-up epochs on the original graph");
    app->add_option("--layers", layers, "MLP depth");
    app->add_option("--hidden", hidden, "hidden width F");
    app->add_option("--batch", batch, "edge batch size B");
    app->add_option("--alpha", alpha, "fusion factor in [0,1]");
    app->add_option("--tau", tau, "Gumbel temperature");
    app->add_option("--negatives", negatives, "negatives per edge K");
    app->add_option("--margin", margin, "negative-distance clamp");
    app->add_option("--dropout", dropout, "dropout rate");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--objective", objective, "homophily|explicit-weight");
    app->add_option("--optimizer", optimizer, "adam|sgd");
    app->add_option("--inner-steps", inner_steps, "lower epochs per upper step");
    app->add_flag("--no-negatives", no_negatives, "drop the repulsion term");
    app->add_flag("--fixed-beta", fixed_beta, "pin the interpolation weight to 1");
    app->add_flag("--include-neighbor-negatives", include_neighbor_negatives,
                  "allow neighbors of the edge source as negatives");
    app->add_flag("--pseudo-true-labels", pseudo_true_labels,
                  "use train labels inside the homophily objective");
    app->add_flag("--freeze-sparsifier", freeze_sparsifier, "skip every upper step");
  }

  TrainConfig apply(TrainConfig cfg) const {
    auto set = [this](const char* name) { return cmd->count(name) > 0; };
    if (set("--lr-theta")) cfg.lr_theta = lr_theta;
    if (set("--lr-psi")) cfg.lr_psi = lr_psi;
    if (set("--weight-decay")) cfg.weight_decay = weight_decay;
    if (set("--epochs")) cfg.epochs = epochs;
    if (set("--warmup")) cfg.warmup_epochs = warmup;
    if (set("--layers")) cfg.layers = layers;
    if (set("--hidden")) cfg.hidden = hidden;
    if (set("--batch")) cfg.batch = batch;
    if (set("--alpha")) cfg.fusion_alpha = alpha;
    if (set("--tau")) cfg.temperature = tau;
    if (set("--negatives")) cfg.negatives = negatives;
    if (set("--margin")) cfg.margin = margin;
    if (set("--dropout")) cfg.dropout = dropout;
    if (set("--seed")) cfg.seed = seed;
    if (set("--objective")) {
      if (objective == "homophily") {
        cfg.objective = TrainConfig::Objective::Homophily;
      } else if (objective == "explicit-weight") {
        cfg.objective = TrainConfig::Objective::ExplicitWeight;
      } else {
        throw GsscError("--objective must be homophily or explicit-weight");
      }
    }
    if (set("--optimizer")) {
      if (optimizer == "adam") {
        cfg.optimizer = TrainConfig::OptimizerKind::Adam;
      } else if (optimizer == "sgd") {
        cfg.optimizer = TrainConfig::OptimizerKind::Sgd;
      } else {
        throw GsscError("--optimizer must be adam or sgd");
      }
    }
    if (set("--inner-steps")) cfg.inner_steps = inner_steps;
    if (no_negatives) cfg.no_negatives = true;
    if (fixed_beta) cfg.fixed_beta_one = true;
    if (include_neighbor_negatives) cfg.exclude_neighbor_negatives = false;
    if (pseudo_true_labels) cfg.pseudo_use_true_labels = true;
    if (freeze_sparsifier) cfg.freeze_sparsifier = true;
    return cfg;
  }
};

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GsscError("cannot read config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return gssc::config_from_json_text(text);
}

void write_metrics(const std::filesystem::path& path,
                   const std::vector<gssc::MetricsRecord>& history) {
  std::ofstream out(path);
  if (!out) throw GsscError("cannot write " + path.string());
  for (const auto& rec : history) out << gssc::metrics_to_json_line(rec) << '\n';
}

void run_training(const Graph& g, const TrainConfig& cfg,
                  const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir, bool dump_subgraph) {
  std::filesystem::create_directories(out_dir);

  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["dataset"]["path"] = data_dir.string();
  manifest["dataset"]["fingerprint"] = gssc::dataset_fingerprint(data_dir);
  manifest["config"] = json::parse(gssc::config_to_json_text(cfg));
  manifest["outputs"]["metrics"] = "metrics.jsonl";
  manifest["outputs"]["best_checkpoint"] = "best.ckpt";
  manifest["outputs"]["final_checkpoint"] = "final.ckpt";
  manifest["timestamp_utc"] = utc_timestamp();
  write_text(out_dir / "run_manifest.json", manifest.dump(2) + "\n");

  auto result = gssc::train(g, cfg);
  write_metrics(out_dir / "metrics.jsonl", result.history);
  gssc::save_checkpoint(out_dir / "best.ckpt", result.best_theta, result.best_psi, cfg);
  gssc::save_checkpoint(out_dir / "final.ckpt", result.theta, result.psi, cfg);
  if (dump_subgraph) {
    auto sub = gssc::sample_subgraph(g, result.psi,
                                     gssc::derive_seed(cfg.seed, "dump-subgraph"), nullptr);
    gssc::save_sparsified(g.edges, sub, out_dir / "sparsified.tsv");
  }

  json summary;
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_acc"] = result.best_val_acc;
  summary["best_test_acc"] = result.best_test_acc;
  summary["epochs"] = static_cast<int>(result.history.size());
  summary["degenerate_recoveries"] = result.degenerate_recoveries;
  std::cout << summary.dump() << '\n';
}

const std::vector<int>& split_by_name(const Graph& g, const std::string& name) {
  if (name == "train") return g.splits.train;
  if (name == "val") return g.splits.val;
  if (name == "test") return g.splits.test;
  throw GsscError("split must be train, val or test, got '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MLP node classification with learned graph sparsification"};
  app.require_subcommand(1);
  const int threads = resolve_threads();
  Eigen::setNbThreads(threads);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic planted-partition dataset");
  int gen_nodes = 1000, gen_classes = 5, gen_dim = 64;
  double gen_pin = 0.02, gen_pout = 0.002, gen_noise = 1.0;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--nodes", gen_nodes, "node count")->required();
  gen->add_option("--classes", gen_classes, "class count")->required();
  gen->add_option("--p-in", gen_pin, "intra-class edge probability")->required();
  gen->add_option("--p-out", gen_pout, "inter-class edge probability")->required();
  gen->add_option("--dim", gen_dim, "feature dimension")->required();
  gen->add_option("--feature-noise", gen_noise, "feature noise scale");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // corrupt
  auto* cor = app.add_subcommand("corrupt", "apply label or edge noise to a dataset");
  std::string cor_data, cor_out, cor_label_kind, cor_split = "half";
  double cor_ratio = -1.0;
  bool cor_edge_noise = false;
  std::uint64_t cor_seed = 1;
  cor->add_option("--data", cor_data, "input dataset directory")->required();
  cor->add_option("--out", cor_out, "output dataset directory")->required();
  cor->add_option("--label-noise", cor_label_kind, "sym|asym");
  cor->add_flag("--edge-noise", cor_edge_noise, "perturb edges instead of labels");
  cor->add_option("--ratio", cor_ratio, "noise ratio r in [0,1]")->required();
  cor->add_option("--edge-noise-split", cor_split,
                  "half: remove/add r|E|/2 each; each: remove and add r|E|");
  cor->add_option("--seed", cor_seed, "noise seed");

  // train
  auto* tr = app.add_subcommand("train", "run the full training loop");
  std::string tr_config, tr_data, tr_out;
  bool tr_dump_subgraph = false;
  tr->add_option("--config", tr_config, "JSON config file (flags override it)");
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "run output directory")->required();
  tr->add_flag("--dump-subgraph", tr_dump_subgraph,
               "write sparsified.tsv (src, dst, soft, hard) sampled from the final "
               "sparsifier");
  TrainCliFlags tr_flags;
  tr_flags.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_data, ev_split = "test";
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train|val|test");

  // bench
  auto* be = app.add_subcommand("bench", "measure full-graph inference latency");
  std::string be_ckpt, be_data;
  int be_repeats = 30;
  be->add_option("--ckpt", be_ckpt, "checkpoint file")->required();
  be->add_option("--data", be_data, "dataset directory")->required();
  be->add_option("--repeats", be_repeats, "timed repetitions");

  // study
  auto* study = app.add_subcommand("study", "experiment reproductions emitting CSV");
  study->require_subcommand(1);

  auto* corr = study->add_subcommand(
      "correlation", "accuracy vs homophily across an edge-removal ladder");
  std::string corr_data, corr_out, corr_config;
  int corr_rungs = 9;
  double corr_frac = 0.5;
  std::uint64_t corr_seed = 1;
  corr->add_option("--data", corr_data, "dataset directory")->required();
  corr->add_option("--out", corr_out, "output CSV path")->required();
  corr->add_option("--config", corr_config, "JSON config for the per-rung runs");
  corr->add_option("--rungs", corr_rungs, "ladder size (>= 2)");
  corr->add_option("--remove-frac", corr_frac, "edge fraction removed per rung");
  corr->add_option("--ladder-seed", corr_seed, "seed for the removal ladder");
  TrainCliFlags corr_flags;
  corr_flags.attach(corr);

  auto* evo = study->add_subcommand("evolution",
                                    "edge count / homophily / accuracy per epoch");
  std::string evo_data, evo_out, evo_config;
  evo->add_option("--data", evo_data, "dataset directory")->required();
  evo->add_option("--out", evo_out, "output CSV path")->required();
  evo->add_option("--config", evo_config, "JSON config for the run");
  TrainCliFlags evo_flags;  // includes --objective homophily|explicit-weight
  evo_flags.attach(evo);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Graph g = gssc::generate_sbm(gen_nodes, gen_classes, gen_pin, gen_pout, gen_dim,
                                   gen_noise, gen_seed);
      gssc::save_graph(g, gen_out);
      json prov;
      prov["command"] = "generate";
      prov["nodes"] = gen_nodes;
      prov["classes"] = gen_classes;
      prov["p_in"] = gen_pin;
      prov["p_out"] = gen_pout;
      prov["dim"] = gen_dim;
      prov["feature_noise"] = gen_noise;
      prov["seed"] = gen_seed;
      prov["tool_version"] = kToolVersion;
      write_text(std::filesystem::path(gen_out) / "provenance.json", prov.dump(2) + "\n");
      std::cout << json{{"out", gen_out},
                        {"edges", g.n_edges()},
                        {"homophily", gssc::homophily_ratio(g).value}}
                       .dump()
                << '\n';
    } else if (cor->parsed()) {
      if (cor_ratio < 0.0 || cor_ratio > 1.0) {
        throw GsscError("--ratio must be in [0,1], got " + std::to_string(cor_ratio));
      }
      if (cor_edge_noise == !cor_label_kind.empty()) {
        throw GsscError("choose exactly one of --label-noise sym|asym or --edge-noise");
      }
      Graph g = gssc::load_graph(cor_data);
      Graph out;
      json prov;
      if (cor_edge_noise) {
        gssc::EdgeNoiseSplit split;
        if (cor_split == "half") {
          split = gssc::EdgeNoiseSplit::Half;
        } else if (cor_split == "each") {
          split = gssc::EdgeNoiseSplit::Each;
        } else {
          throw GsscError("--edge-noise-split must be half or each");
        }
        out = gssc::perturb_edges(g, {gssc::NoiseKind::EdgePerturb, cor_ratio, cor_seed},
                                  split);
        prov["kind"] = "edge-perturb";
        prov["split"] = cor_split;
      } else {
        gssc::NoiseKind::Value kind;
        if (cor_label_kind == "sym") {
          kind = gssc::NoiseKind::LabelSymmetric;
        } else if (cor_label_kind == "asym") {
          kind = gssc::NoiseKind::LabelAsymmetric;
        } else {
          throw GsscError("--label-noise must be sym or asym");
        }
        out = gssc::inject_label_noise(g, {kind, cor_ratio, cor_seed});
        prov["kind"] = "label-" + cor_label_kind;
      }
      gssc::save_graph(out, cor_out);
      prov["command"] = "corrupt";
      prov["ratio"] = cor_ratio;
      prov["seed"] = cor_seed;
      prov["source_fingerprint"] = gssc::dataset_fingerprint(cor_data);
      prov["tool_version"] = kToolVersion;
      write_text(std::filesystem::path(cor_out) / "provenance.json", prov.dump(2) + "\n");
      std::cout << json{{"out", cor_out}, {"edges", out.n_edges()}}.dump() << '\n';
    } else if (tr->parsed()) {
      TrainConfig cfg = tr_config.empty() ? TrainConfig{} : load_config_file(tr_config);
      cfg = tr_flags.apply(cfg);
      cfg.threads = threads;
      cfg.validate();
      Graph g = gssc::load_graph(tr_data);
      run_training(g, cfg, tr_data, tr_out, tr_dump_subgraph);
    } else if (ev->parsed()) {
      auto ckpt = gssc::load_checkpoint(ev_ckpt);
      Graph g = gssc::load_graph(ev_data);
      const auto& split = split_by_name(g, ev_split);
      const double acc = gssc::evaluate(ckpt.theta, g, split);
      std::cout << json{{"split", ev_split},
                        {"accuracy", acc},
                        {"nodes", split.size()}}
                       .dump()
                << '\n';
    } else if (be->parsed()) {
      auto ckpt = gssc::load_checkpoint(be_ckpt);
      Graph g = gssc::load_graph(be_data);
      const auto stats = gssc::bench_latency(ckpt.theta, g, be_repeats);
      std::cout << json{{"mean_ms", stats.mean_ms},
                        {"stddev_ms", stats.stddev_ms},
                        {"repeats", stats.repeats}}
                       .dump()
                << '\n';
    } else if (corr->parsed()) {
      if (corr_rungs < 2) throw GsscError("--rungs must be >= 2");
      TrainConfig cfg;
      if (!corr_config.empty()) {
        cfg = load_config_file(corr_config);
      } else {
        // Per-rung runs train the self-contrasting network from scratch on the
        // candidate subgraph, warm-up only.
        cfg.epochs = 60;
        cfg.warmup_epochs = 60;
        cfg.hidden = 64;
        cfg.batch = 1024;
      }
      cfg = corr_flags.apply(cfg);
      cfg.threads = threads;
      cfg.validate();
      Graph g = gssc::load_graph(corr_data);
      std::ostringstream csv;
      csv << "bias,subgraph_homophily,test_accuracy\n";
      for (int r = 0; r < corr_rungs; ++r) {
        const double bias = -1.0 + 2.0 * r / (corr_rungs - 1);
        Graph sub = gssc::remove_edges_biased(g, corr_frac, bias,
                                              gssc::derive_seed(corr_seed, "ladder", r));
        const double h = gssc::homophily_ratio(sub).value;
        auto result = gssc::train(sub, cfg);
        csv << bias << ',' << h << ',' << result.best_test_acc << '\n';
        std::cerr << "rung " << r << ": homophily=" << h
                  << " test_acc=" << result.best_test_acc << '\n';
      }
      write_text(corr_out, csv.str());
      std::cout << json{{"out", corr_out}, {"rungs", corr_rungs}}.dump() << '\n';
    } else if (evo->parsed()) {
      TrainConfig cfg;
      if (!evo_config.empty()) cfg = load_config_file(evo_config);
      cfg = evo_flags.apply(cfg);
      cfg.threads = threads;
      cfg.validate();
      Graph g = gssc::load_graph(evo_data);
      auto result = gssc::train(g, cfg);
      std::ostringstream csv;
      csv << "epoch,hard_edge_count,hard_homophily_true,test_accuracy\n";
      for (const auto& rec : result.history) {
        csv << rec.epoch << ',' << rec.hard_edge_count << ',' << rec.hard_homophily_true
            << ',' << rec.test_acc << '\n';
      }
      write_text(evo_out, csv.str());
      std::cout << json{{"out", evo_out},
                        {"epochs", static_cast<int>(result.history.size())}}
                       .dump()
                << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
