// Bi-level training: warm-up on the original graph, then per epoch a fresh
// subgraph sample, a full lower-level pass over edge batches (theta), and an
// upper-level step on the sparsifier (psi) driven by the homophily objective
// or the explicit-weight ablation.
#pragma once

#include "gssc/contrast.hpp"
#include "gssc/graph.hpp"
#include "gssc/nn.hpp"
#include "gssc/sparsifier.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gssc {

struct TrainConfig {
  double lr_theta = 0.01;
  double lr_psi = 0.01;
  double weight_decay = 5e-4;
  int epochs = 200;
  int warmup_epochs = 100;
  int layers = 2;
  int hidden = 256;
  int batch = 512;
  double fusion_alpha = 0.1;
  double temperature = 0.5;
  int negatives = 5;
  double margin = 10.0;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  enum class Objective { Homophily, ExplicitWeight };
  Objective objective = Objective::Homophily;

  enum class OptimizerKind { Adam, Sgd };
  OptimizerKind optimizer = OptimizerKind::Adam;

  int inner_steps = 1;                    // lower epochs per upper step
  bool no_negatives = false;              // ablation: drop repulsion term
  bool fixed_beta_one = false;            // ablation: beta == 1
  bool exclude_neighbor_negatives = true;
  bool pseudo_use_true_labels = false;    // use train labels inside the objective
  bool freeze_sparsifier = false;         // no-sparsification ablation (with fusion_alpha=1)
  int threads = 1;

  // Throws GsscError enumerating every invalid field.
  void validate() const;
};

struct MetricsRecord {
  int epoch = 0;
  double loss_smooth = 0.0;
  double loss_cla = 0.0;
  long hard_edge_count = 0;
  double hard_homophily_pseudo = 0.0;
  double hard_homophily_true = 0.0;
  double soft_homophily_objective = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  int batches_without_labels = 0;
  bool used_fallback_edges = false;
  bool upper_backtracked = false;
};

struct TrainResult {
  BackboneState theta;
  SparsifierState psi;
  BackboneState best_theta;
  SparsifierState best_psi;
  int best_epoch = -1;
  double best_val_acc = 0.0;
  double best_test_acc = 0.0;
  std::vector<MetricsRecord> history;
  int degenerate_recoveries = 0;
};

enum class EdgeValueMode { StraightThrough, Relaxed };

// H = sum_e v_e * 1[s_i == s_j] / sum_e v_e over the full edge list, with v_e
// the straight-through (hard) or relaxed (soft) edge value and s the
// pseudo-labels argmax(Y). d_soft receives dH/d(soft_e) per edge; the
// indicator is treated as constant. Throws DegenerateSubgraphError when the
// denominator falls below 1e-8.
double homophily_objective(const Graph& g, const SparsifiedSubgraph& sub,
                           const Matrix& Y, EdgeValueMode mode,
                           std::vector<double>* d_soft = nullptr,
                           const std::vector<int>* pseudo_override = nullptr);

std::vector<int> pseudo_labels(const Matrix& Y);

// Flat tensor reference for the optimizer.
struct OptTensor {
  double* value = nullptr;
  const double* grad = nullptr;
  std::ptrdiff_t size = 0;
};

// Adam (default) or plain gradient descent with classic L2 weight decay
// (decay added to the gradient before the moment updates). Copyable, so
// callers can snapshot state for backtracking.
class Optimizer {
 public:
  Optimizer(TrainConfig::OptimizerKind kind, double lr, double weight_decay);
  void step(std::span<const OptTensor> tensors);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  TrainConfig::OptimizerKind kind_;
  double lr_;
  double weight_decay_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

class Trainer {
 public:
  Trainer(const Graph& g, TrainConfig cfg);

  // One full pass of edge batches over the kept edges of `sub`, updating
  // theta. Aborts with a diagnostic on a non-finite loss.
  LossReport lower_step(const SparsifiedSubgraph& sub, int epoch);

  // One upper-level update of psi from the epoch's subgraph sample. In
  // homophily mode ascends H with a single backtracking retry at lr/10 when
  // the relaxed objective decreased; in explicit-weight mode descends the
  // weighted smoothness loss. H_eval/pseudo come from the post-lower-step
  // eval pass; sample_seed is the seed the subgraph was drawn with. Returns
  // true if a backtrack happened.
  bool upper_step(const SparsifiedSubgraph& sub, const SparsifierCache& cache,
                  const Matrix& h_eval, const std::vector<int>& pseudo,
                  std::uint64_t sample_seed, int epoch);

  TrainResult run();

  BackboneState& theta() { return theta_; }
  SparsifierState& psi() { return psi_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  const Graph& g_;
  TrainConfig cfg_;
  BackboneState theta_;
  SparsifierState psi_;
  Optimizer opt_theta_;
  Optimizer opt_psi_;
  int epoch_batches_without_labels_ = 0;

  friend TrainResult train(const Graph& g, const TrainConfig& cfg);
};

TrainResult train(const Graph& g, const TrainConfig& cfg);

// Fraction of split nodes whose argmax f-head prediction matches the label.
// Structure-free: uses only the eval-mode MLP forward pass.
double evaluate(const BackboneState& theta, const Graph& g,
                std::span<const int> split);

struct LatencyStats {
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  int repeats = 0;
};

// Wall-clock statistics over full-graph inference passes; a few warm-up
// passes are excluded.
LatencyStats bench_latency(const BackboneState& theta, const Graph& g, int repeats);

std::string metrics_to_json_line(const MetricsRecord& m);

}  // namespace gssc
