#include "gssc/trainer.hpp"

#include "gssc/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gssc {

using nlohmann::json;

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (lr_theta < 0.0) bad.push_back("lr_theta must be >= 0");
  if (lr_psi < 0.0) bad.push_back("lr_psi must be >= 0");
  if (weight_decay < 0.0) bad.push_back("weight_decay must be >= 0");
  if (epochs < 1) bad.push_back("epochs must be >= 1");
  if (warmup_epochs < 0) bad.push_back("warmup_epochs must be >= 0");
  if (warmup_epochs > epochs) bad.push_back("warmup_epochs must be <= epochs");
  if (layers < 1) bad.push_back("layers must be >= 1");
  if (hidden < 1) bad.push_back("hidden must be >= 1");
  if (batch < 1) bad.push_back("batch must be >= 1");
  if (fusion_alpha < 0.0 || fusion_alpha > 1.0) bad.push_back("fusion_alpha must be in [0,1]");
  if (temperature <= 0.0) bad.push_back("temperature must be > 0");
  if (!no_negatives && negatives < 1) bad.push_back("negatives must be >= 1");
  if (margin <= 0.0) bad.push_back("margin must be > 0 (use +inf to disable)");
  if (dropout < 0.0 || dropout >= 1.0) bad.push_back("dropout must be in [0,1)");
  if (inner_steps < 1) bad.push_back("inner_steps must be >= 1");
  if (threads < 1) bad.push_back("threads must be >= 1");
  if (!bad.empty()) {
    std::string msg = "invalid TrainConfig:";
    for (const auto& b : bad) msg += "\n  - " + b;
    throw GsscError(msg);
  }
}

std::vector<int> pseudo_labels(const Matrix& Y) {
  std::vector<int> s(static_cast<std::size_t>(Y.rows()));
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    Eigen::Index arg = 0;
    Y.row(i).maxCoeff(&arg);
    s[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return s;
}

double homophily_objective(const Graph& g, const SparsifiedSubgraph& sub,
                           const Matrix& Y, EdgeValueMode mode,
                           std::vector<double>* d_soft,
                           const std::vector<int>* pseudo_override) {
  std::vector<int> computed;
  const std::vector<int>* s = pseudo_override;
  if (!s) {
    computed = pseudo_labels(Y);
    s = &computed;
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const double v = mode == EdgeValueMode::StraightThrough
                         ? static_cast<double>(sub.hard[e])
                         : sub.soft[e];
    den += v;
    const auto& [u, w] = g.edges[e];
    if ((*s)[static_cast<std::size_t>(u)] == (*s)[static_cast<std::size_t>(w)]) num += v;
  }
  if (den < 1e-8) {
    throw DegenerateSubgraphError("homophily_objective: degenerate subgraph");
  }
  const double h = num / den;
  if (d_soft) {
    d_soft->assign(g.edges.size(), 0.0);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const auto& [u, w] = g.edges[e];
      const double ind =
          (*s)[static_cast<std::size_t>(u)] == (*s)[static_cast<std::size_t>(w)] ? 1.0 : 0.0;
      (*d_soft)[e] = (ind - h) / den;
    }
  }
  return h;
}

Optimizer::Optimizer(TrainConfig::OptimizerKind kind, double lr, double weight_decay)
    : kind_(kind), lr_(lr), weight_decay_(weight_decay) {}

void Optimizer::step(std::span<const OptTensor> tensors) {
  if (kind_ == TrainConfig::OptimizerKind::Sgd) {
    for (const auto& t : tensors) {
      for (std::ptrdiff_t i = 0; i < t.size; ++i) {
        t.value[i] -= lr_ * (t.grad[i] + weight_decay_ * t.value[i]);
      }
    }
    return;
  }
  constexpr double b1 = 0.9;
  constexpr double b2 = 0.999;
  constexpr double eps = 1e-8;
  if (m_.empty()) {
    for (const auto& t : tensors) {
      m_.emplace_back(static_cast<std::size_t>(t.size), 0.0);
      v_.emplace_back(static_cast<std::size_t>(t.size), 0.0);
    }
  }
  if (m_.size() != tensors.size()) throw GsscError("Optimizer: tensor list changed shape");
  ++t_;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto& t = tensors[k];
    if (static_cast<std::ptrdiff_t>(m_[k].size()) != t.size) {
      throw GsscError("Optimizer: tensor size changed between steps");
    }
    for (std::ptrdiff_t i = 0; i < t.size; ++i) {
      const double grad = t.grad[i] + weight_decay_ * t.value[i];
      auto& m = m_[k][static_cast<std::size_t>(i)];
      auto& v = v_[k][static_cast<std::size_t>(i)];
      m = b1 * m + (1.0 - b1) * grad;
      v = b2 * v + (1.0 - b2) * grad * grad;
      t.value[i] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps);
    }
  }
}

namespace {

std::vector<OptTensor> theta_tensors(BackboneState& st, const BackboneGrads& g) {
  std::vector<OptTensor> out;
  for (std::size_t l = 0; l < st.layer_weights.size(); ++l) {
    out.push_back({st.layer_weights[l].data(), g.layer_weights[l].data(),
                   st.layer_weights[l].size()});
  }
  for (std::size_t l = 0; l < st.bn.size(); ++l) {
    out.push_back({st.bn[l].gamma.data(), g.bn_gamma[l].data(), st.bn[l].gamma.size()});
    out.push_back({st.bn[l].beta.data(), g.bn_beta[l].data(), st.bn[l].beta.size()});
  }
  out.push_back({st.head_f.data(), g.head_f.data(), st.head_f.size()});
  out.push_back({st.head_g.data(), g.head_g.data(), st.head_g.size()});
  out.push_back({st.interp_a.data(), g.interp_a.data(), st.interp_a.size()});
  return out;
}

SparsifiedSubgraph all_kept_subgraph(std::size_t n_edges) {
  SparsifiedSubgraph sub;
  sub.soft.assign(n_edges, 1.0 - 1e-12);
  sub.hard.assign(n_edges, 1);
  return sub;
}

std::vector<std::pair<int, int>> kept_edge_pairs(const Graph& g,
                                                 const SparsifiedSubgraph& sub) {
  std::vector<std::pair<int, int>> out;
  out.reserve(sub.hard_count());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (sub.hard[e]) out.push_back(g.edges[e]);
  }
  return out;
}

}  // namespace

Trainer::Trainer(const Graph& g, TrainConfig cfg)
    : g_(g),
      cfg_(cfg),
      theta_(BackboneState::init(g.n_features, cfg.hidden,
                                 g.n_classes, cfg.layers, cfg.dropout, cfg.seed)),
      psi_(SparsifierState::init(g.n_features, cfg.hidden, cfg.fusion_alpha,
                                 cfg.temperature, cfg.seed)),
      opt_theta_(cfg.optimizer, cfg.lr_theta, cfg.weight_decay),
      opt_psi_(cfg.optimizer, cfg.lr_psi, 0.0) {
  cfg_.validate();
  if (g.splits.train.empty()) throw GsscError("Trainer: train split is empty");
  theta_.mode = Mode::Train;
}

LossReport Trainer::lower_step(const SparsifiedSubgraph& sub, int epoch) {
  auto kept = sub.kept_indices();
  if (kept.empty()) throw DegenerateSubgraphError("lower_step: no kept edges");

  Rng shuffle_rng(derive_seed(cfg_.seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = kept.size(); i > 1; --i) {
    const std::size_t j = shuffle_rng.uniform_int(i);
    std::swap(kept[i - 1], kept[j]);
  }

  ContrastOptions copts;
  copts.margin = cfg_.margin;
  copts.no_negatives = cfg_.no_negatives;
  copts.fixed_beta_one = cfg_.fixed_beta_one;
  BatchSamplerOptions bopts;
  bopts.exclude_neighbors = cfg_.exclude_neighbor_negatives;
  if (cfg_.no_negatives) bopts.no_negatives_k = 0;

  BackboneGrads grads = BackboneGrads::zeros_like(theta_);
  double smooth_sum = 0.0;
  double cla_sum = 0.0;
  int n_batches = 0;
  const std::size_t bsz = static_cast<std::size_t>(cfg_.batch);
  for (std::size_t start = 0; start < kept.size(); start += bsz) {
    const std::size_t end = std::min(kept.size(), start + bsz);
    EdgeBatch batch;
    batch.edge_ids.assign(kept.begin() + static_cast<std::ptrdiff_t>(start),
                          kept.begin() + static_cast<std::ptrdiff_t>(end));
    const std::uint64_t step_tag =
        (static_cast<std::uint64_t>(epoch) << 24) | static_cast<std::uint64_t>(n_batches);
    fill_negatives(g_, sub, batch, cfg_.negatives,
                   derive_seed(cfg_.seed, "negatives", step_tag), bopts);

    ForwardCache cache;
    theta_.mode = Mode::Train;
    Matrix H = mlp_forward(g_.features, theta_, derive_seed(cfg_.seed, "dropout-step", step_tag),
                           &cache);
    grads.set_zero();
    BatchGradients bg;
    LossReport report = contrast_losses(g_, batch, H, theta_, copts, nullptr, &grads, &bg,
                                        &epoch_batches_without_labels_);
    if (!std::isfinite(report.total)) {
      std::ostringstream oss;
      oss << "lower_step: non-finite loss at epoch " << epoch << " batch " << n_batches
          << " (smooth=" << report.smooth << ", cla=" << report.cla << "; edges";
      for (std::size_t k = 0; k < std::min<std::size_t>(8, batch.edge_ids.size()); ++k) {
        const auto& [u, v] = g_.edges[batch.edge_ids[k]];
        oss << " (" << u << "," << v << ")";
      }
      oss << ")";
      throw GsscError(oss.str());
    }
    mlp_backward(theta_, cache, bg.d_hidden, grads);
    if (!grads.all_finite()) {
      throw GsscError("lower_step: non-finite gradient at epoch " + std::to_string(epoch) +
                      " batch " + std::to_string(n_batches));
    }
    opt_theta_.step(theta_tensors(theta_, grads));
    smooth_sum += report.smooth;
    cla_sum += report.cla;
    ++n_batches;
  }
  LossReport mean;
  mean.smooth = smooth_sum / n_batches;
  mean.cla = cla_sum / n_batches;
  mean.total = mean.smooth + mean.cla;
  return mean;
}

bool Trainer::upper_step(const SparsifiedSubgraph& sub, const SparsifierCache& cache,
                         const Matrix& h_eval, const std::vector<int>& pseudo,
                         std::uint64_t sample_seed, int epoch) {
  Matrix d_weight = Matrix::Zero(psi_.embed_weight.rows(), psi_.embed_weight.cols());
  std::vector<double> d_soft(g_.edges.size(), 0.0);

  if (cfg_.objective == TrainConfig::Objective::Homophily) {
    static const Matrix kNoY;
    homophily_objective(g_, sub, kNoY, EdgeValueMode::StraightThrough, &d_soft, &pseudo);
    // Ascent: feed the optimizer the gradient of -H.
    for (auto& v : d_soft) v = -v;
    sparsifier_backward(g_.features, g_.edges, psi_, cache, sub, d_soft, d_weight);

    const double before =
        homophily_objective(g_, sub, kNoY, EdgeValueMode::Relaxed, nullptr, &pseudo);
    const Matrix saved_weight = psi_.embed_weight;
    const Optimizer saved_opt = opt_psi_;
    opt_psi_.step(std::vector<OptTensor>{
        {psi_.embed_weight.data(), d_weight.data(), psi_.embed_weight.size()}});

    SparsifierCache check_cache;
    SparsifiedSubgraph check = sample_subgraph(g_, psi_, sample_seed, &check_cache);
    double after;
    try {
      after = homophily_objective(g_, check, kNoY, EdgeValueMode::Relaxed, nullptr, &pseudo);
    } catch (const DegenerateSubgraphError&) {
      after = -1.0;
    }
    if (after + 1e-12 < before) {
      psi_.embed_weight = saved_weight;
      opt_psi_ = saved_opt;
      const double lr = opt_psi_.learning_rate();
      opt_psi_.set_learning_rate(lr / 10.0);
      opt_psi_.step(std::vector<OptTensor>{
          {psi_.embed_weight.data(), d_weight.data(), psi_.embed_weight.size()}});
      opt_psi_.set_learning_rate(lr);
      return true;
    }
    return false;
  }

  // Explicit-weight ablation: minimize the straight-through-weighted
  // smoothness over batches of the full edge set.
  BatchSamplerOptions bopts;
  bopts.exclude_neighbors = cfg_.exclude_neighbor_negatives;
  bopts.from_all_edges = true;
  if (cfg_.no_negatives) bopts.no_negatives_k = 0;
  EdgeBatch batch =
      sample_edge_batch(g_, sub, cfg_.batch, cfg_.negatives,
                        derive_seed(cfg_.seed, "upper-batch", static_cast<std::uint64_t>(epoch)),
                        bopts);
  ContrastOptions copts;
  copts.margin = cfg_.margin;
  copts.no_negatives = cfg_.no_negatives;
  copts.fixed_beta_one = cfg_.fixed_beta_one;
  BackboneGrads scratch = BackboneGrads::zeros_like(theta_);  // theta is fixed here
  BatchGradients bg;
  bg.d_soft = &d_soft;
  contrast_losses(g_, batch, h_eval, theta_, copts, &sub, &scratch, &bg, nullptr);
  sparsifier_backward(g_.features, g_.edges, psi_, cache, sub, d_soft, d_weight);
  opt_psi_.step(std::vector<OptTensor>{
      {psi_.embed_weight.data(), d_weight.data(), psi_.embed_weight.size()}});
  return false;
}

TrainResult Trainer::run() {
  TrainResult result;
  const SparsifiedSubgraph all_kept = all_kept_subgraph(g_.edges.size());

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    const bool warm = epoch < cfg_.warmup_epochs;
    MetricsRecord rec;
    rec.epoch = epoch;
    epoch_batches_without_labels_ = 0;

    SparsifiedSubgraph sub;
    SparsifierCache cache;
    std::uint64_t sample_seed = 0;
    bool fallback = false;
    if (warm) {
      sub = all_kept;
    } else {
      sample_seed = derive_seed(cfg_.seed, "subgraph", static_cast<std::uint64_t>(epoch));
      sub = sample_subgraph(g_, psi_, sample_seed, &cache);
      if (sub.hard_count() == 0) {
        sample_seed = derive_seed(cfg_.seed, "subgraph-retry", static_cast<std::uint64_t>(epoch));
        sub = sample_subgraph(g_, psi_, sample_seed, &cache);
        if (sub.hard_count() == 0) {
          sub = all_kept;
          fallback = true;
          ++result.degenerate_recoveries;
        }
      }
    }
    rec.used_fallback_edges = fallback;

    LossReport losses;
    for (int inner = 0; inner < cfg_.inner_steps; ++inner) {
      losses = lower_step(sub, epoch * cfg_.inner_steps + inner);
    }
    rec.loss_smooth = losses.smooth;
    rec.loss_cla = losses.cla;
    rec.batches_without_labels = epoch_batches_without_labels_;

    // Structure-free evaluation pass; also provides the pseudo-labels.
    theta_.mode = Mode::Eval;
    Matrix h_eval = mlp_forward(g_.features, theta_, 0);
    theta_.mode = Mode::Train;
    Matrix y_eval = h_eval * theta_.head_f;
    std::vector<int> pseudo = pseudo_labels(y_eval);
    if (cfg_.pseudo_use_true_labels) {
      for (int v : g_.splits.train) pseudo[static_cast<std::size_t>(v)] = g_.labels[v];
    }
    auto acc = [&](const std::vector<int>& split) {
      if (split.empty()) return 0.0;
      int hit = 0;
      for (int v : split) {
        Eigen::Index arg = 0;
        y_eval.row(v).maxCoeff(&arg);
        if (static_cast<int>(arg) == g_.labels[v]) ++hit;
      }
      return static_cast<double>(hit) / static_cast<double>(split.size());
    };
    rec.train_acc = acc(g_.splits.train);
    rec.val_acc = acc(g_.splits.val);
    rec.test_acc = acc(g_.splits.test);

    if (!warm && !fallback && !cfg_.freeze_sparsifier) {
      rec.upper_backtracked = upper_step(sub, cache, h_eval, pseudo, sample_seed, epoch);
    }

    rec.hard_edge_count = static_cast<long>(sub.hard_count());
    const auto kept_pairs = kept_edge_pairs(g_, sub);
    rec.hard_homophily_pseudo = homophily_ratio(kept_pairs, pseudo).value;
    rec.hard_homophily_true = homophily_ratio(kept_pairs, g_.labels).value;
    try {
      rec.soft_homophily_objective =
          homophily_objective(g_, sub, y_eval, EdgeValueMode::Relaxed, nullptr, &pseudo);
    } catch (const DegenerateSubgraphError&) {
      rec.soft_homophily_objective = 0.0;
    }

    if (result.best_epoch < 0 || rec.val_acc > result.best_val_acc) {
      result.best_epoch = epoch;
      result.best_val_acc = rec.val_acc;
      result.best_test_acc = rec.test_acc;
      result.best_theta = theta_;
      result.best_psi = psi_;
    }
    result.history.push_back(rec);
  }

  result.theta = theta_;
  result.psi = psi_;
  return result;
}

TrainResult train(const Graph& g, const TrainConfig& cfg) {
  Trainer t(g, cfg);
  return t.run();
}

double evaluate(const BackboneState& theta, const Graph& g,
                std::span<const int> split) {
  if (split.empty()) throw GsscError("evaluate: empty split");
  BackboneState st = theta;
  st.mode = Mode::Eval;
  Matrix H = mlp_forward(g.features, st, 0);
  Matrix Y = H * st.head_f;
  int hit = 0;
  for (int v : split) {
    Eigen::Index arg = 0;
    Y.row(v).maxCoeff(&arg);
    if (static_cast<int>(arg) == g.labels[v]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(split.size());
}

LatencyStats bench_latency(const BackboneState& theta, const Graph& g, int repeats) {
  if (repeats < 1) throw GsscError("bench_latency: repeats must be >= 1");
  BackboneState st = theta;
  st.mode = Mode::Eval;
  long sink = 0;

  auto one_pass = [&]() {
    Matrix H = mlp_forward(g.features, st, 0);
    Matrix Y = H * st.head_f;
    long s = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      Eigen::Index arg = 0;
      Y.row(i).maxCoeff(&arg);
      s += arg;
    }
    sink += s;
  };

  for (int i = 0; i < 3; ++i) one_pass();

  std::vector<double> times_ms(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    one_pass();
    const auto t1 = std::chrono::steady_clock::now();
    times_ms[static_cast<std::size_t>(r)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  LatencyStats stats;
  stats.repeats = repeats;
  stats.mean_ms = std::accumulate(times_ms.begin(), times_ms.end(), 0.0) /
                  static_cast<double>(repeats);
  double var = 0.0;
  for (double t : times_ms) var += (t - stats.mean_ms) * (t - stats.mean_ms);
  stats.stddev_ms = std::sqrt(var / static_cast<double>(repeats));
  static volatile long keep_alive;
  keep_alive = sink;
  return stats;
}

std::string metrics_to_json_line(const MetricsRecord& m) {
  json j;
  j["epoch"] = m.epoch;
  j["loss_smooth"] = m.loss_smooth;
  j["loss_cla"] = m.loss_cla;
  j["hard_edge_count"] = m.hard_edge_count;
  j["hard_homophily_pseudo"] = m.hard_homophily_pseudo;
  j["hard_homophily_true"] = m.hard_homophily_true;
  j["soft_homophily_objective"] = m.soft_homophily_objective;
  j["train_acc"] = m.train_acc;
  j["val_acc"] = m.val_acc;
  j["test_acc"] = m.test_acc;
  j["batches_without_labels"] = m.batches_without_labels;
  j["used_fallback_edges"] = m.used_fallback_edges;
  j["upper_backtracked"] = m.upper_backtracked;
  return j.dump();
}

}  // namespace gssc
