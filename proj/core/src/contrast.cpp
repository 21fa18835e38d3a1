#include "gssc/contrast.hpp"

#include "gssc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gssc {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-class mean squared error between two logit rows.
double mse(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double cross_entropy(const Eigen::RowVectorXd& logits, int label,
                     Eigen::RowVectorXd* d_logits = nullptr) {
  const double mx = logits.maxCoeff();
  Eigen::RowVectorXd ex = (logits.array() - mx).exp();
  const double denom = ex.sum();
  if (d_logits) {
    *d_logits = ex / denom;
    (*d_logits)(label) -= 1.0;
  }
  return std::log(denom) - (logits(label) - mx);
}

// Degree table over the kept subgraph, with a fallback to the full edge set
// when nothing is kept (the from_all_edges path can reach that state).
std::vector<double> kept_degrees(const Graph& g, const SparsifiedSubgraph& sub) {
  std::vector<double> deg(g.n_nodes, 0.0);
  double total = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (!sub.hard[e]) continue;
    deg[g.edges[e].first] += 1.0;
    deg[g.edges[e].second] += 1.0;
    total += 2.0;
  }
  if (total == 0.0) {
    for (const auto& [u, v] : g.edges) {
      deg[u] += 1.0;
      deg[v] += 1.0;
    }
  }
  return deg;
}

struct DegreeSampler {
  std::vector<double> cdf;
  explicit DegreeSampler(const std::vector<double>& deg) {
    cdf.resize(deg.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < deg.size(); ++i) {
      acc += deg[i];
      cdf[i] = acc;
    }
  }
  int draw(Rng& rng) const {
    const double u = rng.uniform() * cdf.back();
    return static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
};

}  // namespace

EdgeBatch sample_edge_batch(const Graph& g, const SparsifiedSubgraph& sub, int batch_size,
                            int k_negatives, std::uint64_t seed,
                            const BatchSamplerOptions& opts) {
  if (batch_size < 1) throw GsscError("sample_edge_batch: batch_size must be >= 1");
  const bool draw_negatives = opts.no_negatives_k < 0 && !opts.enumerate_mode;
  if (draw_negatives && k_negatives < 1) {
    throw GsscError("sample_edge_batch: k_negatives must be >= 1");
  }

  std::vector<std::size_t> pool;
  if (opts.from_all_edges) {
    pool.resize(g.edges.size());
    std::iota(pool.begin(), pool.end(), 0);
  } else {
    pool = sub.kept_indices();
  }
  if (pool.empty()) {
    throw DegenerateSubgraphError("sample_edge_batch: sparsified edge set is empty");
  }

  Rng rng(derive_seed(seed, "edge-batch"));
  const std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(batch_size));
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.uniform_int(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  EdgeBatch batch;
  batch.edge_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  fill_negatives(g, sub, batch, k_negatives, seed, opts);
  return batch;
}

void fill_negatives(const Graph& g, const SparsifiedSubgraph& sub, EdgeBatch& batch,
                    int k_negatives, std::uint64_t seed,
                    const BatchSamplerOptions& opts) {
  const std::size_t take = batch.edge_ids.size();
  batch.negatives.assign(take, {});
  const bool draw_negatives = opts.no_negatives_k < 0 && !opts.enumerate_mode;
  if (draw_negatives && k_negatives < 1) {
    throw GsscError("fill_negatives: k_negatives must be >= 1");
  }

  // Kept-subgraph neighbor lists for the exclusion rule.
  std::vector<std::vector<int>> kept_adj(g.n_nodes);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (!sub.hard[e]) continue;
    kept_adj[g.edges[e].first].push_back(g.edges[e].second);
    kept_adj[g.edges[e].second].push_back(g.edges[e].first);
  }
  for (auto& nbrs : kept_adj) std::sort(nbrs.begin(), nbrs.end());
  auto is_kept_neighbor = [&](int i, int k) {
    return std::binary_search(kept_adj[i].begin(), kept_adj[i].end(), k);
  };

  if (opts.enumerate_mode) {
    for (std::size_t b = 0; b < take; ++b) {
      const auto [i, j] = g.edges[batch.edge_ids[b]];
      for (int k = 0; k < g.n_nodes; ++k) {
        if (k == i || k == j || is_kept_neighbor(i, k)) continue;
        batch.negatives[b].push_back(k);
      }
    }
    return;
  }
  if (!draw_negatives) return;

  const DegreeSampler sampler(kept_degrees(g, sub));
  Rng nrng(derive_seed(seed, "negatives"));
  for (std::size_t b = 0; b < take; ++b) {
    const auto [i, j] = g.edges[batch.edge_ids[b]];
    auto& negs = batch.negatives[b];
    negs.reserve(static_cast<std::size_t>(k_negatives));
    for (int k = 0; k < k_negatives; ++k) {
      int v = -1;
      if (opts.exclude_neighbors) {
        for (int attempt = 0; attempt < 50; ++attempt) {
          const int cand = sampler.draw(nrng);
          if (cand == i || cand == j || is_kept_neighbor(i, cand)) continue;
          v = cand;
          break;
        }
      }
      if (v < 0) v = sampler.draw(nrng);  // unrestricted fallback
      negs.push_back(v);
    }
  }
}

std::pair<Eigen::RowVectorXd, double> interpolate_augment(
    const Eigen::RowVectorXd& h_i, const Eigen::RowVectorXd& h_j,
    const BackboneState& st) {
  const auto F = h_i.size();
  if (h_j.size() != F || st.interp_a.size() != 2 * F) {
    throw GsscError("interpolate_augment: shape mismatch");
  }
  const double logit = st.interp_a.head(F).dot(h_i.transpose()) +
                       st.interp_a.tail(F).dot(h_j.transpose());
  const double beta = sigmoid(logit);
  const Eigen::RowVectorXd mix = (1.0 - beta) * h_i + beta * h_j;
  return {mix * st.head_g, beta};
}

EdgeAugments augment_edges(const Graph& g, const EdgeBatch& batch, const Matrix& H,
                           const BackboneState& st, bool fixed_beta_one) {
  const auto nb = static_cast<Eigen::Index>(batch.edge_ids.size());
  const auto C = st.head_g.cols();
  EdgeAugments aug;
  aug.g_fwd.resize(nb, C);
  aug.g_bwd.resize(nb, C);
  aug.beta_fwd.resize(static_cast<std::size_t>(nb));
  aug.beta_bwd.resize(static_cast<std::size_t>(nb));
  const auto F = H.cols();
  for (Eigen::Index b = 0; b < nb; ++b) {
    const auto [i, j] = g.edges[batch.edge_ids[static_cast<std::size_t>(b)]];
    double beta_ij = 1.0;
    double beta_ji = 1.0;
    if (!fixed_beta_one) {
      beta_ij = sigmoid(st.interp_a.head(F).dot(H.row(i).transpose()) +
                        st.interp_a.tail(F).dot(H.row(j).transpose()));
      beta_ji = sigmoid(st.interp_a.head(F).dot(H.row(j).transpose()) +
                        st.interp_a.tail(F).dot(H.row(i).transpose()));
    }
    aug.g_fwd.row(b) = ((1.0 - beta_ij) * H.row(i) + beta_ij * H.row(j)) * st.head_g;
    aug.g_bwd.row(b) = ((1.0 - beta_ji) * H.row(j) + beta_ji * H.row(i)) * st.head_g;
    aug.beta_fwd[static_cast<std::size_t>(b)] = beta_ij;
    aug.beta_bwd[static_cast<std::size_t>(b)] = beta_ji;
  }
  return aug;
}

namespace {

// Single evaluation path shared by the value-only wrappers and the gradient
// route. Gradients are optional and accumulated.
struct LossWork {
  const Graph& g;
  const EdgeBatch& batch;
  const Matrix& Y;
  const Matrix& Z;
  const EdgeAugments& aug;
  const ContrastOptions& opts;
  const SparsifiedSubgraph* weights = nullptr;  // straight-through scaling

  Matrix* d_Y = nullptr;
  Matrix* d_Z = nullptr;
  Matrix* d_aug_fwd = nullptr;
  Matrix* d_aug_bwd = nullptr;
  std::vector<double>* d_soft = nullptr;  // indexed over the full edge list
};

double eval_smoothness(LossWork& w) {
  const std::size_t nb = w.batch.edge_ids.size();
  if (nb == 0) throw GsscError("smoothness_loss: empty batch");
  const double C = static_cast<double>(w.Y.cols());
  const double inv_b = 1.0 / static_cast<double>(nb);
  const double m = w.opts.margin;
  double loss = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t eid = w.batch.edge_ids[b];
    const auto [i, j] = w.g.edges[eid];
    const double st_w = w.weights ? w.weights->straight_through(eid) : 1.0;

    Eigen::RowVectorXd diff_i = w.Y.row(i) - w.aug.g_fwd.row(static_cast<Eigen::Index>(b));
    Eigen::RowVectorXd diff_j = w.Y.row(j) - w.aug.g_bwd.row(static_cast<Eigen::Index>(b));
    double term = diff_i.squaredNorm() / C + diff_j.squaredNorm() / C;

    const auto& negs = w.batch.negatives[b];
    double neg_term = 0.0;
    if (!w.opts.no_negatives && !negs.empty()) {
      const double inv_k = 1.0 / static_cast<double>(negs.size());
      for (int k : negs) {
        for (int endpoint : {i, j}) {
          Eigen::RowVectorXd dn = w.Y.row(endpoint) - w.Z.row(k);
          const double d = dn.squaredNorm() / C;
          neg_term += std::min(d, m);
          if (w.d_Y && d < m) {
            const double scale = -st_w * inv_b * inv_k * 2.0 / C;
            w.d_Y->row(endpoint) += scale * dn;
            w.d_Z->row(k) -= scale * dn;
          }
        }
      }
      neg_term *= inv_k;
    }
    loss += st_w * (term - neg_term);

    if (w.d_Y) {
      const double scale = st_w * inv_b * 2.0 / C;
      w.d_Y->row(i) += scale * diff_i;
      w.d_aug_fwd->row(static_cast<Eigen::Index>(b)) -= scale * diff_i;
      w.d_Y->row(j) += scale * diff_j;
      w.d_aug_bwd->row(static_cast<Eigen::Index>(b)) -= scale * diff_j;
    }
    if (w.d_soft) {
      (*w.d_soft)[eid] += inv_b * (term - neg_term);
    }
  }
  return loss * inv_b;
}

double eval_classification(LossWork& w, int* batches_without_labels) {
  const std::size_t nb = w.batch.edge_ids.size();
  if (nb == 0) throw GsscError("classification_loss: empty batch");
  std::vector<char> is_train(static_cast<std::size_t>(w.g.n_nodes), 0);
  for (int v : w.g.splits.train) is_train[static_cast<std::size_t>(v)] = 1;

  const double inv_b = 1.0 / static_cast<double>(nb);
  double loss = 0.0;
  bool any_labeled = false;
  std::vector<char> node_done(static_cast<std::size_t>(w.g.n_nodes), 0);
  Eigen::RowVectorXd d_row;
  for (std::size_t b = 0; b < nb; ++b) {
    const auto [i, j] = w.g.edges[w.batch.edge_ids[b]];
    for (int v : {i, j}) {
      if (!is_train[static_cast<std::size_t>(v)] || node_done[static_cast<std::size_t>(v)]) continue;
      node_done[static_cast<std::size_t>(v)] = 1;
      any_labeled = true;
      loss += cross_entropy(w.Y.row(v), w.g.labels[v], w.d_Y ? &d_row : nullptr);
      if (w.d_Y) w.d_Y->row(v) += inv_b * d_row;
    }
    if (is_train[static_cast<std::size_t>(i)]) {
      any_labeled = true;
      loss += cross_entropy(w.Z.row(j), w.g.labels[i], w.d_Z ? &d_row : nullptr);
      if (w.d_Z) w.d_Z->row(j) += inv_b * d_row;
    }
    if (is_train[static_cast<std::size_t>(j)]) {
      any_labeled = true;
      loss += cross_entropy(w.Z.row(i), w.g.labels[j], w.d_Z ? &d_row : nullptr);
      if (w.d_Z) w.d_Z->row(i) += inv_b * d_row;
    }
  }
  if (!any_labeled && batches_without_labels) ++*batches_without_labels;
  return loss * inv_b;
}

}  // namespace

double smoothness_loss(const Graph& g, const EdgeBatch& batch, const Matrix& Y,
                       const Matrix& Z, const EdgeAugments& aug,
                       const ContrastOptions& opts) {
  LossWork w{g, batch, Y, Z, aug, opts};
  return eval_smoothness(w);
}

double classification_loss(const Graph& g, const EdgeBatch& batch, const Matrix& Y,
                           const Matrix& Z, int* batches_without_labels) {
  static const EdgeAugments kNoAug{};
  static const ContrastOptions kDefault{};
  LossWork w{g, batch, Y, Z, kNoAug, kDefault};
  return eval_classification(w, batches_without_labels);
}

LossReport total_loss(const Graph& g, const EdgeBatch& batch, const Matrix& Y,
                      const Matrix& Z, const EdgeAugments& aug,
                      const ContrastOptions& opts, int* batches_without_labels) {
  LossReport r;
  r.smooth = smoothness_loss(g, batch, Y, Z, aug, opts);
  r.cla = classification_loss(g, batch, Y, Z, batches_without_labels);
  r.total = r.smooth + r.cla;
  return r;
}

double explicit_weight_loss(const Graph& g, const EdgeBatch& batch,
                            const SparsifiedSubgraph& sub, const Matrix& Y,
                            const Matrix& Z, const EdgeAugments& aug,
                            const ContrastOptions& opts) {
  LossWork w{g, batch, Y, Z, aug, opts};
  w.weights = &sub;
  return eval_smoothness(w);
}

LossReport contrast_losses(const Graph& g, const EdgeBatch& batch, const Matrix& H,
                           const BackboneState& st, const ContrastOptions& opts,
                           const SparsifiedSubgraph* weights, BackboneGrads* grads,
                           BatchGradients* out, int* batches_without_labels) {
  Matrix Y = H * st.head_f;
  Matrix Z = H * st.head_g;
  EdgeAugments aug = augment_edges(g, batch, H, st, opts.fixed_beta_one);

  LossReport report;
  if (!grads) {
    LossWork w{g, batch, Y, Z, aug, opts};
    w.weights = weights;
    report.smooth = eval_smoothness(w);
    report.cla = eval_classification(w, batches_without_labels);
    report.total = report.smooth + report.cla;
    return report;
  }

  Matrix d_Y = Matrix::Zero(Y.rows(), Y.cols());
  Matrix d_Z = Matrix::Zero(Z.rows(), Z.cols());
  Matrix d_aug_fwd = Matrix::Zero(aug.g_fwd.rows(), aug.g_fwd.cols());
  Matrix d_aug_bwd = Matrix::Zero(aug.g_bwd.rows(), aug.g_bwd.cols());

  LossWork w{g, batch, Y, Z, aug, opts};
  w.weights = weights;
  w.d_Y = &d_Y;
  w.d_Z = &d_Z;
  w.d_aug_fwd = &d_aug_fwd;
  w.d_aug_bwd = &d_aug_bwd;
  if (out && out->d_soft) {
    if (!weights) throw GsscError("contrast_losses: d_soft requires explicit weights");
    w.d_soft = out->d_soft;
  }
  report.smooth = eval_smoothness(w);
  report.cla = eval_classification(w, batches_without_labels);
  report.total = report.smooth + report.cla;

  // Heads.
  grads->head_f += H.transpose() * d_Y;
  grads->head_g += H.transpose() * d_Z;
  Matrix d_H = d_Y * st.head_f.transpose() + d_Z * st.head_g.transpose();

  // Augmentation backward: out_dir = ((1-beta) h_a + beta h_b) * head_g.
  const auto F = H.cols();
  for (std::size_t b = 0; b < batch.edge_ids.size(); ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    const auto [i, j] = g.edges[batch.edge_ids[b]];
    struct Dir {
      int a, bnode;
      double beta;
      const Matrix* d_out;
    };
    for (const auto& dir : {Dir{i, j, aug.beta_fwd[b], &d_aug_fwd},
                            Dir{j, i, aug.beta_bwd[b], &d_aug_bwd}}) {
      const Eigen::RowVectorXd d_out = dir.d_out->row(bi);
      if (d_out.isZero(0.0)) continue;
      const Eigen::RowVectorXd mix =
          (1.0 - dir.beta) * H.row(dir.a) + dir.beta * H.row(dir.bnode);
      grads->head_g += mix.transpose() * d_out;
      const Eigen::RowVectorXd d_mix = d_out * st.head_g.transpose();
      d_H.row(dir.a) += (1.0 - dir.beta) * d_mix;
      d_H.row(dir.bnode) += dir.beta * d_mix;
      if (!opts.fixed_beta_one) {
        const double d_beta = d_mix.dot(H.row(dir.bnode) - H.row(dir.a));
        const double d_logit = d_beta * dir.beta * (1.0 - dir.beta);
        grads->interp_a.head(F) += d_logit * H.row(dir.a).transpose();
        grads->interp_a.tail(F) += d_logit * H.row(dir.bnode).transpose();
        d_H.row(dir.a) += d_logit * st.interp_a.head(F).transpose();
        d_H.row(dir.bnode) += d_logit * st.interp_a.tail(F).transpose();
      }
    }
  }

  if (out) out->d_hidden = std::move(d_H);
  return report;
}

double smoothness_full_logsumexp(const Graph& g, const SparsifiedSubgraph& sub,
                                 const Matrix& H, const Matrix& Y, const Matrix& Z,
                                 const BackboneState& st) {
  double loss = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (!sub.hard[e]) continue;
    const auto [i, j] = g.edges[e];
    for (const auto& [a, b] : {std::pair{i, j}, std::pair{j, i}}) {
      const auto [g_ab, beta] = interpolate_augment(H.row(a), H.row(b), st);
      (void)beta;
      double lse = 0.0;
      int count = 0;
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> dists;
      for (int k = 0; k < g.n_nodes; ++k) {
        if (k == a || k == b) continue;
        bool neighbor = false;
        for (std::size_t e2 = 0; e2 < g.edges.size(); ++e2) {
          if (!sub.hard[e2]) continue;
          const auto [u, v] = g.edges[e2];
          if ((u == a && v == k) || (u == k && v == a)) {
            neighbor = true;
            break;
          }
        }
        if (neighbor) continue;
        const double d = mse(Y.row(a), Z.row(k));
        dists.push_back(d);
        mx = std::max(mx, d);
        ++count;
      }
      if (count > 0) {
        for (double d : dists) lse += std::exp(d - mx);
        lse = mx + std::log(lse);
      }
      loss += mse(Y.row(a), g_ab) - lse;
    }
  }
  return loss / static_cast<double>(g.n_nodes);
}

}  // namespace gssc
