// Structural self-contrasting losses: learnable-interpolation node
// augmentation, the batched smoothness constraint with degree-proportional
// negative sampling, the classification loss, their sum, and the
// explicit-weight ablation variant.
#pragma once

#include "gssc/graph.hpp"
#include "gssc/nn.hpp"
#include "gssc/sparsifier.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace gssc {

class DegenerateSubgraphError : public GsscError {
 public:
  using GsscError::GsscError;
};

struct EdgeBatch {
  std::vector<std::size_t> edge_ids;        // indices into Graph::edges
  std::vector<std::vector<int>> negatives;  // per batch edge, sampled node ids
};

struct LossReport {
  double smooth = 0.0;
  double cla = 0.0;
  double total = 0.0;  // smooth + cla
};

struct ContrastOptions {
  double margin = 10.0;        // clamp on each negative distance; +inf disables
  bool no_negatives = false;   // ablation: drop the repulsion term entirely
  bool fixed_beta_one = false; // ablation: beta == 1 (no interpolation)
};

struct BatchSamplerOptions {
  bool exclude_neighbors = true;  // reject negatives in {i, j} or N(i) when feasible
  bool enumerate_mode = false;    // negatives = all non-neighbors (diagnostic)
  bool from_all_edges = false;    // batch over E instead of the kept subset
  int no_negatives_k = -1;        // <0: draw K negatives; otherwise none
};

// B edges uniformly without replacement from the kept edge set (all of them
// when B exceeds it), plus K negatives per edge drawn with replacement
// proportionally to degree in the sparsified subgraph. Degree-infeasible
// exclusion falls back to unrestricted draws. Throws DegenerateSubgraphError
// when no edge is kept.
EdgeBatch sample_edge_batch(const Graph& g, const SparsifiedSubgraph& sub, int batch_size,
                            int k_negatives, std::uint64_t seed,
                            const BatchSamplerOptions& opts = {});

// Fills batch.negatives for already-chosen edge ids (the epoch loop shuffles
// and partitions the kept edges itself and only needs the negative draws).
void fill_negatives(const Graph& g, const SparsifiedSubgraph& sub, EdgeBatch& batch,
                    int k_negatives, std::uint64_t seed,
                    const BatchSamplerOptions& opts = {});

// Learnable interpolation for one directed pair:
// beta = sigmoid(a . [h_i || h_j]), output = head_g((1-beta) h_i + beta h_j).
std::pair<Eigen::RowVectorXd, double> interpolate_augment(
    const Eigen::RowVectorXd& h_i, const Eigen::RowVectorXd& h_j,
    const BackboneState& st);

// Both directed augmentations for every batch edge; rows align with
// batch.edge_ids. g_fwd row e is g_{i->j}, g_bwd row e is g_{j->i}.
struct EdgeAugments {
  Matrix g_fwd;
  Matrix g_bwd;
  std::vector<double> beta_fwd;
  std::vector<double> beta_bwd;
};

EdgeAugments augment_edges(const Graph& g, const EdgeBatch& batch, const Matrix& H,
                           const BackboneState& st, bool fixed_beta_one = false);

// Mean over batch edges of
//   D(y_i, g_{i->j}) + D(y_j, g_{j->i})
//   - mean_k [ min(D(y_i,z_k), m) + min(D(y_j,z_k), m) ]
// with D the per-class mean squared error.
double smoothness_loss(const Graph& g, const EdgeBatch& batch, const Matrix& Y,
                       const Matrix& Z, const EdgeAugments& aug,
                       const ContrastOptions& opts);

// Cross-entropy of each labeled batch node's own prediction plus, per batch
// edge, the opposite endpoint's z-prediction against the labeled endpoint's
// class; mean over batch edges. Batches with no labeled node contribute 0 and
// bump the counter.
double classification_loss(const Graph& g, const EdgeBatch& batch, const Matrix& Y,
                           const Matrix& Z, int* batches_without_labels = nullptr);

LossReport total_loss(const Graph& g, const EdgeBatch& batch, const Matrix& Y,
                      const Matrix& Z, const EdgeAugments& aug,
                      const ContrastOptions& opts,
                      int* batches_without_labels = nullptr);

// Smoothness with each per-edge term scaled by the edge's straight-through
// value (the trivial-solution ablation objective).
double explicit_weight_loss(const Graph& g, const EdgeBatch& batch,
                            const SparsifiedSubgraph& sub, const Matrix& Y,
                            const Matrix& Z, const EdgeAugments& aug,
                            const ContrastOptions& opts);

// Full losses plus gradients for one batch, starting from the hidden
// representations H (train-mode forward output). Accumulates head, interp and
// hidden-state gradients; when `weights` is given the smooth term is scaled by
// straight-through values and d(loss)/d(soft) is scattered into d_soft
// (indexed over the full edge list).
struct BatchGradients {
  Matrix d_hidden;                       // N x F
  std::vector<double>* d_soft = nullptr; // size |E| when explicit weighting is on
};

LossReport contrast_losses(const Graph& g, const EdgeBatch& batch, const Matrix& H,
                           const BackboneState& st, const ContrastOptions& opts,
                           const SparsifiedSubgraph* weights, BackboneGrads* grads,
                           BatchGradients* out,
                           int* batches_without_labels = nullptr);

// Log-sum-exp diagnostic: directed sum over kept neighborhoods with a full
// log-sum-exp over every non-neighbor, normalized by node count. Not used by
// the trainer; the batched estimator above is the trained objective.
double smoothness_full_logsumexp(const Graph& g, const SparsifiedSubgraph& sub,
                                 const Matrix& H, const Matrix& Y, const Matrix& Z,
                                 const BackboneState& st);

}  // namespace gssc
