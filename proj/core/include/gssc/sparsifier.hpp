// Structural sparsification: amortized per-edge keep probabilities
// lambda = sigmoid(<W x_i, W x_j>), fusion with the original adjacency, and
// differentiable discrete subgraph sampling over the existing edge set.
#pragma once

#include "gssc/graph.hpp"

#include <cstdint>
#include <vector>

namespace gssc {

// Parameters psi. fusion_alpha and temperature are hyperparameters; only the
// embedding matrix is trained.
struct SparsifierState {
  Matrix embed_weight;        // F x d, z_i = W x_i
  double fusion_alpha = 0.1;  // in [0,1]
  double temperature = 0.5;   // > 0

  static SparsifierState init(int d, int hidden, double alpha, double tau,
                              std::uint64_t seed);
};

// One sample per undirected edge, indexed in the graph's canonical edge
// order and implicitly mirrored to both directions. The straight-through
// value of edge e is hard[e] in the forward sense; chain rules route its
// backward derivative through soft[e].
struct SparsifiedSubgraph {
  std::vector<double> soft;        // relaxed sigmoid values in (0,1)
  std::vector<std::uint8_t> hard;  // floor(soft + 1/2)
  int clamped_edges = 0;           // inputs clamped up to the 1e-12 floor

  double straight_through(std::size_t e) const { return hard[e]; }
  std::size_t hard_count() const;
  std::vector<std::size_t> kept_indices() const;
};

// Caches the pieces of the forward pass that the psi-gradient needs.
struct SparsifierCache {
  Matrix z;                    // N x F node embeddings
  std::vector<double> lambda;  // per-edge probabilities
  std::vector<double> fused;   // per-edge strategy M
};

// lambda_e = sigmoid(z_src . z_dst) over the existing edges only.
std::vector<double> edge_probs(const Matrix& X,
                               const std::vector<std::pair<int, int>>& edges,
                               const SparsifierState& psi, Matrix* z_out = nullptr);

// M = (1-alpha) * lambda + alpha (A is 1 on every existing edge).
std::vector<double> fuse(const std::vector<double>& lambda, double alpha);

// soft = sigmoid((log M + G) / tau) with one Gumbel draw per undirected edge;
// hard = round-half-up of soft. Deterministic given seed (per-edge noise
// derived from seed + canonical edge index). M is clamped to [1e-12, 1].
SparsifiedSubgraph gumbel_sample(const std::vector<double>& fused, double tau,
                                 std::uint64_t seed);

// Same transform with caller-supplied noise (test hook and internals).
SparsifiedSubgraph apply_gumbel(const std::vector<double>& fused, double tau,
                                const std::vector<double>& noise);

// Convenience: full forward pass lambda -> M -> sample, cache retained.
SparsifiedSubgraph sample_subgraph(const Graph& g, const SparsifierState& psi,
                                   std::uint64_t seed, SparsifierCache* cache);

// Accumulates dL/dW given dL/d(soft_e) per edge, chaining
// soft -> M -> lambda -> W with the Gumbel draws held fixed.
void sparsifier_backward(const Matrix& X,
                         const std::vector<std::pair<int, int>>& edges,
                         const SparsifierState& psi, const SparsifierCache& cache,
                         const SparsifiedSubgraph& sub,
                         const std::vector<double>& d_soft, Matrix& d_weight);

// Debug dump: one line per edge, columns src, dst, soft, hard.
void save_sparsified(const std::vector<std::pair<int, int>>& edges,
                     const SparsifiedSubgraph& sub, const std::filesystem::path& path);

}  // namespace gssc
