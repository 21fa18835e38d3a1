// Graph data model, canonical on-disk format, synthetic generation with
// controllable homophily, and label/structure corruption protocols.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gssc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class GsscError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Splits {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;

  bool operator==(const Splits&) const = default;
};

// Immutable after construction; safe to share across threads.
// Edges are stored once in canonical (src < dst) order plus a symmetric CSR
// view for degree/neighbor queries.
class Graph {
 public:
  int n_nodes = 0;
  int n_features = 0;
  int n_classes = 0;
  Matrix features;                         // n_nodes x n_features
  std::vector<int> labels;                 // size n_nodes, values in [0, n_classes)
  std::vector<std::pair<int, int>> edges;  // canonical undirected edges, src < dst, sorted
  std::vector<int> row_ptr;                // CSR over the symmetric adjacency
  std::vector<int> col_idx;
  Splits splits;

  // Validates every invariant (no self-loops, no duplicates, endpoints and
  // labels in range, disjoint splits), canonicalizes the edge list and builds
  // the CSR view. Throws GsscError on violation.
  static Graph build(Matrix features, std::vector<int> labels, int n_classes,
                     std::vector<std::pair<int, int>> edges, Splits splits);

  int degree(int v) const { return row_ptr[v + 1] - row_ptr[v]; }
  bool has_edge(int u, int v) const;
  std::size_t n_edges() const { return edges.size(); }

  bool operator==(const Graph& other) const;
};

struct NoiseKind {
  enum Value { LabelSymmetric, LabelAsymmetric, EdgePerturb };
};

struct NoiseSpec {
  NoiseKind::Value kind = NoiseKind::LabelSymmetric;
  double ratio = 0.0;  // in [0,1]
  std::uint64_t seed = 0;
};

enum class EdgeNoiseSplit { Half, Each };  // r*|E| total split half/half, or r*|E| removed and r*|E| added

struct HomophilyResult {
  double value = 0.0;
  bool empty_edge_set = false;  // warning: no edges, value reported as 0
};

// Fraction of undirected edges whose endpoints share a class, each edge
// counted once. Empty edge set reports 0 with the warning flag raised.
HomophilyResult homophily_ratio(const Graph& g, const std::vector<int>& labels);

inline HomophilyResult homophily_ratio(const Graph& g) {
  return homophily_ratio(g, g.labels);
}

// Same ratio over an explicit edge subset (used for sparsified subgraphs).
HomophilyResult homophily_ratio(const std::vector<std::pair<int, int>>& edges,
                                const std::vector<int>& labels);

// Planted-partition generator: equal-size classes, intra-class pairs connected
// with p_in, inter-class with p_out; features are orthogonal class means plus
// isotropic Gaussian noise of the given scale. Splits are stratified per class
// (10% train, 20% val, rest test, at least one train node per class).
Graph generate_sbm(int n, int n_classes, double p_in, double p_out, int dim,
                   double feature_noise, std::uint64_t seed);

// Label corruption on the train split only. Symmetric: flip to each other
// class with probability r/(C-1). Asymmetric: flip to (i+1) mod C with
// probability r.
Graph inject_label_noise(const Graph& g, const NoiseSpec& spec);

// Removes and adds the same number of edges (ratio*|E|/2 each under Half,
// ratio*|E| each under Each), preserving symmetry / no-self-loop / no-dup
// invariants. |E| is unchanged.
Graph perturb_edges(const Graph& g, const NoiseSpec& spec,
                    EdgeNoiseSplit split = EdgeNoiseSplit::Half);

// Removes floor(frac*|E|) edges with class-biased weights: bias=+1 removes
// only inter-class edges, bias=-1 only intra-class ones, 0 is uniform.
// Used to build subgraph ladders spanning a homophily range.
Graph remove_edges_biased(const Graph& g, double frac, double bias,
                          std::uint64_t seed);

// Canonical dataset directory: nodes.tsv, edges.tsv, splits.json.
Graph load_graph(const std::filesystem::path& dir);
void save_graph(const Graph& g, const std::filesystem::path& dir);

// FNV-1a content hash over the three canonical files, hex-encoded.
std::string dataset_fingerprint(const std::filesystem::path& dir);

}  // namespace gssc
