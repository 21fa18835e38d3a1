#include "gssc/graph.hpp"

#include "gssc/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace gssc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw GsscError("failed to format floating-point value");
  return std::string(buf, ptr);
}

double parse_double(std::string_view tok, const std::string& file, int line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw GsscError(file + ": non-numeric feature '" + std::string(tok) +
                    "' at line " + std::to_string(line));
  }
  return v;
}

long parse_int(std::string_view tok, const std::string& file, int line,
               const char* what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw GsscError(file + ": non-integer " + what + " '" + std::string(tok) +
                    "' at line " + std::to_string(line));
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

// Stratified per-class split: 10% train (at least 1), 20% val, rest test.
Splits make_stratified_splits(int n, int n_classes, std::uint64_t seed) {
  Splits s;
  const int per_class = n / n_classes;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<int> ids(per_class);
    std::iota(ids.begin(), ids.end(), c * per_class);
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
    for (int i = per_class - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
      std::swap(ids[i], ids[j]);
    }
    const int n_train = std::max(1, per_class / 10);
    const int n_val = std::max(1, per_class / 5);
    for (int i = 0; i < per_class; ++i) {
      if (i < n_train) {
        s.train.push_back(ids[i]);
      } else if (i < n_train + n_val) {
        s.val.push_back(ids[i]);
      } else {
        s.test.push_back(ids[i]);
      }
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void check_split_ids(const std::vector<int>& ids, int n, const char* name) {
  for (int v : ids) {
    if (v < 0 || v >= n) {
      throw GsscError(std::string("split '") + name + "' has node id " +
                      std::to_string(v) + " out of range [0," +
                      std::to_string(n) + ")");
    }
  }
}

}  // namespace

Graph Graph::build(Matrix features, std::vector<int> labels, int n_classes,
                   std::vector<std::pair<int, int>> edges, Splits splits) {
  Graph g;
  g.n_nodes = static_cast<int>(features.rows());
  g.n_features = static_cast<int>(features.cols());
  g.n_classes = n_classes;
  if (static_cast<int>(labels.size()) != g.n_nodes) {
    throw GsscError("label count " + std::to_string(labels.size()) +
                    " does not match node count " + std::to_string(g.n_nodes));
  }
  for (int i = 0; i < g.n_nodes; ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw GsscError("label " + std::to_string(labels[i]) + " of node " +
                      std::to_string(i) + " outside [0," +
                      std::to_string(n_classes) + ")");
    }
  }
  if (!features.allFinite()) throw GsscError("non-finite feature value");

  for (auto& [u, v] : edges) {
    if (u == v) throw GsscError("self-loop at node " + std::to_string(u));
    if (u > v) std::swap(u, v);
    if (u < 0 || v >= g.n_nodes) {
      throw GsscError("edge endpoint out of range: (" + std::to_string(u) +
                      "," + std::to_string(v) + ")");
    }
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw GsscError("duplicate edge in edge list");
  }

  check_split_ids(splits.train, g.n_nodes, "train");
  check_split_ids(splits.val, g.n_nodes, "val");
  check_split_ids(splits.test, g.n_nodes, "test");
  std::set<int> seen;
  for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
    for (int v : *part) {
      if (!seen.insert(v).second) {
        throw GsscError("node " + std::to_string(v) + " appears in two splits");
      }
    }
  }

  g.features = std::move(features);
  g.labels = std::move(labels);
  g.edges = std::move(edges);
  g.splits = std::move(splits);

  // Symmetric CSR from the canonical list.
  g.row_ptr.assign(g.n_nodes + 1, 0);
  for (const auto& [u, v] : g.edges) {
    ++g.row_ptr[u + 1];
    ++g.row_ptr[v + 1];
  }
  for (int i = 0; i < g.n_nodes; ++i) g.row_ptr[i + 1] += g.row_ptr[i];
  g.col_idx.resize(2 * g.edges.size());
  std::vector<int> cursor(g.row_ptr.begin(), g.row_ptr.end() - 1);
  for (const auto& [u, v] : g.edges) {
    g.col_idx[cursor[u]++] = v;
    g.col_idx[cursor[v]++] = u;
  }
  for (int i = 0; i < g.n_nodes; ++i) {
    std::sort(g.col_idx.begin() + g.row_ptr[i], g.col_idx.begin() + g.row_ptr[i + 1]);
  }
  return g;
}

bool Graph::has_edge(int u, int v) const {
  const auto begin = col_idx.begin() + row_ptr[u];
  const auto end = col_idx.begin() + row_ptr[u + 1];
  return std::binary_search(begin, end, v);
}

bool Graph::operator==(const Graph& other) const {
  return n_nodes == other.n_nodes && n_features == other.n_features &&
         n_classes == other.n_classes && labels == other.labels &&
         edges == other.edges && splits == other.splits &&
         features == other.features;
}

HomophilyResult homophily_ratio(const std::vector<std::pair<int, int>>& edges,
                                const std::vector<int>& labels) {
  if (edges.empty()) return {0.0, true};
  std::size_t same = 0;
  for (const auto& [u, v] : edges) {
    if (labels[u] == labels[v]) ++same;
  }
  return {static_cast<double>(same) / static_cast<double>(edges.size()), false};
}

HomophilyResult homophily_ratio(const Graph& g, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != g.n_nodes) {
    throw GsscError("homophily_ratio: label vector size mismatch");
  }
  return homophily_ratio(g.edges, labels);
}

Graph generate_sbm(int n, int n_classes, double p_in, double p_out, int dim,
                   double feature_noise, std::uint64_t seed) {
  if (n_classes < 1 || n < n_classes) throw GsscError("generate_sbm: need n >= n_classes >= 1");
  if (n % n_classes != 0) {
    throw GsscError("generate_sbm: n=" + std::to_string(n) +
                    " not divisible by n_classes=" + std::to_string(n_classes));
  }
  if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0)) {
    throw GsscError("generate_sbm: need 0 <= p_out <= p_in <= 1");
  }
  if (dim < n_classes) {
    throw GsscError("generate_sbm: dim must be >= n_classes for orthogonal class means");
  }
  if (feature_noise < 0.0) throw GsscError("generate_sbm: feature_noise must be >= 0");

  const int per_class = n / n_classes;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i / per_class;

  // Orthogonal class means along the first n_classes axes.
  Matrix features(n, dim);
  Rng frng(derive_seed(seed, "features"));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) {
      features(i, j) = (j == labels[i] ? 1.0 : 0.0) + feature_noise * frng.normal();
    }
  }

  std::vector<std::pair<int, int>> edges;
  Rng erng(derive_seed(seed, "edges"));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p = (labels[i] == labels[j]) ? p_in : p_out;
      if (erng.uniform() < p) edges.emplace_back(i, j);
    }
  }

  return Graph::build(std::move(features), std::move(labels), n_classes,
                      std::move(edges), make_stratified_splits(n, n_classes, seed));
}

Graph inject_label_noise(const Graph& g, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::LabelSymmetric && spec.kind != NoiseKind::LabelAsymmetric) {
    throw GsscError("inject_label_noise: spec.kind is not a label-noise kind");
  }
  if (spec.ratio < 0.0 || spec.ratio > 1.0) {
    throw GsscError("inject_label_noise: ratio outside [0,1]");
  }
  std::vector<int> labels = g.labels;
  Rng rng(derive_seed(spec.seed, "label-noise"));
  const int C = g.n_classes;
  for (int v : g.splits.train) {
    if (rng.uniform() >= spec.ratio) continue;
    if (spec.kind == NoiseKind::LabelSymmetric) {
      if (C < 2) continue;
      const int offset = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(C - 1)));
      labels[v] = (labels[v] + offset) % C;
    } else {
      labels[v] = (labels[v] + 1) % C;
    }
  }
  return Graph::build(g.features, std::move(labels), g.n_classes, g.edges, g.splits);
}

Graph perturb_edges(const Graph& g, const NoiseSpec& spec, EdgeNoiseSplit split) {
  if (spec.kind != NoiseKind::EdgePerturb) {
    throw GsscError("perturb_edges: spec.kind must be edge-perturb");
  }
  if (spec.ratio < 0.0 || spec.ratio > 1.0) {
    throw GsscError("perturb_edges: ratio outside [0,1]");
  }
  const std::size_t m = g.edges.size();
  const std::size_t budget =
      split == EdgeNoiseSplit::Half
          ? static_cast<std::size_t>(spec.ratio * static_cast<double>(m) / 2.0)
          : static_cast<std::size_t>(spec.ratio * static_cast<double>(m));
  if (budget == 0) return g;

  const std::size_t max_edges =
      static_cast<std::size_t>(g.n_nodes) * (g.n_nodes - 1) / 2;
  if (m + budget > max_edges) {
    throw GsscError("perturb_edges: graph too dense to add " +
                    std::to_string(budget) + " new edges");
  }

  Rng rng(derive_seed(spec.seed, "edge-perturb"));

  // Remove `budget` distinct existing edges via partial Fisher-Yates.
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = i + rng.uniform_int(m - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<bool> removed(m, false);
  for (std::size_t i = 0; i < budget; ++i) removed[idx[i]] = true;

  std::vector<std::pair<int, int>> edges;
  edges.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!removed[i]) edges.push_back(g.edges[i]);
  }

  // Add `budget` uniformly chosen non-edges of the original graph.
  std::set<std::pair<int, int>> added;
  std::size_t attempts = 0;
  const std::size_t attempt_cap = 200 * budget + 10000;
  while (added.size() < budget) {
    if (++attempts > attempt_cap) {
      throw GsscError("perturb_edges: graph too dense to add requested edges");
    }
    int u = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(g.n_nodes)));
    int v = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(g.n_nodes)));
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (g.has_edge(u, v)) continue;
    added.insert({u, v});
  }
  for (const auto& e : added) edges.push_back(e);

  return Graph::build(g.features, g.labels, g.n_classes, std::move(edges), g.splits);
}

Graph remove_edges_biased(const Graph& g, double frac, double bias,
                          std::uint64_t seed) {
  if (frac < 0.0 || frac >= 1.0) throw GsscError("remove_edges_biased: frac outside [0,1)");
  if (bias < -1.0 || bias > 1.0) throw GsscError("remove_edges_biased: bias outside [-1,1]");
  const std::size_t m = g.edges.size();
  const std::size_t k = static_cast<std::size_t>(frac * static_cast<double>(m));
  if (k == 0) return g;

  // Weighted sampling without replacement: remove the k smallest keys
  // -log(U)/w. Weight 0 maps to +inf (never removed unless forced).
  Rng rng(derive_seed(seed, "biased-removal"));
  std::vector<std::pair<double, std::size_t>> keys(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& [u, v] = g.edges[i];
    const bool intra = g.labels[u] == g.labels[v];
    const double w = intra ? (1.0 - bias) : (1.0 + bias);
    const double draw = -std::log(rng.uniform_open());
    keys[i] = {w > 0.0 ? draw / w : std::numeric_limits<double>::infinity(), i};
  }
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k - 1), keys.end());
  std::vector<bool> removed(m, false);
  for (std::size_t i = 0; i < k; ++i) removed[keys[i].second] = true;

  std::vector<std::pair<int, int>> edges;
  edges.reserve(m - k);
  for (std::size_t i = 0; i < m; ++i) {
    if (!removed[i]) edges.push_back(g.edges[i]);
  }
  return Graph::build(g.features, g.labels, g.n_classes, std::move(edges), g.splits);
}

Graph load_graph(const fs::path& dir) {
  const fs::path nodes_path = dir / "nodes.tsv";
  const fs::path edges_path = dir / "edges.tsv";
  const fs::path splits_path = dir / "splits.json";
  for (const auto& p : {nodes_path, edges_path, splits_path}) {
    if (!fs::exists(p)) throw GsscError("missing file: " + p.string());
  }

  std::ifstream nodes_in(nodes_path);
  Matrix features;
  std::vector<int> labels;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  int n_feat = -1;
  while (std::getline(nodes_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto toks = split_tabs(line);
    if (toks.size() < 2) {
      throw GsscError("nodes.tsv: expected node_id<TAB>label<TAB>features at line " +
                      std::to_string(line_no));
    }
    const long id = parse_int(toks[0], "nodes.tsv", line_no, "node id");
    if (id != static_cast<long>(rows.size())) {
      throw GsscError("nodes.tsv: node id " + std::to_string(id) +
                      " out of order at line " + std::to_string(line_no));
    }
    const long label = parse_int(toks[1], "nodes.tsv", line_no, "label");
    if (label < 0) {
      throw GsscError("nodes.tsv: negative label at line " + std::to_string(line_no));
    }
    labels.push_back(static_cast<int>(label));
    std::vector<double> feats;
    feats.reserve(toks.size() - 2);
    for (std::size_t t = 2; t < toks.size(); ++t) {
      feats.push_back(parse_double(toks[t], "nodes.tsv", line_no));
    }
    if (n_feat < 0) {
      n_feat = static_cast<int>(feats.size());
    } else if (static_cast<int>(feats.size()) != n_feat) {
      throw GsscError("nodes.tsv: inconsistent feature count at line " +
                      std::to_string(line_no));
    }
    rows.push_back(std::move(feats));
  }
  if (rows.empty()) throw GsscError("nodes.tsv: no nodes");
  const int n = static_cast<int>(rows.size());
  features.resize(n, n_feat);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n_feat; ++j) features(i, j) = rows[i][j];
  }

  std::ifstream edges_in(edges_path);
  std::vector<std::pair<int, int>> edges;
  line_no = 0;
  while (std::getline(edges_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto toks = split_tabs(line);
    if (toks.size() != 2) {
      throw GsscError("edges.tsv: expected src<TAB>dst at line " + std::to_string(line_no));
    }
    const long u = parse_int(toks[0], "edges.tsv", line_no, "src");
    const long v = parse_int(toks[1], "edges.tsv", line_no, "dst");
    if (u == v) {
      throw GsscError("edges.tsv: self-loop at line " + std::to_string(line_no));
    }
    if (u > v) {
      throw GsscError("edges.tsv: edge not in canonical src<dst order at line " +
                      std::to_string(line_no));
    }
    if (u < 0 || v >= n) {
      throw GsscError("edges.tsv: edge endpoint out of range at line " +
                      std::to_string(line_no));
    }
    if (!edges.empty() && edges.back() == std::make_pair(static_cast<int>(u), static_cast<int>(v))) {
      throw GsscError("edges.tsv: duplicate edge at line " + std::to_string(line_no));
    }
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }

  json sj;
  try {
    std::ifstream splits_in(splits_path);
    splits_in >> sj;
  } catch (const json::exception& e) {
    throw GsscError("splits.json: parse error: " + std::string(e.what()));
  }
  Splits splits;
  for (const auto& [key, target] :
       std::initializer_list<std::pair<const char*, std::vector<int>*>>{
           {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}) {
    if (!sj.contains(key) || !sj[key].is_array()) {
      throw GsscError(std::string("splits.json: missing integer array '") + key + "'");
    }
    for (const auto& v : sj[key]) target->push_back(v.get<int>());
  }

  const int n_classes = 1 + *std::max_element(labels.begin(), labels.end());
  return Graph::build(std::move(features), std::move(labels), n_classes,
                      std::move(edges), std::move(splits));
}

void save_graph(const Graph& g, const fs::path& dir) {
  fs::path tmp = dir;
  tmp += ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp);

  {
    std::ofstream out(tmp / "nodes.tsv");
    if (!out) throw GsscError("save_graph: cannot write " + (tmp / "nodes.tsv").string());
    for (int i = 0; i < g.n_nodes; ++i) {
      out << i << '\t' << g.labels[i];
      for (int j = 0; j < g.n_features; ++j) out << '\t' << format_double(g.features(i, j));
      out << '\n';
    }
  }
  {
    std::ofstream out(tmp / "edges.tsv");
    if (!out) throw GsscError("save_graph: cannot write " + (tmp / "edges.tsv").string());
    for (const auto& [u, v] : g.edges) out << u << '\t' << v << '\n';
  }
  {
    json sj;
    sj["train"] = g.splits.train;
    sj["val"] = g.splits.val;
    sj["test"] = g.splits.test;
    std::ofstream out(tmp / "splits.json");
    if (!out) throw GsscError("save_graph: cannot write " + (tmp / "splits.json").string());
    out << sj.dump(2) << '\n';
  }

  fs::remove_all(dir, ec);
  fs::rename(tmp, dir);
}

std::string dataset_fingerprint(const fs::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_file = [&h](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw GsscError("dataset_fingerprint: cannot read " + p.string());
    char c;
    while (in.get(c)) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  };
  mix_file(dir / "nodes.tsv");
  mix_file(dir / "edges.tsv");
  mix_file(dir / "splits.json");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace gssc
