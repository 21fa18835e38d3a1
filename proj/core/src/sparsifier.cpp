#include "gssc/sparsifier.hpp"

#include "gssc/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace gssc {

namespace {
constexpr double kFloor = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

SparsifierState SparsifierState::init(int d, int hidden, double alpha, double tau,
                                      std::uint64_t seed) {
  if (alpha < 0.0 || alpha > 1.0) throw GsscError("SparsifierState: alpha outside [0,1]");
  if (tau <= 0.0) throw GsscError("SparsifierState: temperature must be > 0");
  SparsifierState psi;
  Rng rng(derive_seed(seed, "psi-init"));
  // Scaled-down symmetric init: edge probabilities start near 1/2 (an almost
  // uniform keep distribution) so the kept subgraph is shaped by training
  // rather than by the random initial metric, while gradients stay nonzero.
  const double limit = 0.1 * std::sqrt(6.0 / static_cast<double>(hidden + d));
  psi.embed_weight = Matrix(hidden, d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < hidden; ++i) {
      psi.embed_weight(i, j) = limit * (2.0 * rng.uniform() - 1.0);
    }
  }
  psi.fusion_alpha = alpha;
  psi.temperature = tau;
  return psi;
}

std::size_t SparsifiedSubgraph::hard_count() const {
  std::size_t c = 0;
  for (auto h : hard) c += h;
  return c;
}

std::vector<std::size_t> SparsifiedSubgraph::kept_indices() const {
  std::vector<std::size_t> out;
  out.reserve(hard.size());
  for (std::size_t e = 0; e < hard.size(); ++e) {
    if (hard[e]) out.push_back(e);
  }
  return out;
}

std::vector<double> edge_probs(const Matrix& X,
                               const std::vector<std::pair<int, int>>& edges,
                               const SparsifierState& psi, Matrix* z_out) {
  if (edges.empty()) throw GsscError("edge_probs: empty edge set");
  if (X.cols() != psi.embed_weight.cols()) {
    throw GsscError("edge_probs: feature dim " + std::to_string(X.cols()) +
                    " does not match embed_weight columns " +
                    std::to_string(psi.embed_weight.cols()));
  }
  Matrix z = X * psi.embed_weight.transpose();  // N x F
  std::vector<double> lambda(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& [u, v] = edges[e];
    lambda[e] = sigmoid(z.row(u).dot(z.row(v)));
  }
  if (z_out) *z_out = std::move(z);
  return lambda;
}

std::vector<double> fuse(const std::vector<double>& lambda, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw GsscError("fuse: alpha outside [0,1]");
  std::vector<double> fused(lambda.size());
  for (std::size_t e = 0; e < lambda.size(); ++e) {
    fused[e] = (1.0 - alpha) * lambda[e] + alpha;
  }
  return fused;
}

SparsifiedSubgraph apply_gumbel(const std::vector<double>& fused, double tau,
                                const std::vector<double>& noise) {
  if (tau <= 0.0) throw GsscError("gumbel_sample: temperature must be > 0");
  if (noise.size() != fused.size()) throw GsscError("gumbel_sample: noise size mismatch");
  SparsifiedSubgraph sub;
  sub.soft.resize(fused.size());
  sub.hard.resize(fused.size());
  for (std::size_t e = 0; e < fused.size(); ++e) {
    double m = fused[e];
    if (m > 1.0) throw GsscError("gumbel_sample: strategy value above 1");
    if (m < kFloor) {
      m = kFloor;
      ++sub.clamped_edges;
    }
    const double logit = (std::log(m) + noise[e]) / tau;
    // hard = floor(soft + 1/2): soft >= 0.5 exactly when the logit is >= 0.
    sub.hard[e] = logit >= 0.0 ? 1 : 0;
    double s = sigmoid(logit);
    // Saturated sigmoids carry zero derivative; keep values inside (0,1).
    s = std::min(std::max(s, 1e-300), 1.0 - 1e-12);
    sub.soft[e] = s;
  }
  return sub;
}

SparsifiedSubgraph gumbel_sample(const std::vector<double>& fused, double tau,
                                 std::uint64_t seed) {
  std::vector<double> noise(fused.size());
  for (std::size_t e = 0; e < fused.size(); ++e) {
    Rng rng(derive_seed(seed, "gumbel", static_cast<std::uint64_t>(e)));
    noise[e] = rng.gumbel();
  }
  return apply_gumbel(fused, tau, noise);
}

SparsifiedSubgraph sample_subgraph(const Graph& g, const SparsifierState& psi,
                                   std::uint64_t seed, SparsifierCache* cache) {
  Matrix z;
  std::vector<double> lambda = edge_probs(g.features, g.edges, psi, &z);
  std::vector<double> fused = fuse(lambda, psi.fusion_alpha);
  SparsifiedSubgraph sub = gumbel_sample(fused, psi.temperature, seed);
  if (cache) {
    cache->z = std::move(z);
    cache->lambda = std::move(lambda);
    cache->fused = std::move(fused);
  }
  return sub;
}

void save_sparsified(const std::vector<std::pair<int, int>>& edges,
                     const SparsifiedSubgraph& sub, const std::filesystem::path& path) {
  if (sub.soft.size() != edges.size()) throw GsscError("save_sparsified: size mismatch");
  std::ofstream out(path);
  if (!out) throw GsscError("save_sparsified: cannot write " + path.string());
  char buf[64];
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), sub.soft[e]);
    if (ec != std::errc{}) throw GsscError("save_sparsified: formatting failure");
    out << edges[e].first << '\t' << edges[e].second << '\t'
        << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\t'
        << int(sub.hard[e]) << '\n';
  }
}

void sparsifier_backward(const Matrix& X,
                         const std::vector<std::pair<int, int>>& edges,
                         const SparsifierState& psi, const SparsifierCache& cache,
                         const SparsifiedSubgraph& sub,
                         const std::vector<double>& d_soft, Matrix& d_weight) {
  if (d_soft.size() != edges.size()) throw GsscError("sparsifier_backward: size mismatch");
  if (d_weight.rows() != psi.embed_weight.rows() ||
      d_weight.cols() != psi.embed_weight.cols()) {
    throw GsscError("sparsifier_backward: gradient shape mismatch");
  }
  const double tau = psi.temperature;
  const double one_minus_alpha = 1.0 - psi.fusion_alpha;
  // d soft / d dot(z_u, z_v) = soft(1-soft)/(tau M) * (1-alpha) * lambda(1-lambda).
  // Accumulate per-node embedding gradients first, then one GEMM into W.
  Matrix d_z = Matrix::Zero(cache.z.rows(), cache.z.cols());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (d_soft[e] == 0.0) continue;
    const double s = sub.soft[e];
    const double m = std::max(cache.fused[e], 1e-12);
    const double lam = cache.lambda[e];
    const double chain = d_soft[e] * s * (1.0 - s) / (tau * m) * one_minus_alpha *
                         lam * (1.0 - lam);
    if (chain == 0.0) continue;
    const auto& [u, v] = edges[e];
    d_z.row(u) += chain * cache.z.row(v);
    d_z.row(v) += chain * cache.z.row(u);
  }
  d_weight += d_z.transpose() * X;
}

}  // namespace gssc
