#include "gssc/nn.hpp"

#include "gssc/rng.hpp"

#include <cmath>

namespace gssc {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

Matrix glorot(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = limit * (2.0 * rng.uniform() - 1.0);
  }
  return m;
}
}  // namespace

BackboneState BackboneState::init(int d, int hidden, int n_classes, int layers,
                                  double dropout_rate, std::uint64_t seed) {
  if (layers < 1) throw GsscError("BackboneState: need at least one layer");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw GsscError("BackboneState: dropout_rate outside [0,1)");
  }
  BackboneState st;
  Rng rng(derive_seed(seed, "theta-init"));
  st.layer_weights.push_back(glorot(d, hidden, rng));
  for (int l = 1; l < layers; ++l) st.layer_weights.push_back(glorot(hidden, hidden, rng));
  for (int l = 0; l < layers; ++l) {
    BnLayer bn;
    bn.gamma = Vector::Ones(hidden);
    bn.beta = Vector::Zero(hidden);
    bn.running_mean = Vector::Zero(hidden);
    bn.running_var = Vector::Ones(hidden);
    st.bn.push_back(std::move(bn));
  }
  st.head_f = glorot(hidden, n_classes, rng);
  st.head_g = glorot(hidden, n_classes, rng);
  const double a_limit = std::sqrt(6.0 / static_cast<double>(2 * hidden + 1));
  st.interp_a = Vector(2 * hidden);
  for (int i = 0; i < 2 * hidden; ++i) st.interp_a(i) = a_limit * (2.0 * rng.uniform() - 1.0);
  st.dropout_rate = dropout_rate;
  return st;
}

BackboneGrads BackboneGrads::zeros_like(const BackboneState& st) {
  BackboneGrads g;
  for (const auto& w : st.layer_weights) g.layer_weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& bn : st.bn) {
    g.bn_gamma.push_back(Vector::Zero(bn.gamma.size()));
    g.bn_beta.push_back(Vector::Zero(bn.beta.size()));
  }
  g.head_f = Matrix::Zero(st.head_f.rows(), st.head_f.cols());
  g.head_g = Matrix::Zero(st.head_g.rows(), st.head_g.cols());
  g.interp_a = Vector::Zero(st.interp_a.size());
  return g;
}

void BackboneGrads::set_zero() {
  for (auto& w : layer_weights) w.setZero();
  for (auto& v : bn_gamma) v.setZero();
  for (auto& v : bn_beta) v.setZero();
  head_f.setZero();
  head_g.setZero();
  interp_a.setZero();
}

bool BackboneGrads::all_finite() const {
  for (const auto& w : layer_weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& v : bn_gamma) {
    if (!v.allFinite()) return false;
  }
  for (const auto& v : bn_beta) {
    if (!v.allFinite()) return false;
  }
  return head_f.allFinite() && head_g.allFinite() && interp_a.allFinite();
}

Matrix mlp_forward(const Matrix& X, BackboneState& st, std::uint64_t seed,
                   ForwardCache* cache) {
  if (static_cast<int>(X.cols()) != st.input_dim()) {
    throw GsscError("mlp_forward: input has " + std::to_string(X.cols()) +
                    " features, backbone expects " + std::to_string(st.input_dim()));
  }
  if (!X.allFinite()) throw GsscError("mlp_forward: non-finite input");
  const auto n = X.rows();
  const bool train = st.mode == Mode::Train;
  if (cache) cache->layers.clear();

  Matrix h = X;
  for (int l = 0; l < st.n_layers(); ++l) {
    LayerCache lc;
    if (cache) lc.input = h;

    Matrix pre = h * st.layer_weights[l];
    Matrix act = pre.cwiseMax(0.0);

    auto& bn = st.bn[l];
    Matrix out;
    Vector mean, inv_std;
    if (train) {
      mean = act.colwise().mean();
      Vector var = (act.rowwise() - mean.transpose()).array().square().colwise().mean();
      inv_std = (var.array() + kBnEps).rsqrt();
      bn.running_mean = (1.0 - kBnMomentum) * bn.running_mean + kBnMomentum * mean;
      bn.running_var = (1.0 - kBnMomentum) * bn.running_var + kBnMomentum * var;
      Matrix xhat = (act.rowwise() - mean.transpose()).array().rowwise() *
                    inv_std.transpose().array();
      out = (xhat.array().rowwise() * bn.gamma.transpose().array()).rowwise() +
            bn.beta.transpose().array();
      if (cache) lc.xhat = xhat;
    } else {
      Vector es = (bn.running_var.array() + kBnEps).rsqrt();
      out = ((act.rowwise() - bn.running_mean.transpose()).array().rowwise() *
             (es.array() * bn.gamma.array()).transpose())
                .rowwise() +
            bn.beta.transpose().array();
    }

    if (train && st.dropout_rate > 0.0) {
      Rng rng(derive_seed(seed, "dropout", static_cast<std::uint64_t>(l)));
      const double keep = 1.0 - st.dropout_rate;
      Matrix scale(n, out.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
          scale(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
      }
      out = out.cwiseProduct(scale);
      if (cache) lc.drop_scale = std::move(scale);
    }

    if (cache) {
      lc.preact = std::move(pre);
      lc.relu_out = std::move(act);
      lc.mean = std::move(mean);
      lc.inv_std = std::move(inv_std);
      cache->layers.push_back(std::move(lc));
    }
    h = std::move(out);
  }
  if (cache) cache->output = h;
  return h;
}

void mlp_backward(const BackboneState& st, const ForwardCache& cache,
                  const Matrix& d_output, BackboneGrads& grads) {
  if (cache.layers.size() != static_cast<std::size_t>(st.n_layers()) ||
      cache.layers.front().inv_std.size() == 0) {
    throw GsscError("mlp_backward: cache does not match a train-mode forward pass");
  }
  Matrix d = d_output;
  for (int l = st.n_layers() - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];
    const auto n = static_cast<double>(lc.xhat.rows());

    if (lc.drop_scale.size() > 0) d = d.cwiseProduct(lc.drop_scale);

    // Batch-norm backward with batch statistics.
    grads.bn_gamma[l] += (d.cwiseProduct(lc.xhat)).colwise().sum().transpose();
    grads.bn_beta[l] += d.colwise().sum().transpose();
    Matrix d_xhat = d.array().rowwise() * st.bn[l].gamma.transpose().array();
    Vector mean_dxhat = d_xhat.colwise().mean();
    Vector mean_dxhat_xhat = (d_xhat.cwiseProduct(lc.xhat)).colwise().mean();
    Matrix d_act =
        ((d_xhat.rowwise() - mean_dxhat.transpose()) -
         (lc.xhat.array().rowwise() * mean_dxhat_xhat.transpose().array()).matrix())
            .array()
            .rowwise() *
        lc.inv_std.transpose().array();
    (void)n;

    Matrix d_pre = (lc.preact.array() > 0.0).select(d_act, Matrix::Zero(d_act.rows(), d_act.cols()));

    grads.layer_weights[l] += lc.input.transpose() * d_pre;
    if (l > 0) d = d_pre * st.layer_weights[l].transpose();
  }
}

void head_apply(const Matrix& H, const BackboneState& st, Matrix& Y, Matrix& Z) {
  if (H.cols() != st.head_f.rows()) throw GsscError("head_apply: shape mismatch");
  Y = H * st.head_f;
  Z = H * st.head_g;
}

std::vector<ParamView> param_views(BackboneState& st, const BackboneGrads& g) {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < st.layer_weights.size(); ++l) {
    out.push_back({"layer_weights[" + std::to_string(l) + "]",
                   st.layer_weights[l].data(), g.layer_weights[l].data(),
                   st.layer_weights[l].size()});
  }
  for (std::size_t l = 0; l < st.bn.size(); ++l) {
    out.push_back({"bn_gamma[" + std::to_string(l) + "]", st.bn[l].gamma.data(),
                   g.bn_gamma[l].data(), st.bn[l].gamma.size()});
    out.push_back({"bn_beta[" + std::to_string(l) + "]", st.bn[l].beta.data(),
                   g.bn_beta[l].data(), st.bn[l].beta.size()});
  }
  out.push_back({"head_f", st.head_f.data(), g.head_f.data(), st.head_f.size()});
  out.push_back({"head_g", st.head_g.data(), g.head_g.data(), st.head_g.size()});
  out.push_back({"interp_a", st.interp_a.data(), g.interp_a.data(), st.interp_a.size()});
  return out;
}

double grad_check(const std::function<double()>& f, std::span<ParamView> params,
                  double eps, int max_coords_per_tensor, std::uint64_t probe_seed) {
  if (eps < 1e-7 || eps > 1e-3) throw GsscError("grad_check: eps outside [1e-7, 1e-3]");
  const double base = f();
  if (f() != base) throw GsscError("grad_check: f is not deterministic");

  double worst = 0.0;
  Rng rng(derive_seed(probe_seed, "grad-check-probe"));
  for (const auto& p : params) {
    std::vector<std::ptrdiff_t> coords;
    if (max_coords_per_tensor > 0 && p.size > max_coords_per_tensor) {
      for (int k = 0; k < max_coords_per_tensor; ++k) {
        coords.push_back(static_cast<std::ptrdiff_t>(
            rng.uniform_int(static_cast<std::uint64_t>(p.size))));
      }
    } else {
      coords.resize(static_cast<std::size_t>(p.size));
      for (std::ptrdiff_t i = 0; i < p.size; ++i) coords[static_cast<std::size_t>(i)] = i;
    }
    for (const auto c : coords) {
      const double saved = p.value[c];
      p.value[c] = saved + eps;
      const double up = f();
      p.value[c] = saved - eps;
      const double down = f();
      p.value[c] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad[c];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace gssc
