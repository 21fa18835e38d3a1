// Dense kernels: the MLP backbone (per layer linear -> ReLU -> batch-norm ->
// dropout), the two prediction heads, hand-derived reverse-mode gradients for
// all of them, and a finite-difference verification harness.
#pragma once

#include "gssc/graph.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gssc {

enum class Mode { Train, Eval };

struct BnLayer {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
};

// Parameter set theta: layer weights, batch-norm affine + running stats, the
// two prediction heads f/g and the interpolation weight vector a.
struct BackboneState {
  std::vector<Matrix> layer_weights;  // W0: d x F, then F x F
  std::vector<BnLayer> bn;            // one per layer
  Matrix head_f;                      // F x C
  Matrix head_g;                      // F x C
  Vector interp_a;                    // 2F
  double dropout_rate = 0.0;
  Mode mode = Mode::Train;

  int input_dim() const { return static_cast<int>(layer_weights.front().rows()); }
  int hidden_dim() const { return static_cast<int>(layer_weights.front().cols()); }
  int n_layers() const { return static_cast<int>(layer_weights.size()); }
  int n_classes() const { return static_cast<int>(head_f.cols()); }

  // Symmetric-uniform init with scale sqrt(6/(fan_in+fan_out)); bn affine is
  // identity, running stats (0, 1).
  static BackboneState init(int d, int hidden, int n_classes, int layers,
                            double dropout_rate, std::uint64_t seed);
};

// Gradient bundle, shape-congruent with BackboneState's trainable tensors.
struct BackboneGrads {
  std::vector<Matrix> layer_weights;
  std::vector<Vector> bn_gamma;
  std::vector<Vector> bn_beta;
  Matrix head_f;
  Matrix head_g;
  Vector interp_a;

  static BackboneGrads zeros_like(const BackboneState& st);
  void set_zero();
  bool all_finite() const;
};

struct LayerCache {
  Matrix input;      // input to the linear map
  Matrix preact;     // before ReLU
  Matrix relu_out;   // after ReLU, before BN
  Vector mean;       // batch statistics used for normalization
  Vector inv_std;
  Matrix xhat;       // normalized activations
  Matrix drop_scale; // multiplicative dropout factor (empty when inactive)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix output;  // H^(L), n x F
};

// Train mode normalizes with batch statistics (updating the running buffers)
// and applies inverted dropout with the mask drawn from `seed`; eval mode is a
// pure function of (X, theta) using running statistics, dropout disabled.
Matrix mlp_forward(const Matrix& X, BackboneState& st, std::uint64_t seed,
                   ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(theta) for a loss whose gradient at the MLP output is
// `d_output`. Requires the cache of the matching train-mode forward pass.
void mlp_backward(const BackboneState& st, const ForwardCache& cache,
                  const Matrix& d_output, BackboneGrads& grads);

// Two independent linear heads: Y = H * head_f, Z = H * head_g.
void head_apply(const Matrix& H, const BackboneState& st, Matrix& Y, Matrix& Z);

// Flat view pairing a parameter tensor with its analytic gradient, consumed
// by grad_check.
struct ParamView {
  std::string name;
  double* value = nullptr;
  const double* grad = nullptr;
  std::ptrdiff_t size = 0;
};

std::vector<ParamView> param_views(BackboneState& st, const BackboneGrads& g);

// Central-difference check of an analytic gradient. Perturbs coordinates in
// place and restores them; returns the worst relative error with denominator
// max(|analytic|, |numeric|, 1e-8). Tensors larger than max_coords_per_tensor
// are probed on a random coordinate subset. Throws if f is not deterministic.
double grad_check(const std::function<double()>& f, std::span<ParamView> params,
                  double eps, int max_coords_per_tensor = -1,
                  std::uint64_t probe_seed = 0);

}  // namespace gssc
