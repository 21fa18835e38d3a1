#include "doctest.h"

#include "gssc/nn.hpp"
#include "gssc/rng.hpp"

#include <cmath>

using namespace gssc;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("eval mode with all-negative pre-activations broadcasts the shift") {
  BackboneState st = BackboneState::init(3, 4, 2, 1, 0.0, 1);
  st.mode = Mode::Eval;
  st.bn[0].beta = Vector::LinSpaced(4, 0.5, 2.0);
  st.layer_weights[0] = Matrix::Ones(3, 4);
  Matrix X = -Matrix::Ones(5, 3);  // pre-activations all -3, ReLU zeroes them
  Matrix H = mlp_forward(X, st, 0);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) CHECK(H(i, j) == doctest::Approx(st.bn[0].beta(j)));
  }
}

TEST_CASE("train mode standardizes columns when bn affine is identity") {
  BackboneState st = BackboneState::init(6, 5, 2, 1, 0.0, 2);
  st.mode = Mode::Train;
  Matrix X = random_matrix(64, 6, 7).array() + 1.0;
  Matrix H = mlp_forward(X, st, 0);
  for (int j = 0; j < 5; ++j) {
    const double mean = H.col(j).mean();
    const double var = (H.col(j).array() - mean).square().mean();
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // off by the bn epsilon
  }
}

TEST_CASE("eval forward is pure and structure-free") {
  BackboneState st = BackboneState::init(4, 6, 3, 2, 0.3, 3);
  st.mode = Mode::Eval;
  Matrix X = random_matrix(10, 4, 11);
  Matrix a = mlp_forward(X, st, 1);
  Matrix b = mlp_forward(X, st, 99);  // different seed: dropout must be inert
  CHECK(a == b);
}

TEST_CASE("mlp gradient matches central finite differences") {
  BackboneState st = BackboneState::init(5, 7, 3, 2, 0.0, 4);
  st.mode = Mode::Train;
  Matrix X = random_matrix(12, 5, 13);

  // A plain sum is constant under batch-norm (columns standardize to zero
  // mean), so probe with a fixed random weighting of the outputs.
  Matrix R = random_matrix(12, 7, 41);
  BackboneGrads grads = BackboneGrads::zeros_like(st);
  ForwardCache cache;
  mlp_forward(X, st, 0, &cache);
  mlp_backward(st, cache, R, grads);

  auto f = [&]() { return (mlp_forward(X, st, 0).array() * R.array()).sum(); };
  auto views = param_views(st, grads);
  // Heads and interp_a do not feed this objective; restrict to MLP tensors.
  std::vector<ParamView> mlp_views;
  for (auto& v : views) {
    if (v.name.rfind("head", 0) == 0 || v.name == "interp_a") continue;
    mlp_views.push_back(v);
  }
  const double err = grad_check(f, mlp_views, 1e-5);
  CHECK(err < 1e-4);

  SUBCASE("unweighted sum is invariant to the input weights") {
    BackboneGrads g2 = BackboneGrads::zeros_like(st);
    ForwardCache c2;
    Matrix H = mlp_forward(X, st, 0, &c2);
    mlp_backward(st, c2, Matrix::Ones(H.rows(), H.cols()), g2);
    CHECK(g2.layer_weights[0].cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("head_apply basics and gradients") {
  BackboneState st = BackboneState::init(4, 5, 3, 1, 0.0, 5);
  Matrix H = random_matrix(8, 5, 17);
  Matrix Y;
  Matrix Z;

  SUBCASE("zero head gives zero predictions") {
    st.head_f.setZero();
    head_apply(H, st, Y, Z);
    CHECK(Y.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identical heads give identical outputs") {
    st.head_g = st.head_f;
    head_apply(H, st, Y, Z);
    CHECK(Y == Z);
  }
  SUBCASE("gradient of sum(Y) w.r.t. head_f matches finite differences") {
    BackboneGrads grads = BackboneGrads::zeros_like(st);
    head_apply(H, st, Y, Z);
    grads.head_f += H.transpose() * Matrix::Ones(Y.rows(), Y.cols());
    auto f = [&]() {
      Matrix yy, zz;
      head_apply(H, st, yy, zz);
      return yy.sum();
    };
    ParamView view{"head_f", st.head_f.data(), grads.head_f.data(), st.head_f.size()};
    std::vector<ParamView> views{view};
    CHECK(grad_check(f, views, 1e-5) < 1e-4);
  }
}

TEST_CASE("grad_check harness") {
  SUBCASE("quadratic is exact") {
    Matrix p = random_matrix(4, 3, 23);
    Matrix analytic = p;  // d/dp of 0.5 ||p||^2
    auto f = [&]() { return 0.5 * p.squaredNorm(); };
    std::vector<ParamView> views{{"p", p.data(), analytic.data(), p.size()}};
    CHECK(grad_check(f, views, 1e-4) < 1e-8);
  }
  SUBCASE("detects a 10% fault on one coordinate") {
    Matrix p = random_matrix(3, 3, 29);
    Matrix analytic = p;
    analytic(1, 1) *= 1.10;
    auto f = [&]() { return 0.5 * p.squaredNorm(); };
    std::vector<ParamView> views{{"p", p.data(), analytic.data(), p.size()}};
    CHECK(grad_check(f, views, 1e-4) > 5e-2);
  }
  SUBCASE("rejects eps outside the supported window") {
    Matrix p = random_matrix(2, 2, 31);
    std::vector<ParamView> views{{"p", p.data(), p.data(), p.size()}};
    CHECK_THROWS_AS(grad_check([&]() { return p.sum(); }, views, 1e-2), GsscError);
  }
}

TEST_CASE("dropout scales by 1/(1-rate) in train mode") {
  BackboneState st = BackboneState::init(3, 4, 2, 1, 0.5, 6);
  st.mode = Mode::Train;
  st.bn[0].gamma.setOnes();
  Matrix X = random_matrix(200, 3, 37).cwiseAbs();
  Matrix H = mlp_forward(X, st, 123);
  // Entries are either 0 or 2x the undropped value; compare against rate 0.
  BackboneState st0 = st;
  st0.dropout_rate = 0.0;
  Matrix H0 = mlp_forward(X, st0, 123);
  int zeros = 0;
  for (int i = 0; i < H.rows(); ++i) {
    for (int j = 0; j < H.cols(); ++j) {
      if (H(i, j) == 0.0 && H0(i, j) != 0.0) {
        ++zeros;
      } else if (H0(i, j) != 0.0) {
        CHECK(H(i, j) == doctest::Approx(2.0 * H0(i, j)));
      }
    }
  }
  CHECK(zeros > 200);  // roughly half of 800
  CHECK(zeros < 600);
}
