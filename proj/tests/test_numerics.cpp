#include <doctest.h>

#include "priorflow/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

using namespace priorflow;

namespace {

// Scalar re-evaluation of a dense tanh/relu network, loop by loop.
std::vector<double> reference_forward(const Mlp& net, std::vector<double> x) {
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    std::vector<double> y(static_cast<std::size_t>(layer.weight.rows()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      double acc = layer.bias(r);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) acc += layer.weight(r, c) * x[static_cast<std::size_t>(c)];
      if (k + 1 < net.layers.size()) acc = net.activation == Activation::tanh ? std::tanh(acc) : std::max(acc, 0.0);
      y[static_cast<std::size_t>(r)] = acc;
    }
    x = std::move(y);
  }
  return x;
}

double pairing(const Mlp& net, const Vector& x, const Vector& cot) { return mlp_forward(net, x).dot(cot); }

// Worst per-entry relative error with a small absolute floor on the scale.
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-3});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("zero network maps everything to zero") {
  const std::vector<int> widths{3, 5, 2};
  const auto net = Mlp::zeros(widths, Activation::tanh);
  CHECK(mlp_forward(net, Vector(Vector::Constant(3, 7.0))).isZero(0.0));
}

TEST_CASE("single identity affine layer") {
  const std::vector<int> widths{2, 2};
  auto net = Mlp::zeros(widths, Activation::tanh);
  net.layers[0].weight = Matrix::Identity(2, 2);
  const Vector y = mlp_forward(net, Vector{{1.0, 2.0}});
  CHECK(y(0) == 1.0);
  CHECK(y(1) == 2.0);
}

TEST_CASE("2-4-1 tanh network matches scalar re-evaluation") {
  Rng rng(0);
  const std::vector<int> widths{2, 4, 1};
  const auto net = Mlp::random(widths, Activation::tanh, rng);
  const Vector y = mlp_forward(net, Vector{{0.5, -0.5}});
  const auto expected = reference_forward(net, {0.5, -0.5});
  REQUIRE(y.size() == 1);
  CHECK(y(0) == doctest::Approx(expected[0]).epsilon(1e-14));
}

TEST_CASE("random init respects the fan-in bound") {
  Rng rng(3);
  const std::vector<int> widths{16, 8, 1};
  const auto net = Mlp::random(widths, Activation::relu, rng);
  CHECK(net.layers[0].weight.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(net.layers[1].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(net.widths() == widths);
}

TEST_CASE("forward is deterministic and rejects bad input width") {
  Rng a(11);
  Rng b(11);
  const std::vector<int> widths{3, 8, 8, 2};
  const auto n1 = Mlp::random(widths, Activation::tanh, a);
  const auto n2 = Mlp::random(widths, Activation::tanh, b);
  CHECK(n1 == n2);
  const Vector x{{0.1, 0.2, 0.3}};
  const Vector y1 = mlp_forward(n1, x);
  const Vector y2 = mlp_forward(n2, x);
  CHECK(std::memcmp(y1.data(), y2.data(), sizeof(double) * 2) == 0);
  CHECK_THROWS_AS(mlp_forward(n1, Vector(Vector::Zero(2))), DimensionError);
}

TEST_CASE("zero cotangent gives zero gradients") {
  Rng rng(1);
  const std::vector<int> widths{2, 6, 3};
  const auto net = Mlp::random(widths, Activation::tanh, rng);
  const auto g = mlp_gradient(net, Vector{{0.3, -1.0}}, Vector::Zero(3));
  std::vector<double> flat;
  append_parameters(g.params, flat);
  for (double v : flat) CHECK(v == 0.0);
  CHECK(g.input.isZero(0.0));
}

TEST_CASE("bias gradient of an affine layer equals the cotangent") {
  Rng rng(2);
  const std::vector<int> widths{3, 2};
  const auto net = Mlp::random(widths, Activation::tanh, rng);
  const Vector cot{{0.7, -1.3}};
  const auto g = mlp_gradient(net, Vector{{1.0, 2.0, 3.0}}, cot);
  CHECK(g.params.layers[0].bias(0) == 0.7);
  CHECK(g.params.layers[0].bias(1) == -1.3);
}

TEST_CASE("reverse-mode gradients match central differences over random trials") {
  Rng rng(42);
  std::uniform_int_distribution<int> width(1, 6);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> widths{width(rng), width(rng), width(rng), width(rng)};
    auto net = Mlp::random(widths, Activation::tanh, rng);
    Vector x(widths.front());
    for (auto& v : x) v = normal(rng);
    Vector cot(widths.back());
    for (auto& v : cot) v = normal(rng);
    const auto g = mlp_gradient(net, x, cot);

    std::vector<double> params;
    append_parameters(net, params);
    std::vector<double> numeric(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params;
      p[i] += h;
      assign_parameters(net, p);
      const double up = pairing(net, x, cot);
      p[i] -= 2 * h;
      assign_parameters(net, p);
      const double down = pairing(net, x, cot);
      numeric[i] = (up - down) / (2 * h);
    }
    assign_parameters(net, params);
    std::vector<double> analytic;
    append_parameters(g.params, analytic);
    worst = std::max(worst, max_rel_error(analytic, numeric));

    std::vector<double> in_numeric(static_cast<std::size_t>(x.size()));
    std::vector<double> in_analytic(g.input.data(), g.input.data() + g.input.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Vector up = x;
      Vector down = x;
      up(i) += h;
      down(i) -= h;
      in_numeric[static_cast<std::size_t>(i)] = (pairing(net, up, cot) - pairing(net, down, cot)) / (2 * h);
    }
    worst = std::max(worst, max_rel_error(in_analytic, in_numeric));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("batched gradient is the sum of per-sample gradients") {
  Rng rng(5);
  const std::vector<int> widths{2, 5, 2};
  const auto net = Mlp::random(widths, Activation::relu, rng);
  Matrix x{{0.5, -1.0, 2.0}, {1.5, 0.25, -0.75}};
  Matrix cot{{1.0, 0.5, -2.0}, {0.0, 1.0, 0.3}};
  const auto batched = mlp_gradient(net, x, cot);
  Mlp summed = net.zeros_like();
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto g = mlp_gradient(net, Vector(x.col(j)), Vector(cot.col(j)));
    summed += g.params;
    CHECK(batched.input.col(j).isApprox(g.input.col(0), 1e-14));
  }
  std::vector<double> a;
  std::vector<double> b;
  append_parameters(batched.params, a);
  append_parameters(summed, b);
  CHECK(max_rel_error(a, b) < 1e-12);
}

TEST_CASE("adam: zero gradient leaves parameters and advances the step count") {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamOptimizer opt(2);
  CHECK(opt.step(p, g));
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: first step moves by the learning rate") {
  // m_hat = g and v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
  for (double g0 : {3.0, -0.25, 1e-3}) {
    std::vector<double> p{0.0};
    const std::vector<double> g{g0};
    AdamOptimizer opt(1, AdamConfig{0.01});
    REQUIRE(opt.step(p, g));
    CHECK(std::abs(p[0]) == doctest::Approx(0.01).epsilon(1e-5));
    CHECK((p[0] < 0) == (g0 > 0));
  }
}

TEST_CASE("adam: minimizes a quadratic bowl") {
  std::vector<double> w{1.0};
  AdamOptimizer opt(1, AdamConfig{1e-2});
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> g{2.0 * w[0]};
    opt.step(w, g);
  }
  CHECK(std::abs(w[0]) < 1e-3);
}

TEST_CASE("adam: non-finite gradients are skipped") {
  std::vector<double> p{1.0};
  const std::vector<double> g{std::nan("")};
  AdamOptimizer opt(1);
  CHECK_FALSE(opt.step(p, g));
  CHECK(p[0] == 1.0);
  CHECK(opt.step_count() == 0);
  std::vector<double> q{1.0, 2.0};
  CHECK_THROWS_AS(opt.step(q, std::vector<double>{0.0, 0.0}), DimensionError);
}
