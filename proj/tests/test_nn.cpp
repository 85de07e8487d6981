#include <doctest.h>

#include <cmath>
#include <sstream>

#include "relaybeam/agent.hpp"
#include "relaybeam/nn.hpp"

using namespace relaybeam;

namespace {

Mlp linear_layer(const Matrix& w, const Vector& b) { return Mlp({Layer{w, b, Activation::Linear}}); }

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("zero network outputs zero") {
  const Mlp net = linear_layer(Matrix::Zero(3, 4), Vector::Zero(3));
  CHECK(net.forward_one(Vector::Ones(4)).isZero());
}

TEST_CASE("identity layer passes input through") {
  const Mlp net = linear_layer(Matrix::Identity(3, 3), Vector::Zero(3));
  const Vector x = Vector::LinSpaced(3, -1, 1);
  CHECK(net.forward_one(x) == x);
}

TEST_CASE("tanh output is bounded") {
  Rng rng(1);
  const Mlp net = Mlp::make({5, 7, 3}, {Activation::Tanh, Activation::Tanh}, rng);
  const Matrix y = net.forward(10.0 * random_matrix(rng, 5, 50));
  CHECK(y.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("dimension checks") {
  Rng rng(1);
  const Mlp net = Mlp::make({4, 3}, {Activation::Linear}, rng);
  CHECK_THROWS_AS(net.forward(Matrix::Zero(5, 1)), std::invalid_argument);
  MlpCache cache;
  net.forward(Matrix::Zero(4, 2), &cache);
  CHECK_THROWS_AS(net.backward(cache, Matrix::Zero(3, 1)), std::invalid_argument);
  CHECK_THROWS_AS(Mlp({Layer{Matrix::Zero(3, 4), Vector::Zero(3)}, Layer{Matrix::Zero(2, 2), Vector::Zero(2)}}),
                  std::invalid_argument);
}

TEST_CASE("linear layer gradient is the outer product") {
  Rng rng(2);
  const Matrix w = random_matrix(rng, 2, 3);
  const Mlp net = linear_layer(w, Vector::Zero(2));
  const Matrix x = random_matrix(rng, 3, 1);
  const Matrix dy = random_matrix(rng, 2, 1);
  MlpCache cache;
  net.forward(x, &cache);
  Matrix dx;
  const GradientSet g = net.backward(cache, dy, &dx);
  CHECK((g.layers[0].w - dy * x.transpose()).norm() < 1e-15);
  CHECK((g.layers[0].b - dy).norm() < 1e-15);
  CHECK((dx - w.transpose() * dy).norm() < 1e-15);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  Rng rng(3);
  const Mlp net = Mlp::make({4, 6, 2}, {Activation::Tanh, Activation::Linear}, rng);
  MlpCache cache;
  net.forward(random_matrix(rng, 4, 3), &cache);
  const GradientSet g = net.backward(cache, Matrix::Zero(2, 3));
  for (const auto& l : g.layers) {
    CHECK(l.w.isZero());
    CHECK(l.b.isZero());
  }
}

TEST_CASE("gradients match central differences on random two-layer nets") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Activation hidden = trial % 2 ? Activation::Tanh : Activation::Relu;
    const Mlp net = Mlp::make({5, 8, 3}, {hidden, Activation::Tanh}, rng);
    const auto r = gradient_check(net, random_matrix(rng, 5, 3), random_matrix(rng, 3, 3));
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("gradients match central differences on the production networks") {
  Rng rng(5);
  const Mlp actor = make_actor(9, 64, rng);
  const Mlp critic = make_critic(9, 64, rng);
  CHECK(gradient_check(actor, random_matrix(rng, 9, 2), random_matrix(rng, 2, 2)).max_rel_error <= 1e-4);
  CHECK(gradient_check(critic, random_matrix(rng, 11, 2), random_matrix(rng, 1, 2)).max_rel_error <= 1e-4);
}

TEST_CASE("adam: zero gradient and zero learning rate leave parameters unchanged") {
  Rng rng(6);
  Mlp net = Mlp::make({3, 4, 2}, {Activation::Tanh, Activation::Linear}, rng);
  const Mlp before = net;
  Adam opt(net, 0.1);
  opt.step(net, net.zero_gradients());
  CHECK(param_distance(net, before) == 0.0);
  Adam still(net, 0.0);
  GradientSet g = net.zero_gradients();
  g.layers[0].w.setOnes();
  still.step(net, g);
  CHECK(param_distance(net, before) == 0.0);
}

TEST_CASE("adam descends w^2") {
  Mlp net = linear_layer(Matrix::Ones(1, 1), Vector::Zero(1));
  Adam opt(net, 0.1);
  double prev = 1.0;
  for (int i = 0; i < 5; ++i) {
    GradientSet g = net.zero_gradients();
    g.layers[0].w(0, 0) = 2.0 * net.layers()[0].w(0, 0);
    opt.step(net, g);
    const double w = std::abs(net.layers()[0].w(0, 0));
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("adam rejects non-finite gradients") {
  Mlp net = linear_layer(Matrix::Ones(1, 1), Vector::Zero(1));
  Adam opt(net, 0.1);
  GradientSet g = net.zero_gradients();
  g.layers[0].b[0] = std::nan("");
  CHECK_THROWS_AS(opt.step(net, g), TrainingDivergence);
}

TEST_CASE("soft update") {
  Mlp target = linear_layer(Matrix::Zero(1, 1), Vector::Zero(1));
  const Mlp online = linear_layer(Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 2.0));
  Mlp half = target;
  soft_update(half, online, 0.5);
  CHECK(half.layers()[0].w(0, 0) == 1.0);
  Mlp none = target;
  soft_update(none, online, 0.0);
  CHECK(none.layers()[0].w(0, 0) == 0.0);
  Mlp full = target;
  soft_update(full, online, 1.0);
  CHECK(param_distance(full, online) == 0.0);

  Rng rng(7);
  Mlp a = Mlp::make({3, 5, 2}, {Activation::Tanh, Activation::Linear}, rng);
  const Mlp b = Mlp::make({3, 5, 2}, {Activation::Tanh, Activation::Linear}, rng);
  const double d0 = param_distance(a, b);
  soft_update(a, b, 0.005);
  CHECK(param_distance(a, b) == doctest::Approx(0.995 * d0).epsilon(1e-12));
  CHECK_THROWS_AS(soft_update(a, target, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(soft_update(a, b, 1.5), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(8);
  const Mlp net = make_critic(9, 16, rng);
  std::stringstream io;
  save_checkpoint(net, io);
  const Mlp back = load_checkpoint(io);
  CHECK(back.same_shape(net));
  CHECK(param_distance(back, net) == 0.0);
  std::stringstream bad("relaybeam-mlp 2\n");
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  std::stringstream truncated("relaybeam-mlp 1\nlayers 1\nlayer 2 1 tanh\nw 0.5\n");
  CHECK_THROWS_AS(load_checkpoint(truncated), FormatError);
}

TEST_CASE("initialisation bounds") {
  Rng rng(9);
  const Mlp actor = make_actor(9, 64, rng);
  CHECK(actor.layers()[0].w.cwiseAbs().maxCoeff() <= 1.0 / 3.0);
  CHECK(actor.layers()[2].w.cwiseAbs().maxCoeff() <= 3e-3);
  CHECK(actor.output_dim() == 2);
  CHECK(make_critic(9, 64, rng).input_dim() == 11);
}
