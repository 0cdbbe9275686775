#include "meshsplat/mlp.hpp"

#include "meshsplat/errors.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace meshsplat;
using namespace meshsplat::testing;

TEST_SUITE_BEGIN("mlp");

TEST_CASE("zero weights with bias return the bias for any input") {
  MlpParams p;
  MlpLayer layer;
  layer.weights = MatX::Zero(2, 3);
  layer.bias = VecX(2);
  layer.bias << 0.7, -0.3;
  layer.activation = Activation::None;
  p.layers.push_back(layer);

  MatX input(3, 4);
  input.setRandom();
  const MatX out = mlp_infer(p, input);
  for (int c = 0; c < 4; ++c) {
    CHECK(out(0, c) == 0.7);
    CHECK(out(1, c) == -0.3);
  }
}

TEST_CASE("identity weights with relu clamp negatives") {
  MlpParams p;
  MlpLayer layer;
  layer.weights = MatX::Identity(2, 2);
  layer.bias = VecX::Zero(2);
  layer.activation = Activation::Relu;
  p.layers.push_back(layer);
  MatX input(2, 1);
  input << -1.0, 2.0;
  const MatX out = mlp_infer(p, input);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == 2.0);
}

TEST_CASE("one-layer affine: w=2, b=1, x=3 -> 7") {
  MlpParams p;
  MlpLayer layer;
  layer.weights = MatX::Constant(1, 1, 2.0);
  layer.bias = VecX::Constant(1, 1.0);
  layer.activation = Activation::None;
  p.layers.push_back(layer);
  MatX input(1, 1);
  input << 3.0;
  CHECK(mlp_infer(p, input)(0, 0) == 7.0);
}

TEST_CASE("scalar chain gradients by hand: y = 2x + 1") {
  MlpParams p;
  MlpLayer layer;
  layer.weights = MatX::Constant(1, 1, 2.0);
  layer.bias = VecX::Constant(1, 1.0);
  layer.activation = Activation::None;
  p.layers.push_back(layer);
  MatX input(1, 1);
  input << 3.0;
  MlpCache cache;
  mlp_forward(p, input, cache);
  MlpGrads grads = MlpGrads::zeros(p);
  const MatX grad_in = mlp_backward(p, cache, MatX::Constant(1, 1, 1.0), grads);
  CHECK(grads.d_weights[0](0, 0) == 3.0);  // dL/dw = x
  CHECK(grads.d_bias[0](0) == 1.0);
  CHECK(grad_in(0, 0) == 2.0);  // dL/dx = w
}

TEST_CASE("relu blocks gradient at negative pre-activations") {
  MlpParams p;
  MlpLayer layer;
  layer.weights = MatX::Identity(1, 1);
  layer.bias = VecX::Constant(1, 0.0);
  layer.activation = Activation::Relu;
  p.layers.push_back(layer);
  MatX input(1, 1);
  input << -0.5;
  MlpCache cache;
  mlp_forward(p, input, cache);
  MlpGrads grads = MlpGrads::zeros(p);
  const MatX grad_in = mlp_backward(p, cache, MatX::Constant(1, 1, 1.0), grads);
  CHECK(grads.d_weights[0](0, 0) == 0.0);
  CHECK(grad_in(0, 0) == 0.0);
}

TEST_CASE("gradient check: 100 random nets vs central differences") {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + trial);
    const int in_dim = 2 + static_cast<int>(rng.uniform_index(3));
    const int hidden = 3 + static_cast<int>(rng.uniform_index(4));
    const int out_dim = 1 + static_cast<int>(rng.uniform_index(3));
    const Activation acts[] = {Activation::Tanh, Activation::Relu, Activation::Sigmoid};
    MlpParams p = MlpParams::make({in_dim, hidden, hidden, out_dim},
                                  {acts[trial % 3], Activation::Tanh, Activation::None}, rng);
    MatX input(in_dim, 2);
    for (int i = 0; i < input.size(); ++i) input.data()[i] = rng.normal();
    MatX grad_out(out_dim, 2);
    for (int i = 0; i < grad_out.size(); ++i) grad_out.data()[i] = rng.normal();

    MlpCache cache;
    mlp_forward(p, input, cache);
    MlpGrads grads = MlpGrads::zeros(p);
    const MatX grad_in = mlp_backward(p, cache, grad_out, grads);

    auto objective = [&] {
      return (mlp_infer(p, input).array() * grad_out.array()).sum();
    };
    // A few parameters from each tensor class, plus inputs.
    for (int check = 0; check < 6; ++check) {
      const int layer = static_cast<int>(rng.uniform_index(p.layers.size()));
      MatX& w = p.layers[layer].weights;
      const int idx = static_cast<int>(rng.uniform_index(w.size()));
      const double fd = central_difference(objective, w.data()[idx]);
      worst = std::max(worst, rel_error(grads.d_weights[layer].data()[idx], fd));
    }
    for (int check = 0; check < 2; ++check) {
      const int layer = static_cast<int>(rng.uniform_index(p.layers.size()));
      VecX& b = p.layers[layer].bias;
      const int idx = static_cast<int>(rng.uniform_index(b.size()));
      const double fd = central_difference(objective, b.data()[idx]);
      worst = std::max(worst, rel_error(grads.d_bias[layer].data()[idx], fd));
    }
    {
      const int idx = static_cast<int>(rng.uniform_index(input.size()));
      const double fd = central_difference(objective, input.data()[idx]);
      worst = std::max(worst, rel_error(grad_in.data()[idx], fd));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("backward is linear in grad_out") {
  Rng rng(42);
  MlpParams p = MlpParams::make({3, 5, 2}, {Activation::Tanh, Activation::None}, rng);
  MatX input(3, 3);
  input.setRandom();
  MlpCache cache;
  mlp_forward(p, input, cache);

  MatX g1(2, 3), g2(2, 3);
  g1.setRandom();
  g2.setRandom();
  const double a = 0.7, b = -1.3;

  MlpGrads grads1 = MlpGrads::zeros(p);
  const MatX in1 = mlp_backward(p, cache, g1, grads1);
  MlpGrads grads2 = MlpGrads::zeros(p);
  const MatX in2 = mlp_backward(p, cache, g2, grads2);
  MlpGrads grads3 = MlpGrads::zeros(p);
  const MatX in3 = mlp_backward(p, cache, a * g1 + b * g2, grads3);

  CHECK((in3 - (a * in1 + b * in2)).cwiseAbs().maxCoeff() < 1e-12);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK((grads3.d_weights[l] - (a * grads1.d_weights[l] + b * grads2.d_weights[l]))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("stale cache raises a contract violation") {
  Rng rng(9);
  MlpParams p = MlpParams::make({2, 3, 1}, {Activation::Relu, Activation::None}, rng);
  MatX input(2, 1);
  input.setRandom();
  MlpCache cache;
  mlp_forward(p, input, cache);
  p.revision += 1;  // parameters mutated since the forward pass
  MlpGrads grads = MlpGrads::zeros(p);
  CHECK_THROWS_AS(mlp_backward(p, cache, MatX::Ones(1, 1), grads), ContractError);
}

TEST_CASE("dimension mismatches raise parameter errors") {
  Rng rng(10);
  MlpParams p = MlpParams::make({4, 3, 2}, {Activation::Relu, Activation::None}, rng);
  CHECK_THROWS_AS(mlp_infer(p, MatX::Ones(3, 1)), ParameterError);
}

TEST_SUITE_END();
