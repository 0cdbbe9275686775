#include "meshsplat/mlp.hpp"

#include "meshsplat/errors.hpp"

#include <cmath>

namespace meshsplat {

namespace {

double activate(Activation act, double x) {
  switch (act) {
    case Activation::None: return x;
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

double activate_grad(Activation act, double pre, double post) {
  switch (act) {
    case Activation::None: return 1.0;
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - post * post;
    case Activation::Sigmoid: return post * (1.0 - post);
  }
  return 1.0;
}

}  // namespace

std::int64_t MlpParams::parameter_count() const {
  std::int64_t n = 0;
  for (const MlpLayer& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

void MlpParams::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weights.rows() != layers[i].bias.size()) {
      throw ParameterError("MlpParams: bias size does not match layer rows");
    }
    if (i > 0 && layers[i].weights.cols() != layers[i - 1].weights.rows()) {
      throw ParameterError("MlpParams: consecutive layer dimensions do not chain");
    }
  }
}

MlpParams MlpParams::make(const std::vector<int>& dims, const std::vector<Activation>& acts,
                          Rng& rng, bool zero_last) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1) {
    throw ParameterError("MlpParams::make: need dims.size() >= 2 and one activation per layer");
  }
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    MlpLayer layer;
    layer.weights = MatX(dims[i + 1], dims[i]);
    layer.bias = VecX::Zero(dims[i + 1]);
    layer.activation = acts[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    for (int r = 0; r < layer.weights.rows(); ++r) {
      for (int c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = rng.uniform(-bound, bound);
      }
    }
    if (zero_last && i + 2 == dims.size()) layer.weights.setZero();
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpGrads MlpGrads::zeros(const MlpParams& params) {
  MlpGrads g;
  for (const MlpLayer& l : params.layers) {
    g.d_weights.emplace_back(MatX::Zero(l.weights.rows(), l.weights.cols()));
    g.d_bias.emplace_back(VecX::Zero(l.bias.size()));
  }
  return g;
}

void MlpGrads::add(const MlpGrads& other) {
  for (std::size_t i = 0; i < d_weights.size(); ++i) {
    d_weights[i] += other.d_weights[i];
    d_bias[i] += other.d_bias[i];
  }
}

void MlpGrads::scale(double s) {
  for (std::size_t i = 0; i < d_weights.size(); ++i) {
    d_weights[i] *= s;
    d_bias[i] *= s;
  }
}

MatX mlp_forward(const MlpParams& params, const MatX& input, MlpCache& cache) {
  params.validate();
  if (input.rows() != params.input_dim()) {
    throw ParameterError("mlp_forward: input dimension mismatch");
  }
  cache.input = input;
  cache.pre.clear();
  cache.post.clear();
  cache.revision = params.revision;

  MatX x = input;
  for (const MlpLayer& layer : params.layers) {
    MatX pre = (layer.weights * x).colwise() + layer.bias;
    MatX post = pre;
    for (int c = 0; c < post.cols(); ++c) {
      for (int r = 0; r < post.rows(); ++r) {
        post(r, c) = activate(layer.activation, pre(r, c));
      }
    }
    cache.pre.push_back(pre);
    cache.post.push_back(post);
    x = post;
  }
  return x;
}

MatX mlp_infer(const MlpParams& params, const MatX& input) {
  MlpCache scratch;
  return mlp_forward(params, input, scratch);
}

MatX mlp_backward(const MlpParams& params, const MlpCache& cache, const MatX& grad_output,
                  MlpGrads& grads) {
  if (cache.revision != params.revision || cache.pre.size() != params.layers.size()) {
    throw ContractError("mlp_backward: cache is stale for these parameters");
  }
  if (grad_output.rows() != params.output_dim() || grad_output.cols() != cache.input.cols()) {
    throw ParameterError("mlp_backward: grad_output shape mismatch");
  }

  MatX delta = grad_output;
  for (int i = static_cast<int>(params.layers.size()) - 1; i >= 0; --i) {
    const MlpLayer& layer = params.layers[i];
    for (int c = 0; c < delta.cols(); ++c) {
      for (int r = 0; r < delta.rows(); ++r) {
        delta(r, c) *= activate_grad(layer.activation, cache.pre[i](r, c), cache.post[i](r, c));
      }
    }
    const MatX& below = i == 0 ? cache.input : cache.post[i - 1];
    grads.d_weights[i] += delta * below.transpose();
    grads.d_bias[i] += delta.rowwise().sum();
    if (i > 0) delta = layer.weights.transpose() * delta;
  }
  return params.layers.front().weights.transpose() * delta;
}

}  // namespace meshsplat
