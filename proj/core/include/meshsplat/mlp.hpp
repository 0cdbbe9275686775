#pragma once

#include "meshsplat/rng.hpp"
#include "meshsplat/types.hpp"

#include <cstdint>
#include <vector>

namespace meshsplat {

enum class Activation { None, Relu, Tanh, Sigmoid };

struct MlpLayer {
  MatX weights;  // out x in
  VecX bias;     // out
  Activation activation = Activation::None;
};

/// Dense multilayer perceptron, parameters owned as plain matrices. The
/// revision counter guards backward against stale forward caches; bump it
/// whenever weights are mutated outside mlp_* helpers.
struct MlpParams {
  std::vector<MlpLayer> layers;
  std::uint64_t revision = 0;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weights.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weights.rows()); }
  std::int64_t parameter_count() const;
  void validate() const;

  /// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init; zero_last zeroes the
  /// final layer so the initial output is exactly the last bias (zero).
  static MlpParams make(const std::vector<int>& dims, const std::vector<Activation>& acts,
                        Rng& rng, bool zero_last = false);
};

struct MlpCache {
  MatX input;                 // in x batch
  std::vector<MatX> pre;      // per layer, out x batch (pre-activation)
  std::vector<MatX> post;     // per layer, out x batch (post-activation)
  std::uint64_t revision = 0;
};

struct MlpGrads {
  std::vector<MatX> d_weights;
  std::vector<VecX> d_bias;

  static MlpGrads zeros(const MlpParams& params);
  void add(const MlpGrads& other);
  void scale(double s);
};

/// Columns of `input` are samples. Returns outputs and fills the cache.
MatX mlp_forward(const MlpParams& params, const MatX& input, MlpCache& cache);

/// Forward without keeping a cache.
MatX mlp_infer(const MlpParams& params, const MatX& input);

/// Exact reverse-mode gradients of mlp_forward. grad_output is out x batch;
/// grad_input (in x batch) is returned, parameter grads accumulate into grads.
MatX mlp_backward(const MlpParams& params, const MlpCache& cache, const MatX& grad_output,
                  MlpGrads& grads);

}  // namespace meshsplat
