#pragma once

#include "meshsplat/losses.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace meshsplat {

/// Iteration counts and learning rates for the three optimization stages plus
/// shared rendering/blending knobs. Serialized as JSON next to checkpoints.
struct TrainConfig {
  LossWeights weights;

  int iters_face = 2000;
  int iters_hair = 2000;
  int iters_joint = 1200;

  // Stage 1 (facial mesh).
  double lr_texture = 5e-3;       // diffuse latents, view/dynamic models
  double lr_displacement = 1e-3;
  double lr_decoder = 1e-4;       // per-pixel decoder

  // Stage 2 (canonical hair), per-parameter rates in the usual splat setup;
  // positions scale with the scene extent.
  double lr_position_scale = 1.6e-4;
  double lr_opacity = 5e-2;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_sh = 2.5e-3;

  // Stage 3 (joint).
  double lr_field = 1e-4;

  // Blending / losses.
  double blur_sigma = 2.0;
  int erode_radius = 5;
  double depth_threshold = 0.005;  // scene units (5mm at head scale)
  double nearz_threshold = 0.05;
  bool early_stop = true;
  bool use_nearz = true;  // false selects the accumulated-depth ablation
  int aiap_k = 5;

  // Cloud maintenance.
  double prune_opacity = 0.005;
  int prune_interval = 500;
  bool densify = false;
  double densify_grad_threshold = 2e-3;
  int densify_interval = 500;
  int max_gaussians = 20000;

  std::uint64_t seed = 1;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TrainConfig load(const std::filesystem::path& path);
};

}  // namespace meshsplat
