#pragma once

#include "meshsplat/avatar.hpp"

#include <filesystem>

namespace meshsplat {

/// Knobs for the self-contained synthetic fixture: a subdivided UV-sphere
/// head (bounding diameter 0.2 scene units), procedural textures, a scalp cap
/// of Gaussians and a sinusoidal expression/pose sequence.
struct SyntheticOptions {
  int image_size = 128;
  int n_views = 8;
  int n_frames = 20;
  int n_gaussians = 400;
  int sh_coeffs = 4;  // SH degree 1
  std::uint64_t seed = 1;
  int texture_res = 128;
  int model_res = 64;
  int disp_res = 32;
  int dyn_basis = 3;
  bool displacement_on = true;
  double field_amplitude = 1.0;  // scales the ground-truth deformation field
  // Hair opacity range; lower values leave the shell translucent so far-side
  // Gaussians genuinely matter (overlap-heavy ablation scenes).
  double hair_opacity_lo = 0.3;
  double hair_opacity_hi = 0.9;
};

/// Twice-subdivided UV sphere with expression/shape bases, two skinned joints
/// and a hemispherical scalp cap.
HeadModel make_sphere_head(const SyntheticOptions& opts);

/// Ground-truth avatar with non-trivial textures, displacement, hair cloud
/// and deformation field (all seeded).
AvatarBundle make_ground_truth_avatar(const HeadModel& head, const SyntheticOptions& opts);

/// Ring of cameras looking at the origin.
std::vector<Camera> make_camera_ring(const SyntheticOptions& opts);

/// Driving parameters for frame f: sinusoidal expressions, small head turns.
ExpressionParams make_frame_params(const HeadModel& head, const SyntheticOptions& opts, int frame);

/// Generates the full scene under out_dir: ground-truth avatar bundle in
/// avatar/, cameras, per-frame params and target images/depths/masks. The
/// avatar is saved and reloaded before rendering targets, so stored targets
/// are exactly reproducible from the stored avatar.
void generate_scene(const std::filesystem::path& out_dir, const SyntheticOptions& opts);

}  // namespace meshsplat
