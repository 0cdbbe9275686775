#pragma once

#include "meshsplat/config.hpp"
#include "meshsplat/geometry.hpp"
#include "meshsplat/raster.hpp"
#include "meshsplat/splat.hpp"
#include "meshsplat/texture.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace meshsplat {

/// Everything needed to drive and render one subject: head model, texture
/// stack, displacement model, pixel decoder, canonical hair cloud,
/// deformation field, per-frame rigid transforms and the config snapshot.
/// Directory layout (see FORMATS.md): manifest.json, head_model.bin,
/// textures.bin, pix.bin, displacement.bin, cloud.ply, field.bin,
/// transforms.json, config.json.
struct AvatarBundle {
  HeadModel head;
  TextureStack textures;
  DisplacementModel displacement;
  MlpParams pix;
  GaussianCloud cloud;
  DeformationField field;
  std::map<int, RigidTransform> frame_transforms;
  TrainConfig config;

  void save(const std::filesystem::path& dir) const;
  static AvatarBundle load(const std::filesystem::path& dir);

  /// Fresh untrained avatar for this head model: gray textures, zero
  /// displacement, random-hidden/zero-final decoder, scalp-initialized cloud,
  /// zero-initialized deformation field.
  static AvatarBundle initialize(const HeadModel& head, const TrainConfig& config, int n_gaussians,
                                 double shell, int sh_coeff_count, int texture_res,
                                 int model_res, int dyn_basis, int disp_res);
};

/// One training/eval sample: camera, driving params, target images and masks.
struct FrameRecord {
  int frame_id = 0;
  int view_id = 0;
  Camera camera;
  ExpressionParams params;
  Image image_full;
  Image image_head;
  Image image_hair;
  Image mask_hair;
  Image mask_coverage;
  Image depth;
};

/// A generated scene on disk: cameras, per-frame params, per-view targets.
struct SceneDataset {
  std::filesystem::path root;
  std::vector<Camera> cameras;
  std::vector<ExpressionParams> frame_params;
  int canonical_frame = 0;
  int held_out_frame = -1;
  int held_out_view = -1;
  int image_size = 128;

  int frame_count() const { return static_cast<int>(frame_params.size()); }
  int view_count() const { return static_cast<int>(cameras.size()); }

  /// Loads one (frame, view) record with all target buffers.
  FrameRecord load_record(int frame, int view) const;

  /// All (frame, view) pairs, optionally skipping the held-out pair.
  std::vector<std::pair<int, int>> all_pairs(bool skip_held_out) const;

  static SceneDataset open(const std::filesystem::path& root);
};

/// HeadModel file: structured text header (counts/dims) followed by
/// little-endian 32-bit float arrays (see FORMATS.md).
void save_head_model(const std::filesystem::path& path, const HeadModel& model);
HeadModel load_head_model(const std::filesystem::path& path);

/// MLP (de)serialization into a blob container under a name prefix.
class BlobFile;
void put_mlp(BlobFile& blob, const std::string& prefix, const MlpParams& params);
MlpParams get_mlp(const BlobFile& blob, const std::string& prefix);

/// Renders one frame of an avatar through the full pipeline.
struct FrameRender {
  RenderBuffers mesh;     // raster buffers of the refined mesh
  Image head_color;       // decoded facial colors
  SplatBuffers hair;      // splat buffers of the (deformed) cloud
  Image occlusion;        // M_o
  Image soft_mask;        // G(M_o)
  Image hair_blend;       // A_hat
  Image composite_color;  // final image
};

struct RenderSettings {
  bool use_nearz = true;
  bool early_stop = true;
  double blur_sigma = 2.0;
  double nearz_threshold = 0.05;
};

FrameRender render_frame(const AvatarBundle& avatar, const ExpressionParams& params,
                         const Camera& camera, const RigidTransform& rigid,
                         const RenderSettings& settings);

/// Rigid transform for a frame: identity when none is stored.
RigidTransform frame_rigid(const AvatarBundle& avatar, int frame_id);

/// Default splat options for an avatar: the early-stop gap is half the head
/// bounding diameter (a stable scene quantity, unlike the cloud extent).
SplatOptions splat_options_for(const AvatarBundle& avatar, const RenderSettings& settings);

}  // namespace meshsplat
