#pragma once

#include "meshsplat/adam.hpp"
#include "meshsplat/avatar.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace meshsplat {

/// Streaming CSV training log (iter, loss terms, PSNR). Disabled when the
/// path is empty.
class CsvLogger {
 public:
  CsvLogger() = default;
  CsvLogger(const std::filesystem::path& path, const std::vector<std::string>& columns);
  void row(int iter, const std::vector<double>& values);
  bool enabled() const { return static_cast<bool>(out_); }

 private:
  std::ofstream out_;
  std::size_t n_columns_ = 0;
};

/// Adam over every layer of an MLP; stepping bumps the params revision.
struct MlpAdam {
  std::vector<AdamState> w_states;
  std::vector<AdamState> b_states;

  static MlpAdam make(const MlpParams& params, double lr);
  void step(MlpParams& params, const MlpGrads& grads);
};

/// Adam over an Image-shaped parameter grid.
void adam_step_image(Image& param, const Image& grad, AdamState& state);

struct FaceTrainSummary {
  double psnr = 0.0;
  double ssim = 0.0;
  double depth_mae = 0.0;
  int iterations = 0;
};

/// Stage 1: fits diffuse/view/dynamic textures, the displacement model and the
/// pixel decoder to head images + depths. Frames need head targets and depth.
FaceTrainSummary train_face(const SceneDataset& dataset, AvatarBundle& avatar,
                            const TrainConfig& cfg, const std::filesystem::path& log_csv = {});

struct HairTrainSummary {
  double psnr = 0.0;
  int iterations = 0;
  int gaussians = 0;
};

/// Stage 2: optimizes the canonical Gaussian hair on all views of the
/// canonical frame, pixels under the hair masks only.
HairTrainSummary train_hair(const SceneDataset& dataset, AvatarBundle& avatar,
                            const TrainConfig& cfg, const std::filesystem::path& log_csv = {});

struct JointTrainSummary {
  double held_out_psnr = 0.0;
  double rigid_only_psnr = 0.0;
  int iterations = 0;
};

/// Stage 3: per-frame scalp-ICP rigid transforms, then joint optimization of
/// the deformation field and the texture maps over all frames (decoder and
/// displacement stay frozen).
JointTrainSummary train_joint(const SceneDataset& dataset, AvatarBundle& avatar,
                              const TrainConfig& cfg, const std::filesystem::path& log_csv = {});

/// Replaces the face avatar's hair with the donor's: similarity scalp ICP,
/// donor cloud and field transformed into place.
RigidTransform swap_hair(AvatarBundle& face_avatar, const AvatarBundle& hair_avatar);

struct EditSummary {
  int steps = 0;
  bool empty_mask = false;
  double final_loss = 0.0;
  Image uv_mask;  // M_p remapped to texture space (dilated by one texel)
};

/// Texture editing: remaps the painting mask to uv space, then optimizes only
/// the masked diffuse texels (lr 0.01) and the pixel decoder (lr 1e-4)
/// against the painted view; other views constrain pixels outside the
/// painted region.
EditSummary edit_texture(AvatarBundle& avatar, const Image& painted, const Image& paint_mask,
                         const Camera& camera, const ExpressionParams& params,
                         const RigidTransform& rigid, const std::vector<FrameRecord>& other_views,
                         int steps);

/// Mask used for full-image supervision: head coverage OR hair mask.
Image union_mask(const Image& coverage, const Image& hair_mask);

/// Scalp visibility against an existing depth buffer (shares the logic of
/// visible_scalp without re-rasterizing).
std::vector<int> visible_scalp_with_depth(const TriMesh& mesh, const std::vector<int>& scalp,
                                          const Image& hair_mask, const Camera& camera,
                                          const Image& depth);

/// Scatters per-pixel depth gradients to mesh vertices through the stored
/// perspective-correct barycentrics.
std::vector<Vec3> scatter_depth_grad_to_vertices(const Image& grad_depth,
                                                 const RenderBuffers& buffers, const TriMesh& mesh,
                                                 const Camera& camera);

struct DisplacementGrads {
  Image base;
  std::vector<Image> psi_basis;
  std::vector<Image> phi_basis;

  static DisplacementGrads zeros(const DisplacementModel& model);
};

/// Routes vertex gradients into the displacement model grids via each
/// vertex's bilinear uv footprint.
void scatter_vertex_grads_to_displacement(const std::vector<Vec3>& vertex_grads,
                                          const std::vector<Vec2>& uv, const VecX& psi,
                                          const VecX& phi, const DisplacementModel& model,
                                          DisplacementGrads& grads);

}  // namespace meshsplat
