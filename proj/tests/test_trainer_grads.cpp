#include "meshsplat/losses.hpp"
#include "meshsplat/synthetic.hpp"
#include "meshsplat/trainer.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace meshsplat;
using namespace meshsplat::testing;

TEST_SUITE_BEGIN("trainer_grads");

// The stage-1 geometry chain: depth/normal losses and regularizers, through
// pixel-anchored depth derivatives and the displacement-grid scatter.
TEST_CASE("displacement gradient chain matches finite differences") {
  SyntheticOptions opts;
  opts.image_size = 40;
  opts.n_views = 2;
  opts.n_frames = 2;
  opts.n_gaussians = 40;
  opts.seed = 21;
  opts.texture_res = 16;
  opts.model_res = 8;
  opts.disp_res = 8;
  const HeadModel head = make_sphere_head(opts);
  AvatarBundle avatar = make_ground_truth_avatar(head, opts);

  const ExpressionParams params = make_frame_params(head, opts, 1);
  const Camera cam = make_camera_ring(opts)[1];

  // Target depth: ground-truth render; then perturb the model so residuals
  // and gradients are non-trivial.
  const TriMesh gt_mesh = apply_displacement(
      lbs_deform(head, params), avatar.displacement.evaluate(params.psi, params.phi));
  const Image target_depth = rasterize(gt_mesh, cam).depth;
  Rng rng(5);
  for (double& v : avatar.displacement.base.data()) v += 0.0006 * rng.normal();

  const double wd = 0.5, wn = 0.05, wlap = 10.0, wnc = 0.1, wel = 1.0;
  auto objective = [&] {
    const TriMesh posed = lbs_deform(head, params);
    const TriMesh refined =
        apply_displacement(posed, avatar.displacement.evaluate(params.psi, params.phi));
    const RenderBuffers rb = rasterize(refined, cam);
    const GeometricLoss g = loss_geometric(target_depth, rb.depth, cam, 0.005);
    const RegularizerValues regs = mesh_regularizers(refined, posed);
    return wd * g.depth + wn * g.normal + wlap * regs.laplacian +
           wnc * regs.normal_consistency + wel * regs.edge_length;
  };

  const TriMesh posed = lbs_deform(head, params);
  const TriMesh refined =
      apply_displacement(posed, avatar.displacement.evaluate(params.psi, params.phi));
  const RenderBuffers rb = rasterize(refined, cam);
  const Image gd = loss_geometric_backward(target_depth, rb.depth, cam, 0.005, wd, wn);
  std::vector<Vec3> vg = scatter_depth_grad_to_vertices(gd, rb, refined, cam);
  const auto reg_grads = mesh_regularizers_backward(refined, posed, wlap, wnc, wel);
  for (std::size_t i = 0; i < vg.size(); ++i) vg[i] += reg_grads[i];
  DisplacementGrads grads = DisplacementGrads::zeros(avatar.displacement);
  scatter_vertex_grads_to_displacement(vg, refined.uv_coords, params.psi, params.phi,
                                       avatar.displacement, grads);

  Rng pick(11);
  double worst = 0.0;
  int informative = 0;
  for (int t = 0; t < 25; ++t) {
    const int i = static_cast<int>(pick.uniform_index(avatar.displacement.base.size()));
    const double fd = central_difference(objective, avatar.displacement.base.data()[i], 1e-7);
    const double got = grads.base.data()[i];
    if (std::abs(fd) < 1e-10 && std::abs(got) < 1e-10) continue;
    worst = std::max(worst, rel_error(got, fd));
    ++informative;
  }
  for (int t = 0; t < 10; ++t) {
    const int k = static_cast<int>(pick.uniform_index(avatar.displacement.psi_basis.size()));
    Image& basis = avatar.displacement.psi_basis[k];
    const int i = static_cast<int>(pick.uniform_index(basis.size()));
    const double fd = central_difference(objective, basis.data()[i], 1e-7);
    const double got = grads.psi_basis[k].data()[i];
    if (std::abs(fd) < 1e-10 && std::abs(got) < 1e-10) continue;
    worst = std::max(worst, rel_error(got, fd));
    ++informative;
  }
  CHECK(informative > 10);
  CHECK(worst < 1e-3);
}

TEST_SUITE_END();
