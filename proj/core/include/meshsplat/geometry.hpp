#pragma once

#include "meshsplat/image.hpp"
#include "meshsplat/types.hpp"

#include <map>
#include <set>
#include <utility>
#include <vector>

namespace meshsplat {

struct Camera;

/// Triangle mesh with per-vertex uv. Vertices are in scene units.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec2> uv_coords;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }

  /// Checks index ranges and that every face has area > 1e-12.
  void validate() const;
};

struct Joint {
  Vec3 rest_position = Vec3::Zero();
  int parent = -1;  // -1 for the root; parents must precede children
};

/// Linear blendshape head model posed by LBS. A generic stand-in for tracked
/// parametric face models: template + shape/expression bases + skinned joints.
struct HeadModel {
  std::vector<Vec3> template_vertices;
  std::vector<Face> faces;
  std::vector<Vec2> uv_coords;
  std::vector<std::vector<Vec3>> shape_basis;  // [n_shape][n_verts]
  std::vector<std::vector<Vec3>> expr_basis;   // [n_expr][n_verts]
  std::vector<Joint> joints;
  MatX skin_weights;  // n_verts x n_joints, rows sum to 1
  std::vector<int> scalp_indices;

  int vertex_count() const { return static_cast<int>(template_vertices.size()); }
  int shape_dim() const { return static_cast<int>(shape_basis.size()); }
  int expr_dim() const { return static_cast<int>(expr_basis.size()); }
  int joint_count() const { return static_cast<int>(joints.size()); }
  int pose_dim() const { return 3 * joint_count(); }

  void validate() const;
};

/// Driving signal: shape/expression coefficients and per-joint axis-angle pose.
struct ExpressionParams {
  VecX beta;
  VecX psi;
  VecX phi;

  static ExpressionParams zeros(const HeadModel& model);
};

/// Grid of 3D vertex offsets sampled by uv (bilinear, uv clamped).
struct DisplacementMap {
  Image grid;  // H x W x 3, scene units

  int width() const { return grid.width(); }
  int height() const { return grid.height(); }
};

/// Displacement generator conditioned on (psi, phi): a directly-optimized base
/// grid plus per-texel linear responses to the leading expression and pose
/// coefficients.
struct DisplacementModel {
  Image base;                     // H x W x 3
  std::vector<Image> psi_basis;   // K_psi grids, weighted by psi[0..K)
  std::vector<Image> phi_basis;   // K_phi grids, weighted by phi[0..K)

  static DisplacementModel zeros(int resolution, int n_psi, int n_phi);
  DisplacementMap evaluate(const VecX& psi, const VecX& phi) const;
  bool enabled() const { return !base.empty(); }
};

/// Poses the model: V = skin(template + shape*beta + expr*psi, phi).
TriMesh lbs_deform(const HeadModel& model, const ExpressionParams& params);

/// One round of four-way (midpoint) subdivision. New vertices are edge
/// midpoints appended in sorted-edge-key order, uv averaged per edge.
TriMesh subdivide4(const TriMesh& mesh);

/// V_r = V + bilinear(grid, uv) per vertex; topology unchanged.
TriMesh apply_displacement(const TriMesh& mesh, const DisplacementMap& disp);

struct RegularizerValues {
  double laplacian = 0.0;
  double normal_consistency = 0.0;
  double edge_length = 0.0;
};

/// Mesh smoothness/rigidity energies:
///   laplacian          mean ||v_i - centroid(neighbors)||^2
///   normal_consistency mean (1 - cos angle) over adjacent face pairs
///   edge_length        mean (len - len_rest)^2 over edges
RegularizerValues mesh_regularizers(const TriMesh& mesh, const TriMesh& rest);

/// Gradient of w_lap*lap + w_nc*nc + w_el*el w.r.t. mesh vertices.
std::vector<Vec3> mesh_regularizers_backward(const TriMesh& mesh, const TriMesh& rest,
                                             double w_lap, double w_nc, double w_el);

/// Scalp vertices whose projection lands inside hair_mask and which pass a
/// depth test against the mesh's own z-buffer (tolerance 1e-4 scene units).
std::vector<int> visible_scalp(const TriMesh& mesh, const std::vector<int>& scalp,
                               const Image& hair_mask, const Camera& camera);

/// Connectivity shared by subdivision and the regularizers.
struct MeshTopology {
  // Unique undirected edges keyed (min, max), sorted lexicographically.
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> vertex_neighbors;
  // Pairs of face indices sharing an edge.
  std::vector<std::pair<int, int>> adjacent_faces;
  // Per edge, the number of incident faces (to detect non-manifold edges).
  std::vector<int> edge_face_count;

  static MeshTopology build(const TriMesh& mesh);
};

}  // namespace meshsplat
