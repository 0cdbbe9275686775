#include "meshsplat/geometry.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/raster.hpp"
#include "meshsplat/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace meshsplat {

void TriMesh::validate() const {
  const int nv = vertex_count();
  if (!uv_coords.empty() && static_cast<int>(uv_coords.size()) != nv) {
    throw ParameterError("TriMesh: uv count does not match vertex count");
  }
  for (const Face& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= nv) throw ParameterError("TriMesh: face index out of range");
    }
    const Vec3 e1 = vertices[f[1]] - vertices[f[0]];
    const Vec3 e2 = vertices[f[2]] - vertices[f[0]];
    if (0.5 * e1.cross(e2).norm() <= 1e-12) {
      throw ParameterError("TriMesh: degenerate face (area <= 1e-12)");
    }
  }
}

void HeadModel::validate() const {
  const int nv = vertex_count();
  if (static_cast<int>(uv_coords.size()) != nv) {
    throw ParameterError("HeadModel: uv count mismatch");
  }
  for (const Vec2& uv : uv_coords) {
    if (uv.x() < 0.0 || uv.x() > 1.0 || uv.y() < 0.0 || uv.y() > 1.0) {
      throw ParameterError("HeadModel: uv outside [0,1]^2");
    }
  }
  for (const Face& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= nv) throw ParameterError("HeadModel: face index out of range");
    }
  }
  for (const auto& basis : shape_basis) {
    if (static_cast<int>(basis.size()) != nv) throw ParameterError("HeadModel: shape basis size");
  }
  for (const auto& basis : expr_basis) {
    if (static_cast<int>(basis.size()) != nv) throw ParameterError("HeadModel: expr basis size");
  }
  for (int j = 0; j < joint_count(); ++j) {
    if (joints[j].parent >= j) throw ParameterError("HeadModel: joint parents must precede children");
  }
  if (skin_weights.rows() != nv || skin_weights.cols() != joint_count()) {
    throw ParameterError("HeadModel: skin weight shape mismatch");
  }
  for (int i = 0; i < nv; ++i) {
    double sum = 0.0;
    for (int j = 0; j < joint_count(); ++j) {
      const double w = skin_weights(i, j);
      if (w < 0.0) throw ParameterError("HeadModel: negative skin weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ParameterError("HeadModel: skin weight row sum != 1");
  }
  std::set<int> seen;
  for (int idx : scalp_indices) {
    if (idx < 0 || idx >= nv) throw ParameterError("HeadModel: scalp index out of range");
    if (!seen.insert(idx).second) throw ParameterError("HeadModel: duplicate scalp index");
  }
}

ExpressionParams ExpressionParams::zeros(const HeadModel& model) {
  ExpressionParams p;
  p.beta = VecX::Zero(model.shape_dim());
  p.psi = VecX::Zero(model.expr_dim());
  p.phi = VecX::Zero(model.pose_dim());
  return p;
}

namespace {

Mat3 axis_angle_rotation(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-14) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

}  // namespace

TriMesh lbs_deform(const HeadModel& model, const ExpressionParams& params) {
  const int nv = model.vertex_count();
  if (params.beta.size() != model.shape_dim() || params.psi.size() != model.expr_dim() ||
      params.phi.size() != model.pose_dim()) {
    throw ParameterError("lbs_deform: parameter dimensions do not match model bases");
  }

  std::vector<Vec3> shaped(model.template_vertices);
  for (int k = 0; k < model.shape_dim(); ++k) {
    const double c = params.beta[k];
    if (c == 0.0) continue;
    for (int i = 0; i < nv; ++i) shaped[i] += c * model.shape_basis[k][i];
  }
  for (int k = 0; k < model.expr_dim(); ++k) {
    const double c = params.psi[k];
    if (c == 0.0) continue;
    for (int i = 0; i < nv; ++i) shaped[i] += c * model.expr_basis[k][i];
  }

  // Joint globals; rest-pose bind transforms are pure translations, so the
  // skinned contribution of joint j is R_j * (v - rest_j) + origin_j.
  const int nj = model.joint_count();
  std::vector<Mat3> global_rot(nj);
  std::vector<Vec3> global_origin(nj);
  for (int j = 0; j < nj; ++j) {
    const Mat3 local = axis_angle_rotation(params.phi.segment<3>(3 * j));
    const int p = model.joints[j].parent;
    if (p < 0) {
      global_rot[j] = local;
      global_origin[j] = model.joints[j].rest_position;
    } else {
      const Vec3 offset = model.joints[j].rest_position - model.joints[p].rest_position;
      global_rot[j] = global_rot[p] * local;
      global_origin[j] = global_rot[p] * offset + global_origin[p];
    }
  }

  TriMesh out;
  out.faces = model.faces;
  out.uv_coords = model.uv_coords;
  out.vertices.resize(nv);
  for (int i = 0; i < nv; ++i) {
    Vec3 v = Vec3::Zero();
    for (int j = 0; j < nj; ++j) {
      const double w = model.skin_weights(i, j);
      if (w == 0.0) continue;
      v += w * (global_rot[j] * (shaped[i] - model.joints[j].rest_position) + global_origin[j]);
    }
    out.vertices[i] = nj == 0 ? shaped[i] : v;
  }
  return out;
}

MeshTopology MeshTopology::build(const TriMesh& mesh) {
  MeshTopology topo;
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Face& face = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      const int a = face[k];
      const int b = face[(k + 1) % 3];
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
    }
  }
  topo.vertex_neighbors.resize(mesh.vertex_count());
  for (const auto& [edge, faces] : edge_faces) {
    topo.edges.push_back(edge);
    topo.edge_face_count.push_back(static_cast<int>(faces.size()));
    topo.vertex_neighbors[edge.first].push_back(edge.second);
    topo.vertex_neighbors[edge.second].push_back(edge.first);
    for (std::size_t i = 0; i + 1 < faces.size(); ++i) {
      for (std::size_t j = i + 1; j < faces.size(); ++j) {
        topo.adjacent_faces.emplace_back(faces[i], faces[j]);
      }
    }
  }
  return topo;
}

TriMesh subdivide4(const TriMesh& mesh) {
  const MeshTopology topo = MeshTopology::build(mesh);
  for (std::size_t e = 0; e < topo.edges.size(); ++e) {
    if (topo.edge_face_count[e] > 2) {
      throw TopologyError("subdivide4: edge shared by more than two faces");
    }
  }

  TriMesh out;
  out.vertices = mesh.vertices;
  out.uv_coords = mesh.uv_coords;
  const bool has_uv = !mesh.uv_coords.empty();

  std::map<std::pair<int, int>, int> midpoint;
  for (const auto& edge : topo.edges) {  // already sorted by key
    midpoint[edge] = static_cast<int>(out.vertices.size());
    out.vertices.push_back(0.5 * (mesh.vertices[edge.first] + mesh.vertices[edge.second]));
    if (has_uv) {
      out.uv_coords.push_back(0.5 * (mesh.uv_coords[edge.first] + mesh.uv_coords[edge.second]));
    }
  }

  auto mid = [&](int a, int b) { return midpoint.at({std::min(a, b), std::max(a, b)}); };
  out.faces.reserve(mesh.faces.size() * 4);
  for (const Face& f : mesh.faces) {
    const int mab = mid(f[0], f[1]);
    const int mbc = mid(f[1], f[2]);
    const int mca = mid(f[2], f[0]);
    out.faces.push_back({f[0], mab, mca});
    out.faces.push_back({mab, f[1], mbc});
    out.faces.push_back({mca, mbc, f[2]});
    out.faces.push_back({mab, mbc, mca});
  }
  return out;
}

DisplacementModel DisplacementModel::zeros(int resolution, int n_psi, int n_phi) {
  DisplacementModel m;
  m.base = Image(resolution, resolution, 3);
  m.psi_basis.assign(n_psi, Image(resolution, resolution, 3));
  m.phi_basis.assign(n_phi, Image(resolution, resolution, 3));
  return m;
}

DisplacementMap DisplacementModel::evaluate(const VecX& psi, const VecX& phi) const {
  DisplacementMap map;
  map.grid = base;
  auto& data = map.grid.data();
  for (std::size_t k = 0; k < psi_basis.size(); ++k) {
    if (static_cast<int>(k) >= psi.size()) break;
    const double c = psi[k];
    if (c == 0.0) continue;
    const auto& b = psi_basis[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += c * b[i];
  }
  for (std::size_t k = 0; k < phi_basis.size(); ++k) {
    if (static_cast<int>(k) >= phi.size()) break;
    const double c = phi[k];
    if (c == 0.0) continue;
    const auto& b = phi_basis[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += c * b[i];
  }
  return map;
}

TriMesh apply_displacement(const TriMesh& mesh, const DisplacementMap& disp) {
  if (mesh.uv_coords.empty()) throw ParameterError("apply_displacement: mesh has no uv");
  TriMesh out = mesh;
  const Image& grid = disp.grid;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const BilinearSample s =
        bilinear_setup(mesh.uv_coords[i].x(), mesh.uv_coords[i].y(), grid.width(), grid.height());
    for (int c = 0; c < 3; ++c) {
      out.vertices[i][c] += s.w00 * grid.at(s.x0, s.y0, c) + s.w10 * grid.at(s.x1, s.y0, c) +
                            s.w01 * grid.at(s.x0, s.y1, c) + s.w11 * grid.at(s.x1, s.y1, c);
    }
  }
  return out;
}

namespace {

Vec3 face_normal(const TriMesh& mesh, int f) {
  const Face& face = mesh.faces[f];
  const Vec3 e1 = mesh.vertices[face[1]] - mesh.vertices[face[0]];
  const Vec3 e2 = mesh.vertices[face[2]] - mesh.vertices[face[0]];
  return e1.cross(e2);
}

void check_same_topology(const TriMesh& mesh, const TriMesh& rest) {
  if (mesh.vertex_count() != rest.vertex_count() || mesh.faces != rest.faces) {
    throw ParameterError("mesh regularizers: topology mismatch between mesh and rest");
  }
}

}  // namespace

RegularizerValues mesh_regularizers(const TriMesh& mesh, const TriMesh& rest) {
  check_same_topology(mesh, rest);
  const MeshTopology topo = MeshTopology::build(mesh);
  RegularizerValues vals;

  int lap_count = 0;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const auto& nbrs = topo.vertex_neighbors[i];
    if (nbrs.empty()) continue;
    Vec3 centroid = Vec3::Zero();
    for (int j : nbrs) centroid += mesh.vertices[j];
    centroid /= static_cast<double>(nbrs.size());
    vals.laplacian += (mesh.vertices[i] - centroid).squaredNorm();
    ++lap_count;
  }
  if (lap_count > 0) vals.laplacian /= lap_count;

  if (!topo.adjacent_faces.empty()) {
    for (const auto& [f, g] : topo.adjacent_faces) {
      const Vec3 nf = face_normal(mesh, f).normalized();
      const Vec3 ng = face_normal(mesh, g).normalized();
      vals.normal_consistency += 1.0 - nf.dot(ng);
    }
    vals.normal_consistency /= static_cast<double>(topo.adjacent_faces.size());
  }

  if (!topo.edges.empty()) {
    for (const auto& [a, b] : topo.edges) {
      const double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
      const double len_rest = (rest.vertices[a] - rest.vertices[b]).norm();
      vals.edge_length += (len - len_rest) * (len - len_rest);
    }
    vals.edge_length /= static_cast<double>(topo.edges.size());
  }
  return vals;
}

std::vector<Vec3> mesh_regularizers_backward(const TriMesh& mesh, const TriMesh& rest,
                                             double w_lap, double w_nc, double w_el) {
  check_same_topology(mesh, rest);
  const MeshTopology topo = MeshTopology::build(mesh);
  std::vector<Vec3> grad(mesh.vertex_count(), Vec3::Zero());

  if (w_lap != 0.0) {
    int lap_count = 0;
    for (int i = 0; i < mesh.vertex_count(); ++i) {
      if (!topo.vertex_neighbors[i].empty()) ++lap_count;
    }
    if (lap_count > 0) {
      const double scale = w_lap / lap_count;
      for (int i = 0; i < mesh.vertex_count(); ++i) {
        const auto& nbrs = topo.vertex_neighbors[i];
        if (nbrs.empty()) continue;
        Vec3 centroid = Vec3::Zero();
        for (int j : nbrs) centroid += mesh.vertices[j];
        centroid /= static_cast<double>(nbrs.size());
        const Vec3 d = 2.0 * scale * (mesh.vertices[i] - centroid);
        grad[i] += d;
        for (int j : nbrs) grad[j] -= d / static_cast<double>(nbrs.size());
      }
    }
  }

  if (w_nc != 0.0 && !topo.adjacent_faces.empty()) {
    const double scale = w_nc / static_cast<double>(topo.adjacent_faces.size());
    // d(1 - nf.ng): chain through normalize and the cross products.
    auto accumulate_face = [&](int f, const Vec3& dn_unit) {
      const Face& face = mesh.faces[f];
      const Vec3 a = mesh.vertices[face[0]];
      const Vec3 b = mesh.vertices[face[1]];
      const Vec3 c = mesh.vertices[face[2]];
      const Vec3 raw = (b - a).cross(c - a);
      const double len = raw.norm();
      if (len < 1e-18) return;
      const Vec3 n = raw / len;
      const Vec3 draw = (dn_unit - n * n.dot(dn_unit)) / len;
      // raw = e1 x e2 with e1 = b - a, e2 = c - a.
      const Vec3 de1 = (c - a).cross(draw);
      const Vec3 de2 = draw.cross(b - a);
      grad[face[1]] += de1;
      grad[face[2]] += de2;
      grad[face[0]] -= de1 + de2;
    };
    for (const auto& [f, g] : topo.adjacent_faces) {
      const Vec3 nf = face_normal(mesh, f).normalized();
      const Vec3 ng = face_normal(mesh, g).normalized();
      accumulate_face(f, -scale * ng);
      accumulate_face(g, -scale * nf);
    }
  }

  if (w_el != 0.0 && !topo.edges.empty()) {
    const double scale = w_el / static_cast<double>(topo.edges.size());
    for (const auto& [a, b] : topo.edges) {
      const Vec3 d = mesh.vertices[a] - mesh.vertices[b];
      const double len = d.norm();
      if (len < 1e-18) continue;
      const double len_rest = (rest.vertices[a] - rest.vertices[b]).norm();
      const Vec3 g = scale * 2.0 * (len - len_rest) * (d / len);
      grad[a] += g;
      grad[b] -= g;
    }
  }
  return grad;
}

std::vector<int> visible_scalp(const TriMesh& mesh, const std::vector<int>& scalp,
                               const Image& hair_mask, const Camera& camera) {
  camera.validate();
  const RenderBuffers buffers = rasterize(mesh, camera);
  constexpr double kDepthTolerance = 1e-4;

  std::vector<int> visible;
  for (int idx : scalp) {
    const Vec3 cam_point = camera.rotation * mesh.vertices[idx] + camera.translation;
    if (cam_point.z() <= camera.near_clip) continue;
    const double px = camera.fx * cam_point.x() / cam_point.z() + camera.cx;
    const double py = camera.fy * cam_point.y() / cam_point.z() + camera.cy;
    const int ix = static_cast<int>(std::floor(px));
    const int iy = static_cast<int>(std::floor(py));
    if (ix < 0 || ix >= camera.width || iy < 0 || iy >= camera.height) continue;
    if (hair_mask.at(ix, iy) <= 0.5) continue;
    if (cam_point.z() > buffers.depth.at(ix, iy) + kDepthTolerance) continue;
    visible.push_back(idx);
  }
  return visible;
}

}  // namespace meshsplat
