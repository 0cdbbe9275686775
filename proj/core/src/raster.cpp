#include "meshsplat/raster.hpp"

#include "meshsplat/errors.hpp"
#include "meshsplat/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace meshsplat {

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal_px,
                       int width, int height) {
  Camera cam;
  const Vec3 z_axis = (target - eye).normalized();
  const Vec3 x_axis = z_axis.cross(up).normalized();
  const Vec3 y_axis = z_axis.cross(x_axis);
  cam.rotation.row(0) = x_axis;
  cam.rotation.row(1) = y_axis;
  cam.rotation.row(2) = z_axis;
  cam.translation = -(cam.rotation * eye);
  cam.fx = cam.fy = focal_px;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  return cam;
}

void Camera::validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw ParameterError("Camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ParameterError("Camera: empty image size");
  if (!(0.0 < near_clip && near_clip < far_clip)) {
    throw ParameterError("Camera: need 0 < near < far");
  }
  const Mat3 delta = rotation * rotation.transpose() - Mat3::Identity();
  if (delta.cwiseAbs().maxCoeff() > 1e-9) {
    throw ParameterError("Camera: rotation is not orthonormal");
  }
}

namespace {

inline double edge_fn(const Vec2& a, const Vec2& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

// Shared-edge ownership for pixel centers lying exactly on an edge: the pixel
// belongs to the triangle whose (orientation-normalized) edge is a top edge
// (horizontal, interior below) or a left edge (going up in y-down coords).
inline bool top_left(double dx, double dy) { return (dy == 0.0 && dx > 0.0) || dy < 0.0; }

struct ProjectedTri {
  Vec2 s[3];
  double z[3];
  int face = 0;
  double min_y = 0.0, max_y = 0.0, min_x = 0.0, max_x = 0.0;
};

}  // namespace

RenderBuffers rasterize(const TriMesh& mesh, const Camera& camera) {
  camera.validate();
  const int w = camera.width;
  const int h = camera.height;

  RenderBuffers out;
  out.color = Image(w, h, 3);
  out.depth = Image(w, h, 1, kInf);
  out.uv = Image(w, h, 2);
  out.bary = Image(w, h, 3);
  out.coverage = Image(w, h, 1);
  out.face_id.assign(static_cast<std::size_t>(w) * h, -1);

  std::vector<Vec3> cam_verts(mesh.vertices.size());
  std::vector<Vec2> screen(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    cam_verts[i] = camera.to_camera(mesh.vertices[i]);
    if (cam_verts[i].z() > 0.0) screen[i] = camera.project(cam_verts[i]);
  }

  std::vector<ProjectedTri> tris;
  tris.reserve(mesh.faces.size());
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Face& face = mesh.faces[f];
    ProjectedTri t;
    bool in_front = true;
    for (int k = 0; k < 3; ++k) {
      const double z = cam_verts[face[k]].z();
      if (z < camera.near_clip || z > camera.far_clip) {
        in_front = false;
        break;
      }
      t.s[k] = screen[face[k]];
      t.z[k] = z;
    }
    if (!in_front) continue;
    t.face = f;
    t.min_x = std::min({t.s[0].x(), t.s[1].x(), t.s[2].x()});
    t.max_x = std::max({t.s[0].x(), t.s[1].x(), t.s[2].x()});
    t.min_y = std::min({t.s[0].y(), t.s[1].y(), t.s[2].y()});
    t.max_y = std::max({t.s[0].y(), t.s[1].y(), t.s[2].y()});
    if (t.max_x < 0.0 || t.min_x > w || t.max_y < 0.0 || t.min_y > h) continue;
    tris.push_back(t);
  }

  const bool has_uv = !mesh.uv_coords.empty();
  constexpr std::int64_t kTileRows = 16;

  parallel_chunks(h, kTileRows, [&](int, std::int64_t row_begin, std::int64_t row_end) {
    for (const ProjectedTri& t : tris) {
      const int y0 = std::max<std::int64_t>(row_begin, static_cast<std::int64_t>(std::floor(t.min_y - 0.5)));
      const int y1 = std::min<std::int64_t>(row_end - 1, static_cast<std::int64_t>(std::ceil(t.max_y)));
      const int x0 = std::max(0, static_cast<int>(std::floor(t.min_x - 0.5)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(t.max_x)));
      if (y0 > y1 || x0 > x1) continue;

      const double area = edge_fn(t.s[0], t.s[1], t.s[2].x(), t.s[2].y());
      if (area == 0.0) continue;  // degenerate projection
      const double sign = area > 0.0 ? 1.0 : -1.0;
      const double inv_area = 1.0 / (sign * area);

      // Edge vectors (orientation-normalized) for the top-left tie rule;
      // edge k is opposite vertex k.
      double edx[3], edy[3];
      for (int k = 0; k < 3; ++k) {
        const Vec2& a = t.s[(k + 1) % 3];
        const Vec2& b = t.s[(k + 2) % 3];
        edx[k] = sign * (b.x() - a.x());
        edy[k] = sign * (b.y() - a.y());
      }

      const Face& face = mesh.faces[t.face];
      for (int y = y0; y <= y1; ++y) {
        const double py = y + 0.5;
        for (int x = x0; x <= x1; ++x) {
          const double px = x + 0.5;
          const double w0 = sign * edge_fn(t.s[1], t.s[2], px, py);
          const double w1 = sign * edge_fn(t.s[2], t.s[0], px, py);
          const double w2 = sign * edge_fn(t.s[0], t.s[1], px, py);
          bool inside = true;
          const double wv[3] = {w0, w1, w2};
          for (int k = 0; k < 3; ++k) {
            if (wv[k] < 0.0 || (wv[k] == 0.0 && !top_left(edx[k], edy[k]))) {
              inside = false;
              break;
            }
          }
          if (!inside) continue;

          const double b0 = w0 * inv_area;
          const double b1 = w1 * inv_area;
          const double b2 = w2 * inv_area;
          const double l0 = b0 / t.z[0];
          const double l1 = b1 / t.z[1];
          const double l2 = b2 / t.z[2];
          const double inv_z = l0 + l1 + l2;
          const double z = 1.0 / inv_z;

          const std::size_t pix = static_cast<std::size_t>(y) * w + x;
          const double cur = out.depth.at(x, y);
          if (z > cur || (z == cur && t.face >= out.face_id[pix])) continue;

          out.depth.at(x, y) = z;
          out.face_id[pix] = t.face;
          out.coverage.at(x, y) = 1.0;
          const double pc0 = l0 * z;
          const double pc1 = l1 * z;
          const double pc2 = l2 * z;
          out.bary.at(x, y, 0) = pc0;
          out.bary.at(x, y, 1) = pc1;
          out.bary.at(x, y, 2) = pc2;
          if (has_uv) {
            const Vec2 uv = pc0 * mesh.uv_coords[face[0]] + pc1 * mesh.uv_coords[face[1]] +
                            pc2 * mesh.uv_coords[face[2]];
            out.uv.at(x, y, 0) = uv.x();
            out.uv.at(x, y, 1) = uv.y();
          }
        }
      }
    }
  });
  return out;
}

namespace {

inline Vec3 backproject(const Camera& cam, int x, int y, double z) {
  return {(x + 0.5 - cam.cx) / cam.fx * z, (y + 0.5 - cam.cy) / cam.fy * z, z};
}

}  // namespace

ScreenNormals screen_normals(const Image& depth, const Camera& camera) {
  const int w = depth.width();
  const int h = depth.height();
  ScreenNormals out;
  out.normals = Image(w, h, 3);
  out.valid = Image(w, h, 1);

  parallel_for(h, [&](std::int64_t y) {
    for (int x = 0; x < w; ++x) {
      if (x == 0 || x == w - 1 || y == 0 || y == h - 1) continue;
      const double z = depth.at(x, y);
      const double zxm = depth.at(x - 1, y);
      const double zxp = depth.at(x + 1, y);
      const double zym = depth.at(x, y - 1);
      const double zyp = depth.at(x, y + 1);
      if (!std::isfinite(z) || !std::isfinite(zxm) || !std::isfinite(zxp) ||
          !std::isfinite(zym) || !std::isfinite(zyp)) {
        continue;
      }
      const Vec3 dx = backproject(camera, x + 1, y, zxp) - backproject(camera, x - 1, y, zxm);
      const Vec3 dy = backproject(camera, x, y + 1, zyp) - backproject(camera, x, y - 1, zym);
      const Vec3 cross = dy.cross(dx);
      const double len = cross.norm();
      if (len < 1e-18) continue;
      const Vec3 n = cross / len;
      out.normals.at(x, y, 0) = n.x();
      out.normals.at(x, y, 1) = n.y();
      out.normals.at(x, y, 2) = n.z();
      out.valid.at(x, y) = 1.0;
    }
  });
  return out;
}

Image screen_normals_backward(const Image& depth, const Camera& camera, const ScreenNormals& fwd,
                              const Image& grad_normals) {
  const int w = depth.width();
  const int h = depth.height();
  Image grad_depth(w, h, 1);

  // Sequential scatter: each valid pixel touches its four neighbors.
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      if (fwd.valid.at(x, y) == 0.0) continue;
      const Vec3 g(grad_normals.at(x, y, 0), grad_normals.at(x, y, 1), grad_normals.at(x, y, 2));
      if (g.isZero()) continue;

      const double zxm = depth.at(x - 1, y);
      const double zxp = depth.at(x + 1, y);
      const double zym = depth.at(x, y - 1);
      const double zyp = depth.at(x, y + 1);
      const Vec3 dx = backproject(camera, x + 1, y, zxp) - backproject(camera, x - 1, y, zxm);
      const Vec3 dy = backproject(camera, x, y + 1, zyp) - backproject(camera, x, y - 1, zym);
      const Vec3 cross = dy.cross(dx);
      const double len = cross.norm();
      if (len < 1e-18) continue;
      const Vec3 n = cross / len;

      // d(normalize): (I - n n^T) / len, then through the cross product.
      const Vec3 dcross = (g - n * n.dot(g)) / len;
      const Vec3 ddy = dx.cross(dcross);
      const Vec3 ddx = dcross.cross(dy);

      // d(backproject)/dz at (x', y') is the unit-depth ray direction.
      grad_depth.at(x + 1, y) += ddx.dot(backproject(camera, x + 1, y, 1.0));
      grad_depth.at(x - 1, y) -= ddx.dot(backproject(camera, x - 1, y, 1.0));
      grad_depth.at(x, y + 1) += ddy.dot(backproject(camera, x, y + 1, 1.0));
      grad_depth.at(x, y - 1) -= ddy.dot(backproject(camera, x, y - 1, 1.0));
    }
  }
  return grad_depth;
}

Image view_direction_image(const Camera& camera, const RenderBuffers& buffers) {
  const int w = buffers.width();
  const int h = buffers.height();
  Image dirs(w, h, 3);
  const Mat3 rot_t = camera.rotation.transpose();
  parallel_for(h, [&](std::int64_t y) {
    for (int x = 0; x < w; ++x) {
      if (buffers.coverage.at(x, y) == 0.0) continue;
      const Vec3 d = (rot_t * backproject(camera, x, y, 1.0)).normalized();
      dirs.at(x, y, 0) = d.x();
      dirs.at(x, y, 1) = d.y();
      dirs.at(x, y, 2) = d.z();
    }
  });
  return dirs;
}

}  // namespace meshsplat
