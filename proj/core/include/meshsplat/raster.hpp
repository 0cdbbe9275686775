#pragma once

#include "meshsplat/geometry.hpp"
#include "meshsplat/image.hpp"
#include "meshsplat/types.hpp"

#include <vector>

namespace meshsplat {

/// Pinhole camera. World-to-camera: X_c = R * X_w + t; pixel centers sit at
/// (x + 0.5, y + 0.5). Triangles with any vertex closer than the near clip
/// are dropped rather than clipped; scenes here keep the subject in frame.
struct Camera {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 0, height = 0;
  double near_clip = 1e-3, far_clip = 1e3;

  Vec3 center() const { return -rotation.transpose() * translation; }

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

  /// Projects a camera-space point; caller guarantees z > 0.
  Vec2 project(const Vec3& cam) const {
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
  }

  /// Camera placed at `eye` looking at `target` with the given up hint.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal_px,
                        int width, int height);

  void validate() const;
};

/// Per-pixel outputs of mesh rasterization. `bary` holds perspective-correct
/// barycentrics of the hit triangle; `face_id` is -1 where empty.
struct RenderBuffers {
  Image color;     // H x W x 3 (filled by the texture decoder, black elsewhere)
  Image depth;     // H x W, camera-space z, +inf where empty
  Image uv;        // H x W x 2
  Image bary;      // H x W x 3
  Image coverage;  // H x W, 0/1
  std::vector<int> face_id;

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }
};

/// Nearest-triangle z-buffer rasterization with perspective-correct uv.
/// Depth ties resolve to the lower face index, so the result is identical
/// under any parallel schedule. Zero-area projected triangles are skipped.
RenderBuffers rasterize(const TriMesh& mesh, const Camera& camera);

struct ScreenNormals {
  Image normals;  // H x W x 3, unit where valid
  Image valid;    // H x W, 0/1; pixels with any missing 4-neighbor are invalid
};

/// Unit normals from central differences of back-projected depth. The
/// convention points toward the camera: constant depth gives (0, 0, -1).
ScreenNormals screen_normals(const Image& depth, const Camera& camera);

/// Adjoint of screen_normals: scatters per-pixel normal gradients back to the
/// depth map (only valid pixels contribute).
Image screen_normals_backward(const Image& depth, const Camera& camera,
                              const ScreenNormals& fwd, const Image& grad_normals);

/// Per-pixel unit view vector d (camera center toward the surface point) for
/// covered pixels; zero elsewhere.
Image view_direction_image(const Camera& camera, const RenderBuffers& buffers);

}  // namespace meshsplat
