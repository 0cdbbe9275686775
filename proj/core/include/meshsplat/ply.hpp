#pragma once

#include "meshsplat/splat.hpp"

#include <filesystem>

namespace meshsplat {

/// Writes the cloud as binary little-endian PLY with the community splat
/// attribute naming (x y z, rot_0..3, scale_0..2, opacity, f_dc_*, f_rest_*;
/// f_rest is channel-major). Properties are double-typed so checkpoints
/// round-trip bit-exactly.
void write_cloud_ply(const std::filesystem::path& path, const GaussianCloud& cloud);

/// Reads the PLY format written above; float-typed property files load too.
GaussianCloud read_cloud_ply(const std::filesystem::path& path);

}  // namespace meshsplat
