#pragma once

#include "meshsplat/image.hpp"

#include <filesystem>

namespace meshsplat {

/// Writes 8-bit PNG; 1-channel images become grayscale, 3-channel RGB.
/// Values are clamped to [0,1] and rounded to 8 bits.
void write_png(const std::filesystem::path& path, const Image& image);

/// Reads an 8-bit PNG into [0,1] doubles (grayscale 1ch or RGB 3ch; palette
/// and alpha are expanded/stripped).
Image read_png(const std::filesystem::path& path);

/// Writes a single-channel float map as little-endian grayscale PFM
/// (bottom-to-top rows, scale -1.0). Non-finite values round-trip as float
/// infinities.
void write_pfm(const std::filesystem::path& path, const Image& image);

Image read_pfm(const std::filesystem::path& path);

}  // namespace meshsplat
