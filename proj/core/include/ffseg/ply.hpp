#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ffseg/geometry.hpp"

namespace ffseg {

struct ColoredPoint {
  Vec3 position = Vec3::Zero();
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

enum class PlyFormat { kAscii, kBinaryLittleEndian };

/// Vertex element with float x, y, z and uchar red, green, blue.
std::string EncodePly(const std::vector<ColoredPoint>& points, PlyFormat format);
void WritePly(const std::vector<ColoredPoint>& points, const std::filesystem::path& path, PlyFormat format);

/// Reads the vertex element of an ascii or binary little-endian PLY. x, y, z
/// are required; colours default to black. Throws FormatError.
std::vector<ColoredPoint> DecodePly(const std::string& bytes);
std::vector<ColoredPoint> ReadPly(const std::filesystem::path& path);

}  // namespace ffseg
