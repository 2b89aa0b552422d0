#pragma once

#include <filesystem>
#include <string>

#include "ffseg/bundle.hpp"
#include "ffseg/scene_model.hpp"

namespace ffseg {

/// 8-bit binary PGM (P5). Mask pixels are written as 0 / 255.
void WritePgm(const BinaryMask& mask, const std::filesystem::path& path);
std::string EncodePgm(const BinaryMask& mask);
/// Any nonzero sample counts as inside. Throws FormatError on malformed data.
BinaryMask DecodePgm(const std::string& bytes);
BinaryMask ReadPgm(const std::filesystem::path& path);

/// Writes `views/{v}/objects/{id}.pgm` under `root`.
void SaveMaskDirectory(const ObjectMasksPerView& masks, const std::filesystem::path& root);
/// Reads the same layout for `n_views` views; ids come from the file stems
/// and every mask must match `grid`.
ObjectMasksPerView LoadMaskDirectory(const std::filesystem::path& root, int n_views, const ImageGrid& grid);

/// Replaces the bundle's object masks (and soft masks) with the ones found
/// under `root`.
void IngestMasks(Bundle& bundle, const std::filesystem::path& root, const SoftenParams& soften);

}  // namespace ffseg
