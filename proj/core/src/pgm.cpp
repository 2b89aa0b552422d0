#include "ffseg/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ffseg {
namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string NextToken(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw FormatError("pgm header", pos, "unexpected end of header");
  return bytes.substr(start, pos - start);
}

int ParsePositive(const std::string& token, std::size_t pos, const char* what) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      token.size() > 7) {
    throw FormatError("pgm header", pos, std::string("bad ") + what + " '" + token + "'");
  }
  const int value = std::stoi(token);
  if (value <= 0) throw FormatError("pgm header", pos, std::string(what) + " must be positive");
  return value;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string EncodePgm(const BinaryMask& mask) {
  std::ostringstream out;
  out << "P5\n" << mask.grid().width << ' ' << mask.grid().height << "\n255\n";
  std::string data(mask.size(), '\0');
  for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] != 0 ? static_cast<char>(255) : '\0';
  out << data;
  return out.str();
}

void WritePgm(const BinaryMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const std::string bytes = EncodePgm(mask);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

BinaryMask DecodePgm(const std::string& bytes) {
  std::size_t pos = 0;
  if (NextToken(bytes, pos) != "P5") throw FormatError("pgm header", 0, "not a binary PGM (P5)");
  const int width = ParsePositive(NextToken(bytes, pos), pos, "width");
  const int height = ParsePositive(NextToken(bytes, pos), pos, "height");
  const int maxval = ParsePositive(NextToken(bytes, pos), pos, "maxval");
  if (maxval > 255) throw FormatError("pgm header", pos, "16-bit PGM is not supported");
  ++pos;  // single whitespace after maxval
  const ImageGrid grid{width, height};
  if (bytes.size() < pos || bytes.size() - pos < grid.size()) {
    throw FormatError("pgm pixels", std::min(pos, bytes.size()), "truncated pixel data");
  }
  BinaryMask mask(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) mask[i] = bytes[pos + i] != '\0' ? 1 : 0;
  return mask;
}

BinaryMask ReadPgm(const std::filesystem::path& path) { return DecodePgm(ReadFile(path)); }

void SaveMaskDirectory(const ObjectMasksPerView& masks, const std::filesystem::path& root) {
  for (std::size_t v = 0; v < masks.size(); ++v) {
    const std::filesystem::path dir = root / "views" / std::to_string(v) / "objects";
    std::filesystem::create_directories(dir);
    for (const auto& [id, mask] : masks[v]) WritePgm(mask, dir / (std::to_string(id) + ".pgm"));
  }
}

ObjectMasksPerView LoadMaskDirectory(const std::filesystem::path& root, int n_views, const ImageGrid& grid) {
  ObjectMasksPerView out(static_cast<std::size_t>(n_views));
  for (int v = 0; v < n_views; ++v) {
    const std::filesystem::path dir = root / "views" / std::to_string(v) / "objects";
    if (!std::filesystem::is_directory(dir)) continue;
    auto& list = out[static_cast<std::size_t>(v)];
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".pgm") continue;
      const std::string stem = entry.path().stem().string();
      if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        throw InputError("mask file name is not an object id: " + entry.path().string());
      }
      BinaryMask mask = ReadPgm(entry.path());
      if (!(mask.grid() == grid)) {
        throw StructuralError(entry.path().string() + " is " + std::to_string(mask.grid().width) + "x" +
                              std::to_string(mask.grid().height) + ", scene grid is " +
                              std::to_string(grid.width) + "x" + std::to_string(grid.height));
      }
      list.emplace_back(std::stoi(stem), std::move(mask));
    }
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return out;
}

void IngestMasks(Bundle& bundle, const std::filesystem::path& root, const SoftenParams& soften) {
  ObjectMasksPerView masks = LoadMaskDirectory(root, bundle.n_views(), bundle.grid);
  const MaskCache cache = BuildMaskCache(bundle.grid, masks, soften);
  int max_id = -1;
  for (std::size_t v = 0; v < masks.size(); ++v) {
    for (const auto& entry : masks[v]) max_id = std::max(max_id, entry.first);
    bundle.views[v].object_masks = std::move(masks[v]);
    bundle.views[v].soft_mask = cache.view(static_cast<int>(v)).soft_mask;
  }
  bundle.n_objects = std::max(bundle.n_objects, max_id + 1);
  RoundToStorage(bundle);
  bundle.Validate();
}

}  // namespace ffseg
