#include "ffseg/mask_cache.hpp"

#include <algorithm>
#include <set>

namespace ffseg {

void SoftenParams::Validate() const {
  if (!(background_level >= 0.0 && background_level < 1.0)) {
    throw InputError("soft-mask background level must lie in [0, 1)");
  }
  if (blur_radius < 0) throw InputError("blur radius must be >= 0");
}

SoftMask SoftenMask(const BinaryMask& union_mask, const SoftenParams& params) {
  params.Validate();
  const ImageGrid grid = union_mask.grid();
  const int w = grid.width;
  const int h = grid.height;
  // Summed-area table with a zero border row/column.
  std::vector<long long> sat(static_cast<std::size_t>(w + 1) * static_cast<std::size_t>(h + 1), 0);
  const auto at = [w](int x, int y) {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(w + 1) + static_cast<std::size_t>(x);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      sat[at(x + 1, y + 1)] = (union_mask(x, y) != 0 ? 1 : 0) + sat[at(x, y + 1)] +
                              sat[at(x + 1, y)] - sat[at(x, y)];
    }
  }
  const int r = params.blur_radius;
  const double beta = params.background_level;
  SoftMask out(grid, beta);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(w, x + r + 1);
      const long long inside = sat[at(x1, y1)] - sat[at(x0, y1)] - sat[at(x1, y0)] + sat[at(x0, y0)];
      const long long count = static_cast<long long>(x1 - x0) * (y1 - y0);
      const double blurred = static_cast<double>(inside) / static_cast<double>(count);
      out(x, y) = std::clamp(beta + (1.0 - beta) * blurred, 0.0, 1.0);
    }
  }
  return out;
}

const CachedMask* ViewMaskCache::Find(int object_id) const {
  for (const CachedMask& entry : entries) {
    if (entry.object_id == object_id) return &entry;
  }
  return nullptr;
}

MaskCache::MaskCache(ImageGrid grid, std::vector<ViewMaskCache> views)
    : grid_(grid), views_(std::move(views)) {
  Validate();
}

const ViewMaskCache& MaskCache::view(int v) const {
  if (v < 0 || v >= n_views()) {
    throw InputError("view " + std::to_string(v) + " not in mask cache (" +
                     std::to_string(n_views()) + " views)");
  }
  return views_[static_cast<std::size_t>(v)];
}

std::vector<int> MaskCache::ObjectIds() const {
  std::set<int> ids;
  for (const ViewMaskCache& view : views_) {
    for (const CachedMask& entry : view.entries) ids.insert(entry.object_id);
  }
  return {ids.begin(), ids.end()};
}

void MaskCache::Validate() const {
  for (std::size_t v = 0; v < views_.size(); ++v) {
    const ViewMaskCache& view = views_[v];
    if (view.soft_mask.grid() != grid_) {
      throw StructuralError("soft mask of view " + std::to_string(v) + " has the wrong grid");
    }
    std::set<int> ids;
    for (std::size_t k = 0; k < view.entries.size(); ++k) {
      const CachedMask& e = view.entries[k];
      if (e.mask.grid() != grid_) {
        throw StructuralError("mask of object " + std::to_string(e.object_id) + " in view " +
                              std::to_string(v) + " has the wrong grid");
      }
      if (!ids.insert(e.object_id).second) {
        throw DataError("object " + std::to_string(e.object_id) + " cached twice in view " +
                        std::to_string(v));
      }
      if (e.area != Popcount(e.mask)) {
        throw DataError("cached area of object " + std::to_string(e.object_id) +
                        " disagrees with its mask");
      }
      if (k > 0) {
        const CachedMask& p = view.entries[k - 1];
        if (!(std::pair(p.area, p.object_id) < std::pair(e.area, e.object_id))) {
          throw DataError("view " + std::to_string(v) + " cache is not sorted by (area, id)");
        }
      }
    }
  }
}

MaskCache BuildMaskCache(const ImageGrid& grid, const ObjectMasksPerView& masks,
                         const SoftenParams& params) {
  params.Validate();
  std::vector<ViewMaskCache> views;
  views.reserve(masks.size());
  for (std::size_t v = 0; v < masks.size(); ++v) {
    ViewMaskCache view;
    BinaryMask union_mask(grid, 0);
    std::set<int> ids;
    for (const auto& [id, mask] : masks[v]) {
      if (id < 0) throw InputError("object ids must be nonnegative, got " + std::to_string(id));
      if (!ids.insert(id).second) {
        throw InputError("duplicate object " + std::to_string(id) + " in view " +
                         std::to_string(v));
      }
      if (mask.grid() != grid) {
        throw InputError("mask of object " + std::to_string(id) + " in view " +
                         std::to_string(v) + " does not match the cache grid");
      }
      ffseg::Validate(mask);
      for (std::size_t i = 0; i < mask.size(); ++i) union_mask[i] |= mask[i];
      view.entries.push_back({id, mask, Popcount(mask)});
    }
    std::sort(view.entries.begin(), view.entries.end(),
              [](const CachedMask& a, const CachedMask& b) {
                return std::pair(a.area, a.object_id) < std::pair(b.area, b.object_id);
              });
    view.soft_mask = SoftenMask(union_mask, params);
    views.push_back(std::move(view));
  }
  return MaskCache(grid, std::move(views));
}

}  // namespace ffseg
