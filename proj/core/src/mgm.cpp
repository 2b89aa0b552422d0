#include "ffseg/mgm.hpp"

#include <algorithm>
#include <chrono>

namespace ffseg {

void Prompt::Validate(const ImageGrid& grid, int n_views) const {
  if (view < 0 || view >= n_views) {
    throw InputError("view: " + std::to_string(view) + " is not in [0, " + std::to_string(n_views) + ")");
  }
  const auto check = [&](const std::vector<PixelCoord>& list, const char* field) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (!grid.contains(list[i].x, list[i].y)) {
        throw InputError(std::string(field) + "[" + std::to_string(i) + "]: (" + std::to_string(list[i].x) + ", " +
                         std::to_string(list[i].y) + ") is outside the " + std::to_string(grid.width) + "x" +
                         std::to_string(grid.height) + " grid");
      }
    }
  };
  check(positives, "positives");
  check(negatives, "negatives");
}

ObjectIdSet::ObjectIdSet(std::vector<int> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

void ObjectIdSet::Insert(int id) {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) ids_.insert(it, id);
}

void ObjectIdSet::Erase(int id) {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it != ids_.end() && *it == id) ids_.erase(it);
}

bool ObjectIdSet::Contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

std::size_t SegmentationResult::MaskArea() const {
  std::size_t total = 0;
  for (const BinaryMask& m : masks) total += Popcount(m);
  return total;
}

ObjectIdSet RetrieveObjects(const Prompt& prompt, const MaskCache& cache) {
  prompt.Validate(cache.grid(), cache.n_views());
  const ViewMaskCache& view = cache.view(prompt.view);
  ObjectIdSet selected;
  for (const PixelCoord& p : prompt.positives) {
    for (const CachedMask& entry : view.entries) {
      if (entry.mask(p.x, p.y) != 0) {
        selected.Insert(entry.object_id);
        break;
      }
    }
  }
  for (const PixelCoord& p : prompt.negatives) {
    for (const CachedMask& entry : view.entries) {
      if (entry.mask(p.x, p.y) != 0) selected.Erase(entry.object_id);
    }
  }
  return selected;
}

std::vector<BinaryMask> UnionMasks(const ObjectIdSet& objects, const MaskCache& cache) {
  std::vector<BinaryMask> out;
  out.reserve(static_cast<std::size_t>(cache.n_views()));
  for (const ViewMaskCache& view : cache.views()) {
    BinaryMask mask(cache.grid(), 0);
    for (int id : objects) {
      const CachedMask* entry = view.Find(id);
      if (entry == nullptr) continue;
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] |= entry->mask[i];
    }
    out.push_back(std::move(mask));
  }
  return out;
}

std::vector<LiftedPoint> LiftTo3d(const std::vector<BinaryMask>& masks, const std::vector<ViewTransform>& views) {
  std::vector<LiftedPoint> points;
  for (std::size_t v = 0; v < masks.size(); ++v) {
    const BinaryMask& mask = masks[v];
    if (Popcount(mask) == 0) continue;
    if (v >= views.size()) {
      throw StructuralError("no aligned transform for view " + std::to_string(v));
    }
    const ViewTransform& vt = views[v];
    if (!(vt.grid() == mask.grid())) throw StructuralError("view " + std::to_string(v) + " depth grid mismatch");
    const ImageGrid grid = mask.grid();
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        if (mask(x, y) == 0) continue;
        points.push_back({PixelToWorld(x, y, vt), static_cast<int>(v), {x, y}});
      }
    }
  }
  return points;
}

SegmentationResult Segment(const Prompt& prompt, const MaskCache& cache, const AlignedScene& aligned) {
  const auto start = std::chrono::steady_clock::now();
  if (aligned.n_views() != cache.n_views()) {
    throw StructuralError("aligned scene has " + std::to_string(aligned.n_views()) + " views, cache has " +
                          std::to_string(cache.n_views()));
  }
  if (prompt.positives.empty()) throw InputError("positives: at least one positive point is required");
  SegmentationResult result;
  result.objects = RetrieveObjects(prompt, cache);
  result.masks = UnionMasks(result.objects, cache);
  result.points = LiftTo3d(result.masks, aligned.views);
  result.empty = result.objects.empty();
  result.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<ColoredPoint> ColorPoints(const std::vector<LiftedPoint>& points, const std::vector<RgbImage>& images) {
  std::vector<ColoredPoint> out;
  out.reserve(points.size());
  for (const LiftedPoint& p : points) {
    ColoredPoint c;
    c.position = p.position;
    if (p.view >= 0 && static_cast<std::size_t>(p.view) < images.size()) {
      const RgbImage& img = images[static_cast<std::size_t>(p.view)];
      const std::size_t i = 3 * img.grid.index(p.pixel.x, p.pixel.y);
      c.color = {img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]};
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace ffseg
