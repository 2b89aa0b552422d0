#include "ffseg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ffseg/rng.hpp"

namespace ffseg {
namespace {

constexpr double kNoHit = std::numeric_limits<double>::infinity();
constexpr double kPlaneHeight = -0.7;

std::string Describe(const ObjectShape& shape) {
  std::ostringstream out;
  out << (shape.kind == ShapeKind::kSphere ? "sphere" : "box") << " at ("
      << shape.center.x() << ", " << shape.center.y() << ", " << shape.center.z() << ")";
  return out.str();
}

// Smallest positive ray parameter where o + t d enters the sphere.
double IntersectSphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double cc = oc.squaredNorm() - r * r;
  const double disc = b * b - a * cc;
  if (disc < 0.0) return kNoHit;
  const double s = std::sqrt(disc);
  const double t0 = (-b - s) / a;
  if (t0 > 1e-9) return t0;
  const double t1 = (-b + s) / a;
  return t1 > 1e-9 ? t1 : kNoHit;
}

double IntersectBox(const Vec3& o, const Vec3& d, const Vec3& c, const Vec3& h,
                    Vec3* normal) {
  double t_near = -kNoHit;
  double t_far = kNoHit;
  int near_axis = 0;
  double near_sign = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = c[axis] - h[axis];
    const double hi = c[axis] + h[axis];
    if (std::abs(d[axis]) < 1e-15) {
      if (o[axis] < lo || o[axis] > hi) return kNoHit;
      continue;
    }
    double t0 = (lo - o[axis]) / d[axis];
    double t1 = (hi - o[axis]) / d[axis];
    double sign = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      near_axis = axis;
      near_sign = sign;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return kNoHit;
  }
  if (t_near <= 1e-9) return kNoHit;  // cameras are never inside objects
  if (normal != nullptr) {
    *normal = Vec3::Zero();
    (*normal)[near_axis] = near_sign;
  }
  return t_near;
}

RigidPose LookAt(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);
  RigidPose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

std::array<double, 3> ObjectColor(int id) {
  static constexpr std::array<std::array<double, 3>, 6> kPalette{{
      {0.90, 0.25, 0.20}, {0.20, 0.55, 0.90}, {0.25, 0.80, 0.35},
      {0.95, 0.75, 0.15}, {0.70, 0.30, 0.85}, {0.15, 0.80, 0.80},
  }};
  return kPalette[static_cast<std::size_t>(id) % kPalette.size()];
}

struct Hit {
  double t = kNoHit;
  SurfaceLabel label;
  Vec3 normal = Vec3::UnitZ();
};

Hit CastRay(const Vec3& o, const Vec3& d, const std::vector<ObjectShape>& objects,
            const std::vector<ClutterBlob>& clutter, const SceneSpec& spec) {
  Hit best;
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const ObjectShape& obj = objects[k];
    Vec3 n;
    const double t = obj.kind == ShapeKind::kSphere
                         ? IntersectSphere(o, d, obj.center, obj.extent.x())
                         : IntersectBox(o, d, obj.center, obj.extent, &n);
    if (t < best.t) {
      best.t = t;
      best.label = {SurfaceLabel::kObject, static_cast<int>(k)};
      best.normal = obj.kind == ShapeKind::kSphere
                        ? Vec3(((o + t * d) - obj.center).normalized())
                        : n;
    }
  }
  for (std::size_t j = 0; j < clutter.size(); ++j) {
    const double t = IntersectSphere(o, d, clutter[j].center, clutter[j].radius);
    if (t < best.t) {
      best.t = t;
      best.label = {SurfaceLabel::kClutter, static_cast<int>(j)};
      best.normal = ((o + t * d) - clutter[j].center).normalized();
    }
  }
  if (spec.background == BackgroundKind::kPlane && d.z() < -1e-12) {
    const double t = (kPlaneHeight - o.z()) / d.z();
    if (t > 1e-9 && t < best.t) {
      best.t = t;
      best.label = {SurfaceLabel::kPlane, 0};
      best.normal = Vec3::UnitZ();
    }
  }
  if (!std::isfinite(best.t)) {
    // The dome encloses every camera, so its far root always exists.
    const double a = d.squaredNorm();
    const double b = o.dot(d);
    const double c = o.squaredNorm() - spec.dome_radius * spec.dome_radius;
    best.t = (-b + std::sqrt(b * b - a * c)) / a;
    best.label = {SurfaceLabel::kDome, 0};
    best.normal = -(o + best.t * d).normalized();
  }
  return best;
}

std::array<std::uint8_t, 3> Shade(const Hit& hit, const Vec3& p, const Vec3& d) {
  std::array<double, 3> base{0.6, 0.6, 0.6};
  switch (hit.label.kind) {
    case SurfaceLabel::kObject:
      base = ObjectColor(hit.label.index);
      break;
    case SurfaceLabel::kClutter: {
      const double g = 0.35 + 0.1 * static_cast<double>(hit.label.index % 5);
      base = {g, g * 0.95, g * 0.85};
      break;
    }
    case SurfaceLabel::kPlane: {
      const bool dark = (static_cast<int>(std::floor(p.x())) +
                         static_cast<int>(std::floor(p.y()))) % 2 == 0;
      base = dark ? std::array<double, 3>{0.45, 0.42, 0.38}
                  : std::array<double, 3>{0.62, 0.60, 0.55};
      break;
    }
    case SurfaceLabel::kDome:
      base = {0.55, 0.70, 0.85};
      break;
  }
  const Vec3 light = Vec3(0.3, -0.5, 0.8).normalized();
  double lambert = std::abs(hit.normal.dot(light));
  if (hit.label.kind == SurfaceLabel::kDome) lambert = 1.0;
  (void)d;
  const double shade = 0.35 + 0.65 * lambert;
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    rgb[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(
        std::clamp(base[static_cast<std::size_t>(c)] * shade * 255.0, 0.0, 255.0));
  }
  return rgb;
}

void CheckFrustum(const ObjectShape& obj, int id, int view,
                  const CameraIntrinsics& k, const RigidPose& pose,
                  const ImageGrid& grid) {
  const Vec3 q = pose.Apply(obj.center);
  const double r = obj.BoundingRadius();
  bool inside = q.z() > r + 1e-6;
  if (inside) {
    // Conservative bound on the projected disc of the bounding sphere.
    const double zn = q.z() - r;
    const double hx = k.fx * r / zn;
    const double hy = k.fy * r / zn;
    const double u = k.fx * q.x() / q.z() + k.cx;
    const double v = k.fy * q.y() / q.z() + k.cy;
    inside = u - hx >= 0.0 && u + hx <= grid.width - 1 && v - hy >= 0.0 &&
             v + hy <= grid.height - 1;
  }
  if (!inside) {
    throw GenerationError("object " + std::to_string(id) + " (" + Describe(obj) +
                          ") does not fit inside the frustum of view " +
                          std::to_string(view));
  }
}

}  // namespace

double ObjectShape::BoundingRadius() const {
  return kind == ShapeKind::kSphere ? extent.x() : extent.norm();
}

std::vector<ObjectShape> SceneSpec::ResolvedObjects() const {
  if (!objects.empty()) return objects;
  std::vector<ObjectShape> out;
  const double spacing = 1.0;
  for (int k = 0; k < n_objects; ++k) {
    ObjectShape shape;
    shape.center = Vec3((k - 0.5 * (n_objects - 1)) * spacing, 0.0, 0.0);
    if (k % 2 == 0) {
      shape.kind = ShapeKind::kSphere;
      shape.extent = Vec3::Constant(0.32);
    } else {
      shape.kind = ShapeKind::kBox;
      shape.extent = Vec3(0.24, 0.24, 0.24);
    }
    out.push_back(shape);
  }
  return out;
}

void SceneSpec::Validate() const {
  if (!grid.valid()) throw InputError("scene grid must be at least 1x1");
  if (n_views < 2) throw InputError("scene needs at least 2 views");
  if (objects.empty() && n_objects < 1) throw InputError("scene needs at least 1 object");
  if (n_clutter < 0) throw InputError("clutter count must be >= 0");
  if (!(clutter_min_radius > 0.0) || clutter_max_radius < clutter_min_radius) {
    throw InputError("clutter radii must satisfy 0 < min <= max");
  }
  if (!(ring.radius > 0.0) || !(focal_scale > 0.0)) {
    throw InputError("camera ring radius and focal scale must be positive");
  }
  if (!(dome_radius > std::hypot(ring.radius, ring.height) + 1.0)) {
    throw InputError("dome must enclose the camera ring with a margin of 1 unit");
  }
  for (const ObjectShape& obj : ResolvedObjects()) {
    if (!(obj.extent.minCoeff() > 0.0)) throw InputError("object extents must be positive");
  }
}

SceneSpec SceneSpec::FromConfig(const KeyValueConfig& config) {
  SceneSpec spec;
  spec.grid.width = static_cast<int>(config.GetInt("width", spec.grid.width));
  spec.grid.height = static_cast<int>(config.GetInt("height", spec.grid.height));
  spec.n_views = static_cast<int>(config.GetInt("n_views", spec.n_views));
  spec.n_objects = static_cast<int>(config.GetInt("n_objects", spec.n_objects));
  const std::string bg = config.GetString("background", "clutter");
  if (bg == "clutter") {
    spec.background = BackgroundKind::kClutter;
  } else if (bg == "plane") {
    spec.background = BackgroundKind::kPlane;
  } else {
    throw InputError("background must be 'clutter' or 'plane', got '" + bg + "'");
  }
  spec.n_clutter = static_cast<int>(config.GetInt("n_clutter", spec.n_clutter));
  spec.clutter_min_radius = config.GetDouble("clutter_min_radius", spec.clutter_min_radius);
  spec.clutter_max_radius = config.GetDouble("clutter_max_radius", spec.clutter_max_radius);
  spec.dome_radius = config.GetDouble("dome_radius", spec.dome_radius);
  spec.focal_scale = config.GetDouble("focal_scale", spec.focal_scale);
  spec.ring.radius = config.GetDouble("ring_radius", spec.ring.radius);
  spec.ring.height = config.GetDouble("ring_height", spec.ring.height);
  spec.ring.span = config.GetDouble("ring_span", spec.ring.span);
  for (int k = 0;; ++k) {
    const auto line = config.Get("object." + std::to_string(k));
    if (!line) break;
    std::istringstream in(*line);
    std::string kind;
    in >> kind;
    ObjectShape shape;
    double cx = 0, cy = 0, cz = 0;
    in >> cx >> cy >> cz;
    shape.center = Vec3(cx, cy, cz);
    if (kind == "sphere") {
      double r = 0;
      in >> r;
      shape.kind = ShapeKind::kSphere;
      shape.extent = Vec3::Constant(r);
    } else if (kind == "box") {
      double hx = 0, hy = 0, hz = 0;
      in >> hx >> hy >> hz;
      shape.kind = ShapeKind::kBox;
      shape.extent = Vec3(hx, hy, hz);
    } else {
      throw InputError("object." + std::to_string(k) + ": unknown shape '" + kind + "'");
    }
    if (in.fail()) throw InputError("object." + std::to_string(k) + ": malformed shape line");
    spec.objects.push_back(shape);
  }
  if (!spec.objects.empty()) spec.n_objects = static_cast<int>(spec.objects.size());
  return spec;
}

void SceneSpec::WriteConfig(KeyValueConfig& config) const {
  config.Set("width", std::to_string(grid.width));
  config.Set("height", std::to_string(grid.height));
  config.Set("n_views", std::to_string(n_views));
  config.Set("n_objects", std::to_string(n_objects));
  config.Set("background", background == BackgroundKind::kClutter ? "clutter" : "plane");
  config.Set("n_clutter", std::to_string(n_clutter));
  config.Set("clutter_min_radius", std::to_string(clutter_min_radius));
  config.Set("clutter_max_radius", std::to_string(clutter_max_radius));
  config.Set("dome_radius", std::to_string(dome_radius));
  config.Set("focal_scale", std::to_string(focal_scale));
  config.Set("ring_radius", std::to_string(ring.radius));
  config.Set("ring_height", std::to_string(ring.height));
  config.Set("ring_span", std::to_string(ring.span));
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const ObjectShape& o = objects[k];
    std::ostringstream line;
    line << (o.kind == ShapeKind::kSphere ? "sphere " : "box ") << o.center.x() << " "
         << o.center.y() << " " << o.center.z();
    if (o.kind == ShapeKind::kSphere) {
      line << " " << o.extent.x();
    } else {
      line << " " << o.extent.x() << " " << o.extent.y() << " " << o.extent.z();
    }
    config.Set("object." + std::to_string(k), line.str());
  }
}

GroundTruthScene GenerateScene(const SceneSpec& spec, std::uint64_t seed) {
  spec.Validate();
  GroundTruthScene scene;
  scene.spec = spec;
  scene.objects = spec.ResolvedObjects();
  scene.spec.n_objects = static_cast<int>(scene.objects.size());
  const ImageGrid grid = spec.grid;

  if (spec.background == BackgroundKind::kClutter) {
    CounterRng rng(seed, streams::kClutter);
    // Clutter lives behind the objects as seen from every camera on the arc,
    // so it can be occluded by objects but never occludes them.
    while (static_cast<int>(scene.clutter.size()) < spec.n_clutter) {
      const double r = rng.Uniform(spec.clutter_min_radius, spec.clutter_max_radius);
      const Vec3 c(rng.Uniform(-5.5, 5.5), rng.Uniform(1.4, 5.0), rng.Uniform(-3.5, 3.0));
      if (c.norm() + r < spec.dome_radius - 0.3) scene.clutter.push_back({c, r});
    }
  }

  const double f = spec.focal_scale * grid.width;
  const CameraIntrinsics intrinsics{f, f, 0.5 * (grid.width - 1), 0.5 * (grid.height - 1)};
  const int n_objects = static_cast<int>(scene.objects.size());
  scene.object_points.resize(static_cast<std::size_t>(n_objects));

  for (int v = 0; v < spec.n_views; ++v) {
    const double frac = spec.n_views == 1 ? 0.5 : static_cast<double>(v) / (spec.n_views - 1);
    const double phi = -0.5 * std::numbers::pi + (frac - 0.5) * spec.ring.span;
    const Vec3 eye(spec.ring.radius * std::cos(phi), spec.ring.radius * std::sin(phi),
                   spec.ring.height);
    const RigidPose pose = LookAt(eye, Vec3::Zero());
    for (int k = 0; k < n_objects; ++k) {
      CheckFrustum(scene.objects[static_cast<std::size_t>(k)], k, v, intrinsics, pose, grid);
    }

    GroundTruthView view;
    view.transform.intrinsics = intrinsics;
    view.transform.pose = pose;
    view.transform.depth = DepthMap(grid, 1.0);
    view.labels.resize(grid.size());
    view.object_masks.assign(static_cast<std::size_t>(n_objects), BinaryMask(grid, 0));
    view.image.grid = grid;
    view.image.rgb.assign(3 * grid.size(), 0);
    const Mat3 rt = pose.rotation.transpose();
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        const Vec3 d_cam((x - intrinsics.cx) / intrinsics.fx,
                         (y - intrinsics.cy) / intrinsics.fy, 1.0);
        const Vec3 d = rt * d_cam;
        const Hit hit = CastRay(eye, d, scene.objects, scene.clutter, spec);
        const std::size_t i = grid.index(x, y);
        // Ray direction has unit camera-z, so the ray parameter is the depth.
        view.transform.depth[i] = hit.t;
        view.labels[i] = hit.label;
        if (hit.label.kind == SurfaceLabel::kObject) {
          view.object_masks[static_cast<std::size_t>(hit.label.index)][i] = 1;
        }
        const auto rgb = Shade(hit, eye + hit.t * d, d);
        std::copy(rgb.begin(), rgb.end(), view.image.rgb.begin() + 3 * static_cast<std::ptrdiff_t>(i));
      }
    }
    view.world_points = WorldPointmap(view.transform);
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        const SurfaceLabel& label = view.labels[grid.index(x, y)];
        if (label.kind == SurfaceLabel::kObject) {
          scene.object_points[static_cast<std::size_t>(label.index)].push_back(
              {view.world_points(x, y), v, x, y});
        }
      }
    }
    scene.views.push_back(std::move(view));
  }
  return scene;
}

void NoiseSpec::Validate() const {
  const std::array<double, 6> stddevs{sigma_object, sigma_background, pose_jitter_rotation,
                                      pose_jitter_translation, confidence_scale, clutter_shift};
  for (double s : stddevs) {
    if (!(s >= 0.0)) throw InputError("noise standard deviations must be >= 0");
  }
  if (!(match_dropout >= 0.0 && match_dropout <= 1.0)) {
    throw InputError("match dropout must lie in [0, 1]");
  }
  if (!(clutter_shift_fraction >= 0.0 && clutter_shift_fraction <= 1.0)) {
    throw InputError("clutter shift fraction must lie in [0, 1]");
  }
  if (!(confidence_base >= 0.0)) throw InputError("confidence base must be >= 0");
}

NoiseSpec NoiseSpec::FromConfig(const KeyValueConfig& config) {
  NoiseSpec n;
  n.sigma_object = config.GetDouble("sigma_object", n.sigma_object);
  n.sigma_background = config.GetDouble("sigma_background", n.sigma_background);
  n.pose_jitter_rotation = config.GetDouble("jitter_rotation", n.pose_jitter_rotation);
  n.pose_jitter_translation = config.GetDouble("jitter_translation", n.pose_jitter_translation);
  n.confidence_base = config.GetDouble("confidence_base", n.confidence_base);
  n.confidence_scale = config.GetDouble("confidence_scale", n.confidence_scale);
  n.match_dropout = config.GetDouble("match_dropout", n.match_dropout);
  n.clutter_shift_fraction = config.GetDouble("clutter_shift_fraction", n.clutter_shift_fraction);
  n.clutter_shift = config.GetDouble("clutter_shift", n.clutter_shift);
  n.Validate();
  return n;
}

void NoiseSpec::WriteConfig(KeyValueConfig& config) const {
  config.Set("sigma_object", std::to_string(sigma_object));
  config.Set("sigma_background", std::to_string(sigma_background));
  config.Set("jitter_rotation", std::to_string(pose_jitter_rotation));
  config.Set("jitter_translation", std::to_string(pose_jitter_translation));
  config.Set("confidence_base", std::to_string(confidence_base));
  config.Set("confidence_scale", std::to_string(confidence_scale));
  config.Set("match_dropout", std::to_string(match_dropout));
  config.Set("clutter_shift_fraction", std::to_string(clutter_shift_fraction));
  config.Set("clutter_shift", std::to_string(clutter_shift));
}

void PairwiseObservation::Validate(const ImageGrid& grid) const {
  if (pointmap_first.grid() != grid || pointmap_second.grid() != grid ||
      confidence_first.grid() != grid || confidence_second.grid() != grid ||
      match_first.grid() != grid || match_second.grid() != grid) {
    throw StructuralError("observation for edge (" + std::to_string(edge.first) + ", " +
                          std::to_string(edge.second) + ") does not match the scene grid");
  }
  ffseg::Validate(pointmap_first);
  ffseg::Validate(pointmap_second);
  ffseg::Validate(confidence_first);
  ffseg::Validate(confidence_second);
  ffseg::Validate(match_first);
  ffseg::Validate(match_second);
}

double MatchRadius(const GroundTruthScene& gt) {
  std::vector<double> spacing;
  const ImageGrid& grid = gt.grid();
  for (const GroundTruthView& view : gt.views) {
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        const SurfaceLabel& a = view.labels[grid.index(x, y)];
        if (a.kind != SurfaceLabel::kObject) continue;
        double nearest = kNoHit;
        const std::array<std::pair<int, int>, 4> nbrs{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (const auto& [dx, dy] : nbrs) {
          if (!grid.contains(x + dx, y + dy)) continue;
          if (!(view.labels[grid.index(x + dx, y + dy)] == a)) continue;
          nearest = std::min(nearest, (view.world_points(x, y) -
                                       view.world_points(x + dx, y + dy)).norm());
        }
        if (std::isfinite(nearest)) spacing.push_back(nearest);
      }
    }
  }
  if (spacing.empty()) return 0.0;
  const auto mid = spacing.begin() + static_cast<std::ptrdiff_t>(spacing.size() / 2);
  std::nth_element(spacing.begin(), mid, spacing.end());
  return 0.5 * *mid;
}

Pointmap EffectiveWorldPoints(const GroundTruthScene& gt, const NoiseSpec& noise,
                              std::uint64_t seed, std::size_t edge_index, int view) {
  const GroundTruthView& gv = gt.views.at(static_cast<std::size_t>(view));
  Pointmap points = gv.world_points;
  if (!(noise.clutter_shift_fraction > 0.0 && noise.clutter_shift > 0.0)) return points;
  CounterRng rng(seed, streams::kViewBase + static_cast<std::uint64_t>(edge_index));
  const Vec3 dir = Vec3(rng.Normal(), rng.Normal(), rng.Normal()).normalized();
  std::vector<std::uint8_t> moved(gt.clutter.size(), 0);
  for (auto& m : moved) m = rng.Uniform() < noise.clutter_shift_fraction ? 1 : 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (gv.labels[i].kind == SurfaceLabel::kClutter && moved[static_cast<std::size_t>(gv.labels[i].index)]) {
      points[i] += noise.clutter_shift * dir;
    }
  }
  return points;
}

bool IsCovisible(const Vec3& p, const ViewTransform& view, const Pointmap& view_points,
                 double radius) {
  const Vec3 q = view.pose.Apply(p);
  if (!(q.z() > 1e-12)) return false;
  const CameraIntrinsics& k = view.intrinsics;
  const double u = k.fx * q.x() / q.z() + k.cx;
  const double v = k.fy * q.y() / q.z() + k.cy;
  const ImageGrid& grid = view_points.grid();
  if (!(u >= 0.0 && v >= 0.0 && u <= grid.width - 1 && v <= grid.height - 1)) return false;
  const int x0 = std::min(static_cast<int>(std::floor(u)), std::max(grid.width - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(v)), std::max(grid.height - 2, 0));
  const int x1 = std::min(x0 + 1, grid.width - 1);
  const int y1 = std::min(y0 + 1, grid.height - 1);
  const double ax = u - x0;
  const double ay = v - y0;
  const Vec3 interp = (1 - ax) * (1 - ay) * view_points(x0, y0) +
                      ax * (1 - ay) * view_points(x1, y0) +
                      (1 - ax) * ay * view_points(x0, y1) + ax * ay * view_points(x1, y1);
  return (p - interp).norm() <= radius;
}

std::vector<PairwiseObservation> SimulatePairwise(const GroundTruthScene& gt,
                                                  const ViewGraph& graph,
                                                  const NoiseSpec& noise,
                                                  std::uint64_t seed) {
  noise.Validate();
  graph.Validate();
  if (graph.n_views != gt.n_views()) {
    throw StructuralError("graph has " + std::to_string(graph.n_views) +
                          " views, scene has " + std::to_string(gt.n_views()));
  }
  const ImageGrid& grid = gt.grid();
  const double radius = MatchRadius(gt);

  std::vector<PairwiseObservation> out;
  out.reserve(graph.edges.size());
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const Edge e = graph.edges[k];
    CounterRng rng(seed, streams::kEdgeBase + k);
    const Vec3 jitter_w(rng.Normal(), rng.Normal(), rng.Normal());
    const Vec3 jitter_t(rng.Normal(), rng.Normal(), rng.Normal());
    const RigidPose jitter = RigidPose::FromAxisAngle(noise.pose_jitter_rotation * jitter_w,
                                                      noise.pose_jitter_translation * jitter_t);
    const RigidPose& frame = gt.views[static_cast<std::size_t>(e.first)].transform.pose;

    const std::array<Pointmap, 2> effective{EffectiveWorldPoints(gt, noise, seed, k, e.first),
                                            EffectiveWorldPoints(gt, noise, seed, k, e.second)};

    PairwiseObservation obs;
    obs.edge = e;
    for (int slot = 0; slot < 2; ++slot) {
      const int v = slot == 0 ? e.first : e.second;
      const GroundTruthView& view = gt.views[static_cast<std::size_t>(v)];
      const GroundTruthView& other = gt.views[static_cast<std::size_t>(slot == 0 ? e.second : e.first)];
      Pointmap points(grid);
      ConfidenceMap conf(grid);
      MatchMap match(grid, 0);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const Vec3& p = effective[static_cast<std::size_t>(slot)][i];
        const double sigma = view.labels[i].kind == SurfaceLabel::kObject
                                 ? noise.sigma_object
                                 : noise.sigma_background;
        const Vec3 n = sigma * Vec3(rng.Normal(), rng.Normal(), rng.Normal());
        const double drop = rng.Uniform();
        const Vec3 q = frame.Apply(p);
        points[i] = (slot == 0 ? q : jitter.Apply(q)) + n;
        conf[i] = noise.confidence_scale > 0.0
                      ? noise.confidence_base * std::exp(-n.norm() / noise.confidence_scale)
                      : noise.confidence_base;
        const bool covisible =
            IsCovisible(view.world_points[i], other.transform, other.world_points, radius);
        match[i] = covisible && !(drop < noise.match_dropout) ? 1 : 0;
      }
      if (slot == 0) {
        obs.pointmap_first = std::move(points);
        obs.confidence_first = std::move(conf);
        obs.match_first = std::move(match);
      } else {
        obs.pointmap_second = std::move(points);
        obs.confidence_second = std::move(conf);
        obs.match_second = std::move(match);
      }
    }
    out.push_back(std::move(obs));
  }
  return out;
}

}  // namespace ffseg
