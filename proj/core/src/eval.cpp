#include "ffseg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "ffseg/registration.hpp"
#include "ffseg/rng.hpp"

namespace ffseg {
namespace {

constexpr double kHitTolerance = 1e-6;

void SetIfInside(BinaryMask& mask, long x, long y) {
  const ImageGrid& g = mask.grid();
  if (x >= 0 && y >= 0 && x < g.width && y < g.height) mask(static_cast<int>(x), static_cast<int>(y)) = 1;
}

void FillTriangle(BinaryMask& mask, const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  if (!(std::abs(area) > 1e-12)) return;
  const ImageGrid& g = mask.grid();
  const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}) - 1e-9)));
  const int x1 = std::min(g.width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}) + 1e-9)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}) - 1e-9)));
  const int y1 = std::min(g.height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}) + 1e-9)));
  const double sign = area > 0.0 ? 1.0 : -1.0;
  const double tol = -1e-9 * std::abs(area);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Eigen::Vector2d p(x, y);
      const double w0 = sign * ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x());
      const double w1 = sign * ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x());
      const double w2 = sign * ((a - p).x() * (b - p).y() - (a - p).y() * (b - p).x());
      if (w0 >= tol && w1 >= tol && w2 >= tol) mask(x, y) = 1;
    }
  }
}

double MedianOf(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

ExperimentVariant ParseVariant(const std::string& token, const DgaConfig& base) {
  ExperimentVariant v{token, base};
  if (token == "GA") {
    v.config.mode = AlignMode::kGlobalAlignment;
  } else if (token == "DGA") {
    v.config.mode = AlignMode::kDynamicGlobalAlignment;
    v.config.adjust = {};
  } else {
    v.config.mode = AlignMode::kDynamicGlobalAlignment;
    v.config.adjust = AdjustFunction::Parse(token);
  }
  v.config.Validate();
  return v;
}

}  // namespace

BinaryMask ProjectPoints(const std::vector<Vec3>& points, const ViewTransform& vt, const ImageGrid& grid,
                         double splat_radius) {
  if (!(splat_radius >= 0.0)) throw InputError("splat_radius must be >= 0");
  BinaryMask mask(grid, 0);
  const int reach = static_cast<int>(std::ceil(splat_radius));
  const double r2 = splat_radius * splat_radius;
  for (const Vec3& p : points) {
    const Vec3 q = vt.pose.Apply(p);
    if (!(q.z() > 1e-12)) continue;
    const double u = vt.intrinsics.fx * q.x() / q.z() + vt.intrinsics.cx;
    const double v = vt.intrinsics.fy * q.y() / q.z() + vt.intrinsics.cy;
    if (!(u >= -0.5 && v >= -0.5 && u < grid.width - 0.5 && v < grid.height - 0.5)) continue;
    const long cx = std::lround(u);
    const long cy = std::lround(v);
    SetIfInside(mask, cx, cy);
    for (long y = cy - reach; y <= cy + reach; ++y) {
      for (long x = cx - reach; x <= cx + reach; ++x) {
        const double d2 = (x - u) * (x - u) + (y - v) * (y - v);
        if (d2 < r2 - 1e-9) SetIfInside(mask, x, y);
      }
    }
  }
  return mask;
}

BinaryMask ProjectSurface(const std::vector<BinaryMask>& masks, const std::vector<ViewTransform>& views,
                          const ViewTransform& target, double max_edge_ratio) {
  const ImageGrid grid = target.grid();
  BinaryMask out(grid, 0);
  for (std::size_t s = 0; s < masks.size(); ++s) {
    const BinaryMask& m = masks[s];
    if (Popcount(m) == 0) continue;
    if (s >= views.size()) throw StructuralError("no transform for view " + std::to_string(s));
    const ViewTransform& vt = views[s];
    const ImageGrid g = m.grid();
    std::vector<Vec3> world(g.size());
    std::vector<Eigen::Vector2d> pix(g.size());
    std::vector<std::uint8_t> front(g.size(), 0);
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const std::size_t i = g.index(x, y);
        if (m[i] == 0) continue;
        world[i] = PixelToWorld(x, y, vt);
        const Vec3 q = target.pose.Apply(world[i]);
        if (!(q.z() > 1e-12)) continue;
        front[i] = 1;
        pix[i] = {target.intrinsics.fx * q.x() / q.z() + target.intrinsics.cx,
                  target.intrinsics.fy * q.y() / q.z() + target.intrinsics.cy};
        const double rx = std::round(pix[i].x());
        const double ry = std::round(pix[i].y());
        if (std::abs(pix[i].x() - rx) < kHitTolerance && std::abs(pix[i].y() - ry) < kHitTolerance) {
          SetIfInside(out, static_cast<long>(rx), static_cast<long>(ry));
        }
      }
    }
    std::vector<double> spacing;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        if (m(x, y) == 0) continue;
        if (x + 1 < g.width && m(x + 1, y) != 0) spacing.push_back((world[g.index(x, y)] - world[g.index(x + 1, y)]).norm());
        if (y + 1 < g.height && m(x, y + 1) != 0) spacing.push_back((world[g.index(x, y)] - world[g.index(x, y + 1)]).norm());
      }
    }
    const double limit = max_edge_ratio * MedianOf(spacing);
    for (int y = 0; y + 1 < g.height; ++y) {
      for (int x = 0; x + 1 < g.width; ++x) {
        const std::size_t i00 = g.index(x, y);
        const std::size_t i10 = g.index(x + 1, y);
        const std::size_t i01 = g.index(x, y + 1);
        const std::size_t i11 = g.index(x + 1, y + 1);
        if (!(m[i00] && m[i10] && m[i01] && m[i11])) continue;
        if (!(front[i00] && front[i10] && front[i01] && front[i11])) continue;
        const double longest = std::max({(world[i00] - world[i10]).norm(), (world[i10] - world[i11]).norm(),
                                         (world[i11] - world[i01]).norm(), (world[i01] - world[i00]).norm()});
        if (!(longest <= limit)) continue;
        FillTriangle(out, pix[i00], pix[i10], pix[i11]);
        FillTriangle(out, pix[i00], pix[i11], pix[i01]);
      }
    }
  }
  return out;
}

MaskScore MiouMacc(const BinaryMask& pred, const BinaryMask& gt) {
  if (!(pred.grid() == gt.grid())) throw StructuralError("masks must share a grid");
  std::size_t inter = 0;
  std::size_t uni = 0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
    agree += p == g;
  }
  MaskScore s;
  s.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  s.accuracy = static_cast<double>(agree) / static_cast<double>(pred.size());
  return s;
}

double SimilarityRmse(const std::vector<Vec3>& estimate, const std::vector<Vec3>& reference) {
  const Similarity fit = FitSimilarity(estimate, reference);
  double sum = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) sum += (fit.Apply(estimate[i]) - reference[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(estimate.size()));
}

double ObjectRmse(const std::vector<ViewTransform>& views, const GroundTruthScene& gt, int object_id) {
  if (views.size() != gt.views.size()) throw StructuralError("view count differs from the ground truth");
  std::vector<Vec3> estimate;
  std::vector<Vec3> reference;
  for (std::size_t v = 0; v < gt.views.size(); ++v) {
    const GroundTruthView& gv = gt.views[v];
    if (object_id < 0 || static_cast<std::size_t>(object_id) >= gv.object_masks.size()) continue;
    const BinaryMask& mask = gv.object_masks[static_cast<std::size_t>(object_id)];
    for (int y = 0; y < mask.grid().height; ++y) {
      for (int x = 0; x < mask.grid().width; ++x) {
        if (mask(x, y) == 0) continue;
        estimate.push_back(PixelToWorld(x, y, views[v]));
        reference.push_back(gv.world_points(x, y));
      }
    }
  }
  return SimilarityRmse(estimate, reference);
}

BinaryMask CutMask(const BinaryMask& mask, double fraction, std::uint64_t seed, std::uint64_t stream) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InputError("mask cut fraction must lie in [0, 1)");
  if (fraction == 0.0) return mask;
  CounterRng rng(seed, stream);
  const double angle = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  std::vector<std::pair<double, std::size_t>> order;
  const ImageGrid& g = mask.grid();
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (mask(x, y) != 0) order.emplace_back(dx * x + dy * y, g.index(x, y));
    }
  }
  std::sort(order.begin(), order.end());
  const auto n_cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size())));
  BinaryMask out = mask;
  for (std::size_t k = order.size() - n_cut; k < order.size(); ++k) out[order[k].second] = 0;
  return out;
}

std::optional<PixelCoord> CentroidPrompt(const BinaryMask& mask) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  const ImageGrid& g = mask.grid();
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (mask(x, y) == 0) continue;
      sx += x;
      sy += y;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  const double cx = sx / static_cast<double>(n);
  const double cy = sy / static_cast<double>(n);
  std::optional<PixelCoord> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (mask(x, y) == 0) continue;
      const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      if (d < best_d) {
        best_d = d;
        best = PixelCoord{x, y};
      }
    }
  }
  return best;
}

void ExperimentConfig::Validate() const {
  scene.Validate();
  noise.Validate();
  soften.Validate();
  if (seeds.empty()) throw InputError("seeds: at least one seed is required");
  if (variants.empty()) throw InputError("variants: at least one variant is required");
  std::set<std::string> names;
  for (const ExperimentVariant& v : variants) {
    v.config.Validate();
    if (!names.insert(v.name).second) throw InputError("variants: duplicate name " + v.name);
  }
  for (int n : view_counts) {
    if (n < 2) throw InputError("view_counts: every count must be >= 2");
  }
  const int min_views = view_counts.empty() ? scene.n_views : *std::min_element(view_counts.begin(), view_counts.end());
  if (reference_view >= min_views) throw InputError("reference_view must be < the smallest view count");
  if (!(splat_radius >= 0.0)) throw InputError("splat_radius must be >= 0");
  if (!(mask_miss_fraction >= 0.0 && mask_miss_fraction < 1.0)) {
    throw InputError("mask_miss_fraction must lie in [0, 1)");
  }
}

ExperimentConfig ExperimentConfig::FromConfig(const KeyValueConfig& config) {
  ExperimentConfig c;
  c.scene = SceneSpec::FromConfig(config);
  c.noise = NoiseSpec::FromConfig(config);
  c.soften.background_level = config.GetDouble("soft_background", c.soften.background_level);
  c.soften.blur_radius = static_cast<int>(config.GetInt("soft_radius", c.soften.blur_radius));
  for (double s : config.GetDoubles("seeds")) c.seeds.push_back(static_cast<std::uint64_t>(s));
  for (double n : config.GetDoubles("view_counts")) c.view_counts.push_back(static_cast<int>(n));
  const DgaConfig base = DgaConfig::FromConfig(config);
  for (const std::string& token : SplitList(config.GetString("variants", "GA,DGA"))) {
    c.variants.push_back(ParseVariant(token, base));
  }
  c.reference_view = static_cast<int>(config.GetInt("reference_view", c.reference_view));
  const std::string projection = config.GetString("projection", "surface");
  if (projection == "surface") {
    c.projection = ProjectionMethod::kSurface;
  } else if (projection == "splat") {
    c.projection = ProjectionMethod::kSplat;
  } else {
    throw InputError("projection must be 'surface' or 'splat', got '" + projection + "'");
  }
  c.splat_radius = config.GetDouble("splat_radius", c.splat_radius);
  c.mask_miss_fraction = config.GetDouble("mask_miss_fraction", c.mask_miss_fraction);
  const long long window = config.GetInt("graph_window", 0);
  if (window > 0) c.graph = WindowGraph{static_cast<int>(window)};
  c.Validate();
  return c;
}

void ExperimentConfig::WriteConfig(KeyValueConfig& config) const {
  scene.WriteConfig(config);
  noise.WriteConfig(config);
  if (!variants.empty()) variants.front().config.WriteConfig(config);
  config.Set("soft_background", std::to_string(soften.background_level));
  config.Set("soft_radius", std::to_string(soften.blur_radius));
  std::string list;
  for (std::uint64_t s : seeds) list += (list.empty() ? "" : ",") + std::to_string(s);
  config.Set("seeds", list);
  list.clear();
  for (int n : view_counts) list += (list.empty() ? "" : ",") + std::to_string(n);
  config.Set("view_counts", list);
  list.clear();
  for (const ExperimentVariant& v : variants) list += (list.empty() ? "" : ",") + v.name;
  config.Set("variants", list);
  config.Set("reference_view", std::to_string(reference_view));
  config.Set("projection", projection == ProjectionMethod::kSurface ? "surface" : "splat");
  config.Set("splat_radius", std::to_string(splat_radius));
  config.Set("mask_miss_fraction", std::to_string(mask_miss_fraction));
  if (const auto* w = std::get_if<WindowGraph>(&graph)) config.Set("graph_window", std::to_string(w->k));
}

std::vector<const ExperimentCell*> ExperimentReport::Select(const std::string& variant, int n_views) const {
  std::vector<const ExperimentCell*> out;
  for (const ExperimentCell& c : cells) {
    if (c.ok && c.variant == variant && c.n_views == n_views) out.push_back(&c);
  }
  return out;
}

double ExperimentReport::Median(const std::string& variant, int n_views, double ExperimentCell::*metric) const {
  std::vector<double> values;
  for (const ExperimentCell* c : Select(variant, n_views)) values.push_back(c->*metric);
  return MedianOf(values);
}

double ExperimentReport::Mean(const std::string& variant, int n_views, double ExperimentCell::*metric) const {
  const auto sel = Select(variant, n_views);
  if (sel.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const ExperimentCell* c : sel) sum += c->*metric;
  return sum / static_cast<double>(sel.size());
}

ExperimentReport RunExperiment(const ExperimentConfig& config) {
  config.Validate();
  ExperimentReport report;
  const std::vector<int> counts = config.view_counts.empty() ? std::vector<int>{config.scene.n_views} : config.view_counts;
  for (std::uint64_t seed : config.seeds) {
    for (int n_views : counts) {
      std::vector<ExperimentCell> cells;
      for (const ExperimentVariant& v : config.variants) {
        ExperimentCell cell;
        cell.variant = v.name;
        cell.seed = seed;
        cell.n_views = n_views;
        cells.push_back(std::move(cell));
      }
      try {
        SceneSpec spec = config.scene;
        spec.n_views = n_views;
        const GroundTruthScene gt = GenerateScene(spec, seed);
        const ViewGraph graph = BuildGraph(n_views, config.graph);
        const std::vector<PairwiseObservation> obs = SimulatePairwise(gt, graph, config.noise, seed);
        ObjectMasksPerView masks(static_cast<std::size_t>(n_views));
        for (int v = 0; v < n_views; ++v) {
          const auto& om = gt.views[static_cast<std::size_t>(v)].object_masks;
          for (std::size_t id = 0; id < om.size(); ++id) {
            if (Popcount(om[id]) == 0) continue;
            const std::uint64_t stream = streams::kPerturb + 1000 * static_cast<std::uint64_t>(v) + id;
            BinaryMask cached = CutMask(om[id], config.mask_miss_fraction, seed, stream);
            if (Popcount(cached) > 0) masks[static_cast<std::size_t>(v)].emplace_back(static_cast<int>(id), std::move(cached));
          }
        }
        const MaskCache cache = BuildMaskCache(spec.grid, masks, config.soften);
        std::vector<SoftMask> soft;
        std::vector<CameraIntrinsics> intrinsics;
        for (int v = 0; v < n_views; ++v) {
          soft.push_back(cache.view(v).soft_mask);
          intrinsics.push_back(gt.views[static_cast<std::size_t>(v)].transform.intrinsics);
        }
        const int ref = config.reference_view >= 0 ? config.reference_view : n_views / 2;
        const GroundTruthView& ref_view = gt.views[static_cast<std::size_t>(ref)];

        for (std::size_t k = 0; k < config.variants.size(); ++k) {
          ExperimentCell& cell = cells[k];
          try {
            const auto start = std::chrono::steady_clock::now();
            const DgaConfig& dga = config.variants[k].config;
            const AlignedScene aligned = AlignScene(spec.grid, graph, intrinsics, obs, soft, dga);
            double iou = 0.0;
            double acc = 0.0;
            double rmse = 0.0;
            int scored = 0;
            int lifted = 0;
            for (std::size_t id = 0; id < ref_view.object_masks.size(); ++id) {
              if (Popcount(ref_view.object_masks[id]) == 0) continue;
              const CachedMask* cached = cache.view(ref).Find(static_cast<int>(id));
              if (cached == nullptr) throw InsufficientDataError("object " + std::to_string(id) + " has no cached mask in the reference view");
              const auto prompt_pixel = CentroidPrompt(cached->mask);
              const SegmentationResult seg = Segment({ref, {*prompt_pixel}, {}}, cache, aligned);
              BinaryMask pred;
              if (config.projection == ProjectionMethod::kSurface) {
                pred = ProjectSurface(seg.masks, aligned.views, aligned.views[static_cast<std::size_t>(ref)]);
              } else {
                std::vector<Vec3> pts;
                for (const LiftedPoint& p : seg.points) pts.push_back(p.position);
                pred = ProjectPoints(pts, aligned.views[static_cast<std::size_t>(ref)], spec.grid, config.splat_radius);
              }
              const MaskScore s = MiouMacc(pred, ref_view.object_masks[id]);
              iou += s.iou;
              acc += s.accuracy;
              ++scored;
            }
            for (std::size_t id = 0; id < gt.objects.size(); ++id) {
              if (gt.object_points[id].size() < 3) continue;
              rmse += ObjectRmse(aligned.views, gt, static_cast<int>(id));
              ++lifted;
            }
            if (scored == 0) throw InsufficientDataError("no object is visible in the reference view");
            cell.miou = iou / scored;
            cell.macc = acc / scored;
            cell.object_rmse = lifted > 0 ? rmse / lifted : std::numeric_limits<double>::quiet_NaN();
            cell.final_loss = aligned.final_loss;
            cell.n_objects_scored = scored;
            cell.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            cell.ok = true;
          } catch (const std::exception& ex) {
            cell.error = ex.what();
          }
        }
      } catch (const std::exception& ex) {
        for (ExperimentCell& cell : cells) cell.error = ex.what();
      }
      for (ExperimentCell& cell : cells) report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

void WriteReportCsv(const ExperimentReport& report, std::ostream& out) {
  out << "variant,seed,n_views,ok,miou,macc,object_rmse,final_loss,wall_ms,n_objects,error\n";
  out << std::setprecision(10);
  for (const ExperimentCell& c : report.cells) {
    std::string error = c.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    out << c.variant << ',' << c.seed << ',' << c.n_views << ',' << (c.ok ? 1 : 0) << ',' << c.miou << ','
        << c.macc << ',' << c.object_rmse << ',' << c.final_loss << ',' << c.wall_ms << ',' << c.n_objects_scored
        << ',' << error << '\n';
  }
}

void WriteReportSummary(const ExperimentReport& report, std::ostream& out) {
  std::vector<std::pair<std::string, int>> groups;
  for (const ExperimentCell& c : report.cells) {
    const std::pair<std::string, int> key{c.variant, c.n_views};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  out << std::fixed << std::setprecision(5);
  for (const auto& [variant, n] : groups) {
    std::size_t total = 0;
    for (const ExperimentCell& c : report.cells) total += c.variant == variant && c.n_views == n;
    out << variant << " views=" << n << " ok=" << report.Select(variant, n).size() << "/" << total
        << " miou median=" << report.Median(variant, n, &ExperimentCell::miou)
        << " mean=" << report.Mean(variant, n, &ExperimentCell::miou)
        << " macc mean=" << report.Mean(variant, n, &ExperimentCell::macc)
        << " rmse median=" << report.Median(variant, n, &ExperimentCell::object_rmse)
        << " loss median=" << report.Median(variant, n, &ExperimentCell::final_loss) << '\n';
  }
}

NoiseSpec ClutteredNoise(double sigma_object) {
  NoiseSpec n;
  n.sigma_object = sigma_object;
  n.sigma_background = 10.0 * sigma_object;
  n.confidence_scale = 0.1;
  n.clutter_shift_fraction = 0.7;
  n.clutter_shift = 0.3;
  return n;
}

}  // namespace ffseg
