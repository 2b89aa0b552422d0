#include "ffseg/bundle.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace ffseg {

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes a little-endian host");

namespace {

enum BlockKind : std::uint32_t {
  kIntrinsics = 1,
  kImage = 2,
  kObjectMasks = 3,
  kSoftMask = 4,
  kGroundTruth = 5,
  kEdge = 6,
  kAlignedView = 7,
  kAlignedEdge = 8,
  kAlignedSummary = 9,
};

constexpr std::uint8_t kFlagGroundTruth = 1;
constexpr std::uint8_t kFlagAligned = 2;
constexpr std::size_t kPreambleSize = 16;
constexpr std::size_t kHeaderSize = 48;
constexpr std::size_t kTocEntrySize = 24;

std::string BlockName(std::uint32_t kind, std::uint32_t index) {
  static const std::map<std::uint32_t, std::string> names{
      {kIntrinsics, "intrinsics"},      {kImage, "image"},
      {kObjectMasks, "object masks"},   {kSoftMask, "soft mask"},
      {kGroundTruth, "ground truth"},   {kEdge, "edge"},
      {kAlignedView, "aligned view"},   {kAlignedEdge, "aligned edge"},
      {kAlignedSummary, "aligned summary"}};
  const auto it = names.find(kind);
  const std::string base = it == names.end() ? "block kind " + std::to_string(kind) : it->second;
  return base + " " + std::to_string(index);
}

double RoundFloat(double v) { return static_cast<double>(static_cast<float>(v)); }

template <typename Map>
void RoundMap(Map& map) {
  for (auto& v : map.values()) v = RoundFloat(v);
}

void RoundMap(Pointmap& map) {
  for (Vec3& p : map.values()) p = p.unaryExpr([](double v) { return RoundFloat(v); });
}

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void Put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void PutF32(double v) { Put(static_cast<float>(v)); }
  void PutBytes(const std::vector<std::uint8_t>& bytes) {
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }
  void PutPose(const RigidPose& pose) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) Put(pose.rotation(r, c));
    }
    for (int r = 0; r < 3; ++r) Put(pose.translation(r));
  }
  void PutIntrinsics(const CameraIntrinsics& k) {
    Put(k.fx);
    Put(k.fy);
    Put(k.cx);
    Put(k.cy);
  }
  template <typename Map>
  void PutScalars(const Map& map) {
    for (double v : map) PutF32(v);
  }
  void PutPoints(const Pointmap& map) {
    for (const Vec3& p : map) {
      PutF32(p.x());
      PutF32(p.y());
      PutF32(p.z());
    }
  }
  void PutBits(const BinaryMask& mask) {
    std::vector<std::uint8_t> packed((mask.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] != 0) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    PutBytes(packed);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end, std::string block)
      : bytes_(bytes), pos_(begin), end_(end), block_(std::move(block)) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  double GetF32() { return static_cast<double>(Get<float>()); }
  RigidPose GetPose() {
    RigidPose pose;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = Get<double>();
    }
    for (int r = 0; r < 3; ++r) pose.translation(r) = Get<double>();
    return pose;
  }
  CameraIntrinsics GetIntrinsics() {
    CameraIntrinsics k;
    k.fx = Get<double>();
    k.fy = Get<double>();
    k.cx = Get<double>();
    k.cy = Get<double>();
    return k;
  }
  template <typename Map>
  Map GetScalars(const ImageGrid& grid) {
    Need(grid.size() * sizeof(float));
    Map map(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) map[i] = GetF32();
    return map;
  }
  Pointmap GetPoints(const ImageGrid& grid) {
    Need(grid.size() * 3 * sizeof(float));
    Pointmap map(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double x = GetF32();
      const double y = GetF32();
      const double z = GetF32();
      map[i] = Vec3(x, y, z);
    }
    return map;
  }
  BinaryMask GetBits(const ImageGrid& grid) {
    const std::size_t n = (grid.size() + 7) / 8;
    Need(n);
    BinaryMask mask(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      mask[i] = (bytes_[pos_ + i / 8] >> (i % 8)) & 1u;
    }
    pos_ += n;
    return mask;
  }
  std::vector<std::uint8_t> GetBytes(std::size_t n) {
    Need(n);
    std::vector<std::uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  void ExpectEnd() const {
    if (pos_ != end_) {
      throw FormatError(block_, pos_, std::to_string(end_ - pos_) + " trailing bytes in block");
    }
  }
  [[noreturn]] void Fail(const std::string& detail) const { throw FormatError(block_, pos_, detail); }
  std::size_t pos() const { return pos_; }

 private:
  void Need(std::size_t n) const {
    if (n > end_ - pos_) {
      throw FormatError(block_, pos_, "truncated block (need " + std::to_string(n) + " bytes, " +
                                          std::to_string(end_ - pos_) + " left)");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
  std::size_t end_;
  std::string block_;
};

struct TocEntry {
  std::uint32_t kind = 0;
  std::uint32_t index = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct PendingBlock {
  std::uint32_t kind;
  std::uint32_t index;
  std::vector<std::uint8_t> payload;
};

}  // namespace

ViewGraph Bundle::Graph() const {
  ViewGraph graph;
  graph.n_views = n_views();
  for (const PairwiseObservation& obs : observations) graph.edges.push_back(obs.edge);
  return graph;
}

std::vector<CameraIntrinsics> Bundle::Intrinsics() const {
  std::vector<CameraIntrinsics> out;
  for (const BundleView& v : views) out.push_back(v.intrinsics);
  return out;
}

std::vector<SoftMask> Bundle::SoftMasks() const {
  std::vector<SoftMask> out;
  for (const BundleView& v : views) out.push_back(v.soft_mask);
  return out;
}

ObjectMasksPerView Bundle::ObjectMasks() const {
  ObjectMasksPerView out;
  for (const BundleView& v : views) out.push_back(v.object_masks);
  return out;
}

void Bundle::Validate() const {
  if (!grid.valid()) throw StructuralError("bundle grid must be at least 1x1");
  if (views.empty()) throw StructuralError("bundle has no views");
  if (n_objects < 0) throw StructuralError("bundle object count is negative");
  for (std::size_t v = 0; v < views.size(); ++v) {
    const BundleView& view = views[v];
    const std::string where = "view " + std::to_string(v);
    view.intrinsics.Validate();
    if (!(view.image.grid == grid) || view.image.rgb.size() != 3 * grid.size()) {
      throw StructuralError(where + " image does not match the bundle grid");
    }
    if (!(view.soft_mask.grid() == grid)) throw StructuralError(where + " soft mask grid mismatch");
    ffseg::Validate(view.soft_mask);
    int previous = -1;
    for (const auto& [id, mask] : view.object_masks) {
      if (id <= previous) throw StructuralError(where + " object ids must be unique and ascending");
      if (id >= n_objects) throw StructuralError(where + " object id " + std::to_string(id) + " >= n_objects");
      if (!(mask.grid() == grid)) throw StructuralError(where + " object mask grid mismatch");
      previous = id;
    }
    if (view.ground_truth) {
      if (!(view.ground_truth->grid() == grid)) throw StructuralError(where + " ground-truth depth grid mismatch");
      view.ground_truth->Validate();
    }
  }
  Graph().Validate();
  for (const PairwiseObservation& obs : observations) obs.Validate(grid);
  if (aligned) {
    if (aligned->n_views() != n_views() || aligned->edges.size() != observations.size()) {
      throw StructuralError("aligned block counts do not match the bundle");
    }
    for (const ViewTransform& vt : aligned->views) {
      if (!(vt.grid() == grid)) throw StructuralError("aligned depth grid mismatch");
    }
  }
}

void RoundToStorage(Bundle& bundle) {
  for (BundleView& view : bundle.views) {
    RoundMap(view.soft_mask);
    if (view.ground_truth) RoundMap(view.ground_truth->depth);
  }
  for (PairwiseObservation& obs : bundle.observations) {
    RoundMap(obs.pointmap_first);
    RoundMap(obs.pointmap_second);
    RoundMap(obs.confidence_first);
    RoundMap(obs.confidence_second);
  }
  if (bundle.aligned) {
    for (ViewTransform& vt : bundle.aligned->views) RoundMap(vt.depth);
  }
}

Bundle MakeBundle(const GroundTruthScene& gt, std::vector<PairwiseObservation> observations,
                  const SoftenParams& soften) {
  Bundle bundle;
  bundle.grid = gt.grid();
  bundle.n_objects = static_cast<int>(gt.objects.size());
  for (const GroundTruthView& gv : gt.views) {
    BundleView view;
    view.intrinsics = gv.transform.intrinsics;
    view.image = gv.image;
    BinaryMask all(bundle.grid, 0);
    for (std::size_t id = 0; id < gv.object_masks.size(); ++id) {
      const BinaryMask& mask = gv.object_masks[id];
      if (Popcount(mask) == 0) continue;
      view.object_masks.emplace_back(static_cast<int>(id), mask);
      for (std::size_t i = 0; i < mask.size(); ++i) all[i] = static_cast<std::uint8_t>(all[i] | mask[i]);
    }
    view.soft_mask = SoftenMask(all, soften);
    view.ground_truth = gv.transform;
    bundle.views.push_back(std::move(view));
  }
  bundle.observations = std::move(observations);
  RoundToStorage(bundle);
  bundle.Validate();
  return bundle;
}

MaskCache BuildMaskCache(const Bundle& bundle, const SoftenParams& soften) {
  return BuildMaskCache(bundle.grid, bundle.ObjectMasks(), soften);
}

std::vector<std::uint8_t> EncodeBundle(const Bundle& bundle) {
  bundle.Validate();
  const ImageGrid& grid = bundle.grid;
  const bool has_gt = std::all_of(bundle.views.begin(), bundle.views.end(),
                                  [](const BundleView& v) { return v.ground_truth.has_value(); });
  const bool any_gt = std::any_of(bundle.views.begin(), bundle.views.end(),
                                  [](const BundleView& v) { return v.ground_truth.has_value(); });
  if (any_gt && !has_gt) throw StructuralError("ground truth must be present for all views or none");

  std::vector<PendingBlock> blocks;
  const auto add = [&](std::uint32_t kind, std::size_t index, auto&& fill) {
    PendingBlock block{kind, static_cast<std::uint32_t>(index), {}};
    Writer w(block.payload);
    fill(w);
    blocks.push_back(std::move(block));
  };

  for (std::size_t v = 0; v < bundle.views.size(); ++v) {
    const BundleView& view = bundle.views[v];
    add(kIntrinsics, v, [&](Writer& w) { w.PutIntrinsics(view.intrinsics); });
    add(kImage, v, [&](Writer& w) { w.PutBytes(view.image.rgb); });
    add(kObjectMasks, v, [&](Writer& w) {
      w.Put(static_cast<std::uint64_t>(view.object_masks.size()));
      for (const auto& [id, mask] : view.object_masks) {
        w.Put(static_cast<std::uint64_t>(id));
        w.PutBits(mask);
      }
    });
    add(kSoftMask, v, [&](Writer& w) { w.PutScalars(view.soft_mask); });
    if (has_gt) {
      add(kGroundTruth, v, [&](Writer& w) {
        w.PutPose(view.ground_truth->pose);
        w.PutIntrinsics(view.ground_truth->intrinsics);
        w.PutScalars(view.ground_truth->depth);
      });
    }
  }
  for (std::size_t e = 0; e < bundle.observations.size(); ++e) {
    const PairwiseObservation& obs = bundle.observations[e];
    add(kEdge, e, [&](Writer& w) {
      w.Put(static_cast<std::uint64_t>(obs.edge.first));
      w.Put(static_cast<std::uint64_t>(obs.edge.second));
      w.PutPoints(obs.pointmap_first);
      w.PutPoints(obs.pointmap_second);
      w.PutScalars(obs.confidence_first);
      w.PutScalars(obs.confidence_second);
      w.PutBits(obs.match_first);
      w.PutBits(obs.match_second);
    });
  }
  if (bundle.aligned) {
    const AlignedScene& al = *bundle.aligned;
    for (std::size_t v = 0; v < al.views.size(); ++v) {
      add(kAlignedView, v, [&](Writer& w) {
        w.PutIntrinsics(al.views[v].intrinsics);
        w.PutPose(al.views[v].pose);
        w.PutScalars(al.views[v].depth);
      });
    }
    for (std::size_t e = 0; e < al.edges.size(); ++e) {
      add(kAlignedEdge, e, [&](Writer& w) {
        w.PutPose(al.edges[e].pose);
        w.Put(al.edges[e].log_scale);
      });
    }
    add(kAlignedSummary, 0, [&](Writer& w) {
      w.Put(al.final_loss);
      w.Put(static_cast<std::uint64_t>(al.loss_history.size()));
      for (double l : al.loss_history) w.Put(l);
    });
  }

  std::vector<std::uint8_t> out;
  Writer w(out);
  for (char c : kBundleMagic) w.Put(static_cast<std::uint8_t>(c));
  w.Put(kBundleVersion);
  w.Put(static_cast<std::uint8_t>((has_gt ? kFlagGroundTruth : 0) | (bundle.aligned ? kFlagAligned : 0)));
  for (int i = 0; i < 6; ++i) w.Put(std::uint8_t{0});
  w.Put(static_cast<std::uint64_t>(grid.width));
  w.Put(static_cast<std::uint64_t>(grid.height));
  w.Put(static_cast<std::uint64_t>(bundle.views.size()));
  w.Put(static_cast<std::uint64_t>(bundle.observations.size()));
  w.Put(static_cast<std::uint64_t>(bundle.n_objects));
  w.Put(static_cast<std::uint64_t>(blocks.size()));
  std::uint64_t offset = kPreambleSize + kHeaderSize + kTocEntrySize * blocks.size();
  for (const PendingBlock& b : blocks) {
    w.Put(b.kind);
    w.Put(b.index);
    w.Put(offset);
    w.Put(static_cast<std::uint64_t>(b.payload.size()));
    offset += b.payload.size();
  }
  for (const PendingBlock& b : blocks) w.PutBytes(b.payload);
  return out;
}

Bundle DecodeBundle(const std::vector<std::uint8_t>& bytes) {
  Reader head(bytes, 0, bytes.size(), "header");
  for (char c : kBundleMagic) {
    if (head.Get<std::uint8_t>() != static_cast<std::uint8_t>(c)) head.Fail("bad magic");
  }
  const auto version = head.Get<std::uint8_t>();
  if (version != kBundleVersion) {
    head.Fail("unsupported version " + std::to_string(version) + " (expected " +
              std::to_string(kBundleVersion) + ")");
  }
  const auto flags = head.Get<std::uint8_t>();
  if ((flags & ~(kFlagGroundTruth | kFlagAligned)) != 0) head.Fail("unknown flag bits");
  head.GetBytes(6);
  const auto width = head.Get<std::uint64_t>();
  const auto height = head.Get<std::uint64_t>();
  const auto n_views = head.Get<std::uint64_t>();
  const auto n_edges = head.Get<std::uint64_t>();
  const auto n_objects = head.Get<std::uint64_t>();
  const auto n_blocks = head.Get<std::uint64_t>();
  constexpr std::uint64_t kLimit = 1u << 20;
  if (width == 0 || height == 0 || width > kLimit || height > kLimit || n_views > kLimit ||
      n_edges > kLimit || n_objects > kLimit || n_blocks > 16 * kLimit) {
    head.Fail("header counts out of range");
  }

  Bundle bundle;
  bundle.grid = {static_cast<int>(width), static_cast<int>(height)};
  bundle.n_objects = static_cast<int>(n_objects);
  const ImageGrid grid = bundle.grid;
  const bool has_gt = (flags & kFlagGroundTruth) != 0;
  const bool has_aligned = (flags & kFlagAligned) != 0;

  std::map<std::pair<std::uint32_t, std::uint32_t>, TocEntry> toc;
  for (std::uint64_t i = 0; i < n_blocks; ++i) {
    TocEntry entry;
    entry.kind = head.Get<std::uint32_t>();
    entry.index = head.Get<std::uint32_t>();
    entry.offset = head.Get<std::uint64_t>();
    entry.length = head.Get<std::uint64_t>();
    if (entry.offset > bytes.size() || entry.length > bytes.size() - entry.offset) {
      throw FormatError(BlockName(entry.kind, entry.index), std::min<std::uint64_t>(entry.offset, bytes.size()),
                        "truncated block (table of contents points past end of file)");
    }
    if (!toc.emplace(std::make_pair(entry.kind, entry.index), entry).second) {
      head.Fail("duplicate table entry for " + BlockName(entry.kind, entry.index));
    }
  }

  const auto count = [&](std::uint32_t kind) {
    return static_cast<std::uint64_t>(std::count_if(
        toc.begin(), toc.end(), [&](const auto& kv) { return kv.first.first == kind; }));
  };
  const auto expect_count = [&](std::uint32_t kind, std::uint64_t expected) {
    const std::uint64_t found = count(kind);
    if (found != expected) {
      throw FormatError(BlockName(kind, static_cast<std::uint32_t>(std::min(found, expected))),
                        kPreambleSize, "count mismatch: header implies " + std::to_string(expected) +
                                           " blocks, file has " + std::to_string(found));
    }
  };
  expect_count(kIntrinsics, n_views);
  expect_count(kImage, n_views);
  expect_count(kObjectMasks, n_views);
  expect_count(kSoftMask, n_views);
  expect_count(kGroundTruth, has_gt ? n_views : 0);
  expect_count(kEdge, n_edges);
  expect_count(kAlignedView, has_aligned ? n_views : 0);
  expect_count(kAlignedEdge, has_aligned ? n_edges : 0);
  expect_count(kAlignedSummary, has_aligned ? 1 : 0);

  const auto open = [&](std::uint32_t kind, std::uint64_t index) {
    const auto it = toc.find({kind, static_cast<std::uint32_t>(index)});
    if (it == toc.end()) {
      throw FormatError(BlockName(kind, static_cast<std::uint32_t>(index)), kPreambleSize, "missing block");
    }
    return Reader(bytes, it->second.offset, it->second.offset + it->second.length,
                  BlockName(kind, static_cast<std::uint32_t>(index)));
  };

  for (std::uint64_t v = 0; v < n_views; ++v) {
    BundleView view;
    {
      Reader r = open(kIntrinsics, v);
      view.intrinsics = r.GetIntrinsics();
      r.ExpectEnd();
    }
    {
      Reader r = open(kImage, v);
      view.image.grid = grid;
      view.image.rgb = r.GetBytes(3 * grid.size());
      r.ExpectEnd();
    }
    {
      Reader r = open(kObjectMasks, v);
      const auto n = r.Get<std::uint64_t>();
      if (n > n_objects) r.Fail("more object masks than objects");
      for (std::uint64_t i = 0; i < n; ++i) {
        const auto id = r.Get<std::uint64_t>();
        if (id >= n_objects) r.Fail("object id " + std::to_string(id) + " out of range");
        view.object_masks.emplace_back(static_cast<int>(id), r.GetBits(grid));
      }
      r.ExpectEnd();
    }
    {
      Reader r = open(kSoftMask, v);
      view.soft_mask = r.GetScalars<SoftMask>(grid);
      r.ExpectEnd();
    }
    if (has_gt) {
      Reader r = open(kGroundTruth, v);
      ViewTransform vt;
      vt.pose = r.GetPose();
      vt.intrinsics = r.GetIntrinsics();
      vt.depth = r.GetScalars<DepthMap>(grid);
      r.ExpectEnd();
      view.ground_truth = std::move(vt);
    }
    bundle.views.push_back(std::move(view));
  }
  for (std::uint64_t e = 0; e < n_edges; ++e) {
    Reader r = open(kEdge, e);
    PairwiseObservation obs;
    const auto first = r.Get<std::uint64_t>();
    const auto second = r.Get<std::uint64_t>();
    if (first >= n_views || second >= n_views) r.Fail("edge view index out of range");
    obs.edge = {static_cast<int>(first), static_cast<int>(second)};
    obs.pointmap_first = r.GetPoints(grid);
    obs.pointmap_second = r.GetPoints(grid);
    obs.confidence_first = r.GetScalars<ConfidenceMap>(grid);
    obs.confidence_second = r.GetScalars<ConfidenceMap>(grid);
    obs.match_first = r.GetBits(grid);
    obs.match_second = r.GetBits(grid);
    r.ExpectEnd();
    bundle.observations.push_back(std::move(obs));
  }
  if (has_aligned) {
    AlignedScene al;
    for (std::uint64_t v = 0; v < n_views; ++v) {
      Reader r = open(kAlignedView, v);
      ViewTransform vt;
      vt.intrinsics = r.GetIntrinsics();
      vt.pose = r.GetPose();
      vt.depth = r.GetScalars<DepthMap>(grid);
      r.ExpectEnd();
      al.views.push_back(std::move(vt));
    }
    for (std::uint64_t e = 0; e < n_edges; ++e) {
      Reader r = open(kAlignedEdge, e);
      EdgeParams p;
      p.pose = r.GetPose();
      p.log_scale = r.Get<double>();
      r.ExpectEnd();
      al.edges.push_back(p);
    }
    Reader r = open(kAlignedSummary, 0);
    al.final_loss = r.Get<double>();
    const auto n = r.Get<std::uint64_t>();
    if (n > kLimit) r.Fail("loss history too long");
    for (std::uint64_t i = 0; i < n; ++i) al.loss_history.push_back(r.Get<double>());
    r.ExpectEnd();
    bundle.aligned = std::move(al);
  }
  try {
    bundle.Validate();
  } catch (const std::exception& ex) {
    throw FormatError("bundle", bytes.size(), std::string("decoded bundle is invalid: ") + ex.what());
  }
  return bundle;
}

void SaveBundle(const Bundle& bundle, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = EncodeBundle(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

Bundle LoadBundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DecodeBundle(bytes);
}

}  // namespace ffseg
