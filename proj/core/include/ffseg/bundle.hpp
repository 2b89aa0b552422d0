#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ffseg/alignment.hpp"
#include "ffseg/mask_cache.hpp"
#include "ffseg/scene_model.hpp"
#include "ffseg/synth.hpp"

namespace ffseg {

inline constexpr char kBundleMagic[8] = {'F', 'F', 'S', 'E', 'G', '3', 'D', '\0'};
inline constexpr std::uint8_t kBundleVersion = 1;

struct BundleView {
  CameraIntrinsics intrinsics;
  RgbImage image;
  /// (object id, mask), ascending id.
  std::vector<std::pair<int, BinaryMask>> object_masks;
  SoftMask soft_mask;
  std::optional<ViewTransform> ground_truth;

  friend bool operator==(const BundleView&, const BundleView&) = default;
};

/// Everything needed to align and segment one scene. Map values are stored
/// as float32 on disk; MakeBundle rounds them so that save/load is exact.
struct Bundle {
  ImageGrid grid;
  int n_objects = 0;
  std::vector<BundleView> views;
  std::vector<PairwiseObservation> observations;
  std::optional<AlignedScene> aligned;

  int n_views() const { return static_cast<int>(views.size()); }
  ViewGraph Graph() const;
  std::vector<CameraIntrinsics> Intrinsics() const;
  std::vector<SoftMask> SoftMasks() const;
  ObjectMasksPerView ObjectMasks() const;
  /// Throws StructuralError/DataError on count, grid or value mismatches.
  void Validate() const;

  friend bool operator==(const Bundle&, const Bundle&) = default;
};

/// Rounds every float32-stored value so the bundle survives a round trip.
void RoundToStorage(Bundle& bundle);

/// Bundle of a generated scene: images, GT masks and transforms, soft masks
/// from `soften`, and the simulated observations. Rounded to storage.
Bundle MakeBundle(const GroundTruthScene& gt, std::vector<PairwiseObservation> observations,
                  const SoftenParams& soften);

MaskCache BuildMaskCache(const Bundle& bundle, const SoftenParams& soften);

std::vector<std::uint8_t> EncodeBundle(const Bundle& bundle);
/// Throws FormatError (block, byte offset) on any malformed input.
Bundle DecodeBundle(const std::vector<std::uint8_t>& bytes);

void SaveBundle(const Bundle& bundle, const std::filesystem::path& path);
Bundle LoadBundle(const std::filesystem::path& path);

}  // namespace ffseg
