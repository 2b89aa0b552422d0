#pragma once

#include <array>
#include <string>
#include <vector>

#include "ffseg/config.hpp"
#include "ffseg/scene_model.hpp"
#include "ffseg/synth.hpp"

namespace ffseg {

enum class AlignMode { kGlobalAlignment, kDynamicGlobalAlignment };

/// Confidence reshaping applied before logit recovery. kDynamic is the
/// match-aware adjustment; the others are the fixed-shape ablation curves
/// with `param` as theta (arctan), delta (sigmoid) or beta (log).
struct AdjustFunction {
  enum Kind { kDynamic, kArctan, kSigmoid, kLog };
  Kind kind = kDynamic;
  double param = 0.0;

  static AdjustFunction Parse(const std::string& text);
  std::string ToString() const;
  friend bool operator==(const AdjustFunction&, const AdjustFunction&) = default;
};

struct DgaConfig {
  double alpha_p = 0.5;
  double alpha_n = 0.9;
  double epsilon = 1e-6;
  int iterations = 500;
  double learning_rate = 0.01;
  double final_learning_rate = 1e-4;  // end of the cosine schedule
  double weight_floor = 0.0;
  double clamp_margin = 1e-6;
  AlignMode mode = AlignMode::kDynamicGlobalAlignment;
  AdjustFunction adjust;
  bool optimize_focal = false;

  void Validate() const;
  static DgaConfig FromConfig(const KeyValueConfig& config);
  void WriteConfig(KeyValueConfig& config) const;
  std::string Name() const;
};

/// Per-pixel scores in (0, 1): aggregated confidence F and adjusted A.
using ScoreMap = PixelMap<double, map_tags::Score>;
using WeightMap = PixelMap<double, map_tags::Weight>;

double Sigmoid(double x);
/// ln(a / (1 - a)); the inverse of Sigmoid.
double Logit(double a);
/// Extended-precision forms: logit(sigmoid(x)) returns x within 1e-9 for
/// |x| <= 20 (the double forms only up to |x| of about 16).
long double Sigmoid(long double x);
long double Logit(long double a);

/// F = sigmoid(S * C).
ScoreMap AggregateConfidence(const SoftMask& soft, const ConfidenceMap& confidence);

/// (F + alpha F (1-F)) / (1 + |alpha| F (1-F) + eps), unclamped.
double DynamicAdjustValue(double f, double alpha, double epsilon);

/// Match-aware adjustment: alpha = alpha_p where matched, -alpha_n otherwise;
/// result clamped to [margin, 1 - margin].
ScoreMap DynamicAdjust(const ScoreMap& f, const MatchMap& matches, const DgaConfig& config);

/// Ablation curves evaluated at x, unclamped.
double AltAdjustValue(double x, const AdjustFunction& fn);
ScoreMap AltAdjust(const ScoreMap& f, const AdjustFunction& fn, double clamp_margin);

/// W = logit(A), floored at the configured minimum weight.
WeightMap RecoverWeights(const ScoreMap& adjusted, const DgaConfig& config);

/// Baseline weights: the raw confidences.
WeightMap GaWeights(const ConfidenceMap& confidence);

/// Full weight pipeline for one (edge, view) slot, honouring config.mode and
/// config.adjust.
WeightMap SlotWeights(const SoftMask& soft, const ConfidenceMap& confidence,
                      const MatchMap& matches, const DgaConfig& config);

using EdgeWeights = std::array<WeightMap, 2>;

/// Frozen weights for every edge; soft_masks is indexed by view.
std::vector<EdgeWeights> ComputeEdgeWeights(const std::vector<PairwiseObservation>& observations,
                                            const std::vector<SoftMask>& soft_masks,
                                            const DgaConfig& config);

}  // namespace ffseg
