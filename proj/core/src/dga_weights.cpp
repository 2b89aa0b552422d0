#include "ffseg/dga_weights.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ffseg {

AdjustFunction AdjustFunction::Parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  AdjustFunction fn;
  if (name == "dga") {
    if (colon != std::string::npos) throw InputError("adjust_fn 'dga' takes no parameter");
    return fn;
  }
  if (colon == std::string::npos) {
    throw InputError("adjust_fn '" + text + "' needs a parameter, e.g. arctan:10");
  }
  if (name == "arctan") {
    fn.kind = kArctan;
  } else if (name == "sigmoid") {
    fn.kind = kSigmoid;
  } else if (name == "log") {
    fn.kind = kLog;
  } else {
    throw InputError("unknown adjust_fn '" + name + "'");
  }
  try {
    fn.param = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw InputError("adjust_fn parameter is not a number: '" + text + "'");
  }
  if (!(fn.param > 0.0)) throw InputError("adjust_fn parameter must be > 0");
  return fn;
}

std::string AdjustFunction::ToString() const {
  std::ostringstream out;
  switch (kind) {
    case kDynamic:
      return "dga";
    case kArctan:
      out << "arctan:" << param;
      break;
    case kSigmoid:
      out << "sigmoid:" << param;
      break;
    case kLog:
      out << "log:" << param;
      break;
  }
  return out.str();
}

void DgaConfig::Validate() const {
  if (!(alpha_p >= 0.0 && alpha_p <= 1.0) || !(alpha_n >= 0.0 && alpha_n <= 1.0)) {
    throw InputError("alpha_p and alpha_n must lie in [0, 1]");
  }
  if (!(epsilon >= 0.0)) throw InputError("epsilon must be >= 0");
  if (iterations < 1) throw InputError("iterations must be >= 1");
  if (!(learning_rate > 0.0) || !(final_learning_rate > 0.0)) {
    throw InputError("learning rates must be positive");
  }
  if (!(clamp_margin > 0.0 && clamp_margin < 0.5)) {
    throw InputError("clamp margin must lie in (0, 0.5)");
  }
  if (!std::isfinite(weight_floor)) throw InputError("weight floor must be finite");
  if (adjust.kind != AdjustFunction::kDynamic && !(adjust.param > 0.0)) {
    throw InputError("adjustment parameter must be > 0");
  }
}

DgaConfig DgaConfig::FromConfig(const KeyValueConfig& config) {
  DgaConfig c;
  c.alpha_p = config.GetDouble("alpha_p", c.alpha_p);
  c.alpha_n = config.GetDouble("alpha_n", c.alpha_n);
  c.epsilon = config.GetDouble("epsilon", c.epsilon);
  c.iterations = static_cast<int>(config.GetInt("iterations", c.iterations));
  c.learning_rate = config.GetDouble("lr", c.learning_rate);
  c.final_learning_rate = config.GetDouble("lr_final", c.final_learning_rate);
  c.weight_floor = config.GetDouble("w_min", c.weight_floor);
  c.clamp_margin = config.GetDouble("clamp_margin", c.clamp_margin);
  const std::string mode = config.GetString("mode", "DGA");
  if (mode == "GA") {
    c.mode = AlignMode::kGlobalAlignment;
  } else if (mode == "DGA") {
    c.mode = AlignMode::kDynamicGlobalAlignment;
  } else {
    throw InputError("mode must be GA or DGA, got '" + mode + "'");
  }
  c.adjust = AdjustFunction::Parse(config.GetString("adjust_fn", "dga"));
  c.optimize_focal = config.GetBool("optimize_focal", c.optimize_focal);
  c.Validate();
  return c;
}

void DgaConfig::WriteConfig(KeyValueConfig& config) const {
  const auto num = [](double v) {
    std::ostringstream out;
    out << v;
    return out.str();
  };
  config.Set("alpha_p", num(alpha_p));
  config.Set("alpha_n", num(alpha_n));
  config.Set("epsilon", num(epsilon));
  config.Set("iterations", std::to_string(iterations));
  config.Set("lr", num(learning_rate));
  config.Set("lr_final", num(final_learning_rate));
  config.Set("w_min", num(weight_floor));
  config.Set("clamp_margin", num(clamp_margin));
  config.Set("mode", mode == AlignMode::kGlobalAlignment ? "GA" : "DGA");
  config.Set("adjust_fn", adjust.ToString());
  config.Set("optimize_focal", optimize_focal ? "true" : "false");
}

std::string DgaConfig::Name() const {
  if (mode == AlignMode::kGlobalAlignment) return "GA";
  if (adjust.kind == AdjustFunction::kDynamic) return "DGA";
  return "DGA-" + adjust.ToString();
}

long double Sigmoid(long double x) {
  if (x >= 0.0L) return 1.0L / (1.0L + std::exp(-x));
  const long double e = std::exp(x);
  return e / (1.0L + e);
}

long double Logit(long double a) { return std::log(a) - std::log1p(-a); }

double Sigmoid(double x) { return static_cast<double>(Sigmoid(static_cast<long double>(x))); }

double Logit(double a) { return static_cast<double>(Logit(static_cast<long double>(a))); }

namespace {

void RequireSameGrid(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (a != b) throw StructuralError(std::string(what) + ": grids differ");
}

double Clamp(double a, double margin) { return std::clamp(a, margin, 1.0 - margin); }

}  // namespace

ScoreMap AggregateConfidence(const SoftMask& soft, const ConfidenceMap& confidence) {
  RequireSameGrid(soft.grid(), confidence.grid(), "confidence aggregation");
  ScoreMap out(soft.grid());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Sigmoid(soft[i] * confidence[i]);
  return out;
}

double DynamicAdjustValue(double f, double alpha, double epsilon) {
  const double spread = f * (1.0 - f);
  return (f + alpha * spread) / (1.0 + std::abs(alpha) * spread + epsilon);
}

ScoreMap DynamicAdjust(const ScoreMap& f, const MatchMap& matches, const DgaConfig& config) {
  RequireSameGrid(f.grid(), matches.grid(), "dynamic adjustment");
  ScoreMap out(f.grid());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double alpha = matches[i] != 0 ? config.alpha_p : -config.alpha_n;
    out[i] = Clamp(DynamicAdjustValue(f[i], alpha, config.epsilon), config.clamp_margin);
  }
  return out;
}

double AltAdjustValue(double x, const AdjustFunction& fn) {
  switch (fn.kind) {
    case AdjustFunction::kArctan:
      return std::atan(fn.param * (x - 0.5)) / std::numbers::pi + 0.5;
    case AdjustFunction::kSigmoid:
      return Sigmoid(fn.param * (x - 0.5));
    case AdjustFunction::kLog:
      return std::log1p(fn.param * x) / std::log1p(fn.param);
    case AdjustFunction::kDynamic:
      break;
  }
  throw InputError("AltAdjustValue needs an arctan, sigmoid or log function");
}

ScoreMap AltAdjust(const ScoreMap& f, const AdjustFunction& fn, double clamp_margin) {
  ScoreMap out(f.grid());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Clamp(AltAdjustValue(f[i], fn), clamp_margin);
  return out;
}

WeightMap RecoverWeights(const ScoreMap& adjusted, const DgaConfig& config) {
  WeightMap out(adjusted.grid());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(Logit(adjusted[i]), config.weight_floor);
  }
  return out;
}

WeightMap GaWeights(const ConfidenceMap& confidence) {
  return WeightMap(confidence.grid(), confidence.values());
}

WeightMap SlotWeights(const SoftMask& soft, const ConfidenceMap& confidence,
                      const MatchMap& matches, const DgaConfig& config) {
  if (config.mode == AlignMode::kGlobalAlignment) return GaWeights(confidence);
  const ScoreMap f = AggregateConfidence(soft, confidence);
  const ScoreMap a = config.adjust.kind == AdjustFunction::kDynamic
                         ? DynamicAdjust(f, matches, config)
                         : AltAdjust(f, config.adjust, config.clamp_margin);
  return RecoverWeights(a, config);
}

std::vector<EdgeWeights> ComputeEdgeWeights(const std::vector<PairwiseObservation>& observations,
                                            const std::vector<SoftMask>& soft_masks,
                                            const DgaConfig& config) {
  config.Validate();
  std::vector<EdgeWeights> out;
  out.reserve(observations.size());
  for (const PairwiseObservation& obs : observations) {
    EdgeWeights w;
    for (int slot = 0; slot < 2; ++slot) {
      const int v = obs.view(slot);
      if (v < 0 || v >= static_cast<int>(soft_masks.size())) {
        throw StructuralError("no soft mask for view " + std::to_string(v));
      }
      w[static_cast<std::size_t>(slot)] = SlotWeights(soft_masks[static_cast<std::size_t>(v)],
                                                      obs.confidence(slot), obs.match(slot), config);
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace ffseg
