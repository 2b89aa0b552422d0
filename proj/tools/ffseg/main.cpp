#include <CLI11.hpp>

#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ffseg/alignment.hpp"
#include "ffseg/bundle.hpp"
#include "ffseg/errors.hpp"
#include "ffseg/eval.hpp"
#include "ffseg/mgm.hpp"
#include "ffseg/pgm.hpp"
#include "ffseg/ply.hpp"
#include "ffseg/service.hpp"
#include "ffseg/synth.hpp"

namespace {

using namespace ffseg;

const std::vector<std::string> kSceneKeys = {
    "width",       "height",      "n_views",   "n_objects",   "background", "n_clutter",
    "clutter_min_radius", "clutter_max_radius", "dome_radius", "focal_scale", "ring_radius",
    "ring_height", "ring_span",   "object.*"};
const std::vector<std::string> kNoiseKeys = {
    "sigma_object",    "sigma_background", "jitter_rotation",        "jitter_translation",
    "confidence_base", "confidence_scale", "match_dropout",          "clutter_shift_fraction",
    "clutter_shift"};
const std::vector<std::string> kDgaKeys = {"alpha_p", "alpha_n",      "epsilon",      "iterations",
                                           "lr",      "lr_final",     "w_min",        "clamp_margin",
                                           "mode",    "adjust_fn",    "optimize_focal"};
const std::vector<std::string> kSoftKeys = {"soft_background", "soft_radius"};
const std::vector<std::string> kExperimentKeys = {"seeds",      "view_counts",  "variants",
                                                  "reference_view", "projection", "splat_radius",
                                                  "mask_miss_fraction", "graph_window"};

std::vector<std::string> Join(std::initializer_list<std::vector<std::string>> lists) {
  std::vector<std::string> out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

KeyValueConfig LoadConfig(const std::string& path, const std::vector<std::string>& known,
                          const std::vector<std::string>& overrides) {
  KeyValueConfig config = path.empty() ? KeyValueConfig{} : KeyValueConfig::Load(path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    config.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.RejectUnknown(known);
  return config;
}

SoftenParams SoftenFrom(const KeyValueConfig& config) {
  SoftenParams soften;
  soften.background_level = config.GetDouble("soft_background", soften.background_level);
  soften.blur_radius = static_cast<int>(config.GetInt("soft_radius", soften.blur_radius));
  soften.Validate();
  return soften;
}

void WriteSoften(const SoftenParams& soften, KeyValueConfig& config) {
  config.Set("soft_background", std::to_string(soften.background_level));
  config.Set("soft_radius", std::to_string(soften.blur_radius));
}

void PrintEffective(const std::string& command, const KeyValueConfig& effective) {
  std::cout << "# effective config (" << command << ")\n" << effective.ToString() << std::flush;
}

PixelCoord ParsePixel(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw InputError("pixel '" + text + "' must be x,y");
  try {
    std::size_t used_x = 0;
    std::size_t used_y = 0;
    const int x = std::stoi(text.substr(0, comma), &used_x);
    const int y = std::stoi(text.substr(comma + 1), &used_y);
    if (used_x != comma || used_y != text.size() - comma - 1) throw std::invalid_argument(text);
    return {x, y};
  } catch (const std::logic_error&) {
    throw InputError("pixel '" + text + "' must be x,y with integer coordinates");
  }
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void AddConfigOptions(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", common.overrides, "Override a configuration key (key=value), repeatable");
}

int RunSynth(const Common& common, std::uint64_t seed, const std::string& out, int graph_window,
             const std::string& masks_dir) {
  const KeyValueConfig config =
      LoadConfig(common.config_path, Join({kSceneKeys, kNoiseKeys, kSoftKeys}), common.overrides);
  const SceneSpec spec = SceneSpec::FromConfig(config);
  const NoiseSpec noise = NoiseSpec::FromConfig(config);
  const SoftenParams soften = SoftenFrom(config);
  KeyValueConfig effective;
  spec.WriteConfig(effective);
  noise.WriteConfig(effective);
  WriteSoften(soften, effective);
  effective.Set("seed", std::to_string(seed));
  effective.Set("graph_window", std::to_string(graph_window));
  PrintEffective("synth", effective);

  const GroundTruthScene gt = GenerateScene(spec, seed);
  const GraphStrategy strategy = graph_window > 0 ? GraphStrategy{WindowGraph{graph_window}} : GraphStrategy{CompleteGraph{}};
  const ViewGraph graph = BuildGraph(spec.n_views, strategy);
  const Bundle bundle = MakeBundle(gt, SimulatePairwise(gt, graph, noise, seed), soften);
  SaveBundle(bundle, out);
  if (!masks_dir.empty()) SaveMaskDirectory(bundle.ObjectMasks(), masks_dir);
  std::cout << "wrote " << out << ": " << bundle.n_views() << " views, " << bundle.observations.size()
            << " edges, " << bundle.n_objects << " objects\n";
  return 0;
}

int RunCache(const Common& common, const std::string& in, const std::string& masks_dir, const std::string& out,
             const std::string& export_dir) {
  const KeyValueConfig config = LoadConfig(common.config_path, kSoftKeys, common.overrides);
  const SoftenParams soften = SoftenFrom(config);
  KeyValueConfig effective;
  WriteSoften(soften, effective);
  PrintEffective("cache", effective);

  Bundle bundle = LoadBundle(in);
  if (!masks_dir.empty()) IngestMasks(bundle, masks_dir, soften);
  const MaskCache cache = BuildMaskCache(bundle, soften);
  for (int v = 0; v < cache.n_views(); ++v) {
    std::cout << "view " << v << ":";
    for (const CachedMask& entry : cache.view(v).entries) std::cout << ' ' << entry.object_id << '(' << entry.area << ')';
    std::cout << '\n';
  }
  if (!export_dir.empty()) {
    ObjectMasksPerView masks(static_cast<std::size_t>(cache.n_views()));
    for (int v = 0; v < cache.n_views(); ++v) {
      for (const CachedMask& entry : cache.view(v).entries) masks[static_cast<std::size_t>(v)].emplace_back(entry.object_id, entry.mask);
    }
    SaveMaskDirectory(masks, export_dir);
  }
  if (!out.empty()) SaveBundle(bundle, out);
  return 0;
}

int RunAlign(const Common& common, const std::string& in, const std::string& out, bool verbose) {
  const KeyValueConfig config = LoadConfig(common.config_path, kDgaKeys, common.overrides);
  const DgaConfig dga = DgaConfig::FromConfig(config);
  KeyValueConfig effective;
  dga.WriteConfig(effective);
  PrintEffective("align", effective);

  Bundle bundle = LoadBundle(in);
  auto problem = MakeProblem(bundle.grid, bundle.Graph(), bundle.Intrinsics(), bundle.observations,
                             ComputeEdgeWeights(bundle.observations, bundle.SoftMasks(), dga));
  OptimizeObserver observer;
  if (verbose) {
    observer.on_iteration = [](int it, double loss) {
      if (it % 50 == 0) std::cout << "iter " << it << " loss " << loss << '\n';
    };
  }
  bundle.aligned = Optimize(InitializeState(problem, dga), dga, observer);
  SaveBundle(bundle, out);
  std::cout << dga.Name() << " final loss " << bundle.aligned->final_loss << ", wrote " << out << '\n';
  return 0;
}

int RunSegment(const Common& common, const std::string& in, int view, const std::vector<std::string>& positives,
               const std::vector<std::string>& negatives, const std::string& ply, bool ascii,
               const std::string& masks_dir) {
  const KeyValueConfig config = LoadConfig(common.config_path, kSoftKeys, common.overrides);
  const SoftenParams soften = SoftenFrom(config);
  KeyValueConfig effective;
  WriteSoften(soften, effective);
  PrintEffective("segment", effective);

  const Bundle bundle = LoadBundle(in);
  if (!bundle.aligned) throw InputError(in + " has no aligned block; run `ffseg align` first");
  Prompt prompt;
  prompt.view = view;
  for (const std::string& p : positives) prompt.positives.push_back(ParsePixel(p));
  for (const std::string& p : negatives) prompt.negatives.push_back(ParsePixel(p));
  prompt.Validate(bundle.grid, bundle.n_views());
  const MaskCache cache = BuildMaskCache(bundle, soften);
  const SegmentationResult result = Segment(prompt, cache, *bundle.aligned);

  std::cout << "objects:";
  for (int id : result.objects) std::cout << ' ' << id;
  std::cout << (result.empty ? " (empty)" : "") << "\npoints: " << result.points.size() << "\nelapsed_ms: "
            << result.elapsed_ms << '\n';
  if (!ply.empty()) {
    std::vector<RgbImage> images;
    for (const BundleView& v : bundle.views) images.push_back(v.image);
    WritePly(ColorPoints(result.points, images), ply, ascii ? PlyFormat::kAscii : PlyFormat::kBinaryLittleEndian);
  }
  if (!masks_dir.empty()) {
    std::filesystem::create_directories(masks_dir);
    for (std::size_t v = 0; v < result.masks.size(); ++v) {
      WritePgm(result.masks[v], std::filesystem::path(masks_dir) / ("view" + std::to_string(v) + ".pgm"));
    }
  }
  return 0;
}

int RunEval(const Common& common, std::optional<std::uint64_t> seed, int n_seeds, const std::string& csv) {
  KeyValueConfig config = LoadConfig(common.config_path,
                                     Join({kSceneKeys, kNoiseKeys, kDgaKeys, kSoftKeys, kExperimentKeys}),
                                     common.overrides);
  if (seed) {
    std::string list;
    for (int k = 0; k < n_seeds; ++k) list += (k ? "," : "") + std::to_string(*seed + static_cast<std::uint64_t>(k));
    config.Set("seeds", list);
  }
  const ExperimentConfig experiment = ExperimentConfig::FromConfig(config);
  KeyValueConfig effective;
  experiment.WriteConfig(effective);
  PrintEffective("eval", effective);

  const ExperimentReport report = RunExperiment(experiment);
  if (csv.empty()) {
    WriteReportCsv(report, std::cout);
  } else {
    std::ofstream out(csv);
    if (!out) throw InputError("cannot write " + csv);
    WriteReportCsv(report, out);
  }
  WriteReportSummary(report, std::cout);
  return 0;
}

HttpService* g_service = nullptr;

void HandleSignal(int) {
  if (g_service != nullptr) g_service->Stop();
}

int RunServe(const Common& common, const std::string& host, int port, const std::string& scenes) {
  const KeyValueConfig config = LoadConfig(common.config_path, kSoftKeys, common.overrides);
  const SoftenParams soften = SoftenFrom(config);
  KeyValueConfig effective;
  WriteSoften(soften, effective);
  effective.Set("host", host);
  effective.Set("port", std::to_string(port));
  effective.Set("scenes", scenes);
  PrintEffective("serve", effective);

  SessionStore store;
  store.LoadDirectory(scenes, soften);
  std::cout << "loaded " << store.Ids().size() << " scene(s)\n";
  HttpService service(store);
  g_service = &service;
  std::signal(SIGINT, HandleSignal);
  std::signal(SIGTERM, HandleSignal);
  std::cout << "listening on http://" << host << ':' << port << std::endl;
  service.Run(host, port);
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ffseg: multi-view pointmap alignment and prompt-driven 3D segmentation"};
  app.require_subcommand(1);

  Common common;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> eval_seed;
  int n_seeds = 10;
  int graph_window = 0;
  int view = 0;
  int port = 8080;
  bool ascii = false;
  bool verbose = false;
  std::string in, out, masks_dir, export_dir, ply, csv, host = "127.0.0.1", scenes;
  std::vector<std::string> positives, negatives;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene and write a bundle");
  AddConfigOptions(synth, common);
  synth->add_option("--seed", seed, "Scene and noise seed");
  synth->add_option("-o,--out", out, "Output bundle (.ffb)")->required();
  synth->add_option("--graph-window", graph_window, "Connect each view to the next k views (0: complete graph)");
  synth->add_option("--masks-dir", masks_dir, "Also write ground-truth object masks as PGM");

  auto* cache = app.add_subcommand("cache", "Build the per-view mask cache of a bundle");
  AddConfigOptions(cache, common);
  cache->add_option("-i,--bundle", in, "Input bundle")->required()->check(CLI::ExistingFile);
  cache->add_option("--masks-dir", masks_dir, "Replace object masks with PGMs from views/{v}/objects/{id}.pgm");
  cache->add_option("-o,--out", out, "Write the updated bundle");
  cache->add_option("--export", export_dir, "Write the cached masks as PGM");

  auto* align = app.add_subcommand("align", "Align a bundle and store the result in it");
  AddConfigOptions(align, common);
  align->add_option("-i,--bundle", in, "Input bundle")->required()->check(CLI::ExistingFile);
  align->add_option("-o,--out", out, "Output bundle with the aligned block")->required();
  align->add_flag("-v,--verbose", verbose, "Print the loss every 50 iterations");

  auto* segment = app.add_subcommand("segment", "Segment an aligned bundle from a point prompt");
  AddConfigOptions(segment, common);
  segment->add_option("-i,--bundle", in, "Aligned bundle")->required()->check(CLI::ExistingFile);
  segment->add_option("--view", view, "Prompt view")->required();
  segment->add_option("--pos", positives, "Positive pixel x,y (repeatable)")->required();
  segment->add_option("--neg", negatives, "Negative pixel x,y (repeatable)");
  segment->add_option("--ply", ply, "Write the lifted points as PLY");
  segment->add_flag("--ascii", ascii, "ASCII PLY instead of binary");
  segment->add_option("--masks-dir", masks_dir, "Write per-view union masks as PGM");

  auto* eval = app.add_subcommand("eval", "Run a seeded experiment and report mIoU, mAcc and RMSE");
  AddConfigOptions(eval, common);
  eval->add_option("--seed", eval_seed, "First seed; replaces the configured seed list");
  eval->add_option("--n-seeds", n_seeds, "Number of consecutive seeds used with --seed")->check(CLI::PositiveNumber);
  eval->add_option("--csv", csv, "Write the per-cell table here instead of stdout");

  auto* serve = app.add_subcommand("serve", "Serve aligned bundles over HTTP");
  AddConfigOptions(serve, common);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--scenes", scenes, "Directory of aligned *.ffb bundles")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return RunSynth(common, seed, out, graph_window, masks_dir);
    if (cache->parsed()) return RunCache(common, in, masks_dir, out, export_dir);
    if (align->parsed()) return RunAlign(common, in, out, verbose);
    if (segment->parsed()) return RunSegment(common, in, view, positives, negatives, ply, ascii, masks_dir);
    if (eval->parsed()) return RunEval(common, eval_seed, n_seeds, csv);
    if (serve->parsed()) return RunServe(common, host, port, scenes);
  } catch (const InputError& ex) {
    std::cerr << "input error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
