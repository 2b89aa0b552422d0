#include "ffseg/service.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace ffseg {

using nlohmann::json;

std::size_t RleMask::Area() const {
  std::size_t total = 0;
  for (const auto& row : rows) {
    for (const auto& [start, length] : row) total += static_cast<std::size_t>(length);
  }
  return total;
}

RleMask EncodeRle(const BinaryMask& mask) {
  RleMask rle;
  rle.grid = mask.grid();
  rle.rows.resize(static_cast<std::size_t>(rle.grid.height));
  for (int y = 0; y < rle.grid.height; ++y) {
    int x = 0;
    while (x < rle.grid.width) {
      if (mask(x, y) == 0) {
        ++x;
        continue;
      }
      const int start = x;
      while (x < rle.grid.width && mask(x, y) != 0) ++x;
      rle.rows[static_cast<std::size_t>(y)].emplace_back(start, x - start);
    }
  }
  return rle;
}

BinaryMask DecodeRle(const RleMask& rle) {
  if (!rle.grid.valid()) throw FormatError("rle", 0, "grid must be at least 1x1");
  if (rle.rows.size() != static_cast<std::size_t>(rle.grid.height)) {
    throw FormatError("rle", 0, "expected " + std::to_string(rle.grid.height) + " rows, got " +
                                    std::to_string(rle.rows.size()));
  }
  BinaryMask mask(rle.grid, 0);
  for (int y = 0; y < rle.grid.height; ++y) {
    int end = -1;
    for (const auto& [start, length] : rle.rows[static_cast<std::size_t>(y)]) {
      if (length <= 0) throw FormatError("rle row " + std::to_string(y), 0, "run length must be positive");
      if (start < 0) throw FormatError("rle row " + std::to_string(y), 0, "run starts before the row");
      if (start <= end) {
        throw FormatError("rle row " + std::to_string(y), 0, "runs must be sorted and separated by a gap");
      }
      if (start > rle.grid.width - length) {
        throw FormatError("rle row " + std::to_string(y), 0, "run exceeds row width");
      }
      for (int x = start; x < start + length; ++x) mask(x, y) = 1;
      end = start + length;
    }
  }
  return mask;
}

std::string EncodePng(const RgbImage& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.grid.width);
  img.height = static_cast<png_uint_32>(image.grid.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encoding failed: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encoding failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

RgbImage DecodePng(const std::string& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError("png", 0, img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.grid = {static_cast<int>(img.width), static_cast<int>(img.height)};
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    throw FormatError("png", 0, img.message);
  }
  return out;
}

void SessionStore::Add(const std::string& id, Bundle bundle, const SoftenParams& soften) {
  static const std::regex kId("[A-Za-z0-9_.-]+");
  if (!std::regex_match(id, kId)) throw InputError("scene id '" + id + "' must match [A-Za-z0-9_.-]+");
  if (scenes_.count(id) != 0) throw InputError("duplicate scene id '" + id + "'");
  if (!bundle.aligned) throw InputError("scene '" + id + "' has no aligned block; run `ffseg align` first");
  bundle.Validate();
  auto entry = std::make_shared<SceneEntry>();
  entry->id = id;
  entry->cache = BuildMaskCache(bundle, soften);
  entry->bundle = std::move(bundle);
  scenes_.emplace(id, std::move(entry));
}

void SessionStore::LoadDirectory(const std::filesystem::path& dir, const SoftenParams& soften) {
  if (!std::filesystem::is_directory(dir)) throw InputError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".ffb") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) Add(path.stem().string(), LoadBundle(path), soften);
}

const SceneEntry* SessionStore::Find(const std::string& id) const {
  const auto it = scenes_.find(id);
  return it == scenes_.end() ? nullptr : it->second.get();
}

std::vector<std::string> SessionStore::Ids() const {
  std::vector<std::string> ids;
  for (const auto& kv : scenes_) ids.push_back(kv.first);
  return ids;
}

namespace {

ServiceResponse JsonResponse(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

ServiceResponse Error(int status, const std::string& message, const std::string& field = "") {
  return JsonResponse(status, {{"error", message}, {"field", field}});
}

json RleRows(const RleMask& rle) {
  json rows = json::array();
  for (const auto& row : rle.rows) {
    json flat = json::array();
    for (const auto& [start, length] : row) {
      flat.push_back(start);
      flat.push_back(length);
    }
    rows.push_back(std::move(flat));
  }
  return rows;
}

std::string Canonical(const Prompt& p) {
  std::ostringstream out;
  out << p.view << '|';
  for (std::size_t i = 0; i < p.positives.size(); ++i) out << (i ? ";" : "") << p.positives[i].x << ',' << p.positives[i].y;
  out << '|';
  for (std::size_t i = 0; i < p.negatives.size(); ++i) out << (i ? ";" : "") << p.negatives[i].x << ',' << p.negatives[i].y;
  return out.str();
}

std::vector<std::string> Split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

int ParseInt(const std::string& text, const std::string& what) {
  if (text.empty() || text.size() > 9 ||
      !std::all_of(text.begin() + (text[0] == '-' ? 1 : 0), text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      text == "-") {
    throw InputError(what + ": '" + text + "' is not an integer");
  }
  return std::stoi(text);
}

std::vector<PixelCoord> ParsePoints(const json& value, const std::string& field) {
  if (!value.is_array()) throw InputError(field + ": expected an array of {x, y} objects");
  std::vector<PixelCoord> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const std::string name = field + "[" + std::to_string(i) + "]";
    const json& item = value[i];
    if (!item.is_object()) throw InputError(name + ": expected an object with x and y");
    for (const auto& [key, v] : item.items()) {
      if (key != "x" && key != "y") throw InputError(name + "." + key + ": unknown field");
    }
    PixelCoord p;
    for (const char* axis : {"x", "y"}) {
      if (!item.contains(axis)) throw InputError(name + "." + axis + ": missing");
      const json& c = item.at(axis);
      if (!c.is_number_integer()) throw InputError(name + "." + axis + ": expected an integer");
      const auto v = c.get<long long>();
      if (v < 0) throw InputError(name + "." + axis + ": must be >= 0");
      if (v > 1'000'000) throw InputError(name + "." + axis + ": out of range");
      (axis[0] == 'x' ? p.x : p.y) = static_cast<int>(v);
    }
    out.push_back(p);
  }
  return out;
}

const SceneEntry* Lookup(const SessionStore& store, const std::string& scene_id) { return store.Find(scene_id); }

int ParseView(const SceneEntry& scene, const std::string& view) {
  const int v = ParseInt(view, "view");
  if (v < 0 || v >= scene.bundle.n_views()) {
    throw InputError("view: " + view + " is not in [0, " + std::to_string(scene.bundle.n_views()) + ")");
  }
  return v;
}

ServiceResponse NotFound(const std::string& scene_id) { return Error(404, "unknown scene '" + scene_id + "'"); }

ServiceResponse InputErrorResponse(const InputError& ex) {
  const std::string message = ex.what();
  const auto colon = message.find(':');
  return Error(400, message, colon == std::string::npos ? "" : message.substr(0, colon));
}

}  // namespace

std::string PromptToken(const Prompt& prompt) {
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : Canonical(prompt)) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 15]);
  }
  return out;
}

Prompt PromptFromToken(const std::string& token) {
  if (token.empty() || token.size() % 2 != 0 || token.size() > 1'000'000) throw InputError("token: malformed");
  std::string text;
  for (std::size_t i = 0; i < token.size(); i += 2) {
    const auto nibble = [&](char c) {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      throw InputError("token: malformed");
    };
    text.push_back(static_cast<char>(nibble(token[i]) * 16 + nibble(token[i + 1])));
  }
  const auto parts = Split(text, '|');
  if (parts.size() != 3) throw InputError("token: malformed");
  Prompt p;
  p.view = ParseInt(parts[0], "token");
  const auto parse_list = [](const std::string& list) {
    std::vector<PixelCoord> out;
    if (list.empty()) return out;
    for (const std::string& item : Split(list, ';')) {
      const auto xy = Split(item, ',');
      if (xy.size() != 2) throw InputError("token: malformed");
      out.push_back({ParseInt(xy[0], "token"), ParseInt(xy[1], "token")});
    }
    return out;
  };
  p.positives = parse_list(parts[1]);
  p.negatives = parse_list(parts[2]);
  if (PromptToken(p) != token) throw InputError("token: not canonical");
  return p;
}

Prompt ParsePromptJson(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& ex) {
    throw InputError(std::string("body: invalid JSON (") + ex.what() + ")");
  }
  if (!doc.is_object()) throw InputError("body: expected a JSON object");
  for (const auto& [key, v] : doc.items()) {
    if (key != "view" && key != "positives" && key != "negatives") throw InputError(key + ": unknown field");
  }
  Prompt p;
  if (!doc.contains("view")) throw InputError("view: missing");
  if (!doc["view"].is_number_integer()) throw InputError("view: expected an integer");
  const auto view = doc["view"].get<long long>();
  if (view < 0 || view > 1'000'000) throw InputError("view: must be a non-negative view index");
  p.view = static_cast<int>(view);
  if (!doc.contains("positives")) throw InputError("positives: missing");
  p.positives = ParsePoints(doc["positives"], "positives");
  if (p.positives.empty()) throw InputError("positives: at least one positive point is required");
  if (doc.contains("negatives")) p.negatives = ParsePoints(doc["negatives"], "negatives");
  return p;
}

ServiceResponse HandleListScenes(const SessionStore& store) {
  json scenes = json::array();
  for (const std::string& id : store.Ids()) {
    const SceneEntry* s = store.Find(id);
    scenes.push_back({{"id", id},
                      {"views", s->bundle.n_views()},
                      {"width", s->bundle.grid.width},
                      {"height", s->bundle.grid.height}});
  }
  return JsonResponse(200, {{"scenes", scenes}});
}

ServiceResponse HandleSceneMeta(const SessionStore& store, const std::string& scene_id) {
  const SceneEntry* s = Lookup(store, scene_id);
  if (s == nullptr) return NotFound(scene_id);
  return JsonResponse(200, {{"id", scene_id},
                            {"width", s->bundle.grid.width},
                            {"height", s->bundle.grid.height},
                            {"views", s->bundle.n_views()},
                            {"edges", s->bundle.observations.size()},
                            {"objects", s->cache.ObjectIds()}});
}

ServiceResponse HandleViewImage(const SessionStore& store, const std::string& scene_id, const std::string& view) {
  const SceneEntry* s = Lookup(store, scene_id);
  if (s == nullptr) return NotFound(scene_id);
  try {
    const int v = ParseView(*s, view);
    return {200, "image/png", EncodePng(s->bundle.views[static_cast<std::size_t>(v)].image)};
  } catch (const InputError& ex) {
    return InputErrorResponse(ex);
  }
}

ServiceResponse HandleViewMasks(const SessionStore& store, const std::string& scene_id, const std::string& view) {
  const SceneEntry* s = Lookup(store, scene_id);
  if (s == nullptr) return NotFound(scene_id);
  try {
    const int v = ParseView(*s, view);
    json objects = json::array();
    for (const CachedMask& entry : s->cache.view(v).entries) {
      objects.push_back({{"id", entry.object_id}, {"area", entry.area}, {"rows", RleRows(EncodeRle(entry.mask))}});
    }
    return JsonResponse(200, {{"view", v},
                              {"width", s->bundle.grid.width},
                              {"height", s->bundle.grid.height},
                              {"objects", objects}});
  } catch (const InputError& ex) {
    return InputErrorResponse(ex);
  }
}

ServiceResponse HandleSegmentRequest(const SessionStore& store, const std::string& scene_id,
                                     const std::string& body) {
  const SceneEntry* s = Lookup(store, scene_id);
  if (s == nullptr) return NotFound(scene_id);
  try {
    const Prompt prompt = ParsePromptJson(body);
    prompt.Validate(s->bundle.grid, s->bundle.n_views());
    const SegmentationResult result = Segment(prompt, s->cache, *s->bundle.aligned);
    json masks = json::array();
    for (std::size_t v = 0; v < result.masks.size(); ++v) {
      masks.push_back({{"view", v},
                       {"width", s->bundle.grid.width},
                       {"height", s->bundle.grid.height},
                       {"area", Popcount(result.masks[v])},
                       {"rows", RleRows(EncodeRle(result.masks[v]))}});
    }
    return JsonResponse(200, {{"scene", scene_id},
                              {"view", prompt.view},
                              {"empty", result.empty},
                              {"objects", result.objects.ids()},
                              {"masks", masks},
                              {"point_count", result.points.size()},
                              {"points_token", PromptToken(prompt)},
                              {"elapsed_ms", result.elapsed_ms}});
  } catch (const InputError& ex) {
    return InputErrorResponse(ex);
  }
}

ServiceResponse HandlePoints(const SessionStore& store, const std::string& scene_id, const std::string& token,
                             const std::string& format) {
  const SceneEntry* s = Lookup(store, scene_id);
  if (s == nullptr) return NotFound(scene_id);
  try {
    PlyFormat ply = PlyFormat::kBinaryLittleEndian;
    if (format == "ascii") {
      ply = PlyFormat::kAscii;
    } else if (!format.empty() && format != "binary") {
      throw InputError("format: expected 'ascii' or 'binary'");
    }
    const Prompt prompt = PromptFromToken(token);
    prompt.Validate(s->bundle.grid, s->bundle.n_views());
    const SegmentationResult result = Segment(prompt, s->cache, *s->bundle.aligned);
    std::vector<RgbImage> images;
    for (const BundleView& v : s->bundle.views) images.push_back(v.image);
    return {200, "application/octet-stream", EncodePly(ColorPoints(result.points, images), ply)};
  } catch (const InputError& ex) {
    return InputErrorResponse(ex);
  }
}

ServiceResponse Dispatch(const SessionStore& store, const std::string& method, const std::string& path,
                         const std::string& body, const std::map<std::string, std::string>& query) {
  static const std::regex kScenes("/scenes/?");
  static const std::regex kMeta("/scenes/([^/]+)/meta");
  static const std::regex kImage("/scenes/([^/]+)/views/([^/]+)/image");
  static const std::regex kMasks("/scenes/([^/]+)/views/([^/]+)/masks");
  static const std::regex kSegment("/scenes/([^/]+)/segment");
  static const std::regex kPoints("/scenes/([^/]+)/points/([^/]+)");
  std::smatch m;
  const auto only = [&](const char* allowed) -> std::optional<ServiceResponse> {
    if (method != allowed) return Error(405, "method " + method + " not allowed on " + path);
    return std::nullopt;
  };
  try {
    if (std::regex_match(path, m, kScenes)) {
      if (auto e = only("GET")) return *e;
      return HandleListScenes(store);
    }
    if (std::regex_match(path, m, kMeta)) {
      if (auto e = only("GET")) return *e;
      return HandleSceneMeta(store, m[1]);
    }
    if (std::regex_match(path, m, kImage)) {
      if (auto e = only("GET")) return *e;
      return HandleViewImage(store, m[1], m[2]);
    }
    if (std::regex_match(path, m, kMasks)) {
      if (auto e = only("GET")) return *e;
      return HandleViewMasks(store, m[1], m[2]);
    }
    if (std::regex_match(path, m, kSegment)) {
      if (auto e = only("POST")) return *e;
      return HandleSegmentRequest(store, m[1], body);
    }
    if (std::regex_match(path, m, kPoints)) {
      if (auto e = only("GET")) return *e;
      const auto it = query.find("format");
      return HandlePoints(store, m[1], m[2], it == query.end() ? "" : it->second);
    }
  } catch (const std::exception& ex) {
    return Error(500, ex.what());
  }
  return Error(404, "no route for " + path);
}

struct HttpService::Impl {
  explicit Impl(const SessionStore& s) : store(s) {
    const auto handle = [this](const httplib::Request& req, httplib::Response& res) {
      std::map<std::string, std::string> query;
      for (const auto& [k, v] : req.params) query.emplace(k, v);
      const ServiceResponse r = Dispatch(store, req.method, req.path, req.body, query);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
      res.set_header("Access-Control-Allow-Origin", "*");
    };
    server.Get(".*", handle);
    server.Post(".*", handle);
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  const SessionStore& store;
  httplib::Server server;
  std::thread thread;
};

HttpService::HttpService(const SessionStore& store) : impl_(std::make_unique<Impl>(store)) {}

HttpService::~HttpService() { Stop(); }

int HttpService::Start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw InputError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpService::Run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw InputError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpService::Stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ffseg
