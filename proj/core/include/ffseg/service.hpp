#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ffseg/bundle.hpp"
#include "ffseg/mask_cache.hpp"
#include "ffseg/mgm.hpp"

namespace ffseg {

/// Row-wise run-length encoding of a binary mask: for every row, the
/// (start, length) runs of set pixels in ascending order.
struct RleMask {
  ImageGrid grid;
  std::vector<std::vector<std::pair<int, int>>> rows;

  std::size_t Area() const;
  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask EncodeRle(const BinaryMask& mask);
/// Throws FormatError on a wrong row count, a run leaving the row, empty,
/// overlapping, touching or unsorted runs.
BinaryMask DecodeRle(const RleMask& rle);

/// 8-bit RGB PNG bytes.
std::string EncodePng(const RgbImage& image);
RgbImage DecodePng(const std::string& bytes);

struct SceneEntry {
  std::string id;
  Bundle bundle;
  MaskCache cache;
};

/// Scenes served by the HTTP interface. Entries are immutable once added.
class SessionStore {
 public:
  /// The bundle must carry an aligned block. Throws InputError on a duplicate
  /// or malformed id.
  void Add(const std::string& id, Bundle bundle, const SoftenParams& soften = {});
  /// Adds every `*.ffb` in `dir` under its file stem.
  void LoadDirectory(const std::filesystem::path& dir, const SoftenParams& soften = {});

  const SceneEntry* Find(const std::string& id) const;
  std::vector<std::string> Ids() const;

 private:
  std::map<std::string, std::shared_ptr<const SceneEntry>> scenes_;
};

struct ServiceResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Stateless PLY download token for a prompt (hex of a canonical string).
std::string PromptToken(const Prompt& prompt);
Prompt PromptFromToken(const std::string& token);

/// Parses the segment payload; unknown fields and malformed values raise
/// InputError naming the field.
Prompt ParsePromptJson(const std::string& body);

ServiceResponse HandleListScenes(const SessionStore& store);
ServiceResponse HandleSceneMeta(const SessionStore& store, const std::string& scene_id);
ServiceResponse HandleViewImage(const SessionStore& store, const std::string& scene_id, const std::string& view);
ServiceResponse HandleViewMasks(const SessionStore& store, const std::string& scene_id, const std::string& view);
ServiceResponse HandleSegmentRequest(const SessionStore& store, const std::string& scene_id,
                                     const std::string& body);
/// `format` is "binary" (default) or "ascii".
ServiceResponse HandlePoints(const SessionStore& store, const std::string& scene_id, const std::string& token,
                             const std::string& format);

/// Routes a request (path without query string) to the handlers above.
ServiceResponse Dispatch(const SessionStore& store, const std::string& method, const std::string& path,
                         const std::string& body, const std::map<std::string, std::string>& query = {});

/// HTTP front end over Dispatch.
class HttpService {
 public:
  explicit HttpService(const SessionStore& store);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int Start(const std::string& host, int port);
  /// Serves on the calling thread until Stop().
  void Run(const std::string& host, int port);
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ffseg
