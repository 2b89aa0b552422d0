#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ffseg/bundle.hpp"
#include "ffseg/ply.hpp"
#include "ffseg/service.hpp"
#include "test_support.hpp"

#include <httplib.h>
#include <json.hpp>

namespace ffseg {
namespace {

using json = nlohmann::json;

Bundle ServedBundle(std::uint64_t seed = 4) {
  const GroundTruthScene gt = GenerateScene(testing::SmallSpec(32, 24, 3), seed);
  const ViewGraph graph = BuildGraph(3, CompleteGraph{});
  Bundle b = MakeBundle(gt, SimulatePairwise(gt, graph, {}, seed), {});
  DgaConfig config;
  config.iterations = 10;
  b.aligned = AlignScene(b.grid, b.Graph(), b.Intrinsics(), b.observations, b.SoftMasks(), config);
  RoundToStorage(b);
  return b;
}

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    bundle_ = new Bundle(ServedBundle());
    store_ = new SessionStore();
    store_->Add("demo", *bundle_);
  }
  static void TearDownTestSuite() {
    delete store_;
    delete bundle_;
  }

  static json Body(const ServiceResponse& r) { return json::parse(r.body); }

  // First pixel of the object in `view`.
  static PixelCoord PixelOf(int object_id, int view) {
    for (const auto& [id, m] : bundle_->views[static_cast<std::size_t>(view)].object_masks) {
      if (id != object_id) continue;
      for (int y = 0; y < m.grid().height; ++y) {
        for (int x = 0; x < m.grid().width; ++x) {
          if (m(x, y)) return {x, y};
        }
      }
    }
    ADD_FAILURE() << "object " << object_id << " not visible in view " << view;
    return {0, 0};
  }

  static PixelCoord BackgroundPixel(int view) {
    const BundleView& bv = bundle_->views[static_cast<std::size_t>(view)];
    for (int y = 0; y < bundle_->grid.height; ++y) {
      for (int x = 0; x < bundle_->grid.width; ++x) {
        bool hit = false;
        for (const auto& om : bv.object_masks) hit = hit || om.second(x, y);
        if (!hit) return {x, y};
      }
    }
    ADD_FAILURE() << "no background pixel";
    return {0, 0};
  }

  static inline Bundle* bundle_ = nullptr;
  static inline SessionStore* store_ = nullptr;
};

TEST(Rle, Examples) {
  const ImageGrid grid{6, 3};
  BinaryMask m(grid, 0);
  EXPECT_EQ(EncodeRle(m).rows, (std::vector<std::vector<std::pair<int, int>>>(3)));
  for (int x = 0; x < 6; ++x) m(x, 1) = 1;
  m(0, 2) = m(2, 2) = m(3, 2) = 1;
  const RleMask rle = EncodeRle(m);
  EXPECT_TRUE(rle.rows[0].empty());
  EXPECT_EQ(rle.rows[1], (std::vector<std::pair<int, int>>{{0, 6}}));
  EXPECT_EQ(rle.rows[2], (std::vector<std::pair<int, int>>{{0, 1}, {2, 2}}));
  EXPECT_EQ(rle.Area(), 9u);
  EXPECT_TRUE(DecodeRle(rle) == m);
}

TEST(Rle, RoundTripOnRandomMasks) {
  CounterRng rng(17, 17);
  for (int trial = 0; trial < 100; ++trial) {
    const ImageGrid grid{1 + static_cast<int>(rng.Below(40)), 1 + static_cast<int>(rng.Below(30))};
    const BinaryMask m = testing::RandomMask(grid, rng.Uniform(), rng);
    const RleMask rle = EncodeRle(m);
    EXPECT_EQ(rle.Area(), Popcount(m));
    EXPECT_TRUE(DecodeRle(rle) == m);
    for (const auto& row : rle.rows) {
      for (std::size_t k = 1; k < row.size(); ++k) EXPECT_GT(row[k].first, row[k - 1].first + row[k - 1].second);
    }
  }
}

TEST(Rle, MalformedRunsAreFormatErrors) {
  const ImageGrid grid{5, 2};
  const auto bad = [&](std::vector<std::vector<std::pair<int, int>>> rows) {
    EXPECT_THROW(DecodeRle({grid, std::move(rows)}), FormatError);
  };
  bad({{}});
  bad({{{0, 0}}, {}});
  bad({{{3, 3}}, {}});
  bad({{{-1, 2}}, {}});
  bad({{{0, 2}, {1, 2}}, {}});
  bad({{{3, 1}, {0, 1}}, {}});
  bad({{{0, 2}, {2, 1}}, {}});
  EXPECT_NO_THROW(DecodeRle({grid, {{{0, 5}}, {{0, 1}, {4, 1}}}}));
}

TEST(Png, RoundTrip) {
  RgbImage img{{7, 5}, std::vector<std::uint8_t>(3 * 35)};
  CounterRng rng(3, 3);
  for (std::uint8_t& c : img.rgb) c = static_cast<std::uint8_t>(rng.Below(256));
  const std::string bytes = EncodePng(img);
  EXPECT_EQ(bytes.substr(1, 3), "PNG");
  EXPECT_TRUE(DecodePng(bytes) == img);
  EXPECT_THROW(DecodePng("not a png"), FormatError);
}

TEST(PromptJson, ParsesAndNamesBadFields) {
  const Prompt p = ParsePromptJson(R"({"view": 1, "positives": [{"x": 3, "y": 4}], "negatives": [{"x": 0, "y": 0}]})");
  EXPECT_EQ(p.view, 1);
  ASSERT_EQ(p.positives.size(), 1u);
  EXPECT_EQ(p.positives[0].x, 3);
  EXPECT_EQ(p.positives[0].y, 4);
  ASSERT_EQ(p.negatives.size(), 1u);

  const auto field_of = [](const std::string& body) {
    try {
      ParsePromptJson(body);
    } catch (const InputError& ex) {
      const std::string msg = ex.what();
      return msg.substr(0, msg.find(':'));
    }
    return std::string("<accepted>");
  };
  EXPECT_EQ(field_of("{"), "body");
  EXPECT_EQ(field_of("[]"), "body");
  EXPECT_EQ(field_of(R"({"positives": [{"x": 1, "y": 1}]})"), "view");
  EXPECT_EQ(field_of(R"({"view": "0", "positives": [{"x": 1, "y": 1}]})"), "view");
  EXPECT_EQ(field_of(R"({"view": 0})"), "positives");
  EXPECT_EQ(field_of(R"({"view": 0, "positives": []})"), "positives");
  EXPECT_EQ(field_of(R"({"view": 0, "positives": [{"x": -1, "y": 1}]})"), "positives[0].x");
  EXPECT_EQ(field_of(R"({"view": 0, "positives": [{"x": 1, "y": 1.5}]})"), "positives[0].y");
  EXPECT_EQ(field_of(R"({"view": 0, "positives": [{"x": 1}]})"), "positives[0].y");
  EXPECT_EQ(field_of(R"({"view": 0, "positives": [{"x": 1, "y": 1}], "negatives": [{"x": 1, "y": 1, "z": 0}]})"),
            "negatives[0].z");
  EXPECT_EQ(field_of(R"({"view": 0, "positives": [{"x": 1, "y": 1}], "extra": 1})"), "extra");
}

TEST(PromptToken, RoundTripAndCanonicalForm) {
  const Prompt p{2, {{1, 2}, {30, 4}}, {{5, 6}}};
  const Prompt back = PromptFromToken(PromptToken(p));
  EXPECT_EQ(back.view, 2);
  EXPECT_EQ(back.positives, p.positives);
  EXPECT_EQ(back.negatives, p.negatives);
  const Prompt none{0, {{0, 0}}, {}};
  EXPECT_EQ(PromptFromToken(PromptToken(none)).negatives.size(), 0u);
  EXPECT_THROW(PromptFromToken(""), InputError);
  EXPECT_THROW(PromptFromToken("abc"), InputError);
  EXPECT_THROW(PromptFromToken("zz"), InputError);
  EXPECT_THROW(PromptFromToken(PromptToken(p) + "00"), InputError);
}

TEST(SessionStore, RejectsBadEntries) {
  SessionStore store;
  Bundle unaligned = ServedBundle();
  unaligned.aligned.reset();
  EXPECT_THROW(store.Add("raw", unaligned), InputError);
  const Bundle b = ServedBundle();
  EXPECT_THROW(store.Add("bad id", b), InputError);
  EXPECT_THROW(store.Add("", b), InputError);
  store.Add("a", b);
  EXPECT_THROW(store.Add("a", b), InputError);
  EXPECT_EQ(store.Ids(), std::vector<std::string>{"a"});
  EXPECT_EQ(store.Find("b"), nullptr);
}

TEST_F(ServiceTest, ListAndMeta) {
  const ServiceResponse list = Dispatch(*store_, "GET", "/scenes", "");
  ASSERT_EQ(list.status, 200);
  const json scenes = Body(list)["scenes"];
  ASSERT_EQ(scenes.size(), 1u);
  EXPECT_EQ(scenes[0]["id"], "demo");
  EXPECT_EQ(scenes[0]["views"], 3);
  EXPECT_EQ(scenes[0]["width"], 32);
  EXPECT_EQ(scenes[0]["height"], 24);

  const json meta = Body(Dispatch(*store_, "GET", "/scenes/demo/meta", ""));
  EXPECT_EQ(meta["edges"], 3);
  EXPECT_EQ(meta["objects"], (std::vector<int>{0, 1}));
  EXPECT_EQ(Dispatch(*store_, "GET", "/scenes/nope/meta", "").status, 404);
  EXPECT_EQ(Body(Dispatch(*store_, "GET", "/scenes/nope/meta", "")),
            json({{"error", "unknown scene 'nope'"}, {"field", ""}}));
}

TEST_F(ServiceTest, ImageAndMasks) {
  const ServiceResponse img = Dispatch(*store_, "GET", "/scenes/demo/views/1/image", "");
  ASSERT_EQ(img.status, 200);
  EXPECT_EQ(img.content_type, "image/png");
  EXPECT_TRUE(DecodePng(img.body) == bundle_->views[1].image);

  const ServiceResponse masks = Dispatch(*store_, "GET", "/scenes/demo/views/1/masks", "");
  ASSERT_EQ(masks.status, 200);
  const json doc = Body(masks);
  EXPECT_EQ(doc["view"], 1);
  for (const json& obj : doc["objects"]) {
    RleMask rle{bundle_->grid, {}};
    std::size_t area = 0;
    for (const json& row : obj["rows"]) {
      std::vector<std::pair<int, int>> runs;
      for (std::size_t k = 0; k + 1 < row.size(); k += 2) {
        runs.emplace_back(row[k].get<int>(), row[k + 1].get<int>());
        area += row[k + 1].get<std::size_t>();
      }
      rle.rows.push_back(runs);
    }
    EXPECT_EQ(obj["area"].get<std::size_t>(), area);
    const BinaryMask decoded = DecodeRle(rle);
    bool found = false;
    for (const auto& [id, m] : bundle_->views[1].object_masks) {
      if (id == obj["id"].get<int>()) {
        EXPECT_TRUE(decoded == m);
        found = true;
      }
    }
    EXPECT_TRUE(found);
  }

  const ServiceResponse bad = Dispatch(*store_, "GET", "/scenes/demo/views/9/masks", "");
  EXPECT_EQ(bad.status, 400);
  EXPECT_EQ(Body(bad)["field"], "view");
  EXPECT_EQ(Dispatch(*store_, "GET", "/scenes/demo/views/x/image", "").status, 400);
}

TEST_F(ServiceTest, SegmentResponseIsConsistent) {
  const PixelCoord px = PixelOf(0, 1);
  const json req = {{"view", 1}, {"positives", {{{"x", px.x}, {"y", px.y}}}}};
  const ServiceResponse r = Dispatch(*store_, "POST", "/scenes/demo/segment", req.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const json doc = Body(r);
  EXPECT_EQ(doc["scene"], "demo");
  EXPECT_EQ(doc["view"], 1);
  EXPECT_FALSE(doc["empty"].get<bool>());
  EXPECT_EQ(doc["objects"], std::vector<int>{0});
  ASSERT_EQ(doc["masks"].size(), 3u);
  std::size_t total = 0;
  for (const json& m : doc["masks"]) total += m["area"].get<std::size_t>();
  EXPECT_EQ(doc["point_count"].get<std::size_t>(), total);
  EXPECT_GT(total, 0u);

  const ServiceResponse ply = Dispatch(*store_, "GET", "/scenes/demo/points/" + doc["points_token"].get<std::string>(),
                                       "", {{"format", "ascii"}});
  ASSERT_EQ(ply.status, 200);
  EXPECT_EQ(DecodePly(ply.body).size(), total);
  const ServiceResponse bin = Dispatch(*store_, "GET", "/scenes/demo/points/" + doc["points_token"].get<std::string>(), "");
  EXPECT_EQ(DecodePly(bin.body).size(), total);
  EXPECT_EQ(Dispatch(*store_, "GET", "/scenes/demo/points/" + doc["points_token"].get<std::string>(), "",
                     {{"format", "xml"}}).status,
            400);
  EXPECT_EQ(Dispatch(*store_, "GET", "/scenes/demo/points/zz", "").status, 400);
}

TEST_F(ServiceTest, BackgroundPromptIsEmptyNotAnError) {
  const PixelCoord px = BackgroundPixel(0);
  const json req = {{"view", 0}, {"positives", {{{"x", px.x}, {"y", px.y}}}}};
  const ServiceResponse r = Dispatch(*store_, "POST", "/scenes/demo/segment", req.dump());
  ASSERT_EQ(r.status, 200);
  const json doc = Body(r);
  EXPECT_TRUE(doc["empty"].get<bool>());
  EXPECT_EQ(doc["point_count"], 0);
  EXPECT_TRUE(doc["objects"].empty());
}

TEST_F(ServiceTest, ErrorStatuses) {
  const auto post = [&](const std::string& body) { return Dispatch(*store_, "POST", "/scenes/demo/segment", body); };
  const ServiceResponse oob = post(R"({"view": 0, "positives": [{"x": 32, "y": 0}]})");
  EXPECT_EQ(oob.status, 400);
  EXPECT_EQ(Body(oob)["field"], "positives[0]");
  const ServiceResponse view = post(R"({"view": 3, "positives": [{"x": 0, "y": 0}]})");
  EXPECT_EQ(view.status, 400);
  EXPECT_EQ(Body(view)["field"], "view");
  const ServiceResponse neg = post(R"({"view": 0, "positives": [{"x": 0, "y": 0}], "negatives": [{"x": -2, "y": 0}]})");
  EXPECT_EQ(Body(neg)["field"], "negatives[0].x");
  EXPECT_EQ(post("nope").status, 400);
  EXPECT_EQ(Dispatch(*store_, "POST", "/scenes/other/segment", "{}").status, 404);
  EXPECT_EQ(Dispatch(*store_, "GET", "/scenes/demo/segment", "").status, 405);
  EXPECT_EQ(Dispatch(*store_, "DELETE", "/scenes", "").status, 405);
  EXPECT_EQ(Dispatch(*store_, "GET", "/nothing", "").status, 404);
}

TEST_F(ServiceTest, RequestsLeaveTheStoreUntouchedAndAreRepeatable) {
  const std::vector<std::uint8_t> before = EncodeBundle(store_->Find("demo")->bundle);
  const PixelCoord a = PixelOf(0, 0);
  const PixelCoord b = PixelOf(1, 2);
  const json req = {{"view", 0}, {"positives", {{{"x", a.x}, {"y", a.y}}}}};
  const json req2 = {{"view", 2}, {"positives", {{{"x", b.x}, {"y", b.y}}}}, {"negatives", {{{"x", a.x}, {"y", a.y}}}}};
  json first = Body(Dispatch(*store_, "POST", "/scenes/demo/segment", req.dump()));
  Dispatch(*store_, "POST", "/scenes/demo/segment", req2.dump());
  Dispatch(*store_, "GET", "/scenes/demo/views/0/masks", "");
  json second = Body(Dispatch(*store_, "POST", "/scenes/demo/segment", req.dump()));
  first.erase("elapsed_ms");
  second.erase("elapsed_ms");
  EXPECT_EQ(first, second);
  EXPECT_EQ(EncodeBundle(store_->Find("demo")->bundle), before);
  EXPECT_TRUE(store_->Find("demo")->bundle == *bundle_);
}

TEST_F(ServiceTest, ServesOverHttp) {
  HttpService service(*store_);
  const int port = service.Start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  const auto list = client.Get("/scenes");
  ASSERT_TRUE(list);
  EXPECT_EQ(list->status, 200);
  EXPECT_EQ(json::parse(list->body)["scenes"][0]["id"], "demo");
  EXPECT_EQ(list->get_header_value("Access-Control-Allow-Origin"), "*");

  const PixelCoord px = PixelOf(1, 0);
  const json req = {{"view", 0}, {"positives", {{{"x", px.x}, {"y", px.y}}}}};
  const auto seg = client.Post("/scenes/demo/segment", req.dump(), "application/json");
  ASSERT_TRUE(seg);
  EXPECT_EQ(seg->status, 200);
  const json doc = json::parse(seg->body);
  const auto ply = client.Get("/scenes/demo/points/" + doc["points_token"].get<std::string>() + "?format=ascii");
  ASSERT_TRUE(ply);
  EXPECT_EQ(DecodePly(ply->body).size(), doc["point_count"].get<std::size_t>());

  const auto missing = client.Get("/scenes/zzz/meta");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  service.Stop();
}

TEST(SessionStore, LoadsBundlesFromADirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "ffseg_store_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  SaveBundle(ServedBundle(2), dir / "b.ffb");
  SaveBundle(ServedBundle(3), dir / "a.ffb");
  std::ofstream(dir / "notes.txt") << "ignored";
  SessionStore store;
  store.LoadDirectory(dir);
  EXPECT_EQ(store.Ids(), (std::vector<std::string>{"a", "b"}));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace ffseg
