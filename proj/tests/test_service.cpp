#include "doctest.h"
#include "oracles.hpp"

#include "qvlm/fixtures.hpp"
#include "qvlm/json_io.hpp"
#include "qvlm/mask_io.hpp"
#include "qvlm/service.hpp"

#include "httplib.h"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace qvlm;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 12x10 tile at 2 m: two roofs (one with a courtyard) and a strip of water.
std::filesystem::path write_tiny_store(const std::filesystem::path& dir) {
  BinaryMask roof(12, 10), water(12, 10);
  for (int y = 1; y <= 4; ++y)
    for (int x = 1; x <= 4; ++x) roof.bits(y, x) = (y == 2 || y == 3) && (x == 2 || x == 3) ? 0 : 1;
  for (int y = 6; y <= 7; ++y)
    for (int x = 8; x <= 10; ++x) roof.bits(y, x) = 1;
  roof.set(1, 8);
  for (int x = 0; x < 12; ++x) water.set(x, 9);
  write_mask_png(roof, dir / "roof.png");
  write_mask_png(water, dir / "water.png");
  const json manifest{{"images",
                       {{{"id", "tile"},
                         {"image", "test_2m/0001.png"},
                         {"source", "test"},
                         {"gsd", 2.0},
                         {"width", 12},
                         {"height", 10},
                         {"masks", {{"roof", "roof.png"}, {"water", "water.png"}}}}}}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2);
  return dir / "manifest.json";
}

QuestionRecord task(std::string id, QuestionType type) {
  QuestionRecord q;
  q.id = std::move(id);
  q.question = "How much?";
  q.image = "test_2m/0001.png";
  q.type = type;
  q.tier = info(type).tier;
  q.gsd = 2.0;
  q.answer = 1.0;
  return q;
}

struct Running {
  Service service;
  int port;
  httplib::Client client;
  explicit Running(ServiceConfig cfg) : service(std::move(cfg)), port(service.start()), client("127.0.0.1", port) {}
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

ServiceConfig config_for(const std::filesystem::path& dir, bool with_store = true) {
  ServiceConfig c;
  if (with_store) c.store = BackendStore::load(write_tiny_store(dir));
  c.tasks = {task("SQuID_0000", QuestionType::Percentage), task("SQuID_0001", QuestionType::BinaryPresence),
             task("SQuID_0002", QuestionType::Count)};
  c.annotations = dir / "annotations.jsonl";
  return c;
}

std::string segment_body(const std::vector<std::string>& topics, int min_area = 0) {
  return json{{"image", "tile"}, {"topics", topics}, {"min_area_pixels", min_area}, {"gsd", 2.0}}.dump();
}

}  // namespace

TEST_CASE("segment response matches the golden file") {
  const auto dir = oracle::scratch_dir("svc_golden");
  Running r(config_for(dir));
  const auto res = r.client.Post("/segment", segment_body({"roof", "water"}), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const std::filesystem::path golden = std::filesystem::path(QVLM_GOLDEN_DIR) / "segment_tile.json";
  if (std::getenv("QVLM_UPDATE_GOLDEN")) std::ofstream(golden) << res->body;
  CHECK(res->body == slurp(golden));

  const json j = json::parse(res->body);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"image_height", "image_width", "shapes", "total_pixels"});
  for (const json& s : j["shapes"])
    for (const char* field : {"id", "class_type", "area_pixels", "area_hectares", "polygon"}) CHECK(s.contains(field));

  // same request, same bytes
  for (int i = 0; i < 3; ++i) CHECK(r.client.Post("/segment", segment_body({"roof", "water"}), "application/json")->body == res->body);
}

TEST_CASE("segment endpoint contents") {
  const auto dir = oracle::scratch_dir("svc_segment");
  Running r(config_for(dir));

  const auto empty = r.client.Post("/segment", segment_body({}), "application/json");
  REQUIRE(empty);
  CHECK(empty->status == 200);
  const json e = json::parse(empty->body);
  CHECK(e["shapes"].empty());
  CHECK(e["image_width"] == 12);
  CHECK(e["image_height"] == 10);
  CHECK(e["total_pixels"] == 120);

  const json all = json::parse(r.client.Post("/segment", segment_body({"roof"}), "application/json")->body);
  REQUIRE(all["shapes"].size() == 3);
  CHECK(all["shapes"][0]["area_pixels"] == 12);
  CHECK(all["shapes"][0]["area_hectares"].get<double>() == doctest::Approx(12 * 4 / 10000.0));
  CHECK(all["shapes"][0]["holes"].size() == 1);
  const json big = json::parse(r.client.Post("/segment", segment_body({"roof"}, 6), "application/json")->body);
  CHECK(big["shapes"].size() == 2);

  // unknown but non-standard topics are rejected by name; standard topics without masks are empty
  const json forest = json::parse(r.client.Post("/segment", segment_body({"forest"}), "application/json")->body);
  CHECK(forest["shapes"].empty());
  const auto glacier = r.client.Post("/segment", segment_body({"roof", "glacier"}), "application/json");
  REQUIRE(glacier);
  CHECK(glacier->status == 400);
  CHECK(glacier->body.find("glacier") != std::string::npos);

  const auto missing = r.client.Post("/segment", json{{"image", "nowhere"}, {"topics", {"roof"}}}.dump(), "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  const auto garbage = r.client.Post("/segment", "{\"topics\": 3}", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);
}

TEST_CASE("segment without a store") {
  const auto dir = oracle::scratch_dir("svc_nostore");
  Running r(config_for(dir, false));
  const auto res = r.client.Post("/segment", segment_body({"roof"}), "application/json");
  REQUIRE(res);
  CHECK(res->status == 503);
  // the task side still works
  CHECK(r.client.Get("/tasks")->status == 200);
}

TEST_CASE("roof scene segment counts") {
  const auto dir = oracle::scratch_dir("svc_roof");
  ServiceConfig c;
  c.store = BackendStore::load(write_roof_scene(dir));
  c.annotations = dir / "a.jsonl";
  Running r(std::move(c));
  const auto res = r.client.Post(
      "/segment", json{{"image", kRoofSceneImage}, {"topics", {"agric", "roof"}}, {"gsd", 0.3}}.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  int agric = 0, roof = 0;
  const json body = json::parse(res->body);
  for (const json& s : body["shapes"]) {
    agric += s["class_type"] == "agric";
    roof += s["class_type"] == "roof";
  }
  CHECK(agric == 1);
  CHECK(roof == 13);
}

TEST_CASE("http backend maps service errors") {
  const auto dir = oracle::scratch_dir("svc_backend");
  Running r(config_for(dir));
  HttpBackend backend(r.url());
  const SegmentationResult ok = backend.segment("tile", {"roof"}, 0, 2.0);
  CHECK(ok.shapes.size() == 3);
  CHECK(ok.gsd == 2.0);
  CHECK(ok.shapes[0].pixels.size() == ok.shapes[0].area_pixels);

  FileBackend local(BackendStore::load(dir / "manifest.json"));
  const SegmentationResult direct = local.segment("tile", {"roof", "water"}, 0, 2.0);
  const SegmentationResult remote = backend.segment("tile", {"roof", "water"}, 0, 2.0);
  CHECK(to_json(direct) == to_json(remote));

  auto code = [&](const std::string& image, std::vector<std::string> topics) {
    try {
      backend.segment(image, topics, 0, 2.0);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Domain;
  };
  CHECK(code("nowhere", {"roof"}) == ErrorCode::NotFound);
  CHECK(code("tile", {"glacier"}) == ErrorCode::UnknownTopic);

  HttpBackend dead("http://127.0.0.1:1");
  try {
    dead.segment("tile", {"roof"}, 0, 2.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Transport);
  }

  const auto nostore_dir = oracle::scratch_dir("svc_backend_nostore");
  Running bare(config_for(nostore_dir, false));
  try {
    HttpBackend(bare.url()).segment("tile", {"roof"}, 0, 2.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Backend);
    CHECK(std::string(e.what()).find("503") != std::string::npos);
  }
}

TEST_CASE("task endpoints") {
  const auto dir = oracle::scratch_dir("svc_tasks");
  Running r(config_for(dir, false));
  const json all = json::parse(r.client.Get("/tasks")->body);
  REQUIRE(all.size() == 3);
  CHECK(all[0]["answer_mode"] == "grid");
  CHECK(all[1]["answer_mode"] == "choice");
  CHECK(all[1]["choices"] == json{"yes", "no"});
  CHECK(all[2]["answer_mode"] == "number");
  CHECK(all[0]["grid"]["min"] == 10);
  CHECK(all[0]["grid"]["max"] == 320);
  CHECK(all[0]["image"] == "test_2m/0001.png");
  CHECK(all[0]["question"] == "How much?");

  const auto one = r.client.Get("/tasks/SQuID_0001");
  REQUIRE(one);
  CHECK(one->status == 200);
  CHECK(json::parse(one->body) == all[1]);
  const auto none = r.client.Get("/tasks/SQuID_9999");
  REQUIRE(none);
  CHECK(none->status == 404);
  CHECK(none->body.find("SQuID_9999") != std::string::npos);
}

TEST_CASE("annotation endpoints") {
  const auto dir = oracle::scratch_dir("svc_annotations");
  Running r(config_for(dir, false));
  auto post = [&](const json& j) { return r.client.Post("/annotations", j.dump(), "application/json"); };

  const json grid{{"question_id", "SQuID_0000"}, {"annotator_id", "w1"},
                  {"kind", "grid"}, {"grid", {{"n", 20}, {"cells", {0, 1, 21, 399}}}}};
  const auto stored = post(grid);
  REQUIRE(stored);
  CHECK(stored->status == 201);
  CHECK(json::parse(stored->body)["overwrote"] == false);

  const json fetched = json::parse(r.client.Get("/annotations")->body);
  REQUIRE(fetched.size() == 1);
  CHECK(fetched[0] == grid);
  CHECK(fetched[0]["grid"]["cells"] == json{0, 1, 21, 399});  // the cells, not a percentage

  const json choice{{"question_id", "SQuID_0001"}, {"annotator_id", "w1"}, {"kind", "category"}, {"value", "yes"}};
  CHECK(post(choice)->status == 201);
  const json changed{{"question_id", "SQuID_0001"}, {"annotator_id", "w1"}, {"kind", "category"}, {"value", "no"}};
  const auto over = post(changed);
  CHECK(over->status == 201);
  CHECK(json::parse(over->body)["overwrote"] == true);
  const json after = json::parse(r.client.Get("/annotations")->body);
  REQUIRE(after.size() == 2);
  CHECK(after[1] == changed);
  const std::string audit = slurp(dir / "annotations.jsonl.audit");
  CHECK(audit.find("\"overwrite\"") != std::string::npos);
  CHECK(audit.find("SQuID_0001") != std::string::npos);

  auto rejected = [&](const json& j, const std::string& needle) {
    const auto res = post(j);
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(res->body.find(needle) != std::string::npos);
  };
  json coarse = grid;
  coarse["grid"]["n"] = 8;
  rejected(coarse, "resolution");
  json outside = grid;
  outside["grid"]["cells"] = {400};
  rejected(outside, "cell");
  rejected({{"annotator_id", "w1"}, {"kind", "number"}, {"value", 1}}, "question_id");
  rejected({{"question_id", "SQuID_0002"}, {"annotator_id", "w1"}, {"kind", "ruler"}, {"value", 1}}, "ruler");
  rejected({{"question_id", "SQuID_7777"}, {"annotator_id", "w1"}, {"kind", "number"}, {"value", 1}}, "SQuID_7777");
  const auto junk = r.client.Post("/annotations", "{not json", "application/json");
  CHECK(junk->status == 400);

  CHECK(json::parse(r.client.Get("/annotations")->body).size() == 2);
}

TEST_CASE("annotation store under concurrent submissions") {
  const auto dir = oracle::scratch_dir("svc_concurrent");
  AnnotationStore store(dir / "log.jsonl");
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t)
    workers.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) store.submit({"q" + std::to_string(i), "w" + std::to_string(t), double(i), false});
    });
  for (auto& w : workers) w.join();
  const auto records = store.records();
  CHECK(records.size() == 100);
}
