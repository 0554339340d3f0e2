#include "qvlm/service.hpp"

#include "qvlm/json_io.hpp"

#include "httplib.h"
#include "json.hpp"

#include <fstream>
#include <map>

namespace qvlm {

using nlohmann::json;

AnnotationStore::AnnotationStore(std::filesystem::path log) : log_(std::move(log)) {}

bool AnnotationStore::submit(const AnnotationRecord& record) {
  record.validate();
  std::lock_guard lock(mu_);
  bool replaced = false;
  for (const AnnotationRecord& r : read_annotations(log_))
    if (r.question_id == record.question_id && r.annotator_id == record.annotator_id) replaced = true;
  append_annotation(log_, record);
  if (replaced) {
    std::ofstream audit(log_.string() + ".audit", std::ios::app);
    audit << json{{"event", "overwrite"}, {"question_id", record.question_id},
                  {"annotator_id", record.annotator_id}, {"new", to_json(record)}}
                 .dump()
          << "\n";
  }
  return replaced;
}

std::vector<AnnotationRecord> AnnotationStore::records() const {
  std::lock_guard lock(mu_);
  std::vector<AnnotationRecord> out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (AnnotationRecord& r : read_annotations(log_)) {
    auto key = std::make_pair(r.question_id, r.annotator_id);
    if (auto it = slot.find(key); it != slot.end()) {
      out[it->second] = std::move(r);
    } else {
      slot.emplace(key, out.size());
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string answer_mode(QuestionType type) {
  if (is_categorical(type)) return "choice";
  switch (info(type).family) {
    case RangeFamily::Percentage:
    case RangeFamily::ProximityPercentage:
      return "grid";
    default:
      return "number";
  }
}

json task_json(const QuestionRecord& q) {
  json t{{"id", q.id},
         {"question", q.question},
         {"image", q.image},
         {"type", std::string(to_string(q.type))},
         {"gsd", q.gsd},
         {"answer_mode", answer_mode(q.type)},
         {"grid", {{"min", kMinGridResolution}, {"max", kMaxGridResolution}}}};
  if (q.type == QuestionType::Fragmentation)
    t["choices"] = {"connected", "fragmented"};
  else if (is_categorical(q.type))
    t["choices"] = {"yes", "no"};
  return t;
}

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  res.status = status;
  res.set_content(extra.dump(), "application/json");
}

}  // namespace

Service::Service(ServiceConfig cfg)
    : cfg_(std::move(cfg)), annotations_(cfg_.annotations), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
  httplib::Server& s = *server_;

  s.Post("/segment", [this](const httplib::Request& req, httplib::Response& res) {
    if (!cfg_.store) return reply_error(res, 503, "no segmentation store loaded");
    std::string image;
    std::vector<std::string> topics;
    std::int64_t min_area = 0;
    double gsd = 0.0;
    try {
      const json body = json::parse(req.body);
      image = body.at("image").get<std::string>();
      topics = body.at("topics").get<std::vector<std::string>>();
      min_area = body.value("min_area_pixels", std::int64_t{0});
      gsd = body.value("gsd", 0.0);
    } catch (const json::exception& e) {
      return reply_error(res, 400, std::string("bad segment request: ") + e.what());
    }
    for (const std::string& t : topics)
      if (!cfg_.store->known_topic(t)) return reply_error(res, 400, "unknown topic '" + t + "'", {{"topic", t}});
    try {
      const SegmentationResult r = cfg_.store->segment(image, topics, min_area, gsd);
      res.set_content(to_json(r).dump(), "application/json");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) return reply_error(res, 404, e.what(), {{"image", image}});
      if (e.code() == ErrorCode::UnknownTopic) return reply_error(res, 400, e.what());
      reply_error(res, 500, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  });

  s.Get("/tasks", [this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const QuestionRecord& q : cfg_.tasks) out.push_back(task_json(q));
    res.set_content(out.dump(), "application/json");
  });

  s.Get(R"(/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    for (const QuestionRecord& q : cfg_.tasks)
      if (q.id == id) return res.set_content(task_json(q).dump(), "application/json");
    reply_error(res, 404, "no task '" + id + "'");
  });

  s.Post("/annotations", [this](const httplib::Request& req, httplib::Response& res) {
    AnnotationRecord r;
    try {
      r = annotation_from_json(json::parse(req.body));
    } catch (const json::exception& e) {
      return reply_error(res, 400, std::string("malformed annotation: ") + e.what());
    } catch (const Error& e) {
      return reply_error(res, 400, e.what());
    }
    if (!cfg_.tasks.empty()) {
      bool known = false;
      for (const QuestionRecord& q : cfg_.tasks) known = known || q.id == r.question_id;
      if (!known) return reply_error(res, 400, "no task '" + r.question_id + "'");
    }
    try {
      const bool replaced = annotations_.submit(r);
      res.status = 201;
      res.set_content(json{{"status", "stored"}, {"overwrote", replaced}}.dump(), "application/json");
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  });

  s.Get("/annotations", [this](const httplib::Request&, httplib::Response& res) {
    try {
      json out = json::array();
      for (const AnnotationRecord& r : annotations_.records()) out.push_back(to_json(r));
      res.set_content(out.dump(), "application/json");
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  });
}

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0)
    bound = server_->bind_to_any_port(host);
  else if (!server_->bind_to_port(host, port))
    bound = -1;
  if (bound < 0) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::run(const std::string& host, int port) {
  if (!server_->listen(host, port)) fail(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

HttpBackend::HttpBackend(std::string base_url) : base_url_(std::move(base_url)) {}

SegmentationResult HttpBackend::segment(const std::string& image_ref, const std::vector<std::string>& topics,
                                        std::int64_t min_area_pixels, double gsd) {
  httplib::Client client(base_url_);
  client.set_read_timeout(120);
  const json body{{"image", image_ref}, {"topics", topics}, {"min_area_pixels", min_area_pixels}, {"gsd", gsd}};
  auto res = client.Post("/segment", body.dump(), "application/json");
  if (!res) fail(ErrorCode::Transport, "segmentation service unreachable: " + httplib::to_string(res.error()));

  std::string message = res->body;
  if (res->status != 200) {
    try {
      message = json::parse(res->body).at("error").get<std::string>();
    } catch (const json::exception&) {
    }
  }
  if (res->status == 404) fail(ErrorCode::NotFound, message);
  if (res->status == 400 && message.rfind("unknown topic", 0) == 0) fail(ErrorCode::UnknownTopic, message);
  if (res->status != 200) fail(ErrorCode::Backend, "segmentation service HTTP " + std::to_string(res->status) + ": " + message);
  try {
    return segmentation_from_json(json::parse(res->body), gsd);
  } catch (const json::exception& e) {
    fail(ErrorCode::Backend, std::string("malformed segmentation response: ") + e.what());
  }
}

}  // namespace qvlm
