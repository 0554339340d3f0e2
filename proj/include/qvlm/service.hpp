#pragma once

#include "qvlm/benchgen.hpp"
#include "qvlm/calibration.hpp"
#include "qvlm/plan.hpp"
#include "qvlm/store.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace qvlm {

/// Append-only JSONL log of annotation records. A later record for the same
/// (question, annotator) pair replaces the earlier one when read back; each
/// replacement is noted in "<log>.audit".
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path log);

  /// Returns true when the submission replaced an earlier record.
  bool submit(const AnnotationRecord& record);
  std::vector<AnnotationRecord> records() const;

 private:
  std::filesystem::path log_;
  mutable std::mutex mu_;
};

/// How a task is answered in the annotation interface.
std::string answer_mode(QuestionType type);
nlohmann::json task_json(const QuestionRecord& q);

struct ServiceConfig {
  std::shared_ptr<const BackendStore> store;
  std::vector<QuestionRecord> tasks;
  std::filesystem::path annotations = "annotations.jsonl";
};

/// Routes: POST /segment, GET /tasks, GET /tasks/{id}, POST /annotations, GET /annotations.
class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  ServiceConfig cfg_;
  AnnotationStore annotations_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

/// Segmentation backend reached over HTTP (POST /segment).
class HttpBackend : public SegmentationBackend {
 public:
  explicit HttpBackend(std::string base_url);
  SegmentationResult segment(const std::string& image_ref, const std::vector<std::string>& topics,
                             std::int64_t min_area_pixels, double gsd) override;

 private:
  std::string base_url_;
};

}  // namespace qvlm
