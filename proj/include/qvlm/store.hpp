#pragma once

#include "qvlm/fusion.hpp"
#include "qvlm/plan.hpp"
#include "qvlm/raster.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace qvlm {

/// The eight topics a model may request.
const std::vector<std::string>& standard_topics();

struct LogitFile {
  std::string model_id;
  std::vector<std::string> classes;
  std::filesystem::path file;  // raw float32 planes
};

struct ImageEntry {
  std::string id;
  std::string image;   // dataset-facing path, e.g. "earthvqa_0.3m/0001.png"
  std::string source;
  double gsd = 1.0;
  int width = 0;
  int height = 0;
  std::map<std::string, std::filesystem::path> masks;
  std::vector<LogitFile> logits;
  std::optional<std::filesystem::path> rules;
  int mode_filter = 5;
  std::vector<std::string> composites;  // composite topics enabled for this image
};

/// File-backed segmentation evidence described by a manifest:
///
///   {"images": [{"id", "image", "source", "gsd", "width", "height",
///                "masks": {topic: png}, "logits": [{"model", "classes", "file"}],
///                "rules": json?, "mode_filter": k, "composites": [name]}],
///    "composites": {name: [topic, ...]}}
///
/// Relative paths resolve against the manifest's directory. A topic resolves
/// to its mask file, else to the union of a composite's parts, else through
/// logit fusion, else (if it is a known topic) to an empty mask.
class BackendStore {
 public:
  static std::shared_ptr<BackendStore> load(const std::filesystem::path& manifest);

  const std::vector<ImageEntry>& images() const { return images_; }
  const ImageEntry& find(const std::string& ref) const;  // by id or image path
  bool known_topic(const std::string& topic) const;
  std::vector<std::string> topics() const;  // standard topics, then composites

  BinaryMask mask(const std::string& ref, const std::string& topic) const;

  /// Components of each requested topic in request order; ids run 0..n-1
  /// across the whole result. gsd <= 0 means the image's own gsd.
  SegmentationResult segment(const std::string& ref, const std::vector<std::string>& topics,
                             std::int64_t min_area_pixels, double gsd) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  BinaryMask resolve(const ImageEntry& e, const std::string& topic, int depth) const;
  BinaryMask fused(const ImageEntry& e, const std::string& topic) const;

  std::filesystem::path root_;
  std::vector<ImageEntry> images_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::vector<std::string>> composites_;

  mutable std::mutex mu_;
  mutable std::map<std::pair<std::string, std::string>, BinaryMask> cache_;
};

/// In-process backend over a store.
class FileBackend : public SegmentationBackend {
 public:
  explicit FileBackend(std::shared_ptr<const BackendStore> store) : store_(std::move(store)) {}
  SegmentationResult segment(const std::string& image_ref, const std::vector<std::string>& topics,
                             std::int64_t min_area_pixels, double gsd) override;

 private:
  std::shared_ptr<const BackendStore> store_;
};

}  // namespace qvlm
