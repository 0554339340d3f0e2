#include "qvlm/store.hpp"

#include "qvlm/error.hpp"
#include "qvlm/mask_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>

namespace qvlm {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& standard_topics() {
  static const std::vector<std::string> topics{"urban", "forest", "agric", "grass",
                                               "barren", "water", "solar", "roof"};
  return topics;
}

namespace {

fs::path resolve_path(const fs::path& root, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) fail(ErrorCode::Io, what + ": missing file '" + p.string() + "'");
}

}  // namespace

std::shared_ptr<BackendStore> BackendStore::load(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorCode::Io, "cannot open store manifest '" + manifest.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, "store manifest: " + std::string(e.what()));
  }

  auto store = std::make_shared<BackendStore>();
  store->root_ = manifest.parent_path();
  try {
    const json composites = doc.value("composites", json::object());
    for (auto& [name, parts] : composites.items())
      store->composites_[name] = parts.get<std::vector<std::string>>();

    for (const json& j : doc.at("images")) {
      ImageEntry e;
      e.id = j.at("id").get<std::string>();
      e.image = j.value("image", e.id);
      e.source = j.value("source", "");
      e.gsd = j.at("gsd").get<double>();
      e.width = j.at("width").get<int>();
      e.height = j.at("height").get<int>();
      e.mode_filter = j.value("mode_filter", 5);
      const std::string where = "image '" + e.id + "'";
      if (e.width <= 0 || e.height <= 0 || !(e.gsd > 0))
        fail(ErrorCode::Config, where + ": invalid dimensions or gsd");
      const json masks = j.value("masks", json::object());
      for (auto& [topic, p] : masks.items()) {
        e.masks[topic] = resolve_path(store->root_, p.get<std::string>());
        require_file(e.masks[topic], where);
      }
      for (const json& l : j.value("logits", json::array())) {
        LogitFile f{l.at("model").get<std::string>(), l.at("classes").get<std::vector<std::string>>(),
                    resolve_path(store->root_, l.at("file").get<std::string>())};
        require_file(f.file, where);
        const auto expect = std::uintmax_t(e.width) * e.height * f.classes.size() * sizeof(float);
        if (fs::file_size(f.file) != expect)
          fail(ErrorCode::Config, where + ": logit file '" + f.file.string() + "' does not match dimensions");
        e.logits.push_back(std::move(f));
      }
      if (j.contains("rules")) {
        e.rules = resolve_path(store->root_, j["rules"].get<std::string>());
        require_file(*e.rules, where);
      }
      e.composites = j.value("composites", std::vector<std::string>{});
      for (const auto& c : e.composites)
        if (!store->composites_.count(c)) fail(ErrorCode::Config, where + ": unknown composite '" + c + "'");
      if (store->index_.count(e.id) || store->index_.count(e.image))
        fail(ErrorCode::Config, where + ": duplicate image");
      store->index_[e.id] = store->images_.size();
      store->index_[e.image] = store->images_.size();
      store->images_.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, "store manifest: " + std::string(e.what()));
  }
  return store;
}

const ImageEntry& BackendStore::find(const std::string& ref) const {
  auto it = index_.find(ref);
  if (it == index_.end()) fail(ErrorCode::NotFound, "image '" + ref + "' is not in the store");
  return images_[it->second];
}

bool BackendStore::known_topic(const std::string& topic) const {
  const auto& std_topics = standard_topics();
  return std::find(std_topics.begin(), std_topics.end(), topic) != std_topics.end() ||
         composites_.count(topic) > 0;
}

std::vector<std::string> BackendStore::topics() const {
  std::vector<std::string> out = standard_topics();
  for (const auto& [name, parts] : composites_) out.push_back(name);
  return out;
}

BinaryMask BackendStore::mask(const std::string& ref, const std::string& topic) const {
  if (!known_topic(topic)) fail(ErrorCode::UnknownTopic, "unknown topic '" + topic + "'");
  const ImageEntry& e = find(ref);
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find({e.id, topic}); it != cache_.end()) return it->second;
  }
  BinaryMask m = resolve(e, topic, 0);
  std::lock_guard lock(mu_);
  cache_.emplace(std::make_pair(e.id, topic), m);
  return m;
}

BinaryMask BackendStore::resolve(const ImageEntry& e, const std::string& topic, int depth) const {
  if (depth > 8) fail(ErrorCode::Config, "composite topics nest too deeply");
  if (auto it = e.masks.find(topic); it != e.masks.end()) {
    BinaryMask m = read_mask_png(it->second, topic);
    if (m.width() != e.width || m.height() != e.height)
      fail(ErrorCode::Structural, "mask '" + it->second.string() + "' does not match image dimensions");
    return m;
  }
  if (std::find(e.composites.begin(), e.composites.end(), topic) != e.composites.end()) {
    BinaryMask out(e.width, e.height, topic);
    for (const std::string& part : composites_.at(topic)) out = mask_union(out, resolve(e, part, depth + 1));
    out.class_label = topic;
    return out;
  }
  if (!e.logits.empty()) return fused(e, topic);
  return BinaryMask(e.width, e.height, topic);
}

BinaryMask BackendStore::fused(const ImageEntry& e, const std::string& topic) const {
  const std::vector<ClassMergeRule> rules = e.rules ? load_merge_rules(*e.rules) : default_merge_rules();
  auto rule = std::find_if(rules.begin(), rules.end(), [&](const ClassMergeRule& r) { return r.output_class == topic; });
  if (rule == rules.end()) return BinaryMask(e.width, e.height, topic);

  std::vector<LogitMap> maps;
  for (const LogitFile& f : e.logits) {
    LogitMap m;
    m.model_id = f.model_id;
    m.width = e.width;
    m.height = e.height;
    m.classes = f.classes;
    m.planes = read_float_planes(f.file, e.width, e.height, int(f.classes.size()));
    maps.push_back(std::move(m));
  }
  const std::span<const LogitMap> view(maps);
  if (rule->kind == ClassKind::Instance) return instance_mask(view, *rule);

  const ClassMap labels = mode_filter(fuse_logits(view, std::span<const ClassMergeRule>(rules)), e.mode_filter);
  for (BinaryMask& m : masks_from_classmap(labels))
    if (m.class_label == topic) return m;
  return BinaryMask(e.width, e.height, topic);
}

SegmentationResult BackendStore::segment(const std::string& ref, const std::vector<std::string>& topics,
                                         std::int64_t min_area_pixels, double gsd) const {
  for (const std::string& t : topics)
    if (!known_topic(t)) fail(ErrorCode::UnknownTopic, "unknown topic '" + t + "'");
  if (min_area_pixels < 0) fail(ErrorCode::Domain, "min_area_pixels must be >= 0");
  const ImageEntry& e = find(ref);
  SegmentationResult r;
  r.image_width = e.width;
  r.image_height = e.height;
  r.total_pixels = std::int64_t(e.width) * e.height;
  r.gsd = gsd > 0 ? gsd : e.gsd;
  int next_id = 0;
  for (const std::string& t : topics) {
    for (Shape& s : connected_components(mask(ref, t), Connectivity::Eight, min_area_pixels, r.gsd)) {
      s.id = next_id++;
      s.class_type = t;
      r.shapes.push_back(std::move(s));
    }
  }
  return r;
}

SegmentationResult FileBackend::segment(const std::string& image_ref, const std::vector<std::string>& topics,
                                        std::int64_t min_area_pixels, double gsd) {
  return store_->segment(image_ref, topics, min_area_pixels, gsd);
}

}  // namespace qvlm
