#include "qvlm/fusion.hpp"

#include "json.hpp"

#include <fstream>

namespace qvlm {

using nlohmann::json;

std::vector<ClassMergeRule> default_merge_rules() {
  auto sem = [](std::string out, std::vector<MergeInput> in) {
    return ClassMergeRule{std::move(out), std::move(in), ClassKind::Semantic};
  };
  return {
      sem("urban", {{"DG", "urban", 1.0}, {"EV", "road", 1.0}, {"EV", "building", 1.0}}),
      sem("forest", {{"DG", "forest", 1.0}, {"EV", "forest", 1.0}}),
      sem("agric", {{"DG", "agric", 1.0}, {"EV", "agric", 1.0}}),
      sem("grass", {{"DG", "grass", 1.0}}),
      sem("barren", {{"DG", "barren", 1.0}, {"EV", "barren", 1.0}}),
      sem("water", {{"DG", "water", 1.0}, {"EV", "water", 1.0}}),
      sem("solar", {{"PV", "solar", 1.0}}),
      ClassMergeRule{"roof", {{"AIRS", "roof", 1.0}}, ClassKind::Instance},
  };
}

std::vector<ClassMergeRule> load_merge_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open merge rules '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, "merge rules '" + path.string() + "': " + e.what());
  }
  std::vector<ClassMergeRule> rules;
  try {
    for (const json& r : doc.at("rules")) {
      ClassMergeRule rule;
      rule.output_class = r.at("output").get<std::string>();
      const std::string kind = r.value("kind", "semantic");
      if (kind == "semantic")
        rule.kind = ClassKind::Semantic;
      else if (kind == "instance")
        rule.kind = ClassKind::Instance;
      else
        fail(ErrorCode::Config, "merge rule '" + rule.output_class + "': unknown kind '" + kind + "'");
      for (const json& i : r.at("inputs"))
        rule.inputs.push_back({i.at("model").get<std::string>(), i.at("class").get<std::string>(),
                               i.value("weight", 1.0)});
      if (rule.inputs.empty())
        fail(ErrorCode::Config, "merge rule '" + rule.output_class + "' has no inputs");
      for (const auto& i : rule.inputs)
        if (!std::isfinite(i.weight) || i.weight < 0)
          fail(ErrorCode::Config, "merge rule '" + rule.output_class + "' has an invalid weight");
      rules.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, "merge rules '" + path.string() + "': " + e.what());
  }
  return rules;
}

void save_merge_rules(const std::vector<ClassMergeRule>& rules, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& r : rules) {
    json inputs = json::array();
    for (const auto& i : r.inputs)
      inputs.push_back({{"model", i.model_id}, {"class", i.class_name}, {"weight", i.weight}});
    arr.push_back({{"output", r.output_class},
                   {"kind", r.kind == ClassKind::Semantic ? "semantic" : "instance"},
                   {"inputs", inputs}});
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write merge rules '" + path.string() + "'");
  out << json{{"rules", arr}}.dump(2) << '\n';
}

ClassMap mode_filter(const ClassMap& map, int k) {
  if (k < 1 || k % 2 == 0) fail(ErrorCode::Domain, "mode_filter window must be odd and >= 1");
  if (k == 1) return map;
  const int h = map.height(), w = map.width(), r = k / 2;
  const int classes = int(map.classes.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (map.labels(y, x) < 0 || map.labels(y, x) >= classes)
        fail(ErrorCode::Structural, "class map label out of range");

  // Per-class summed-area tables give exact window counts.
  std::vector<Raster<std::int32_t>> sat;
  sat.reserve(std::size_t(classes));
  for (int c = 0; c < classes; ++c) {
    Raster<std::int32_t> s = Raster<std::int32_t>::Zero(h + 1, w + 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        s(y + 1, x + 1) = (map.labels(y, x) == c) + s(y, x + 1) + s(y + 1, x) - s(y, x);
    sat.push_back(std::move(s));
  }

  ClassMap out = map;
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const int own = map.labels(y, x);
      auto count = [&](int c) {
        const auto& s = sat[std::size_t(c)];
        return s(y1, x1) - s(y0, x1) - s(y1, x0) + s(y0, x0);
      };
      int best = own;
      int best_count = count(own);
      for (int c = 0; c < classes; ++c) {
        if (c == own) continue;
        if (count(c) > best_count) {
          best = c;
          best_count = count(c);
        }
      }
      out.labels(y, x) = best;
    }
  }
  return out;
}

std::vector<BinaryMask> masks_from_classmap(const ClassMap& map) {
  std::vector<BinaryMask> masks;
  for (std::size_t c = 0; c < map.classes.size(); ++c) {
    BinaryMask m(map.width(), map.height(), map.classes[c]);
    m.bits = (map.labels == std::int32_t(c)).cast<std::uint8_t>();
    masks.push_back(std::move(m));
  }
  return masks;
}

std::vector<Shape> split_instances(const BinaryMask& mask, std::int64_t min_area_pixels, double gsd,
                                   Connectivity connectivity) {
  return connected_components(mask, connectivity, min_area_pixels, gsd);
}

}  // namespace qvlm
