#include "qvlm/fixtures.hpp"

#include "qvlm/fusion.hpp"
#include "qvlm/mask_io.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace qvlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Dice {
 public:
  explicit Dice(std::uint64_t seed) : rng_(seed) {}
  int below(int n) { return int(bounded_draw(rng_, std::uint64_t(n))); }
  int between(int lo, int hi) { return lo + below(hi - lo + 1); }
  double unit() { return double(rng_() >> 11) * 0x1p-53; }
  bool chance(double p) { return unit() < p; }

 private:
  std::mt19937_64 rng_;
};

struct Rect {
  int x, y, w, h;
  bool touches(const Rect& o) const {
    return x - 1 <= o.x + o.w && o.x <= x + w && y - 1 <= o.y + o.h && o.y <= y + h;
  }
};

void fill(BinaryMask& m, const Rect& r) {
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) m.set(x, y);
}

// Rectangles with at least one pixel of background between any two.
std::vector<Rect> scatter_rects(Dice& dice, int width, int height, int count, int min_side, int max_side) {
  std::vector<Rect> out;
  for (int tries = 0; int(out.size()) < count && tries < count * 50; ++tries) {
    const int w = dice.between(min_side, max_side), h = dice.between(min_side, max_side);
    const Rect r{dice.below(width - w), dice.below(height - h), w, h};
    bool clear = true;
    for (const Rect& o : out) clear = clear && !r.touches(o);
    if (clear) out.push_back(r);
  }
  return out;
}

// Warped Voronoi partition with small blobs sprinkled on top; values index classes.
Raster<int> land_cover(Dice& dice, int width, int height, int nclasses) {
  std::vector<int> allowed(static_cast<std::size_t>(nclasses));
  for (int c = 0; c < nclasses; ++c) allowed[std::size_t(c)] = c;
  if (dice.chance(0.35)) allowed.erase(allowed.begin() + dice.below(nclasses));
  if (dice.chance(0.15)) allowed.erase(allowed.begin() + dice.below(int(allowed.size())));
  auto pick = [&] { return allowed[std::size_t(dice.below(int(allowed.size())))]; };

  struct Seed {
    double x, y;
    int cls;
  };
  std::vector<Seed> seeds(std::size_t(dice.between(6, 24)));
  for (Seed& s : seeds) s = {dice.unit() * width, dice.unit() * height, pick()};
  const double p1 = dice.unit() * 6.283, p2 = dice.unit() * 6.283, amp = 0.02 * width;

  Raster<int> labels(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double wx = x + amp * std::sin(y / 23.0 + p1) + 0.4 * amp * std::sin(y / 7.0 + p2);
      const double wy = y + amp * std::sin(x / 29.0 + p2) + 0.4 * amp * std::sin(x / 9.0 + p1);
      double best = 1e300;
      int cls = 0;
      for (const Seed& s : seeds) {
        const double d = (wx - s.x) * (wx - s.x) + (wy - s.y) * (wy - s.y);
        if (d < best) best = d, cls = s.cls;
      }
      labels(y, x) = cls;
    }

  const int blobs = dice.between(0, 50);
  for (int b = 0; b < blobs; ++b) {
    const int cls = pick();
    const int r = dice.chance(0.5) ? dice.between(2, width / 40) : dice.between(width / 40, width / 7);
    const int cx = dice.below(width), cy = dice.below(height);
    for (int y = std::max(0, cy - r); y <= std::min(height - 1, cy + r); ++y)
      for (int x = std::max(0, cx - r); x <= std::min(width - 1, cx + r); ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) labels(y, x) = cls;
  }
  return labels;
}

BinaryMask class_mask(const Raster<int>& labels, int cls, const std::string& name) {
  BinaryMask m(int(labels.cols()), int(labels.rows()), name);
  m.bits = (labels == cls).cast<std::uint8_t>();
  return m;
}

struct Writer {
  fs::path dir;
  json images = json::array();

  std::string save(const BinaryMask& m, const std::string& stem, const std::string& topic) {
    const std::string rel = "masks/" + stem + "_" + topic + ".png";
    write_mask_png(m, dir / rel);
    return rel;
  }

  void save_planes(const std::vector<Raster<float>>& planes, const std::string& rel) {
    write_float_planes(planes, dir / rel);
  }
};

std::string image_name(const char* source_dir, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/%04d.png", source_dir, index);
  return buf;
}

json entry(const std::string& image, const std::string& source, double gsd, int size) {
  const std::string id = fs::path(image).parent_path().string() + "_" + fs::path(image).stem().string();
  return {{"id", id}, {"image", image}, {"source", source}, {"gsd", gsd}, {"width", size}, {"height", size},
          {"masks", json::object()}};
}

void land_cover_image(Writer& w, Dice& dice, const char* source_dir, const std::string& source, int index,
                      double gsd, int size, const std::vector<std::string>& classes, int roofs, int roof_max,
                      bool vegetation) {
  const std::string image = image_name(source_dir, index);
  json e = entry(image, source, gsd, size);
  const std::string stem = e["id"];
  const Raster<int> labels = land_cover(dice, size, size, int(classes.size()));
  for (std::size_t c = 0; c < classes.size(); ++c)
    e["masks"][classes[c]] = w.save(class_mask(labels, int(c), classes[c]), stem, classes[c]);
  if (roofs > 0) {
    BinaryMask roof(size, size, "roof");
    for (const Rect& r : scatter_rects(dice, size, size, dice.between(0, roofs), 8, roof_max)) fill(roof, r);
    e["masks"]["roof"] = w.save(roof, stem, "roof");
  }
  if (vegetation) e["composites"] = {"vegetation"};
  w.images.push_back(std::move(e));
}

void solar_image(Writer& w, Dice& dice, int index) {
  const int size = 256;
  const std::string image = image_name("solar_0.3m", index);
  json e = entry(image, "solar", 0.3, size);
  const std::string stem = e["id"];
  BinaryMask solar(size, size, "solar");
  const int arrays = dice.chance(0.2) ? 0 : dice.between(1, 9);
  for (const Rect& r : scatter_rects(dice, size, size, arrays, 6, 90)) fill(solar, r);
  e["masks"]["solar"] = w.save(solar, stem, "solar");
  w.images.push_back(std::move(e));
}

// Scores are 2 for the true class and 0 otherwise, with noise small enough
// that the argmax is always the true class.
Raster<float> score_plane(Dice& dice, const Raster<int>& labels, int cls, float hit, float miss) {
  Raster<float> p(labels.rows(), labels.cols());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p(i) = (labels(i) == cls ? hit : miss) + float(dice.unit() * 1.2 - 0.6);
  return p;
}

void logit_image(Writer& w, Dice& dice, int index, bool with_ev) {
  const int size = 256;
  const std::string image = image_name("naip_1.0m", index);
  json e = entry(image, "naip", 1.0, size);
  const std::string stem = e["id"];
  e.erase("masks");

  const std::vector<std::string> dg{"urban", "agric", "grass", "forest", "water", "barren"};
  const Raster<int> labels = land_cover(dice, size, size, int(dg.size()));
  std::vector<Raster<float>> planes;
  for (std::size_t c = 0; c < dg.size(); ++c) planes.push_back(score_plane(dice, labels, int(c), 2.0f, 0.0f));
  w.save_planes(planes, "logits/" + stem + "_DG.f32");
  json logits = json::array({{{"model", "DG"}, {"classes", dg}, {"file", "logits/" + stem + "_DG.f32"}}});

  if (with_ev) {
    // urban, agric, forest, water and barren in the DG index space
    const std::vector<std::pair<std::string, int>> ev{{"building", 0}, {"road", -1},  {"agric", 1},
                                                      {"forest", 3},   {"water", 4}, {"barren", 5}};
    std::vector<Raster<float>> ev_planes;
    std::vector<std::string> ev_classes;
    for (const auto& [name, cls] : ev) {
      ev_classes.push_back(name);
      ev_planes.push_back(score_plane(dice, labels, cls, 1.8f, -0.5f));
    }
    w.save_planes(ev_planes, "logits/" + stem + "_EV.f32");
    logits.push_back({{"model", "EV"}, {"classes", ev_classes}, {"file", "logits/" + stem + "_EV.f32"}});
  }

  Raster<int> roof_labels = Raster<int>::Zero(size, size);
  for (const Rect& r : scatter_rects(dice, size, size, dice.between(0, 25), 5, 18))
    roof_labels.block(r.y, r.x, r.h, r.w).setConstant(1);
  w.save_planes({Raster<float>::Zero(size, size), score_plane(dice, roof_labels, 1, 1.5f, -1.5f)},
                "logits/" + stem + "_AIRS.f32");
  logits.push_back({{"model", "AIRS"}, {"classes", {"background", "roof"}}, {"file", "logits/" + stem + "_AIRS.f32"}});

  w.save_planes({Raster<float>::Zero(size, size), Raster<float>::Constant(size, size, -2.0f)},
                "logits/" + stem + "_PV.f32");
  logits.push_back({{"model", "PV"}, {"classes", {"background", "solar"}}, {"file", "logits/" + stem + "_PV.f32"}});

  if (!with_ev) {
    std::vector<ClassMergeRule> rules = default_merge_rules();
    for (ClassMergeRule& r : rules)
      std::erase_if(r.inputs, [](const MergeInput& in) { return in.model_id == "EV"; });
    save_merge_rules(rules, w.dir / ("logits/" + stem + "_rules.json"));
    e["rules"] = "logits/" + stem + "_rules.json";
  }
  e["logits"] = logits;
  e["mode_filter"] = 5;
  w.images.push_back(std::move(e));
}

void write_manifest(const Writer& w, const json& composites) {
  json doc{{"images", w.images}};
  if (!composites.empty()) doc["composites"] = composites;
  std::ofstream out(w.dir / "manifest.json");
  if (!out) fail(ErrorCode::Io, "cannot write " + (w.dir / "manifest.json").string());
  out << doc.dump(2) << "\n";
}

}  // namespace

fs::path write_synthetic_corpus(const fs::path& dir, const CorpusOptions& opt) {
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "logits");
  Writer w{dir};
  Dice dice(opt.seed);

  const std::vector<std::string> ev{"urban", "forest", "agric", "barren", "water"};
  const std::vector<std::string> dg{"urban", "forest", "agric", "grass", "barren", "water"};
  int index = 1;
  for (int i = 0; i < opt.earthvqa; ++i)
    land_cover_image(w, dice, "earthvqa_0.3m", "earthvqa", index++, 0.3, 768, ev, 40, 48, false);
  for (int i = 0; i < opt.deepglobe; ++i)
    land_cover_image(w, dice, "deepglobe_0.5m", "deepglobe", index++, 0.5, 768, dg, 0, 0, true);
  for (int i = 0; i < opt.solar; ++i) solar_image(w, dice, index++);
  for (int i = 0; i < opt.naip; ++i) {
    if (i < opt.naip_logits)
      logit_image(w, dice, index++, i == 0);
    else
      land_cover_image(w, dice, "naip_1.0m", "naip", index++, 1.0, 384, dg, 20, 16, false);
  }

  write_manifest(w, {{"vegetation", {"forest", "grass"}}});
  return dir / "manifest.json";
}

fs::path write_roof_scene(const fs::path& dir) {
  fs::create_directories(dir / "masks");
  Writer w{dir};
  const int size = 1024;

  BinaryMask agric(size, size, "agric");
  fill(agric, {100, 100, 379, 378});
  fill(agric, {100, 478, 5, 1});

  BinaryMask roof(size, size, "roof");
  for (int i = 0; i < 7; ++i) fill(roof, {560 + 60 * i, 150, 36, 36});
  for (int i = 0; i < 6; ++i) fill(roof, {560 + 60 * i, 300, 20, 20});

  json e{{"id", "2923"},
         {"image", kRoofSceneImage},
         {"source", "earthvqa"},
         {"gsd", 0.3},
         {"width", size},
         {"height", size},
         {"masks", {{"agric", w.save(agric, "2923", "agric")}, {"roof", w.save(roof, "2923", "roof")}}}};
  w.images.push_back(std::move(e));
  write_manifest(w, json::object());
  return dir / "manifest.json";
}

QuestionParams roof_scene_params() {
  QuestionParams p;
  p.type = QuestionType::BuildingProximity;
  p.a = "roof";
  p.b = "agric";
  p.threshold_ha = kBuildingMinHa;
  p.distance_m = 200.0;
  return p;
}

QuestionRecord roof_scene_record() {
  QuestionRecord r;
  r.id = "SQuID_1144";
  r.image = kRoofSceneImage;
  r.question = "How many buildings (larger than 0.01 hectares) are within 200m of agricultural land? (GSD: 0.3m)";
  r.answer = 6.0;
  r.type = QuestionType::BuildingProximity;
  r.tier = 2;
  r.gsd = 0.3;
  r.acceptable_range = {false, 4.0, 8.0};
  r.source = "earthvqa";
  return r;
}

}  // namespace qvlm
