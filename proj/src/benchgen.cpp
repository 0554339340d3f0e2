#include "qvlm/benchgen.hpp"

#include "qvlm/error.hpp"
#include "qvlm/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace qvlm {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<ClassThreshold>& class_thresholds() {
  static const std::vector<ClassThreshold> table{
      {"urban", 0.1},   {"water", 0.1},    {"forest", 0.125}, {"agric", 0.125}, {"grass", 0.125},
      {"barren", 0.125}, {"vegetation", 0.125}, {"solar", 0.01}, {"roof", 0.01},
  };
  return table;
}

double class_threshold(const std::string& topic) {
  for (const auto& t : class_thresholds())
    if (t.topic == topic) return t.min_ha;
  fail(ErrorCode::UnknownTopic, "no size threshold for topic '" + topic + "'");
}

std::string topic_noun(const std::string& topic) {
  static const std::map<std::string, std::string> nouns{
      {"urban", "urban area"},   {"forest", "forest area"},  {"agric", "agricultural land"},
      {"grass", "grassland"},    {"barren", "barren land"},  {"water", "water bodies"},
      {"solar", "solar panels"}, {"roof", "buildings"},      {"vegetation", "vegetation"},
  };
  auto it = nouns.find(topic);
  return it == nouns.end() ? topic : it->second;
}

namespace {

// Shorter form used before "patches" and "area".
std::string short_noun(const std::string& topic) {
  static const std::map<std::string, std::string> nouns{
      {"urban", "urban"}, {"forest", "forest"}, {"water", "water"}, {"solar", "solar panel"}, {"roof", "building"}};
  auto it = nouns.find(topic);
  return it == nouns.end() ? topic_noun(topic) : it->second;
}

const std::vector<std::string>& land_cover() {
  static const std::vector<std::string> t{"urban", "forest", "agric", "grass", "barren", "water", "vegetation"};
  return t;
}

constexpr double kDistances[] = {50.0, 100.0, 200.0, 500.0};
constexpr double kComplexThresholds[] = {1.0, 2.0, 5.0};

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt_gsd(double g) {
  std::string s = fmt_g(g);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
  return s;
}

std::string replace_all(std::string s, const std::string& key, const std::string& value) {
  for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
    s.replace(pos, key.size(), value);
  return s;
}

const char* template_for(QuestionType t) {
  switch (t) {
    case QuestionType::Percentage:
      return "What percentage of the image is covered by {A}?";
    case QuestionType::Count:
      return "How many separate {A} regions are there? When counting, ignore patches smaller than {t} hectares.";
    case QuestionType::Size:
      return "What percentage of the image is covered by the largest {A} region (among regions larger than {t} "
             "hectares)?";
    case QuestionType::TotalArea:
      return "What is the total solar panel area in hectares (excluding installations smaller than {t} hectares)?";
    case QuestionType::BinaryComparison:
      return "Is there more {A} than {B} in this image?";
    case QuestionType::BinaryThreshold:
      return "Is there more than {L} of solar panels (excluding installations smaller than {t} hectares)?";
    case QuestionType::BinaryPresence:
      return "Are there any solar panels larger than {t} hectares in this image?";
    case QuestionType::BinaryMultiple:
      return "Are there multiple separate solar installations larger than {t} hectares?";
    case QuestionType::ProximityPercentage:
      return "What percentage of the image is {A} within {d}m of {B}?";
    case QuestionType::ProximityArea:
      return "What is the total {a} area (in hectares) within {d}m of {B}?";
    case QuestionType::Connectivity:
      return "How many separate {A} patches between {t} and 10 hectares are there?";
    case QuestionType::Fragmentation:
      return "Is the {A} connected or fragmented (more than 5 separate patches larger than {t} hectares)?";
    case QuestionType::BinaryProximity:
      return "Is there any {A} within {d}m of {B}?";
    case QuestionType::BuildingProximity:
      return "How many buildings (larger than 0.01 hectares) are within {d}m of {B}?";
    case QuestionType::BuildingFloodRisk:
      return "How many buildings (larger than 0.01 hectares) are located within 100m of water bodies (flood risk "
             "assessment)?";
    case QuestionType::BuildingFireRisk:
      return "How many buildings (larger than 0.01 hectares) are located within 50m of forest area (fire risk "
             "assessment)?";
    case QuestionType::PowerCalculation:
      return "Calculate the solar potential MW output assuming 200W/m² efficiency.";
    case QuestionType::ComplexMultiCondition:
      return "Find {a} patches larger than {t} hectares, then calculate how much of their area (in hectares) falls "
             "within {d}m of {B}";
    case QuestionType::ComplexVegetationWaterAccess:
      return "Find vegetation patches larger than 2 hectares, then calculate how much of their area (in hectares) "
             "falls within 200m of water bodies";
    case QuestionType::ComplexAgricultureWaterAccess:
      return "Find agricultural land patches larger than 2 hectares, then calculate how much of their area (in "
             "hectares) falls within 200m of water bodies";
    case QuestionType::ComplexUrbanFireRisk:
      return "Find urban patches larger than 1 hectare, then calculate how much of their area (in hectares) falls "
             "within 50m of vegetation (fire risk assessment)";
    case QuestionType::ComplexUrbanFloodRisk:
      return "Find urban patches larger than 1 hectare, then calculate how much of their area (in hectares) falls "
             "within 100m of water bodies (flood risk assessment)";
    case QuestionType::ComplexSizeFilter:
      return "What is the total area (in hectares) of solar installations larger than 5 hectares (utility-scale)?";
    case QuestionType::ComplexAverage:
      return "What is the average size of solar installations in hectares (excluding installations smaller than "
             "{t} hectares)?";
  }
  return "";
}

// Fixed parameters of the single-configuration types.
QuestionParams fixed_params(QuestionType t) {
  QuestionParams p;
  p.type = t;
  switch (t) {
    case QuestionType::TotalArea:
    case QuestionType::BinaryPresence:
    case QuestionType::BinaryMultiple:
    case QuestionType::ComplexAverage:
      p.a = "solar";
      p.threshold_ha = class_threshold("solar");
      break;
    case QuestionType::BinaryThreshold:
      p.a = "solar";
      p.threshold_ha = class_threshold("solar");
      p.level_ha = 1.0;
      break;
    case QuestionType::PowerCalculation:
      p.a = "solar";
      break;
    case QuestionType::ComplexSizeFilter:
      p.a = "solar";
      p.threshold_ha = 5.0;
      break;
    case QuestionType::BuildingFireRisk:
      p.a = "roof";
      p.b = "forest";
      p.threshold_ha = kBuildingMinHa;
      p.distance_m = 50.0;
      break;
    case QuestionType::BuildingFloodRisk:
      p.a = "roof";
      p.b = "water";
      p.threshold_ha = kBuildingMinHa;
      p.distance_m = 100.0;
      break;
    case QuestionType::ComplexVegetationWaterAccess:
      p.a = "vegetation";
      p.b = "water";
      p.threshold_ha = 2.0;
      p.distance_m = 200.0;
      break;
    case QuestionType::ComplexAgricultureWaterAccess:
      p.a = "agric";
      p.b = "water";
      p.threshold_ha = 2.0;
      p.distance_m = 200.0;
      break;
    case QuestionType::ComplexUrbanFireRisk:
      p.a = "urban";
      p.b = "vegetation";
      p.threshold_ha = 1.0;
      p.distance_m = 50.0;
      break;
    case QuestionType::ComplexUrbanFloodRisk:
      p.a = "urban";
      p.b = "water";
      p.threshold_ha = 1.0;
      p.distance_m = 100.0;
      break;
    default:
      break;
  }
  return p;
}

QuestionParams params(QuestionType t, std::string a, std::string b = {}, double threshold_ha = 0.0,
                      double distance_m = 0.0) {
  QuestionParams p;
  p.type = t;
  p.a = std::move(a);
  p.b = std::move(b);
  p.threshold_ha = threshold_ha;
  p.distance_m = distance_m;
  return p;
}

// Every parameterization of a type, in a fixed order.
std::vector<QuestionParams> parameterizations(QuestionType t) {
  std::vector<QuestionParams> out;
  const auto& lc = land_cover();
  auto single = [&](bool with_threshold) {
    for (const auto& a : lc) {
      out.push_back(params(t, a, {}, with_threshold ? class_threshold(a) : 0.0));
    }
  };
  auto pairs = [&](bool with_distance) {
    for (const auto& a : lc)
      for (const auto& b : lc) {
        if (a == b) continue;
        if (!with_distance) {
          out.push_back(params(t, a, b));
          continue;
        }
        for (double d : kDistances) out.push_back(params(t, a, b, 0.0, d));
      }
  };
  switch (t) {
    case QuestionType::Percentage:
      single(false);
      break;
    case QuestionType::Count:
    case QuestionType::Size:
    case QuestionType::Connectivity:
    case QuestionType::Fragmentation:
      single(true);
      break;
    case QuestionType::BinaryComparison:
      pairs(false);
      break;
    case QuestionType::ProximityPercentage:
    case QuestionType::ProximityArea:
    case QuestionType::BinaryProximity:
      pairs(true);
      break;
    case QuestionType::BuildingProximity:
      for (const auto& b : lc)
        for (double d : kDistances) out.push_back(params(t, "roof", b, kBuildingMinHa, d));
      break;
    case QuestionType::ComplexMultiCondition:
      for (const auto& a : lc)
        for (const auto& b : lc) {
          if (a == b) continue;
          for (double th : kComplexThresholds)
            for (double d : kDistances) out.push_back(params(t, a, b, th, d));
        }
      break;
    default:
      out.push_back(fixed_params(t));
  }
  return out;
}

// --- plan construction ------------------------------------------------------

Step seg(std::vector<std::string> topics) { return {"seg", step::Segment{std::move(topics), 0}}; }

Step select(std::string bind, const std::string& topic, std::optional<double> min_ha = {},
            std::optional<double> max_ha = {}) {
  return {std::move(bind), step::FilterArea{"seg", min_ha, max_ha, topic}};
}

Step agg(std::string src, AggregateOp op, double w = 0.0) {
  return {"answer", step::Aggregate{std::move(src), op, w}};
}

Step classify(std::string src, double threshold, std::string above, std::string below) {
  return {"answer", step::Classify{std::move(src), threshold, std::move(above), std::move(below)}};
}

void rebind_last(Plan& plan, std::string name) { plan.steps.back().bind = std::move(name); }

// --- ground truth helpers -----------------------------------------------------

const BinaryMask& mask_of(const MaskImage& img, const std::string& topic) {
  auto it = img.masks.find(topic);
  if (it == img.masks.end()) fail(ErrorCode::NotFound, "image '" + img.image + "' has no '" + topic + "' mask");
  return it->second;
}

// Components of a mask in scan order, kept if min < ha <= max.
std::vector<PixelSet> components(const MaskImage& img, const std::string& topic, std::optional<double> min_ha,
                                 std::optional<double> max_ha = {}) {
  std::vector<PixelSet> out;
  for (PixelSet& c : label_components(mask_of(img, topic), Connectivity::Eight)) {
    const double ha = area_hectares(c.size(), img.gsd);
    if (min_ha && !(ha > *min_ha)) continue;
    if (max_ha && !(ha <= *max_ha)) continue;
    out.push_back(std::move(c));
  }
  return out;
}

std::int64_t total_size(const std::vector<PixelSet>& sets) {
  std::int64_t n = 0;
  for (const auto& s : sets) n += s.size();
  return n;
}

// Pixels of `sets` whose center lies within distance_m of the topic mask.
BinaryMask clip(const MaskImage& img, const std::vector<PixelSet>& sets, const std::string& ref_topic,
                double distance_m) {
  BinaryMask out(img.width, img.height);
  const BinaryMask& ref = mask_of(img, ref_topic);
  if (sets.empty() || ref.count() == 0) return out;
  const Raster<std::int64_t> sq = squared_distance_transform(ref.bits);
  for (const PixelSet& s : sets)
    s.for_each([&](int x, int y) {
      if (within_buffer(sq(y, x), img.gsd, distance_m)) out.set(x, y);
    });
  return out;
}

double percent(std::int64_t px, std::int64_t total) { return 100.0 * double(px) / double(total); }

std::string yes_no(bool v) { return v ? "yes" : "no"; }

}  // namespace

std::string question_text(const QuestionParams& p, double gsd) {
  std::string s = template_for(p.type);
  s = replace_all(s, "{A}", topic_noun(p.a));
  s = replace_all(s, "{a}", short_noun(p.a));
  s = replace_all(s, "{B}", topic_noun(p.b));
  s = replace_all(s, "{t}", fmt_g(p.threshold_ha));
  s = replace_all(s, "{d}", fmt_g(p.distance_m));
  s = replace_all(s, "{L}", fmt_g(p.level_ha) + (p.level_ha == 1.0 ? " hectare" : " hectares"));
  return s + " (GSD: " + fmt_gsd(gsd) + "m)";
}

Plan canonical_plan(const QuestionParams& p) {
  Plan plan;
  auto& s = plan.steps;
  switch (p.type) {
    case QuestionType::Percentage:
      s = {seg({p.a}), agg("seg", AggregateOp::PercentOfImage)};
      break;
    case QuestionType::Count:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha), agg("patches", AggregateOp::Count)};
      break;
    case QuestionType::Size:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha), agg("patches", AggregateOp::LargestPercent)};
      break;
    case QuestionType::TotalArea:
    case QuestionType::ComplexSizeFilter:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha), agg("patches", AggregateOp::SumAreaHa)};
      break;
    case QuestionType::ComplexAverage:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha), agg("patches", AggregateOp::AverageHa)};
      break;
    case QuestionType::BinaryComparison:
      s = {seg({p.a, p.b}),
           select("first", p.a),
           select("second", p.b),
           agg("first", AggregateOp::PercentOfImage),
           agg("second", AggregateOp::PercentOfImage),
           {"answer", step::Compare{"first_pct", "second_pct", CompareOp::Gt, "yes", "no"}}};
      s[3].bind = "first_pct";
      s[4].bind = "second_pct";
      plan.answer_kind = AnswerKind::Category;
      break;
    case QuestionType::BinaryThreshold:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha), agg("patches", AggregateOp::SumAreaHa)};
      rebind_last(plan, "total_ha");
      s.push_back(classify("total_ha", p.level_ha, "yes", "no"));
      plan.answer_kind = AnswerKind::Category;
      break;
    case QuestionType::BinaryPresence:
    case QuestionType::BinaryMultiple:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha), agg("patches", AggregateOp::Count)};
      rebind_last(plan, "n");
      s.push_back(classify("n", p.type == QuestionType::BinaryPresence ? 0.0 : 1.0, "yes", "no"));
      plan.answer_kind = AnswerKind::Category;
      break;
    case QuestionType::ProximityPercentage:
    case QuestionType::ProximityArea:
    case QuestionType::BinaryProximity:
      s = {seg({p.a, p.b}), select("targets", p.a), select("references", p.b),
           {"clipped", step::WithinDistance{"targets", "references", p.distance_m}}};
      if (p.type == QuestionType::ProximityPercentage) {
        s.push_back(agg("clipped", AggregateOp::PercentOfImage));
      } else if (p.type == QuestionType::ProximityArea) {
        s.push_back(agg("clipped", AggregateOp::SumAreaHa));
      } else {
        s.push_back(agg("clipped", AggregateOp::Count));
        rebind_last(plan, "n");
        s.push_back(classify("n", 0.0, "yes", "no"));
        plan.answer_kind = AnswerKind::Category;
      }
      break;
    case QuestionType::Connectivity:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha, kConnectivityMaxHa),
           agg("patches", AggregateOp::Count)};
      break;
    case QuestionType::Fragmentation:
      s = {seg({p.a}), select("patches", p.a, p.threshold_ha), agg("patches", AggregateOp::Count)};
      rebind_last(plan, "n");
      s.push_back(classify("n", double(kFragmentationPatches), "fragmented", "connected"));
      plan.answer_kind = AnswerKind::Category;
      break;
    case QuestionType::BuildingProximity:
    case QuestionType::BuildingFireRisk:
    case QuestionType::BuildingFloodRisk:
      s = {seg({p.b, p.a}), select("references", p.b), select("buildings", p.a, p.threshold_ha),
           {"clipped", step::WithinDistance{"buildings", "references", p.distance_m}},
           agg("clipped", AggregateOp::Count)};
      break;
    case QuestionType::PowerCalculation:
      s = {seg({p.a}), agg("seg", AggregateOp::PowerMw, kSolarWattsPerM2)};
      break;
    case QuestionType::ComplexMultiCondition:
    case QuestionType::ComplexAgricultureWaterAccess:
    case QuestionType::ComplexVegetationWaterAccess:
    case QuestionType::ComplexUrbanFireRisk:
    case QuestionType::ComplexUrbanFloodRisk:
      s = {seg({p.a, p.b}), select("targets", p.a, p.threshold_ha), select("references", p.b),
           {"clipped", step::WithinDistance{"targets", "references", p.distance_m}},
           agg("clipped", AggregateOp::SumAreaHa)};
      break;
  }
  return plan;
}

AnswerValue compute_ground_truth(const QuestionParams& p, const MaskImage& img) {
  const std::int64_t total = img.total_pixels();
  if (total <= 0) fail(ErrorCode::Domain, "image has no pixels");
  switch (p.type) {
    case QuestionType::Percentage:
      return percent(mask_of(img, p.a).count(), total);
    case QuestionType::Count:
      return double(components(img, p.a, p.threshold_ha).size());
    case QuestionType::Size: {
      std::int64_t best = 0;
      for (const auto& c : components(img, p.a, p.threshold_ha)) best = std::max(best, c.size());
      return percent(best, total);
    }
    case QuestionType::TotalArea:
    case QuestionType::ComplexSizeFilter:
      return area_hectares(total_size(components(img, p.a, p.threshold_ha)), img.gsd);
    case QuestionType::ComplexAverage: {
      const auto cs = components(img, p.a, p.threshold_ha);
      if (cs.empty()) fail(ErrorCode::EmptyAverage, "no " + p.a + " patches above the threshold");
      double sum = 0.0;
      for (const auto& c : cs) sum += area_hectares(c.size(), img.gsd);
      return sum / double(cs.size());
    }
    case QuestionType::BinaryComparison:
      return yes_no(percent(mask_of(img, p.a).count(), total) > percent(mask_of(img, p.b).count(), total));
    case QuestionType::BinaryThreshold:
      return yes_no(area_hectares(total_size(components(img, p.a, p.threshold_ha)), img.gsd) > p.level_ha);
    case QuestionType::BinaryPresence:
      return yes_no(components(img, p.a, p.threshold_ha).size() > 0);
    case QuestionType::BinaryMultiple:
      return yes_no(components(img, p.a, p.threshold_ha).size() > 1);
    case QuestionType::ProximityPercentage:
    case QuestionType::ProximityArea:
    case QuestionType::BinaryProximity: {
      const std::int64_t px = clip(img, components(img, p.a, std::nullopt), p.b, p.distance_m).count();
      if (p.type == QuestionType::ProximityPercentage) return percent(px, total);
      if (p.type == QuestionType::ProximityArea) return area_hectares(px, img.gsd);
      return yes_no(px > 0);
    }
    case QuestionType::Connectivity:
      return double(components(img, p.a, p.threshold_ha, kConnectivityMaxHa).size());
    case QuestionType::Fragmentation:
      return components(img, p.a, p.threshold_ha).size() > std::size_t(kFragmentationPatches) ? "fragmented"
                                                                                              : "connected";
    case QuestionType::BuildingProximity:
    case QuestionType::BuildingFireRisk:
    case QuestionType::BuildingFloodRisk: {
      // Distinct 8-connected parents cannot touch, so clipped fragments are the
      // components of the clipped mask.
      const BinaryMask clipped = clip(img, components(img, p.a, p.threshold_ha), p.b, p.distance_m);
      return double(label_components(clipped, Connectivity::Eight).size());
    }
    case QuestionType::PowerCalculation:
      return double(mask_of(img, p.a).count()) * img.gsd * img.gsd * kSolarWattsPerM2 / 1e6;
    case QuestionType::ComplexMultiCondition:
    case QuestionType::ComplexAgricultureWaterAccess:
    case QuestionType::ComplexVegetationWaterAccess:
    case QuestionType::ComplexUrbanFireRisk:
    case QuestionType::ComplexUrbanFloodRisk:
      return area_hectares(clip(img, components(img, p.a, p.threshold_ha), p.b, p.distance_m).count(), img.gsd);
  }
  fail(ErrorCode::Domain, "unhandled question type");
}

std::string source_of(const std::string& image) {
  std::string dir = image.substr(0, image.find('/'));
  return dir.substr(0, dir.find('_'));
}

QuestionRecord make_record(std::string id, const MaskImage& image, const QuestionParams& p,
                           const AnswerValue& unrounded, const CalibrationConstants& c) {
  QuestionRecord r;
  r.id = std::move(id);
  r.image = image.image;
  r.question = question_text(p, image.gsd);
  r.type = p.type;
  r.tier = info(p.type).tier;
  r.gsd = image.gsd;
  r.source = image.source.empty() ? source_of(image.image) : image.source;
  if (const auto* v = std::get_if<double>(&unrounded)) {
    r.answer = is_count(p.type) ? std::round(*v) : round2(*v);
    r.acceptable_range = acceptable_range(*v, p.type, c);
  } else {
    r.answer = std::get<std::string>(unrounded);
    r.acceptable_range = categorical_range();
  }
  return r;
}

std::map<QuestionType, int> type_targets(const GeneratorOptions& opt) {
  std::map<QuestionType, int> out;
  for (const auto& i : kQuestionTypes)
    out[i.type] = std::max(opt.min_per_type, int(std::lround(double(i.reference_count) * opt.total / 2000.0)));
  return out;
}

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) fail(ErrorCode::Domain, "bounded_draw: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

std::vector<MaskImage> load_ground_truth(const BackendStore& store) {
  std::vector<MaskImage> out;
  for (const ImageEntry& e : store.images()) {
    MaskImage m{e.image, e.source, e.gsd, e.width, e.height, {}};
    for (const std::string& t : store.topics()) {
      const bool has_evidence = e.masks.count(t) || !e.logits.empty() ||
                                std::find(e.composites.begin(), e.composites.end(), t) != e.composites.end();
      if (has_evidence) m.masks.emplace(t, store.mask(e.id, t));
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<GeneratedQuestion> generate_questions(const std::vector<MaskImage>& corpus, const GeneratorOptions& opt,
                                                  std::vector<std::string>* warnings) {
  std::mt19937_64 rng(opt.seed);
  const auto targets = type_targets(opt);
  std::vector<GeneratedQuestion> out;

  auto eligible = [](const MaskImage& img, const QuestionParams& p) {
    if (!img.masks.count(p.a)) return false;
    return p.b.empty() || img.masks.count(p.b) > 0;
  };

  for (const auto& ti : kQuestionTypes) {
    const int want = targets.at(ti.type);
    struct Candidate {
      std::size_t image;
      QuestionParams params;
    };
    std::vector<Candidate> pool;
    const auto variants = parameterizations(ti.type);
    for (std::size_t i = 0; i < corpus.size(); ++i)
      for (const auto& p : variants)
        if (eligible(corpus[i], p)) pool.push_back({i, p});
    if (pool.empty()) {
      if (warnings) warnings->push_back(std::string(ti.name) + ": no eligible image; skipped");
      continue;
    }
    if (want <= 0) continue;

    // Partial Fisher-Yates: candidates are visited in a seeded uniform order.
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<GeneratedQuestion> chosen;
    bool have_zero = false;
    std::size_t k = 0;
    for (; k < order.size() && int(chosen.size()) < want; ++k) {
      std::swap(order[k], order[k + bounded_draw(rng, order.size() - k)]);
      const Candidate& c = pool[order[k]];
      AnswerValue v;
      try {
        v = compute_ground_truth(c.params, corpus[c.image]);
      } catch (const Error&) {
        continue;
      }
      if (const auto* d = std::get_if<double>(&v); d && *d == 0.0) have_zero = true;
      chosen.push_back({make_record("", corpus[c.image], c.params, v, opt.constants), c.params,
                        canonical_plan(c.params)});
    }
    if (opt.include_zero && !is_categorical(ti.type) && !have_zero && !chosen.empty()) {
      for (; k < order.size(); ++k) {
        std::swap(order[k], order[k + bounded_draw(rng, order.size() - k)]);
        const Candidate& c = pool[order[k]];
        AnswerValue v;
        try {
          v = compute_ground_truth(c.params, corpus[c.image]);
        } catch (const Error&) {
          continue;
        }
        if (std::get<double>(v) == 0.0) {
          chosen.back() = {make_record("", corpus[c.image], c.params, v, opt.constants), c.params,
                           canonical_plan(c.params)};
          break;
        }
      }
    }
    if (int(chosen.size()) < want && warnings)
      warnings->push_back(std::string(ti.name) + ": " + std::to_string(chosen.size()) + " of " +
                          std::to_string(want) + " questions available");
    for (auto& q : chosen) out.push_back(std::move(q));
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "SQuID_%04zu", i);
    out[i].record.id = id;
  }
  return out;
}

// --- dataset files ------------------------------------------------------------

ordered_json to_json(const QuestionRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["image"] = r.image;
  j["question"] = r.question;
  if (const auto* d = std::get_if<double>(&r.answer)) {
    if (is_count(r.type))
      j["answer"] = std::int64_t(*d);
    else
      j["answer"] = *d;
  } else {
    j["answer"] = std::get<std::string>(r.answer);
  }
  j["type"] = std::string(to_string(r.type));
  j["tier"] = r.tier;
  j["gsd"] = r.gsd;
  if (r.acceptable_range.exact)
    j["acceptable_range"] = "exact";
  else if (is_count(r.type))
    j["acceptable_range"] = {std::int64_t(r.acceptable_range.lo), std::int64_t(r.acceptable_range.hi)};
  else
    j["acceptable_range"] = {r.acceptable_range.lo, r.acceptable_range.hi};
  return j;
}

QuestionRecord record_from_json(const json& j) {
  QuestionRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.image = j.at("image").get<std::string>();
    r.question = j.at("question").get<std::string>();
    const std::string type = j.at("type").get<std::string>();
    const auto qt = question_type_from_string(type);
    if (!qt) fail(ErrorCode::Validation, r.id + ": unknown question type '" + type + "'");
    r.type = *qt;
    r.tier = j.at("tier").get<int>();
    if (r.tier != info(r.type).tier) fail(ErrorCode::Validation, r.id + ": tier does not match type");
    r.gsd = j.at("gsd").get<double>();
    const json& a = j.at("answer");
    const json& range = j.at("acceptable_range");
    if (a.is_number()) {
      r.answer = a.get<double>();
      if (!range.is_array() || range.size() != 2)
        fail(ErrorCode::Validation, r.id + ": numeric answer needs a [lo, hi] range");
      r.acceptable_range = {false, range[0].get<double>(), range[1].get<double>()};
      const double v = std::get<double>(r.answer);
      if (!(r.acceptable_range.lo <= v && v <= r.acceptable_range.hi))
        fail(ErrorCode::Validation, r.id + ": answer lies outside its acceptable range");
    } else if (a.is_string()) {
      r.answer = a.get<std::string>();
      if (range != "exact") fail(ErrorCode::Validation, r.id + ": categorical answer needs the \"exact\" range");
      r.acceptable_range = categorical_range();
    } else {
      fail(ErrorCode::Validation, r.id + ": answer must be a number or a string");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Validation, std::string("dataset record: ") + e.what());
  }
  r.source = source_of(r.image);
  return r;
}

std::string emit_dataset(const std::vector<QuestionRecord>& records) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr.dump(2) + "\n";
}

void write_dataset(const std::vector<QuestionRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write dataset '" + path.string() + "'");
  out << emit_dataset(records);
}

std::vector<QuestionRecord> parse_dataset(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Validation, std::string("dataset: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::Validation, "dataset must be an array of records");
  std::vector<QuestionRecord> out;
  std::set<std::string> ids;
  for (const json& j : doc) {
    out.push_back(record_from_json(j));
    if (!ids.insert(out.back().id).second) fail(ErrorCode::Validation, "duplicate question id " + out.back().id);
  }
  return out;
}

std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open dataset '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

}  // namespace qvlm
