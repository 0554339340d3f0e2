#include "qvlm/plan.hpp"

#include "qvlm/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace qvlm {

using nlohmann::json;

namespace {

enum class BindType { Shapes, Distances, Number, Category };

const char* type_name(BindType t) {
  switch (t) {
    case BindType::Shapes: return "shapes";
    case BindType::Distances: return "shapes with distances";
    case BindType::Number: return "number";
    case BindType::Category: return "category";
  }
  return "?";
}

bool is_shapes(BindType t) { return t == BindType::Shapes || t == BindType::Distances; }

struct OpName {
  AggregateOp op;
  const char* name;
};
constexpr OpName kAggregateOps[] = {
    {AggregateOp::Count, "count"},
    {AggregateOp::SumAreaHa, "sum_area_ha"},
    {AggregateOp::PercentOfImage, "percent_of_image"},
    {AggregateOp::LargestPercent, "largest_percent"},
    {AggregateOp::AverageHa, "average_ha"},
    {AggregateOp::PowerMw, "power_mw"},
    {AggregateOp::MinDistanceM, "min_distance_m"},
};

struct CmpName {
  CompareOp op;
  const char* name;
};
constexpr CmpName kCompareOps[] = {
    {CompareOp::Gt, "gt"}, {CompareOp::Lt, "lt"}, {CompareOp::Ge, "ge"}, {CompareOp::Le, "le"}};

// Field access with a location prefix in every message.
class Fields {
 public:
  Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {}

  const json& need(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) fail(ErrorCode::MissingField, where_ + ": missing field '" + key + "'");
    return *it;
  }
  bool has(const char* key) const {
    auto it = obj_.find(key);
    return it != obj_.end() && !it->is_null();
  }

  std::string str(const char* key) const {
    const json& v = need(key);
    if (!v.is_string()) bad(key, "a string");
    return v.get<std::string>();
  }
  std::string str_or(const char* key, std::string fallback) const {
    return has(key) ? str(key) : std::move(fallback);
  }
  double num(const char* key) const {
    const json& v = need(key);
    if (!v.is_number()) bad(key, "a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ErrorCode::Domain, where_ + ": '" + key + "' must be finite");
    return d;
  }
  std::optional<double> opt_num(const char* key) const {
    return has(key) ? std::optional<double>(num(key)) : std::nullopt;
  }
  std::int64_t integer(const char* key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = need(key);
    if (!v.is_number_integer()) bad(key, "an integer");
    return v.get<std::int64_t>();
  }
  std::vector<std::string> str_list(const char* key) const {
    const json& v = need(key);
    if (!v.is_array()) bad(key, "a list of strings");
    std::vector<std::string> out;
    for (const json& e : v) {
      if (!e.is_string()) bad(key, "a list of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  const std::string& where() const { return where_; }

 private:
  [[noreturn]] void bad(const char* key, const char* expected) const {
    fail(ErrorCode::Syntax, where_ + ": '" + key + "' must be " + expected);
  }
  const json& obj_;
  std::string where_;
};

StepArgs parse_args(const std::string& kind, const Fields& a) {
  if (kind == "segment") {
    step::Segment s{a.str_list("topics"), a.integer("min_area_pixels", 0)};
    if (s.topics.empty()) fail(ErrorCode::MissingField, a.where() + ": segment needs at least one topic");
    if (s.min_area_pixels < 0) fail(ErrorCode::Domain, a.where() + ": min_area_pixels must be >= 0");
    return s;
  }
  if (kind == "filter_area") {
    step::FilterArea s;
    s.src = a.str("src");
    s.min_ha = a.opt_num("min_ha");
    s.max_ha = a.opt_num("max_ha");
    if (a.has("class")) s.class_type = a.str("class");
    if (s.min_ha && s.max_ha && *s.min_ha > *s.max_ha)
      fail(ErrorCode::Domain, a.where() + ": min_ha exceeds max_ha");
    return s;
  }
  if (kind == "within_distance") {
    step::WithinDistance s{a.str("targets"), a.str("references"), a.num("distance_m")};
    if (s.distance_m < 0) fail(ErrorCode::Domain, a.where() + ": distance_m must be >= 0");
    return s;
  }
  if (kind == "min_distance") return step::MinDistance{a.str("targets"), a.str("references")};
  if (kind == "aggregate") {
    step::Aggregate s;
    s.src = a.str("src");
    const std::string op = a.str("op");
    auto it = std::find_if(std::begin(kAggregateOps), std::end(kAggregateOps),
                           [&](const OpName& o) { return op == o.name; });
    if (it == std::end(kAggregateOps)) fail(ErrorCode::Syntax, a.where() + ": unknown aggregate op '" + op + "'");
    s.op = it->op;
    if (s.op == AggregateOp::PowerMw) {
      s.w_per_m2 = a.num("w_per_m2");
      if (s.w_per_m2 < 0) fail(ErrorCode::Domain, a.where() + ": w_per_m2 must be >= 0");
    }
    return s;
  }
  if (kind == "compare") {
    step::Compare s;
    s.lhs = a.str("lhs");
    s.rhs = a.str("rhs");
    const std::string op = a.str("op");
    auto it = std::find_if(std::begin(kCompareOps), std::end(kCompareOps),
                           [&](const CmpName& o) { return op == o.name; });
    if (it == std::end(kCompareOps)) fail(ErrorCode::Syntax, a.where() + ": unknown compare op '" + op + "'");
    s.op = it->op;
    s.yes_label = a.str_or("yes_label", "yes");
    s.no_label = a.str_or("no_label", "no");
    return s;
  }
  if (kind == "classify") {
    step::Classify s;
    s.src = a.str("src");
    s.threshold = a.num("threshold");
    s.above_label = a.str_or("above_label", "yes");
    s.below_label = a.str_or("below_label", "no");
    return s;
  }
  fail(ErrorCode::UnknownStepKind, a.where() + ": unknown step kind '" + kind + "'");
}

json args_json(const StepArgs& args) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, step::Segment>) {
          return {{"topics", s.topics}, {"min_area_pixels", s.min_area_pixels}};
        } else if constexpr (std::is_same_v<T, step::FilterArea>) {
          json j = {{"src", s.src}};
          if (s.min_ha) j["min_ha"] = *s.min_ha;
          if (s.max_ha) j["max_ha"] = *s.max_ha;
          if (s.class_type) j["class"] = *s.class_type;
          return j;
        } else if constexpr (std::is_same_v<T, step::WithinDistance>) {
          return {{"targets", s.targets}, {"references", s.references}, {"distance_m", s.distance_m}};
        } else if constexpr (std::is_same_v<T, step::MinDistance>) {
          return {{"targets", s.targets}, {"references", s.references}};
        } else if constexpr (std::is_same_v<T, step::Aggregate>) {
          json j = {{"src", s.src}, {"op", to_string(s.op)}};
          if (s.op == AggregateOp::PowerMw) j["w_per_m2"] = s.w_per_m2;
          return j;
        } else if constexpr (std::is_same_v<T, step::Compare>) {
          return {{"lhs", s.lhs},
                  {"rhs", s.rhs},
                  {"op", to_string(s.op)},
                  {"yes_label", s.yes_label},
                  {"no_label", s.no_label}};
        } else {
          return {{"src", s.src},
                  {"threshold", s.threshold},
                  {"above_label", s.above_label},
                  {"below_label", s.below_label}};
        }
      },
      args);
}

// Names a step reads, with the binding type each position accepts.
struct Ref {
  std::string name;
  const char* role;
  bool want_shapes;  // false: number
  bool want_distances = false;
};

std::vector<Ref> refs_of(const StepArgs& args) {
  return std::visit(
      [](const auto& s) -> std::vector<Ref> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, step::Segment>) {
          return {};
        } else if constexpr (std::is_same_v<T, step::FilterArea>) {
          return {{s.src, "src", true}};
        } else if constexpr (std::is_same_v<T, step::WithinDistance> || std::is_same_v<T, step::MinDistance>) {
          return {{s.targets, "targets", true}, {s.references, "references", true}};
        } else if constexpr (std::is_same_v<T, step::Aggregate>) {
          return {{s.src, "src", true, s.op == AggregateOp::MinDistanceM}};
        } else if constexpr (std::is_same_v<T, step::Compare>) {
          return {{s.lhs, "lhs", false}, {s.rhs, "rhs", false}};
        } else {
          return {{s.src, "src", false}};
        }
      },
      args);
}

BindType result_type(const StepArgs& args, BindType first_input) {
  return std::visit(
      [&](const auto& s) -> BindType {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, step::MinDistance>) return BindType::Distances;
        else if constexpr (std::is_same_v<T, step::FilterArea>) return first_input;
        else if constexpr (std::is_same_v<T, step::Segment> || std::is_same_v<T, step::WithinDistance>)
          return BindType::Shapes;
        else if constexpr (std::is_same_v<T, step::Aggregate>) return BindType::Number;
        else return BindType::Category;
      },
      args);
}

std::vector<PlanIssue> check(const Plan& plan, const std::span<const std::string>* topics) {
  std::vector<PlanIssue> issues;
  if (plan.steps.empty()) {
    issues.push_back({ErrorCode::NoSteps, "plan has no steps"});
    return issues;
  }
  std::map<std::string, BindType> bound;
  std::map<std::string, int> uses;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const Step& st = plan.steps[i];
    const std::string where = "steps[" + std::to_string(i) + "] (" + std::string(step_kind_name(st.args)) + ")";
    BindType first = BindType::Shapes;
    bool first_set = false;
    for (const Ref& r : refs_of(st.args)) {
      auto it = bound.find(r.name);
      if (it == bound.end()) {
        issues.push_back({ErrorCode::UnboundReference, where + ": unbound reference '" + r.name + "'"});
        continue;
      }
      ++uses[r.name];
      const BindType t = it->second;
      const bool ok = r.want_distances ? t == BindType::Distances : (r.want_shapes ? is_shapes(t) : t == BindType::Number);
      if (!ok)
        issues.push_back({ErrorCode::TypeMismatch, where + ": '" + r.role + "' expects " +
                                                       (r.want_distances ? "shapes with distances"
                                                        : r.want_shapes  ? "shapes"
                                                                         : "a number") +
                                                       " but '" + r.name + "' is " + type_name(t)});
      if (!first_set) {
        first = t;
        first_set = true;
      }
    }
    if (const auto* seg = std::get_if<step::Segment>(&st.args); seg && topics) {
      for (const std::string& t : seg->topics)
        if (std::find(topics->begin(), topics->end(), t) == topics->end())
          issues.push_back({ErrorCode::UnknownTopic, where + ": unknown topic '" + t + "'"});
    }
    if (st.bind.empty()) {
      issues.push_back({ErrorCode::MissingField, where + ": missing binding name"});
      continue;
    }
    if (bound.count(st.bind)) {
      issues.push_back({ErrorCode::DuplicateBinding, where + ": '" + st.bind + "' is already bound"});
      continue;
    }
    bound[st.bind] = result_type(st.args, is_shapes(first) ? first : BindType::Shapes);
  }
  const Step& last = plan.steps.back();
  if (auto it = bound.find(last.bind); it != bound.end()) {
    const BindType want = plan.answer_kind == AnswerKind::Number ? BindType::Number : BindType::Category;
    if (it->second != want)
      issues.push_back({ErrorCode::TypeMismatch, "answer_kind is " + std::string(to_string(plan.answer_kind)) +
                                                     " but the final step yields " + type_name(it->second)});
  }
  for (std::size_t i = 0; i + 1 < plan.steps.size(); ++i) {
    const std::string& b = plan.steps[i].bind;
    if (!b.empty() && uses[b] == 0)
      issues.push_back({ErrorCode::Structural, "binding '" + b + "' is never used; only the final step may be terminal"});
  }
  return issues;
}

// --- execution -------------------------------------------------------------

struct ShapeSet {
  std::vector<Shape> shapes;
  std::int64_t total_pixels = 0;
  int width = 0;
  int height = 0;
};

using Value = std::variant<ShapeSet, double, std::string>;

std::string format_number(double v) {
  char buf[64];
  if (v == std::floor(v) && std::fabs(v) < 1e15)
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::int64_t pixel_sum(const std::vector<Shape>& shapes) {
  std::int64_t px = 0;
  for (const Shape& s : shapes) px += s.area_pixels;
  return px;
}

double aggregate(const step::Aggregate& a, const ShapeSet& set, double gsd) {
  switch (a.op) {
    case AggregateOp::Count:
      return double(set.shapes.size());
    case AggregateOp::SumAreaHa:
      return area_hectares(pixel_sum(set.shapes), gsd);
    case AggregateOp::PercentOfImage:
      if (set.total_pixels <= 0) fail(ErrorCode::DivisionByZero, "percent_of_image: image has no pixels");
      return coverage_percentage(set.shapes, set.total_pixels);
    case AggregateOp::LargestPercent: {
      if (set.total_pixels <= 0) fail(ErrorCode::DivisionByZero, "largest_percent: image has no pixels");
      std::int64_t best = 0;
      for (const Shape& s : set.shapes) best = std::max(best, s.area_pixels);
      return 100.0 * double(best) / double(set.total_pixels);
    }
    case AggregateOp::AverageHa: {
      if (set.shapes.empty()) fail(ErrorCode::EmptyAverage, "average_ha over an empty shape set");
      double sum = 0.0;
      for (const Shape& s : set.shapes) sum += s.area_hectares;
      return sum / double(set.shapes.size());
    }
    case AggregateOp::PowerMw:
      return double(pixel_sum(set.shapes)) * gsd * gsd * a.w_per_m2 / 1e6;
    case AggregateOp::MinDistanceM: {
      if (set.shapes.empty()) fail(ErrorCode::Domain, "min_distance_m over an empty shape set");
      double best = std::numeric_limits<double>::infinity();
      for (const Shape& s : set.shapes) {
        if (!s.distance_meters) fail(ErrorCode::TypeMismatch, "min_distance_m needs shapes with distances");
        best = std::min(best, *s.distance_meters);
      }
      return best;
    }
  }
  return 0.0;
}

bool compare(double l, double r, CompareOp op) {
  switch (op) {
    case CompareOp::Gt: return l > r;
    case CompareOp::Lt: return l < r;
    case CompareOp::Ge: return l >= r;
    case CompareOp::Le: return l <= r;
  }
  return false;
}

}  // namespace

std::string_view step_kind_name(const StepArgs& args) {
  static constexpr std::string_view names[] = {"segment",   "filter_area", "within_distance", "min_distance",
                                               "aggregate", "compare",     "classify"};
  return names[args.index()];
}

std::string_view to_string(AggregateOp op) {
  for (const OpName& o : kAggregateOps)
    if (o.op == op) return o.name;
  return "?";
}

std::string_view to_string(CompareOp op) {
  for (const CmpName& o : kCompareOps)
    if (o.op == op) return o.name;
  return "?";
}

std::string_view to_string(AnswerKind kind) { return kind == AnswerKind::Number ? "number" : "category"; }

Plan plan_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::Syntax, "plan must be an object");
  Plan plan;
  auto steps = doc.find("steps");
  if (steps == doc.end() || !steps->is_array() || steps->empty()) fail(ErrorCode::NoSteps, "no steps");
  if (auto it = doc.find("answer_kind"); it != doc.end()) {
    if (*it == "number")
      plan.answer_kind = AnswerKind::Number;
    else if (*it == "category")
      plan.answer_kind = AnswerKind::Category;
    else
      fail(ErrorCode::Syntax, "answer_kind must be \"number\" or \"category\"");
  } else {
    fail(ErrorCode::MissingField, "plan: missing field 'answer_kind'");
  }
  for (std::size_t i = 0; i < steps->size(); ++i) {
    const json& s = (*steps)[i];
    const std::string where = "steps[" + std::to_string(i) + "]";
    if (!s.is_object()) fail(ErrorCode::Syntax, where + ": step must be an object");
    Fields f(s, where);
    const std::string kind = f.str("kind");
    const json& args = s.contains("args") ? s["args"] : json::object();
    if (!args.is_object()) fail(ErrorCode::Syntax, where + ": args must be an object");
    Step st;
    st.args = parse_args(kind, Fields(args, where + ".args"));
    st.bind = f.str("bind");
    plan.steps.push_back(std::move(st));
  }
  return plan;
}

Plan parse_plan(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    bool blank = std::all_of(text.begin(), text.end(), [](char c) { return std::isspace((unsigned char)c); });
    if (blank) fail(ErrorCode::NoSteps, "no steps");
    fail(ErrorCode::Syntax, std::string("plan is not a valid document: ") + e.what());
  }
  Plan plan = plan_from_json(doc);
  const auto issues = check(plan, nullptr);
  if (!issues.empty()) fail(issues.front().code, issues.front().message);
  return plan;
}

json to_json(const Plan& plan) {
  json steps = json::array();
  for (const Step& s : plan.steps)
    steps.push_back({{"kind", step_kind_name(s.args)}, {"args", args_json(s.args)}, {"bind", s.bind}});
  return {{"answer_kind", to_string(plan.answer_kind)}, {"steps", steps}};
}

std::string serialize_plan(const Plan& plan) { return to_json(plan).dump(2) + "\n"; }

std::vector<PlanIssue> validate_plan(const Plan& plan, std::span<const std::string> available_topics) {
  return check(plan, &available_topics);
}

Answer execute_plan(const Plan& plan, const std::string& image_ref, double gsd, SegmentationBackend& backend) {
  if (!(gsd > 0.0)) fail(ErrorCode::Domain, "gsd must be positive");
  if (const auto issues = check(plan, nullptr); !issues.empty()) fail(issues.front().code, issues.front().message);

  std::map<std::string, Value> env;
  Answer answer;
  auto& trace = answer.trace;
  auto shapes = [&](const std::string& name) -> const ShapeSet& { return std::get<ShapeSet>(env.at(name)); };
  auto number = [&](const std::string& name) { return std::get<double>(env.at(name)); };

  for (const Step& st : plan.steps) {
    Value v = std::visit(
        [&](const auto& s) -> Value {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, step::Segment>) {
            SegmentationResult r;
            try {
              r = backend.segment(image_ref, s.topics, s.min_area_pixels, gsd);
            } catch (const Error& e) {
              if (e.code() == ErrorCode::UnknownTopic || e.code() == ErrorCode::NotFound) throw;
              fail(ErrorCode::Backend, std::string("segmentation backend failed: ") + e.what());
            } catch (const std::exception& e) {
              fail(ErrorCode::Backend, std::string("segmentation backend failed: ") + e.what());
            }
            for (const std::string& t : s.topics) {
              const auto n = std::count_if(r.shapes.begin(), r.shapes.end(),
                                           [&](const Shape& sh) { return sh.class_type == t; });
              trace.push_back(t + ": " + std::to_string(n));
            }
            return ShapeSet{std::move(r.shapes), r.total_pixels, r.image_width, r.image_height};
          } else if constexpr (std::is_same_v<T, step::FilterArea>) {
            const ShapeSet& in = shapes(s.src);
            ShapeSet out{{}, in.total_pixels, in.width, in.height};
            std::vector<Shape> pool = s.class_type ? filter_by_class(in.shapes, *s.class_type) : in.shapes;
            out.shapes = filter_by_area(pool, s.min_ha, s.max_ha);
            trace.push_back("filtered: " + std::to_string(out.shapes.size()));
            return out;
          } else if constexpr (std::is_same_v<T, step::WithinDistance>) {
            const ShapeSet& t = shapes(s.targets);
            ShapeSet out{find_shapes_within_distance(t.shapes, shapes(s.references).shapes, s.distance_m, gsd),
                         t.total_pixels, t.width, t.height};
            trace.push_back("clipped: " + std::to_string(out.shapes.size()));
            return out;
          } else if constexpr (std::is_same_v<T, step::MinDistance>) {
            const ShapeSet& t = shapes(s.targets);
            ShapeSet out{calculate_shape_distances(t.shapes, shapes(s.references).shapes, gsd), t.total_pixels,
                         t.width, t.height};
            trace.push_back("measured: " + std::to_string(out.shapes.size()));
            return out;
          } else if constexpr (std::is_same_v<T, step::Aggregate>) {
            const double x = aggregate(s, shapes(s.src), gsd);
            trace.push_back(std::string(to_string(s.op)) + ": " + format_number(x));
            return x;
          } else if constexpr (std::is_same_v<T, step::Compare>) {
            const double l = number(s.lhs), r = number(s.rhs);
            return compare(l, r, s.op) ? s.yes_label : s.no_label;
          } else {
            return number(s.src) > s.threshold ? s.above_label : s.below_label;
          }
        },
        st.args);
    env[st.bind] = std::move(v);
  }

  Value& last = env.at(plan.steps.back().bind);
  if (auto* d = std::get_if<double>(&last))
    answer.value = *d;
  else
    answer.value = std::get<std::string>(last);
  trace.push_back("answer: " + (answer.is_number() ? format_number(answer.number()) : answer.category()));
  return answer;
}

std::vector<StepDoc> step_catalog() {
  return {
      {"segment", R"({"topics": [string, ...], "min_area_pixels": int = 0})",
       "Segments the image for the listed topics. Yields shapes; each shape has class_type, area_pixels and "
       "area_hectares."},
      {"filter_area", R"({"src": shapes, "class": string?, "min_ha": number?, "max_ha": number?})",
       "Keeps shapes of the given class with min_ha < area_hectares <= max_ha. Every bound is optional."},
      {"within_distance", R"({"targets": shapes, "references": shapes, "distance_m": number})",
       "Clips targets to the parts lying within distance_m meters of any reference. Yields NEW shapes, one per "
       "connected clipped part. No references yields no shapes."},
      {"min_distance", R"({"targets": shapes, "references": shapes})",
       "Annotates each target with its minimum distance in meters to the nearest reference."},
      {"aggregate",
       R"({"src": shapes, "op": "count" | "sum_area_ha" | "percent_of_image" | "largest_percent" | "average_ha" | "power_mw" | "min_distance_m", "w_per_m2": number (power_mw only)})",
       "Reduces shapes to a number: count, total hectares, percent of all image pixels, largest shape as "
       "percent of the image, mean hectares, megawatts at w_per_m2, or smallest measured distance."},
      {"compare", R"({"lhs": number, "rhs": number, "op": "gt" | "lt" | "ge" | "le", "yes_label": string = "yes", "no_label": string = "no"})",
       "Yields yes_label when lhs op rhs holds, otherwise no_label."},
      {"classify", R"({"src": number, "threshold": number, "above_label": string = "yes", "below_label": string = "no"})",
       "Yields above_label when src > threshold, otherwise below_label."},
  };
}

}  // namespace qvlm
