#pragma once

#include "qvlm/error.hpp"
#include "qvlm/raster.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qvlm {

enum class AnswerKind { Number, Category };

enum class AggregateOp { Count, SumAreaHa, PercentOfImage, LargestPercent, AverageHa, PowerMw, MinDistanceM };

enum class CompareOp { Gt, Lt, Ge, Le };

namespace step {

struct Segment {
  std::vector<std::string> topics;
  std::int64_t min_area_pixels = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct FilterArea {
  std::string src;
  std::optional<double> min_ha;  // strict
  std::optional<double> max_ha;  // inclusive
  std::optional<std::string> class_type;
  friend bool operator==(const FilterArea&, const FilterArea&) = default;
};

struct WithinDistance {
  std::string targets;
  std::string references;
  double distance_m = 0.0;
  friend bool operator==(const WithinDistance&, const WithinDistance&) = default;
};

struct MinDistance {
  std::string targets;
  std::string references;
  friend bool operator==(const MinDistance&, const MinDistance&) = default;
};

struct Aggregate {
  std::string src;
  AggregateOp op = AggregateOp::Count;
  double w_per_m2 = 0.0;  // power_mw only
  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct Compare {
  std::string lhs;
  std::string rhs;
  CompareOp op = CompareOp::Gt;
  std::string yes_label = "yes";
  std::string no_label = "no";
  friend bool operator==(const Compare&, const Compare&) = default;
};

struct Classify {
  std::string src;
  double threshold = 0.0;
  std::string above_label = "yes";  // value > threshold
  std::string below_label = "no";
  friend bool operator==(const Classify&, const Classify&) = default;
};

}  // namespace step

using StepArgs = std::variant<step::Segment, step::FilterArea, step::WithinDistance, step::MinDistance,
                              step::Aggregate, step::Compare, step::Classify>;

struct Step {
  std::string bind;
  StepArgs args;
  friend bool operator==(const Step&, const Step&) = default;
};

/// The last step produces the answer.
struct Plan {
  AnswerKind answer_kind = AnswerKind::Number;
  std::vector<Step> steps;
  friend bool operator==(const Plan&, const Plan&) = default;
};

std::string_view step_kind_name(const StepArgs& args);
std::string_view to_string(AggregateOp op);
std::string_view to_string(CompareOp op);
std::string_view to_string(AnswerKind kind);

Plan parse_plan(std::string_view text);
Plan plan_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Plan& plan);

/// Canonical text: sorted keys, two-space indent, every non-optional field present.
std::string serialize_plan(const Plan& plan);

struct PlanIssue {
  ErrorCode code;
  std::string message;
};

/// Never throws; an empty list means the plan is valid for the given topics.
std::vector<PlanIssue> validate_plan(const Plan& plan, std::span<const std::string> available_topics);

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual SegmentationResult segment(const std::string& image_ref, const std::vector<std::string>& topics,
                                     std::int64_t min_area_pixels, double gsd) = 0;
};

struct Answer {
  std::variant<double, std::string> value;
  std::vector<std::string> trace;

  bool is_number() const { return std::holds_alternative<double>(value); }
  double number() const { return std::get<double>(value); }
  const std::string& category() const { return std::get<std::string>(value); }
};

Answer execute_plan(const Plan& plan, const std::string& image_ref, double gsd, SegmentationBackend& backend);

/// One entry per step kind; used to document the plan language to a model.
struct StepDoc {
  std::string kind;
  std::string signature;
  std::string summary;
};
std::vector<StepDoc> step_catalog();

}  // namespace qvlm
