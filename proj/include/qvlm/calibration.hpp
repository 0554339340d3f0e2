#pragma once

#include "qvlm/question_types.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace qvlm {

struct CalibrationConstants {
  double mad_percentage = 1.735;
  double mad_proximity = 2.250;
  double madc_count = 0.19;
  double rel_area = 0.0225;
};

/// Numeric ranges are inclusive; categorical answers carry the exact marker.
struct AcceptableRange {
  bool exact = false;
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return !exact && lo <= v && v <= hi; }
  friend bool operator==(const AcceptableRange&, const AcceptableRange&) = default;
};

/// Rounds to two decimals the way printf("%.2f") renders the value.
double round2(double v);

AcceptableRange acceptable_range(double answer, QuestionType type, const CalibrationConstants& c = {});
AcceptableRange categorical_range();

double median(std::span<const double> values);
double mad(std::span<const double> values);
double madc(std::span<const double> values);

std::string majority_vote(std::span<const std::string> values);

/// Question x annotator matrix; NaN marks a missing response.
using ResponseMatrix = Eigen::MatrixXd;

struct Reliability {
  double value = 0.0;
  bool degenerate = false;  // no variance to compare against
};

/// Krippendorff's alpha with the interval metric; missing cells allowed.
Reliability krippendorff_alpha(const ResponseMatrix& responses);

/// ICC(2,k), two-way random effects, mean of k raters, from ANOVA mean squares
/// (Shrout & Fleiss): (MSR - MSE) / (MSR + (MSC - MSE) / n). Requires a complete matrix.
Reliability icc2k(const ResponseMatrix& responses);

/// Consistency form of the same model, (MSR - MSE) / MSR; rater offsets do not count against it.
Reliability icc2k_consistency(const ResponseMatrix& responses);

struct GridAnswer {
  int resolution = 10;      // cells per side
  std::vector<int> cells;   // selected cell indices, row-major
  friend bool operator==(const GridAnswer&, const GridAnswer&) = default;
};

struct AnnotationRecord {
  std::string question_id;
  std::string annotator_id;
  std::variant<double, std::string, GridAnswer> value;
  bool is_distance = false;  // numeric value measured with the ruler, in meters

  void validate() const;
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

inline constexpr int kMinGridResolution = 10;
inline constexpr int kMaxGridResolution = 320;

/// Percentage of the image covered by the selected grid cells.
double grid_percentage(const GridAnswer& grid);

/// Ruler length in meters between two pixel positions.
double ruler_distance(double x0, double y0, double x1, double y1, double gsd);

nlohmann::json to_json(const AnnotationRecord& r);
AnnotationRecord annotation_from_json(const nlohmann::json& j);

/// One record per line.
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
void append_annotation(const std::filesystem::path& path, const AnnotationRecord& r);

struct TypeAgreement {
  QuestionType type = QuestionType::Percentage;
  int questions = 0;  // questions with at least two responses
  std::optional<Reliability> alpha;
  std::optional<Reliability> icc;  // only when every annotator answered every question
};

struct CalibrationResult {
  CalibrationConstants constants;
  std::map<std::string, int> samples;  // constant name -> questions it was estimated from
  std::vector<TypeAgreement> agreement;
  std::map<std::string, std::string> majority;  // categorical question id -> vote
};

/// Re-estimates the range constants as the mean per-question MAD (percentages)
/// or MADc (counts and measurements). Constants with no usable questions keep
/// their value from defaults. Records for ids not in question_types are ignored.
CalibrationResult calibrate(std::span<const AnnotationRecord> records,
                            const std::map<std::string, QuestionType>& question_types,
                            const CalibrationConstants& defaults = {});

nlohmann::json to_json(const CalibrationResult& r);

}  // namespace qvlm
