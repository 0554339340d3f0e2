#pragma once

#include "qvlm/calibration.hpp"
#include "qvlm/plan.hpp"
#include "qvlm/question_types.hpp"
#include "qvlm/raster.hpp"
#include "qvlm/store.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace qvlm {

struct ClassThreshold {
  std::string topic;
  double min_ha;
};

/// Minimum patch sizes: 0.01 ha for roofs and solar, 0.1 ha for urban and
/// water, 0.125 ha for the vegetation classes and barren land.
double class_threshold(const std::string& topic);
const std::vector<ClassThreshold>& class_thresholds();

/// Phrase used for a topic inside question text ("barren land", "water bodies").
std::string topic_noun(const std::string& topic);

inline constexpr double kConnectivityMaxHa = 10.0;
inline constexpr int kFragmentationPatches = 5;
inline constexpr double kSolarWattsPerM2 = 200.0;
inline constexpr double kBuildingMinHa = 0.01;

struct QuestionParams {
  QuestionType type = QuestionType::Percentage;
  std::string a;              // primary topic
  std::string b;              // secondary topic, when the type relates two classes
  double threshold_ha = 0.0;  // size filter on a
  double distance_m = 0.0;
  double level_ha = 0.0;      // binary_threshold total-area level
};

using AnswerValue = std::variant<double, std::string>;

struct QuestionRecord {
  std::string id;
  std::string image;
  std::string question;
  AnswerValue answer;
  QuestionType type = QuestionType::Percentage;
  int tier = 1;
  double gsd = 1.0;
  AcceptableRange acceptable_range;
  std::string source;  // derived from the image path, not serialized

  bool numeric() const { return std::holds_alternative<double>(answer); }
};

/// Ground-truth masks of one image, keyed by topic.
struct MaskImage {
  std::string image;
  std::string source;
  double gsd = 1.0;
  int width = 0;
  int height = 0;
  std::map<std::string, BinaryMask> masks;

  std::int64_t total_pixels() const { return std::int64_t(width) * height; }
};

/// Loads every topic the store can resolve for each image (including
/// composites); topics without evidence are absent from the map.
std::vector<MaskImage> load_ground_truth(const BackendStore& store);

std::string question_text(const QuestionParams& p, double gsd);
Plan canonical_plan(const QuestionParams& p);

/// Unrounded ground truth straight from mask geometry.
AnswerValue compute_ground_truth(const QuestionParams& p, const MaskImage& image);

struct GeneratorOptions {
  int total = 2000;        // scaled from the reference type mix
  int min_per_type = 0;
  std::uint64_t seed = 0;
  bool include_zero = true;
  CalibrationConstants constants{};
};

struct GeneratedQuestion {
  QuestionRecord record;
  QuestionParams params;
  Plan plan;
};

/// Per-type targets: round(reference_count * total / 2000), at least min_per_type.
std::map<QuestionType, int> type_targets(const GeneratorOptions& opt);

std::vector<GeneratedQuestion> generate_questions(const std::vector<MaskImage>& corpus,
                                                  const GeneratorOptions& opt,
                                                  std::vector<std::string>* warnings = nullptr);

/// Stores round2 of numeric answers (integers for counts); the range comes from the unrounded value.
QuestionRecord make_record(std::string id, const MaskImage& image, const QuestionParams& p,
                           const AnswerValue& unrounded, const CalibrationConstants& c = {});

nlohmann::ordered_json to_json(const QuestionRecord& r);
QuestionRecord record_from_json(const nlohmann::json& j);

std::string emit_dataset(const std::vector<QuestionRecord>& records);
void write_dataset(const std::vector<QuestionRecord>& records, const std::filesystem::path& path);
std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path);
std::vector<QuestionRecord> parse_dataset(const std::string& text);

/// Source tag and directory prefix of an image path ("earthvqa_0.3m/2923.png" -> "earthvqa").
std::string source_of(const std::string& image);

/// Uniform draw in [0, n) by rejection sampling.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n);

}  // namespace qvlm
