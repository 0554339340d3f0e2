#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace qvlm {

enum class QuestionType {
  // tier 1
  Count,
  BinaryComparison,
  Size,
  Percentage,
  BinaryThreshold,
  BinaryPresence,
  BinaryMultiple,
  TotalArea,
  // tier 2
  ProximityPercentage,
  BinaryProximity,
  ProximityArea,
  Connectivity,
  Fragmentation,
  BuildingProximity,
  PowerCalculation,
  BuildingFireRisk,
  BuildingFloodRisk,
  // tier 3
  ComplexMultiCondition,
  ComplexAgricultureWaterAccess,
  ComplexVegetationWaterAccess,
  ComplexUrbanFireRisk,
  ComplexUrbanFloodRisk,
  ComplexAverage,
  ComplexSizeFilter,
};

inline constexpr int kQuestionTypeCount = 24;

/// How an answer's acceptable range is built.
enum class RangeFamily { Percentage, ProximityPercentage, Count, Continuous, Categorical };

struct QuestionTypeInfo {
  QuestionType type;
  std::string_view name;
  int tier;
  RangeFamily family;
  int reference_count;  // questions of this type in the reference 2,000-question mix
};

inline constexpr std::array<QuestionTypeInfo, kQuestionTypeCount> kQuestionTypes{{
    {QuestionType::Count, "count", 1, RangeFamily::Count, 178},
    {QuestionType::BinaryComparison, "binary_comparison", 1, RangeFamily::Categorical, 172},
    {QuestionType::Size, "size", 1, RangeFamily::Percentage, 166},
    {QuestionType::Percentage, "percentage", 1, RangeFamily::Percentage, 157},
    {QuestionType::BinaryThreshold, "binary_threshold", 1, RangeFamily::Categorical, 11},
    {QuestionType::BinaryPresence, "binary_presence", 1, RangeFamily::Categorical, 10},
    {QuestionType::BinaryMultiple, "binary_multiple", 1, RangeFamily::Categorical, 10},
    {QuestionType::TotalArea, "total_area", 1, RangeFamily::Continuous, 6},
    {QuestionType::ProximityPercentage, "proximity_percentage", 2, RangeFamily::ProximityPercentage, 123},
    {QuestionType::BinaryProximity, "binary_proximity", 2, RangeFamily::Categorical, 122},
    {QuestionType::ProximityArea, "proximity_area", 2, RangeFamily::Continuous, 107},
    {QuestionType::Connectivity, "connectivity", 2, RangeFamily::Count, 104},
    {QuestionType::Fragmentation, "fragmentation", 2, RangeFamily::Categorical, 98},
    {QuestionType::BuildingProximity, "building_proximity", 2, RangeFamily::Count, 35},
    {QuestionType::PowerCalculation, "power_calculation", 2, RangeFamily::Continuous, 14},
    {QuestionType::BuildingFireRisk, "building_fire_risk", 2, RangeFamily::Count, 9},
    {QuestionType::BuildingFloodRisk, "building_flood_risk", 2, RangeFamily::Count, 4},
    {QuestionType::ComplexMultiCondition, "complex_multi_condition", 3, RangeFamily::Continuous, 490},
    {QuestionType::ComplexAgricultureWaterAccess, "complex_agriculture_water_access", 3, RangeFamily::Continuous, 81},
    {QuestionType::ComplexVegetationWaterAccess, "complex_vegetation_water_access", 3, RangeFamily::Continuous, 32},
    {QuestionType::ComplexUrbanFireRisk, "complex_urban_fire_risk", 3, RangeFamily::Continuous, 32},
    {QuestionType::ComplexUrbanFloodRisk, "complex_urban_flood_risk", 3, RangeFamily::Continuous, 18},
    {QuestionType::ComplexAverage, "complex_average", 3, RangeFamily::Continuous, 15},
    {QuestionType::ComplexSizeFilter, "complex_size_filter", 3, RangeFamily::Continuous, 6},
}};

inline constexpr const QuestionTypeInfo& info(QuestionType t) { return kQuestionTypes[std::size_t(t)]; }
inline constexpr std::string_view to_string(QuestionType t) { return info(t).name; }

inline std::optional<QuestionType> question_type_from_string(std::string_view name) {
  for (const auto& i : kQuestionTypes)
    if (i.name == name) return i.type;
  return std::nullopt;
}

inline bool is_categorical(QuestionType t) { return info(t).family == RangeFamily::Categorical; }
inline bool is_count(QuestionType t) { return info(t).family == RangeFamily::Count; }

}  // namespace qvlm
