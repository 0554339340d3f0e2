#pragma once

#include "qvlm/benchgen.hpp"
#include "qvlm/question_types.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qvlm {

enum class PredictionStatus { Answered, Unparseable, ExecutionError };

std::string_view to_string(PredictionStatus s);

struct Prediction {
  std::string question_id;
  std::optional<AnswerValue> value;  // present when answered
  PredictionStatus status = PredictionStatus::Answered;
  std::string trace;
};

nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

/// One record per line.
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path);

struct Score {
  bool correct = false;
  bool type_mismatch = false;
};

/// Numeric predictions are rounded to two decimals and checked against the
/// inclusive range; categories match case-insensitively after trimming.
Score score_prediction(const Prediction& pred, const QuestionRecord& question);
Score score_prediction(const Prediction& pred, const QuestionRecord& question, const AcceptableRange& range);

struct Cell {
  int correct = 0;
  int total = 0;
  double accuracy() const { return total ? double(correct) / double(total) : 0.0; }
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct QuestionScore {
  std::string id;
  QuestionType type;
  bool correct = false;
  bool missing = false;
  bool type_mismatch = false;
  friend bool operator==(const QuestionScore&, const QuestionScore&) = default;
};

struct ResultTable {
  std::vector<QuestionScore> questions;  // dataset order
  Cell overall;
  std::array<Cell, 3> tiers{};
  std::array<Cell, kQuestionTypeCount> types{};
  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

/// Missing predictions count as incorrect; predictions for unknown ids are an error.
ResultTable aggregate(std::span<const Prediction> preds, std::span<const QuestionRecord> questions);

/// Range scaled about the stored answer: lo' = A - f (A - lo), hi' = A + f (hi - A).
AcceptableRange widen(const QuestionRecord& q, double factor);

struct SensitivityPoint {
  double multiplier = 1.0;
  Cell cell;
  double delta = 0.0;  // accuracy minus accuracy at the first multiplier, in points
};

std::vector<SensitivityPoint> range_sensitivity(std::span<const Prediction> preds,
                                                std::span<const QuestionRecord> questions,
                                                std::span<const double> multipliers);

/// Comma-separated table: scope,key,tier,type,correct,total,accuracy,flags.
std::string report_csv(const ResultTable& table);
ResultTable parse_report_csv(const std::string& text);
std::string report_summary(const ResultTable& table);
std::string sensitivity_csv(std::span<const SensitivityPoint> curve);

/// Writes report.csv and summary.txt into dir.
void emit_report(const ResultTable& table, const std::filesystem::path& dir);

}  // namespace qvlm
