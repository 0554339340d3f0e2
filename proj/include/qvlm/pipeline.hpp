#pragma once

#include "qvlm/benchgen.hpp"
#include "qvlm/eval.hpp"
#include "qvlm/llm_bridge.hpp"
#include "qvlm/plan.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qvlm {

using PlanTable = std::map<std::string, Plan>;

/// {question_id: plan document}
PlanTable load_plan_table(const std::filesystem::path& path);
void write_plan_table(const PlanTable& plans, const std::filesystem::path& path);

/// {question_id: canonical plan text}, the shape a mock completion table takes.
void write_mock_table(const PlanTable& plans, const std::filesystem::path& path);

/// Produces the model's raw reply for a question: a stored plan rendered as
/// text, or a completion from the configured client.
class PlanProvider {
 public:
  static PlanProvider from_table(PlanTable plans);
  static PlanProvider from_client(CompletionConfig cfg);

  std::string generate(const QuestionRecord& q) const;

 private:
  std::shared_ptr<const PlanTable> table_;
  std::shared_ptr<const CompletionClient> client_;
};

ChatMessages question_messages(const QuestionRecord& q);

/// Generates, parses and runs the plan for one question. Plan and execution
/// failures become the prediction's status; transport and configuration
/// failures propagate.
Prediction answer_question(const QuestionRecord& q, const PlanProvider& plans, SegmentationBackend& backend);

using BackendFactory = std::function<std::unique_ptr<SegmentationBackend>()>;

/// Answers every question with up to `workers` threads; output is in input order.
std::vector<Prediction> answer_questions(std::span<const QuestionRecord> questions, const PlanProvider& plans,
                                         const BackendFactory& backends, int workers = 1);

}  // namespace qvlm
