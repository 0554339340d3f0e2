#pragma once

#include "qvlm/error.hpp"
#include "qvlm/plan.hpp"
#include "qvlm/question_types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qvlm {

struct TopicGloss {
  std::string name;
  std::string gloss;
};

/// The eight segmentation topics with one-line descriptions.
const std::vector<TopicGloss>& default_topic_glosses();

struct PromptSpec {
  std::string rules_text;  // empty: built-in rules
  std::vector<TopicGloss> topics = default_topic_glosses();
  std::string answer_format;
  std::string question;
  double gsd = 1.0;
};

/// Answer instructions for a question type.
std::string answer_format_for(QuestionType type);

struct ChatMessages {
  std::string system;  // rules, plan language, topics, answer format
  std::string user;    // the question
};

ChatMessages build_messages(const PromptSpec& spec);

/// System and user text joined; what a single-turn model would see.
std::string build_prompt(const PromptSpec& spec);

struct CompletionConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model = "gpt-4o";
  double temperature = 0.0;
  int max_tokens = 4096;
  std::optional<std::filesystem::path> mock_table;
  int max_retries = 3;
  int backoff_ms = 250;
  int timeout_s = 120;
  std::string api_key_env = "QVLM_API_KEY";
};

/// Talks to a chat-completions endpoint, or answers from a canned table
/// ({question_id: response text}) when a mock table is configured.
class CompletionClient {
 public:
  explicit CompletionClient(CompletionConfig cfg);

  std::string complete(const ChatMessages& messages, const std::string& question_id) const;
  const CompletionConfig& config() const { return cfg_; }

 private:
  std::string live(const ChatMessages& messages) const;

  CompletionConfig cfg_;
  std::map<std::string, std::string> mock_;
};

/// Request body sent to the endpoint.
nlohmann::json completion_request_body(const ChatMessages& messages, const CompletionConfig& cfg);

class UnparseableGeneration : public Error {
 public:
  UnparseableGeneration(const std::string& what, std::string raw)
      : Error(ErrorCode::UnparseableGeneration, what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

struct ExtractedPlan {
  Plan plan;
  std::string ignored_suffix;  // text after the plan document, if any
};

/// Strips code fences, takes the first balanced {...} document and parses it.
/// Throws UnparseableGeneration carrying the raw text on failure.
ExtractedPlan extract_plan(const std::string& response);

}  // namespace qvlm
