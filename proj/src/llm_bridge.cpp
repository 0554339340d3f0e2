#include "qvlm/llm_bridge.hpp"

#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace qvlm {

using nlohmann::json;

const std::vector<TopicGloss>& default_topic_glosses() {
  static const std::vector<TopicGloss> topics{
      {"urban", "paved/built areas"}, {"forest", "trees"},           {"agric", "cultivated fields"},
      {"grass", "rangeland"},         {"barren", "bare earth"},      {"water", "water bodies"},
      {"solar", "solar panels"},      {"roof", "building roofs"},
  };
  return topics;
}

namespace {

const char* kDefaultRules =
    "You translate questions about an aerial image into a query plan.\n"
    "Reply with exactly one JSON plan document and nothing else: no prose, no code fences.\n"
    "The plan runs against segmentation and geometry operations on the image; it cannot run code.\n"
    "Every step binds its result to a new name. Later steps refer to earlier results by name.\n"
    "The last step produces the answer. Every other binding must be used by a later step.\n";

std::string format_gsd(double gsd) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", gsd);
  std::string s = buf;
  if (s.find('.') == std::string::npos) s += ".0";
  return s;
}

}  // namespace

std::string answer_format_for(QuestionType type) {
  switch (type) {
    case QuestionType::BinaryComparison:
    case QuestionType::BinaryThreshold:
    case QuestionType::BinaryPresence:
    case QuestionType::BinaryMultiple:
    case QuestionType::BinaryProximity:
      return "Set answer_kind to \"category\"; the final step must yield \"yes\" or \"no\".";
    case QuestionType::Fragmentation:
      return "Set answer_kind to \"category\"; the final step must yield \"connected\" or \"fragmented\".";
    case QuestionType::Percentage:
    case QuestionType::Size:
    case QuestionType::ProximityPercentage:
      return "Set answer_kind to \"number\"; the final step must yield a percentage between 0 and 100.";
    case QuestionType::PowerCalculation:
      return "Set answer_kind to \"number\"; the final step must yield megawatts.";
    default:
      if (is_count(type)) return "Set answer_kind to \"number\"; the final step must yield a count.";
      return "Set answer_kind to \"number\"; the final step must yield hectares.";
  }
}

ChatMessages build_messages(const PromptSpec& spec) {
  if (spec.question.empty()) fail(ErrorCode::Domain, "prompt needs a question");
  if (spec.topics.empty()) fail(ErrorCode::Domain, "prompt needs at least one topic");

  std::ostringstream sys;
  sys << (spec.rules_text.empty() ? kDefaultRules : spec.rules_text) << "\n";
  sys << "Plan document:\n"
      << R"({"answer_kind": "number" | "category", "steps": [{"kind": ..., "args": {...}, "bind": name}, ...]})"
      << "\n\nStep kinds:\n";
  for (const StepDoc& d : step_catalog()) sys << "- " << d.kind << " " << d.signature << "\n  " << d.summary << "\n";
  sys << "\nShape areas use the image GSD (meters per pixel): area_hectares = area_pixels * gsd^2 / 10000.\n";
  sys << "\nAvailable segmentation topics:\n";
  for (std::size_t i = 0; i < spec.topics.size(); ++i)
    sys << (i ? ", " : "") << spec.topics[i].name << " (" << spec.topics[i].gloss << ")";
  sys << "\n";
  if (!spec.answer_format.empty()) sys << "\nAnswer format: " << spec.answer_format << "\n";

  std::string question = spec.question;
  if (question.find("(GSD:") == std::string::npos) question += " (GSD: " + format_gsd(spec.gsd) + "m)";
  return {sys.str(), "Question: " + question + "\n\nReply with the plan document only."};
}

std::string build_prompt(const PromptSpec& spec) {
  const ChatMessages m = build_messages(spec);
  return m.system + "\n" + m.user;
}

json completion_request_body(const ChatMessages& messages, const CompletionConfig& cfg) {
  return {{"model", cfg.model},
          {"messages",
           json::array({{{"role", "system"}, {"content", messages.system}},
                        {{"role", "user"}, {"content", messages.user}}})},
          {"temperature", cfg.temperature},
          {"max_tokens", cfg.max_tokens}};
}

CompletionClient::CompletionClient(CompletionConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.mock_table && !cfg_.endpoint.empty())
    fail(ErrorCode::Config, "configure either a mock table or an endpoint, not both");
  if (!cfg_.mock_table && cfg_.endpoint.empty())
    fail(ErrorCode::Config, "no completion endpoint or mock table configured");
  if (cfg_.mock_table) {
    std::ifstream in(*cfg_.mock_table);
    if (!in) fail(ErrorCode::Io, "cannot open mock table '" + cfg_.mock_table->string() + "'");
    try {
      const json doc = json::parse(in);
      for (auto& [id, text] : doc.items()) mock_[id] = text.get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Config, "mock table: " + std::string(e.what()));
    }
  }
}

std::string CompletionClient::complete(const ChatMessages& messages, const std::string& question_id) const {
  if (cfg_.mock_table) {
    auto it = mock_.find(question_id);
    if (it == mock_.end()) fail(ErrorCode::NoCannedResponse, "no canned response for '" + question_id + "'");
    return it->second;
  }
  return live(messages);
}

std::string CompletionClient::live(const ChatMessages& messages) const {
  // scheme://host[:port][/path]
  const std::string& url = cfg_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::Config, "endpoint must start with http:// or https://");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string base = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
  if (path.empty() || path == "/") path = "/v1/chat/completions";

  httplib::Client client(base);
  client.set_connection_timeout(10);
  client.set_read_timeout(cfg_.timeout_s);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  const std::string body = completion_request_body(messages, cfg_).dump();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      const int wait = std::min(cfg_.backoff_ms << (attempt - 1), 4000);
      std::this_thread::sleep_for(std::chrono::milliseconds(wait));
    }
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      fail(ErrorCode::Transport, "completion endpoint returned HTTP " + std::to_string(res->status) + ": " +
                                     res->body.substr(0, 200));
    try {
      const json doc = json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Transport, std::string("malformed completion response: ") + e.what());
    }
  }
  fail(ErrorCode::Transport, "completion request failed after " + std::to_string(cfg_.max_retries + 1) +
                                 " attempts (" + last_error + ")");
}

ExtractedPlan extract_plan(const std::string& response) {
  std::string text = response;
  if (auto fence = text.find("```"); fence != std::string::npos) {
    auto body = text.find('\n', fence);
    auto close = body == std::string::npos ? std::string::npos : text.find("```", body);
    if (body != std::string::npos) text = text.substr(body + 1, close == std::string::npos ? std::string::npos : close - body - 1);
  }

  const auto open = text.find('{');
  if (open == std::string::npos) throw UnparseableGeneration("generation contains no plan document", response);
  int depth = 0;
  bool in_string = false, escaped = false;
  std::size_t end = std::string::npos;
  for (std::size_t i = open; i < text.size() && end == std::string::npos; ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"')
      in_string = true;
    else if (c == '{')
      ++depth;
    else if (c == '}' && --depth == 0)
      end = i;
  }
  if (end == std::string::npos) throw UnparseableGeneration("plan document is not closed", response);

  ExtractedPlan out;
  try {
    out.plan = parse_plan(std::string_view(text).substr(open, end - open + 1));
  } catch (const Error& e) {
    throw UnparseableGeneration(std::string("invalid plan: ") + e.what(), response);
  }
  const auto rest = text.find_first_not_of(" \t\r\n", end + 1);
  if (rest != std::string::npos) out.ignored_suffix = text.substr(rest);
  return out;
}

}  // namespace qvlm
