#include "qvlm/pipeline.hpp"

#include "json.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace qvlm {

using nlohmann::json;

PlanTable load_plan_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open plan table '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Syntax, "plan table '" + path.string() + "': " + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::Structural, "plan table must map question ids to plans");
  PlanTable out;
  for (auto& [id, plan] : doc.items()) {
    try {
      out.emplace(id, plan_from_json(plan));
    } catch (const Error& e) {
      throw Error(e.code(), id + ": " + e.what());
    }
  }
  return out;
}

void write_plan_table(const PlanTable& plans, const std::filesystem::path& path) {
  json doc = json::object();
  for (const auto& [id, plan] : plans) doc[id] = to_json(plan);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

void write_mock_table(const PlanTable& plans, const std::filesystem::path& path) {
  json doc = json::object();
  for (const auto& [id, plan] : plans) doc[id] = serialize_plan(plan);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

PlanProvider PlanProvider::from_table(PlanTable plans) {
  PlanProvider p;
  p.table_ = std::make_shared<const PlanTable>(std::move(plans));
  return p;
}

PlanProvider PlanProvider::from_client(CompletionConfig cfg) {
  PlanProvider p;
  p.client_ = std::make_shared<const CompletionClient>(std::move(cfg));
  return p;
}

ChatMessages question_messages(const QuestionRecord& q) {
  PromptSpec spec;
  spec.question = q.question;
  spec.gsd = q.gsd;
  spec.answer_format = answer_format_for(q.type);
  return build_messages(spec);
}

std::string PlanProvider::generate(const QuestionRecord& q) const {
  if (table_) {
    auto it = table_->find(q.id);
    if (it == table_->end()) fail(ErrorCode::NoCannedResponse, "no plan for '" + q.id + "'");
    return serialize_plan(it->second);
  }
  if (!client_) fail(ErrorCode::Config, "plan provider has no source");
  return client_->complete(question_messages(q), q.id);
}

Prediction answer_question(const QuestionRecord& q, const PlanProvider& plans, SegmentationBackend& backend) {
  Prediction p;
  p.question_id = q.id;
  const std::string reply = plans.generate(q);
  Plan plan;
  try {
    plan = extract_plan(reply).plan;
  } catch (const UnparseableGeneration& e) {
    p.status = PredictionStatus::Unparseable;
    p.trace = e.what();
    return p;
  }
  try {
    Answer a = execute_plan(plan, q.image, q.gsd, backend);
    p.value = a.value;
    for (std::size_t i = 0; i < a.trace.size(); ++i) p.trace += (i ? "\n" : "") + a.trace[i];
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Transport) throw;
    p.status = PredictionStatus::ExecutionError;
    p.trace = e.what();
  }
  return p;
}

std::vector<Prediction> answer_questions(std::span<const QuestionRecord> questions, const PlanProvider& plans,
                                         const BackendFactory& backends, int workers) {
  std::vector<Prediction> out(questions.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;

  auto work = [&] {
    std::unique_ptr<SegmentationBackend> backend = backends();
    for (std::size_t i = next++; i < questions.size(); i = next++) {
      try {
        out[i] = answer_question(questions[i], plans, *backend);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = questions.size();
      }
    }
  };

  const int n = std::max(1, std::min<int>(workers, int(questions.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace qvlm
