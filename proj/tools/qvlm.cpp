#include "qvlm/calibration.hpp"
#include "qvlm/eval.hpp"
#include "qvlm/fixtures.hpp"
#include "qvlm/json_io.hpp"
#include "qvlm/pipeline.hpp"
#include "qvlm/service.hpp"
#include "qvlm/store.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace qvlm;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kParse = 4, kExecution = 5, kTransport = 6, kDomain = 7 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::Config:
    case ErrorCode::NotFound:
      return kIo;
    case ErrorCode::Structural:
    case ErrorCode::Syntax:
    case ErrorCode::NoSteps:
    case ErrorCode::UnknownStepKind:
    case ErrorCode::UnboundReference:
    case ErrorCode::TypeMismatch:
    case ErrorCode::MissingField:
    case ErrorCode::DuplicateBinding:
    case ErrorCode::UnparseableGeneration:
    case ErrorCode::Validation:
    case ErrorCode::OrphanPrediction:
      return kParse;
    case ErrorCode::UnknownTopic:
    case ErrorCode::Backend:
    case ErrorCode::DivisionByZero:
    case ErrorCode::EmptyAverage:
    case ErrorCode::EmptyReferences:
      return kExecution;
    case ErrorCode::Transport:
    case ErrorCode::NoCannedResponse:
      return kTransport;
    case ErrorCode::Domain:
      return kDomain;
  }
  return kExecution;
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

std::string format_value(const AnswerValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", std::get<double>(v));
  return buf;
}

struct PlanFlags {
  std::string plans;
  std::string mock_table;
  std::string llm_endpoint;
  std::string model = "gpt-4o";

  void add(CLI::App* app) {
    app->add_option("--plans", plans, "Plan table {question_id: plan}");
    app->add_option("--mock-table", mock_table, "Canned completions {question_id: text}");
    app->add_option("--llm-endpoint", llm_endpoint, "Chat-completions URL");
    app->add_option("--model", model, "Model name sent to the endpoint");
  }

  PlanProvider provider() const {
    const int sources = !plans.empty() + !mock_table.empty() + !llm_endpoint.empty();
    if (sources != 1) fail(ErrorCode::Config, "give exactly one of --plans, --mock-table, --llm-endpoint");
    if (!plans.empty()) return PlanProvider::from_table(load_plan_table(plans));
    CompletionConfig cfg;
    cfg.model = model;
    if (!mock_table.empty())
      cfg.mock_table = fs::path(mock_table);
    else
      cfg.endpoint = llm_endpoint;
    return PlanProvider::from_client(cfg);
  }
};

BackendFactory backend_factory(const std::string& service, const std::string& store_path) {
  if (!service.empty()) return [service] { return std::make_unique<HttpBackend>(service); };
  if (store_path.empty()) fail(ErrorCode::Config, "--store or --service is required");
  std::shared_ptr<const BackendStore> store = BackendStore::load(store_path);
  return [store] { return std::make_unique<FileBackend>(store); };
}

const QuestionRecord& find_question(const std::vector<QuestionRecord>& qs, const std::string& id) {
  for (const QuestionRecord& q : qs)
    if (q.id == id) return q;
  fail(ErrorCode::NotFound, "no question '" + id + "' in the dataset");
}

std::vector<double> parse_multipliers(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0' || !(v > 0)) fail(ErrorCode::Domain, "bad multiplier '" + item + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantitative questions over segmented aerial imagery"};
  app.require_subcommand(1);

  const int default_workers = int(std::max(1u, std::thread::hardware_concurrency()));
  std::string store_path = env_or("QVLM_STORE", "");
  std::string dataset_path, out_path, service_url;
  int workers = default_workers;
  std::uint64_t seed = 0;
  PlanFlags plan_flags;

  // segment
  auto* segment = app.add_subcommand("segment", "Segment one image from the store");
  std::string image_ref, topics_csv;
  std::int64_t min_area = 0;
  double gsd = 0.0;
  segment->add_option("--store", store_path, "Store manifest")->envname("QVLM_STORE");
  segment->add_option("--image", image_ref, "Image id or path")->required();
  segment->add_option("--topics", topics_csv, "Comma-separated topics")->required();
  segment->add_option("--min-area", min_area, "Minimum component size in pixels");
  segment->add_option("--gsd", gsd, "Meters per pixel (default: the image's)");

  // ask
  auto* ask = app.add_subcommand("ask", "Answer one dataset question end to end");
  std::string question_id;
  ask->add_option("--store", store_path, "Store manifest")->envname("QVLM_STORE");
  ask->add_option("--service", service_url, "Segmentation service base URL instead of --store");
  ask->add_option("--dataset", dataset_path, "Dataset file")->required();
  ask->add_option("--id", question_id, "Question id")->required();
  plan_flags.add(ask);

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "Generate questions from the store's ground truth");
  int total = 2000, min_per_type = 0;
  gen->add_option("--store", store_path, "Store manifest")->envname("QVLM_STORE");
  gen->add_option("--seed", seed, "Sampling seed");
  gen->add_option("--total", total, "Dataset size before per-type minimums");
  gen->add_option("--min-per-type", min_per_type, "Minimum questions per type");
  gen->add_option("--out", out_path, "Output directory")->required();

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Recompute range constants from annotations");
  std::string annotations_path;
  cal->add_option("--annotations", annotations_path, "Annotation log (one record per line)")->required();
  cal->add_option("--dataset", dataset_path, "Dataset file")->required();
  cal->add_option("--out", out_path, "Write the result here instead of stdout");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions, or generate them first");
  std::string predictions_path;
  evaluate->add_option("--dataset", dataset_path, "Dataset file")->required();
  evaluate->add_option("--predictions", predictions_path, "Predictions file to score");
  evaluate->add_option("--store", store_path, "Store manifest")->envname("QVLM_STORE");
  evaluate->add_option("--service", service_url, "Segmentation service base URL instead of --store");
  evaluate->add_option("--workers", workers, "Parallel questions");
  evaluate->add_option("--out", out_path, "Report directory")->required();
  plan_flags.add(evaluate);

  // sensitivity
  auto* sens = app.add_subcommand("sensitivity", "Accuracy as acceptable ranges widen");
  std::string multipliers = "1.0,1.2,1.4,1.6,1.8,2.0";
  sens->add_option("--dataset", dataset_path, "Dataset file")->required();
  sens->add_option("--predictions", predictions_path, "Predictions file")->required();
  sens->add_option("--multipliers", multipliers, "Comma-separated range multipliers");
  sens->add_option("--out", out_path, "Write the curve here instead of stdout");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the segmentation and annotation service");
  std::string host = env_or("QVLM_HOST", "127.0.0.1");
  int port = std::atoi(env_or("QVLM_PORT", "8080").c_str());
  serve->add_option("--store", store_path, "Store manifest")->envname("QVLM_STORE");
  serve->add_option("--dataset", dataset_path, "Dataset whose questions become annotation tasks");
  serve->add_option("--annotations", annotations_path, "Annotation log")->envname("QVLM_ANNOTATIONS");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->envname("QVLM_PORT");

  // make-fixture
  auto* fixture = app.add_subcommand("make-fixture", "Write the synthetic corpus or the roof scene");
  bool roof_scene = false;
  fixture->add_option("--out", out_path, "Output directory")->required();
  fixture->add_option("--seed", seed, "Corpus seed");
  fixture->add_flag("--roof-scene", roof_scene, "Write the single roof scene with its question");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*segment) {
      if (store_path.empty()) fail(ErrorCode::Config, "--store is required");
      std::vector<std::string> topics;
      for (std::size_t s = 0; s <= topics_csv.size();) {
        const std::size_t c = topics_csv.find(',', s);
        const std::string t = topics_csv.substr(s, c == std::string::npos ? std::string::npos : c - s);
        if (!t.empty()) topics.push_back(t);
        if (c == std::string::npos) break;
        s = c + 1;
      }
      const auto store = BackendStore::load(store_path);
      std::cout << to_json(store->segment(image_ref, topics, min_area, gsd)).dump(2) << "\n";
    } else if (*ask) {
      const auto questions = load_dataset(dataset_path);
      const QuestionRecord& q = find_question(questions, question_id);
      const auto backend = backend_factory(service_url, store_path)();
      const Prediction p = answer_question(q, plan_flags.provider(), *backend);
      std::cout << q.question << "\n";
      if (!p.trace.empty()) std::cout << p.trace << "\n";
      if (p.status != PredictionStatus::Answered) {
        std::cerr << "qvlm: " << to_string(p.status) << "\n";
        return p.status == PredictionStatus::Unparseable ? kParse : kExecution;
      }
      const Score s = score_prediction(p, q);
      std::cout << "final answer: " << format_value(*p.value) << "\n";
      std::cout << "reference: " << format_value(q.answer);
      if (!q.acceptable_range.exact)
        std::cout << " [" << format_value(q.acceptable_range.lo) << ", " << format_value(q.acceptable_range.hi) << "]";
      std::cout << "\n" << (s.correct ? "correct" : "incorrect") << "\n";
    } else if (*gen) {
      if (store_path.empty()) fail(ErrorCode::Config, "--store is required");
      const auto store = BackendStore::load(store_path);
      GeneratorOptions opt;
      opt.seed = seed;
      opt.total = total;
      opt.min_per_type = min_per_type;
      std::vector<std::string> warnings;
      const auto generated = generate_questions(load_ground_truth(*store), opt, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

      std::vector<QuestionRecord> records;
      PlanTable plans;
      for (const auto& g : generated) {
        records.push_back(g.record);
        plans.emplace(g.record.id, g.plan);
      }
      fs::create_directories(out_path);
      write_dataset(records, fs::path(out_path) / "dataset.json");
      write_plan_table(plans, fs::path(out_path) / "canonical_plans.json");
      write_mock_table(plans, fs::path(out_path) / "mock_table.json");
      std::cout << records.size() << " questions written to " << out_path << "\n";
    } else if (*cal) {
      std::map<std::string, QuestionType> types;
      for (const QuestionRecord& q : load_dataset(dataset_path)) types.emplace(q.id, q.type);
      const std::vector<AnnotationRecord> records = read_annotations(annotations_path);
      const std::string text = to_json(calibrate(records, types)).dump(2) + "\n";
      if (out_path.empty())
        std::cout << text;
      else
        write_text(out_path, text);
    } else if (*evaluate) {
      const auto questions = load_dataset(dataset_path);
      std::vector<Prediction> preds;
      fs::create_directories(out_path);
      if (!predictions_path.empty()) {
        preds = read_predictions(predictions_path);
      } else {
        preds = answer_questions(questions, plan_flags.provider(), backend_factory(service_url, store_path), workers);
        write_predictions(preds, fs::path(out_path) / "predictions.jsonl");
      }
      const ResultTable table = aggregate(preds, questions);
      emit_report(table, out_path);
      std::cout << report_summary(table);
    } else if (*sens) {
      const auto questions = load_dataset(dataset_path);
      const auto preds = read_predictions(predictions_path);
      const auto grid = parse_multipliers(multipliers);
      const std::string text = sensitivity_csv(range_sensitivity(preds, questions, grid));
      if (out_path.empty())
        std::cout << text;
      else
        write_text(out_path, text);
    } else if (*serve) {
      ServiceConfig cfg;
      if (!store_path.empty()) cfg.store = BackendStore::load(store_path);
      if (!dataset_path.empty()) cfg.tasks = load_dataset(dataset_path);
      if (!annotations_path.empty()) cfg.annotations = annotations_path;
      Service service(cfg);
      std::cerr << "listening on " << host << ":" << port << "\n";
      service.run(host, port);
    } else if (*fixture) {
      if (roof_scene) {
        const fs::path manifest = write_roof_scene(out_path);
        const QuestionRecord q = roof_scene_record();
        write_dataset({q}, fs::path(out_path) / "dataset.json");
        const PlanTable plans{{q.id, canonical_plan(roof_scene_params())}};
        write_plan_table(plans, fs::path(out_path) / "canonical_plans.json");
        write_mock_table(plans, fs::path(out_path) / "mock_table.json");
        std::cout << manifest.string() << "\n";
      } else {
        CorpusOptions opt;
        if (seed) opt.seed = seed;
        std::cout << write_synthetic_corpus(out_path, opt).string() << "\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "qvlm: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "qvlm: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
