#include "qvlm/eval.hpp"

#include "qvlm/error.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace qvlm {

using nlohmann::json;

std::string_view to_string(PredictionStatus s) {
  switch (s) {
    case PredictionStatus::Answered: return "answered";
    case PredictionStatus::Unparseable: return "unparseable";
    case PredictionStatus::ExecutionError: return "execution_error";
  }
  return "?";
}

json to_json(const Prediction& p) {
  json j = {{"question_id", p.question_id}, {"status", to_string(p.status)}, {"trace", p.trace}};
  if (p.value) {
    if (const auto* d = std::get_if<double>(&*p.value))
      j["value"] = *d;
    else
      j["value"] = std::get<std::string>(*p.value);
  } else {
    j["value"] = nullptr;
  }
  return j;
}

Prediction prediction_from_json(const json& j) {
  Prediction p;
  try {
    p.question_id = j.at("question_id").get<std::string>();
    const std::string status = j.value("status", "answered");
    if (status == "answered")
      p.status = PredictionStatus::Answered;
    else if (status == "unparseable")
      p.status = PredictionStatus::Unparseable;
    else if (status == "execution_error")
      p.status = PredictionStatus::ExecutionError;
    else
      fail(ErrorCode::Validation, p.question_id + ": unknown status '" + status + "'");
    if (auto it = j.find("value"); it != j.end() && !it->is_null()) {
      if (it->is_number())
        p.value = it->get<double>();
      else if (it->is_string())
        p.value = it->get<std::string>();
      else
        fail(ErrorCode::Validation, p.question_id + ": value must be a number or a string");
    }
    if (j.contains("trace") && j["trace"].is_string()) p.trace = j["trace"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Validation, std::string("prediction: ") + e.what());
  }
  if (p.status == PredictionStatus::Answered && !p.value)
    fail(ErrorCode::Validation, p.question_id + ": answered prediction without a value");
  return p;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open predictions '" + path.string() + "'");
  std::vector<Prediction> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorCode::Validation, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write predictions '" + path.string() + "'");
  for (const Prediction& p : preds) out << to_json(p).dump() << '\n';
}

namespace {

std::string normalize(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

}  // namespace

Score score_prediction(const Prediction& pred, const QuestionRecord& q, const AcceptableRange& range) {
  Score s;
  if (pred.status != PredictionStatus::Answered || !pred.value) return s;
  const bool pred_numeric = std::holds_alternative<double>(*pred.value);
  if (pred_numeric != q.numeric()) {
    s.type_mismatch = true;
    return s;
  }
  if (pred_numeric) {
    const double v = std::get<double>(*pred.value);
    s.correct = std::isfinite(v) && range.contains(round2(v));
  } else {
    s.correct = normalize(std::get<std::string>(*pred.value)) == normalize(std::get<std::string>(q.answer));
  }
  return s;
}

Score score_prediction(const Prediction& pred, const QuestionRecord& q) {
  return score_prediction(pred, q, q.acceptable_range);
}

namespace {

ResultTable aggregate_with(std::span<const Prediction> preds, std::span<const QuestionRecord> questions,
                           double factor) {
  std::map<std::string, const Prediction*> by_id;
  std::map<std::string, bool> known;
  for (const auto& q : questions) known[q.id] = true;
  std::vector<std::string> orphans;
  for (const Prediction& p : preds) {
    if (!known.count(p.question_id)) orphans.push_back(p.question_id);
    by_id[p.question_id] = &p;  // later lines win
  }
  if (!orphans.empty()) {
    std::string ids;
    for (const auto& o : orphans) ids += (ids.empty() ? "" : ", ") + o;
    fail(ErrorCode::OrphanPrediction, "predictions for unknown questions: " + ids);
  }

  ResultTable t;
  for (const QuestionRecord& q : questions) {
    QuestionScore qs{q.id, q.type};
    auto it = by_id.find(q.id);
    if (it == by_id.end()) {
      qs.missing = true;
    } else {
      const Score s = score_prediction(*it->second, q, factor == 1.0 ? q.acceptable_range : widen(q, factor));
      qs.correct = s.correct;
      qs.type_mismatch = s.type_mismatch;
    }
    t.questions.push_back(qs);
    for (Cell* c : {&t.overall, &t.tiers[std::size_t(info(q.type).tier - 1)], &t.types[std::size_t(q.type)]}) {
      ++c->total;
      c->correct += qs.correct;
    }
  }
  return t;
}

std::string fmt_acc(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", a);
  return buf;
}

}  // namespace

ResultTable aggregate(std::span<const Prediction> preds, std::span<const QuestionRecord> questions) {
  return aggregate_with(preds, questions, 1.0);
}

AcceptableRange widen(const QuestionRecord& q, double f) {
  if (!(f >= 1.0)) fail(ErrorCode::Domain, "range multiplier must be >= 1");
  if (q.acceptable_range.exact) return q.acceptable_range;
  const double a = std::get<double>(q.answer);
  return {false, a - f * (a - q.acceptable_range.lo), a + f * (q.acceptable_range.hi - a)};
}

std::vector<SensitivityPoint> range_sensitivity(std::span<const Prediction> preds,
                                                std::span<const QuestionRecord> questions,
                                                std::span<const double> multipliers) {
  if (!std::is_sorted(multipliers.begin(), multipliers.end()))
    fail(ErrorCode::Domain, "multipliers must be sorted ascending");
  std::vector<SensitivityPoint> out;
  for (double f : multipliers) {
    if (!(f >= 1.0)) fail(ErrorCode::Domain, "range multiplier must be >= 1");
    const Cell c = aggregate_with(preds, questions, f).overall;
    out.push_back({f, c, 0.0});
  }
  for (auto& p : out) p.delta = 100.0 * (p.cell.accuracy() - out.front().cell.accuracy());
  return out;
}

std::string report_csv(const ResultTable& t) {
  std::ostringstream out;
  out << "scope,key,tier,type,correct,total,accuracy,flags\n";
  if (t.questions.empty()) return out.str();
  out << "overall,all,,," << t.overall.correct << ',' << t.overall.total << ',' << fmt_acc(t.overall.accuracy())
      << ",\n";
  for (int i = 0; i < 3; ++i) {
    const Cell& c = t.tiers[std::size_t(i)];
    out << "tier," << i + 1 << ',' << i + 1 << ",," << c.correct << ',' << c.total << ',' << fmt_acc(c.accuracy())
        << ",\n";
  }
  for (const auto& ti : kQuestionTypes) {
    const Cell& c = t.types[std::size_t(ti.type)];
    out << "type," << ti.name << ',' << ti.tier << ',' << ti.name << ',' << c.correct << ',' << c.total << ','
        << fmt_acc(c.accuracy()) << ",\n";
  }
  for (const QuestionScore& q : t.questions) {
    out << "question," << q.id << ',' << info(q.type).tier << ',' << to_string(q.type) << ',' << int(q.correct)
        << ",1," << fmt_acc(q.correct ? 1.0 : 0.0) << ','
        << (q.missing ? "missing" : q.type_mismatch ? "type_mismatch" : "") << '\n';
  }
  return out.str();
}

ResultTable parse_report_csv(const std::string& text) {
  ResultTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "scope,key,tier,type,correct,total,accuracy,flags")
    fail(ErrorCode::Validation, "report: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.push_back("");
    if (f.size() != 8) fail(ErrorCode::Validation, "report: malformed row '" + line + "'");
    const Cell c{std::stoi(f[4]), std::stoi(f[5])};
    if (f[0] == "overall") {
      t.overall = c;
    } else if (f[0] == "tier") {
      const int tier = std::stoi(f[1]);
      if (tier < 1 || tier > 3) fail(ErrorCode::Validation, "report: bad tier " + f[1]);
      t.tiers[std::size_t(tier - 1)] = c;
    } else if (f[0] == "type" || f[0] == "question") {
      const auto qt = question_type_from_string(f[3]);
      if (!qt) fail(ErrorCode::Validation, "report: unknown type " + f[3]);
      if (f[0] == "type") {
        t.types[std::size_t(*qt)] = c;
      } else {
        QuestionScore q{f[1], *qt};
        q.correct = c.correct == 1;
        q.missing = f[7] == "missing";
        q.type_mismatch = f[7] == "type_mismatch";
        t.questions.push_back(q);
      }
    } else {
      fail(ErrorCode::Validation, "report: unknown scope " + f[0]);
    }
  }
  return t;
}

std::string report_summary(const ResultTable& t) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "Overall: %d/%d (%.2f%%)\n", t.overall.correct, t.overall.total,
                100.0 * t.overall.accuracy());
  out << buf;
  for (int i = 0; i < 3; ++i) {
    const Cell& c = t.tiers[std::size_t(i)];
    std::snprintf(buf, sizeof buf, "Tier %d: %d/%d (%.2f%%)\n", i + 1, c.correct, c.total, 100.0 * c.accuracy());
    out << buf;
  }
  for (const auto& ti : kQuestionTypes) {
    const Cell& c = t.types[std::size_t(ti.type)];
    if (!c.total) continue;
    std::snprintf(buf, sizeof buf, "  %-34s %4d/%-4d %6.2f%%\n", std::string(ti.name).c_str(), c.correct, c.total,
                  100.0 * c.accuracy());
    out << buf;
  }
  int missing = 0, mismatched = 0;
  for (const auto& q : t.questions) {
    missing += q.missing;
    mismatched += q.type_mismatch;
  }
  if (missing) out << "Missing predictions: " << missing << "\n";
  if (mismatched) out << "Answer type mismatches: " << mismatched << "\n";
  return out.str();
}

std::string sensitivity_csv(std::span<const SensitivityPoint> curve) {
  std::ostringstream out;
  out << "multiplier,correct,total,accuracy,delta_points\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.2f,%d,%d,%.6f,%.4f\n", p.multiplier, p.cell.correct, p.cell.total,
                  p.cell.accuracy(), p.delta);
    out << buf;
  }
  return out.str();
}

void emit_report(const ResultTable& t, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream csv(dir / "report.csv");
  std::ofstream txt(dir / "summary.txt");
  if (!csv || !txt) fail(ErrorCode::Io, "cannot write report into '" + dir.string() + "'");
  csv << report_csv(t);
  if (!t.questions.empty()) txt << report_summary(t);
}

}  // namespace qvlm
