#include "qvlm/calibration.hpp"

#include "qvlm/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>

namespace qvlm {

using nlohmann::json;

double round2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

AcceptableRange categorical_range() { return {true, 0.0, 0.0}; }

AcceptableRange acceptable_range(double answer, QuestionType type, const CalibrationConstants& c) {
  const RangeFamily family = info(type).family;
  if (family == RangeFamily::Categorical) return categorical_range();
  if (!std::isfinite(answer)) fail(ErrorCode::Domain, "answer must be finite");
  if (answer < 0) fail(ErrorCode::Domain, "answer must be non-negative");

  AcceptableRange r;
  switch (family) {
    case RangeFamily::Percentage:
    case RangeFamily::ProximityPercentage: {
      const double half = family == RangeFamily::Percentage ? c.mad_percentage : c.mad_proximity;
      r.lo = round2(answer - half);
      r.hi = std::min(100.0, round2(answer + half));
      break;
    }
    case RangeFamily::Count: {
      if (answer == 0) return {false, 0.0, 1.0};
      const double half = answer * c.madc_count;
      r.lo = std::floor(answer - half + 1e-9);
      r.hi = std::ceil(answer + half - 1e-9);
      break;
    }
    case RangeFamily::Continuous: {
      const double half = answer * c.rel_area;
      r.lo = round2(answer - half);
      r.hi = round2(answer + half);
      break;
    }
    case RangeFamily::Categorical:
      break;
  }
  r.lo = std::max(0.0, r.lo);
  return r;
}

double median(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::Domain, "median of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double mad(std::span<const double> values) {
  const double m = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double x : values) dev.push_back(std::fabs(x - m));
  return median(dev);
}

double madc(std::span<const double> values) {
  const double m = median(values);
  if (m == 0.0) fail(ErrorCode::Domain, "madc: median is zero");
  return mad(values) / m;
}

std::string majority_vote(std::span<const std::string> values) {
  if (values.empty()) fail(ErrorCode::Domain, "majority_vote of an empty list");
  std::map<std::string, int> counts;
  for (const auto& v : values) ++counts[v];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

Reliability krippendorff_alpha(const ResponseMatrix& responses) {
  // Pairable values only: units with at least two responses.
  double n = 0.0, sum = 0.0, sum_sq = 0.0, d_within = 0.0;
  for (Eigen::Index u = 0; u < responses.rows(); ++u) {
    double m = 0.0, s = 0.0, s2 = 0.0;
    for (Eigen::Index a = 0; a < responses.cols(); ++a) {
      const double v = responses(u, a);
      if (std::isnan(v)) continue;
      if (!std::isfinite(v)) fail(ErrorCode::Domain, "krippendorff_alpha: non-finite response");
      m += 1;
      s += v;
      s2 += v * v;
    }
    if (m < 2) continue;
    // sum over ordered pairs i != j of (v_i - v_j)^2 = 2 (m s2 - s^2)
    d_within += 2.0 * (m * s2 - s * s) / (m - 1.0);
    n += m;
    sum += s;
    sum_sq += s2;
  }
  if (n < 2) fail(ErrorCode::Domain, "krippendorff_alpha: fewer than two pairable values");
  const double d_o = d_within / n;
  const double d_e = 2.0 * (n * sum_sq - sum * sum) / (n * (n - 1.0));
  if (d_e <= 0.0) return {1.0, true};
  return {1.0 - d_o / d_e, false};
}

namespace {

struct MeanSquares {
  double msr, msc, mse;
  double n, k;
};

MeanSquares anova(const ResponseMatrix& x) {
  const double n = double(x.rows()), k = double(x.cols());
  if (x.rows() < 2 || x.cols() < 2) fail(ErrorCode::Domain, "icc: need at least 2 items and 2 raters");
  if (!x.allFinite()) fail(ErrorCode::Domain, "icc: matrix must be complete");
  const double grand = x.mean();
  const Eigen::VectorXd row_means = x.rowwise().mean();
  const Eigen::RowVectorXd col_means = x.colwise().mean();
  const double ssr = k * (row_means.array() - grand).square().sum();
  const double ssc = n * (col_means.array() - grand).square().sum();
  const double sst = (x.array() - grand).square().sum();
  const double sse = sst - ssr - ssc;
  return {ssr / (n - 1), ssc / (k - 1), sse / ((n - 1) * (k - 1)), n, k};
}

}  // namespace

Reliability icc2k(const ResponseMatrix& responses) {
  const MeanSquares m = anova(responses);
  const double denom = m.msr + (m.msc - m.mse) / m.n;
  if (m.msr == 0.0 && m.mse == 0.0 && m.msc == 0.0) return {1.0, true};
  if (denom == 0.0) return {0.0, true};
  return {(m.msr - m.mse) / denom, false};
}

Reliability icc2k_consistency(const ResponseMatrix& responses) {
  const MeanSquares m = anova(responses);
  if (m.msr == 0.0) return {m.mse == 0.0 ? 1.0 : 0.0, true};
  return {(m.msr - m.mse) / m.msr, false};
}

double grid_percentage(const GridAnswer& grid) {
  if (grid.resolution < kMinGridResolution || grid.resolution > kMaxGridResolution)
    fail(ErrorCode::Validation, "grid resolution must be within 10..320");
  std::vector<int> cells = grid.cells;
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return 100.0 * double(cells.size()) / (double(grid.resolution) * grid.resolution);
}

double ruler_distance(double x0, double y0, double x1, double y1, double gsd) {
  if (!(gsd > 0.0)) fail(ErrorCode::Domain, "gsd must be positive");
  return std::hypot(x1 - x0, y1 - y0) * gsd;
}

void AnnotationRecord::validate() const {
  if (question_id.empty()) fail(ErrorCode::Validation, "annotation: missing question_id");
  if (annotator_id.empty()) fail(ErrorCode::Validation, "annotation: missing annotator_id");
  if (const auto* d = std::get_if<double>(&value)) {
    if (!std::isfinite(*d)) fail(ErrorCode::Validation, "annotation: value must be finite");
    if (is_distance && *d < 0) fail(ErrorCode::Validation, "annotation: distance must be non-negative");
  } else if (const auto* g = std::get_if<GridAnswer>(&value)) {
    if (g->resolution < kMinGridResolution || g->resolution > kMaxGridResolution)
      fail(ErrorCode::Validation, "annotation: grid resolution must be within 10..320");
    const int n = g->resolution * g->resolution;
    for (int c : g->cells)
      if (c < 0 || c >= n) fail(ErrorCode::Validation, "annotation: grid cell out of range");
  } else if (std::get<std::string>(value).empty()) {
    fail(ErrorCode::Validation, "annotation: empty category");
  }
}

json to_json(const AnnotationRecord& r) {
  json j = {{"question_id", r.question_id}, {"annotator_id", r.annotator_id}};
  if (const auto* d = std::get_if<double>(&r.value)) {
    j["kind"] = r.is_distance ? "distance" : "number";
    j["value"] = *d;
  } else if (const auto* g = std::get_if<GridAnswer>(&r.value)) {
    j["kind"] = "grid";
    j["grid"] = {{"n", g->resolution}, {"cells", g->cells}};
  } else {
    j["kind"] = "category";
    j["value"] = std::get<std::string>(r.value);
  }
  return j;
}

AnnotationRecord annotation_from_json(const json& j) {
  AnnotationRecord r;
  try {
    r.question_id = j.at("question_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "number" || kind == "distance") {
      r.value = j.at("value").get<double>();
      r.is_distance = kind == "distance";
    } else if (kind == "category") {
      r.value = j.at("value").get<std::string>();
    } else if (kind == "grid") {
      const json& g = j.at("grid");
      r.value = GridAnswer{g.at("n").get<int>(), g.at("cells").get<std::vector<int>>()};
    } else {
      fail(ErrorCode::Validation, "annotation: unknown kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Validation, std::string("annotation: ") + e.what());
  }
  r.validate();
  return r;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(annotation_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorCode::Validation, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void append_annotation(const std::filesystem::path& path, const AnnotationRecord& r) {
  r.validate();
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCode::Io, "cannot append to '" + path.string() + "'");
  out << to_json(r).dump() << '\n';
}

CalibrationResult calibrate(std::span<const AnnotationRecord> records,
                            const std::map<std::string, QuestionType>& question_types,
                            const CalibrationConstants& defaults) {
  // question id -> annotator -> response; later records replace earlier ones
  std::map<std::string, std::map<std::string, const AnnotationRecord*>> by_question;
  for (const AnnotationRecord& r : records)
    if (question_types.count(r.question_id)) by_question[r.question_id][r.annotator_id] = &r;

  auto numeric = [](const AnnotationRecord& r) -> std::optional<double> {
    if (const auto* d = std::get_if<double>(&r.value)) return *d;
    if (const auto* g = std::get_if<GridAnswer>(&r.value)) return grid_percentage(*g);
    return std::nullopt;
  };

  CalibrationResult out;
  out.constants = defaults;
  std::map<RangeFamily, std::vector<double>> spread;
  std::map<QuestionType, std::vector<std::string>> type_questions;

  for (const auto& [qid, responses] : by_question) {
    const QuestionType type = question_types.at(qid);
    if (responses.size() < 2) continue;
    if (is_categorical(type)) {
      std::vector<std::string> votes;
      for (const auto& [who, r] : responses)
        if (const auto* s = std::get_if<std::string>(&r->value)) votes.push_back(*s);
      if (!votes.empty()) out.majority[qid] = majority_vote(votes);
      continue;
    }
    std::vector<double> values;
    for (const auto& [who, r] : responses)
      if (auto v = numeric(*r)) values.push_back(*v);
    if (values.size() < 2) continue;
    type_questions[type].push_back(qid);
    const RangeFamily family = info(type).family;
    if (family == RangeFamily::Percentage || family == RangeFamily::ProximityPercentage) {
      spread[family].push_back(mad(values));
    } else if (median(values) != 0.0) {
      spread[family].push_back(madc(values));
    }
  }

  auto estimate = [&](RangeFamily family, const char* name, double& target) {
    const auto it = spread.find(family);
    if (it == spread.end() || it->second.empty()) return;
    double sum = 0.0;
    for (double v : it->second) sum += v;
    target = sum / double(it->second.size());
    out.samples[name] = int(it->second.size());
  };
  estimate(RangeFamily::Percentage, "mad_percentage", out.constants.mad_percentage);
  estimate(RangeFamily::ProximityPercentage, "mad_proximity", out.constants.mad_proximity);
  estimate(RangeFamily::Count, "madc_count", out.constants.madc_count);
  estimate(RangeFamily::Continuous, "rel_area", out.constants.rel_area);

  for (const auto& [type, ids] : type_questions) {
    std::map<std::string, Eigen::Index> column;
    for (const auto& id : ids)
      for (const auto& [who, r] : by_question.at(id)) column.emplace(who, 0);
    Eigen::Index next = 0;
    for (auto& [who, c] : column) c = next++;
    ResponseMatrix m = ResponseMatrix::Constant(Eigen::Index(ids.size()), next, std::nan(""));
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (const auto& [who, r] : by_question.at(ids[i]))
        if (auto v = numeric(*r)) m(Eigen::Index(i), column.at(who)) = *v;

    TypeAgreement a;
    a.type = type;
    a.questions = int(ids.size());
    try {
      a.alpha = krippendorff_alpha(m);
    } catch (const Error&) {
    }
    if (m.allFinite() && m.rows() >= 2 && m.cols() >= 2) a.icc = icc2k(m);
    out.agreement.push_back(a);
  }
  return out;
}

json to_json(const CalibrationResult& r) {
  json agreement = json::array();
  auto rel = [](const std::optional<Reliability>& v) -> json {
    if (!v) return nullptr;
    return {{"value", v->value}, {"degenerate", v->degenerate}};
  };
  for (const TypeAgreement& a : r.agreement)
    agreement.push_back(
        {{"type", std::string(to_string(a.type))}, {"questions", a.questions}, {"alpha", rel(a.alpha)}, {"icc2k", rel(a.icc)}});
  return {{"constants",
           {{"mad_percentage", r.constants.mad_percentage},
            {"mad_proximity", r.constants.mad_proximity},
            {"madc_count", r.constants.madc_count},
            {"rel_area", r.constants.rel_area}}},
          {"samples", r.samples},
          {"agreement", agreement},
          {"majority", r.majority}};
}

}  // namespace qvlm
