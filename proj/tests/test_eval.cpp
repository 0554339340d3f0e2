#include "doctest.h"
#include "oracles.hpp"

#include "qvlm/error.hpp"
#include "qvlm/eval.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace qvlm;

namespace {

using QT = QuestionType;

QuestionRecord numeric(std::string id, QT type, double answer, double lo, double hi) {
  QuestionRecord q;
  q.id = std::move(id);
  q.image = "test_1m/0000.png";
  q.question = "?";
  q.type = type;
  q.tier = info(type).tier;
  q.answer = answer;
  q.acceptable_range = {false, lo, hi};
  return q;
}

QuestionRecord categorical(std::string id, QT type, std::string answer) {
  QuestionRecord q = numeric(std::move(id), type, 0, 0, 0);
  q.answer = std::move(answer);
  q.acceptable_range = categorical_range();
  return q;
}

Prediction says(std::string id, AnswerValue v) { return {std::move(id), std::move(v), PredictionStatus::Answered, ""}; }

Prediction failed(std::string id, PredictionStatus s) { return {std::move(id), std::nullopt, s, "boom"}; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("published scoring examples") {
  const auto pct = numeric("a", QT::Percentage, 14.6, 12.86, 16.34);
  CHECK(score_prediction(says("a", 13.66), pct).correct);
  const auto cnt = numeric("b", QT::Count, 5, 4, 6);
  CHECK_FALSE(score_prediction(says("b", 9.0), cnt).correct);
  CHECK(score_prediction(says("b", 6.0), cnt).correct);
  CHECK(score_prediction(says("b", 4.0), cnt).correct);
  CHECK(score_prediction(says("b", 6.004), cnt).correct);  // rounds to 6.00
  CHECK_FALSE(score_prediction(says("b", 6.006), cnt).correct);
}

TEST_CASE("categorical and failed predictions") {
  const auto q = categorical("c", QT::Fragmentation, "connected");
  CHECK(score_prediction(says("c", std::string("  Connected\n")), q).correct);
  CHECK_FALSE(score_prediction(says("c", std::string("fragmented")), q).correct);
  const Score mismatch = score_prediction(says("c", 1.0), q);
  CHECK_FALSE(mismatch.correct);
  CHECK(mismatch.type_mismatch);
  CHECK(score_prediction(says("n", std::string("7")), numeric("n", QT::Count, 7, 6, 8)).type_mismatch);
  for (auto s : {PredictionStatus::Unparseable, PredictionStatus::ExecutionError}) {
    const Score sc = score_prediction(failed("c", s), q);
    CHECK_FALSE(sc.correct);
    CHECK_FALSE(sc.type_mismatch);
  }
  CHECK_FALSE(score_prediction(says("n", NAN), numeric("n", QT::Count, 7, 6, 8)).correct);
}

TEST_CASE("aggregate over a hand-built set") {
  const std::vector<QuestionRecord> qs{
      numeric("q0", QT::Count, 4, 3, 5),                          // tier 1
      numeric("q1", QT::Percentage, 20, 18.27, 21.73),            // tier 1
      categorical("q2", QT::BinaryPresence, "yes"),               // tier 1
      numeric("q3", QT::ProximityArea, 10, 9.78, 10.22),          // tier 2
      numeric("q4", QT::BuildingProximity, 6, 4, 8),              // tier 2
      categorical("q5", QT::Fragmentation, "fragmented"),         // tier 2
      numeric("q6", QT::ComplexMultiCondition, 17.75, 17.35, 18.15),  // tier 3
      numeric("q7", QT::ComplexMultiCondition, 0, 0, 0),          // tier 3
      numeric("q8", QT::ComplexAverage, 2, 1.96, 2.04),           // tier 3
      numeric("q9", QT::Count, 0, 0, 1),                          // tier 1
  };
  const std::vector<Prediction> ps{
      says("q0", 5.0),  says("q1", 25.0), says("q2", std::string("YES")), says("q3", 10.22),
      says("q4", 7.0),  failed("q5", PredictionStatus::Unparseable),     says("q6", 17.349),
      says("q7", 0.0),  says("q9", 3.0),
  };
  const ResultTable t = aggregate(ps, qs);
  CHECK(t.overall == Cell{6, 10});
  CHECK(t.tiers[0] == Cell{2, 4});
  CHECK(t.tiers[1] == Cell{2, 3});
  CHECK(t.tiers[2] == Cell{2, 3});
  CHECK(t.types[std::size_t(QT::Count)] == Cell{1, 2});
  CHECK(t.types[std::size_t(QT::ComplexMultiCondition)] == Cell{2, 2});
  CHECK(t.types[std::size_t(QT::ComplexAverage)] == Cell{0, 1});
  REQUIRE(t.questions.size() == 10);
  CHECK(t.questions[8].missing);
  CHECK_FALSE(t.questions[8].correct);
  CHECK(t.questions[6].correct);  // 17.349 rounds to 17.35

  // later lines for the same id win
  auto again = ps;
  again.push_back(says("q1", 20.0));
  CHECK(aggregate(again, qs).overall == Cell{7, 10});

  auto orphan = ps;
  orphan.push_back(says("ghost", 1.0));
  try {
    aggregate(orphan, qs);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OrphanPrediction);
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("aggregate conservation on random runs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<QuestionRecord> qs;
    std::vector<Prediction> ps;
    for (int i = 0; i < 60; ++i) {
      const auto& ti = kQuestionTypes[rng() % kQuestionTypes.size()];
      const std::string id = "q" + std::to_string(i);
      if (ti.family == RangeFamily::Categorical)
        qs.push_back(categorical(id, ti.type, "yes"));
      else
        qs.push_back(numeric(id, ti.type, 10, 8, 12));
      const int r = int(rng() % 4);
      if (r == 0) continue;
      if (r == 1) ps.push_back(failed(id, PredictionStatus::ExecutionError));
      if (r == 2) ps.push_back(qs.back().numeric() ? says(id, 11.0) : says(id, std::string("yes")));
      if (r == 3) ps.push_back(qs.back().numeric() ? says(id, 13.0) : says(id, std::string("no")));
    }
    const ResultTable t = aggregate(ps, qs);
    int tier_correct = 0, tier_total = 0, type_correct = 0, type_total = 0;
    for (const Cell& c : t.tiers) tier_correct += c.correct, tier_total += c.total;
    for (const Cell& c : t.types) type_correct += c.correct, type_total += c.total;
    CHECK(tier_correct == t.overall.correct);
    CHECK(type_correct == t.overall.correct);
    CHECK(tier_total == 60);
    CHECK(type_total == 60);
    CHECK(t.overall.total == 60);
  }
}

TEST_CASE("widen scales about the stored answer") {
  const auto q = numeric("q", QT::Count, 6, 4, 8);
  CHECK(widen(q, 1.0) == q.acceptable_range);
  CHECK(widen(q, 1.5) == AcceptableRange{false, 3, 9});
  CHECK(widen(q, 2.0) == AcceptableRange{false, 2, 10});
  CHECK(widen(categorical("c", QT::BinaryPresence, "yes"), 2.0).exact);
  CHECK_THROWS_AS(widen(q, 0.9), Error);
}

TEST_CASE("sensitivity curve on predictions with known distances") {
  // answer 10, range [8, 12], so at multiplier f the upper bound is 10 + 2f;
  // each prediction sits halfway between two grid points.
  std::vector<QuestionRecord> qs;
  std::vector<Prediction> ps;
  const std::vector<double> preds{11.0, 12.2, 12.6, 13.0, 13.4, 13.8, 14.2};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    qs.push_back(numeric("n" + std::to_string(i), QT::TotalArea, 10, 8, 12));
    ps.push_back(says(qs.back().id, preds[i]));
  }
  qs.push_back(categorical("c0", QT::BinaryPresence, "yes"));
  ps.push_back(says("c0", std::string("no")));
  qs.push_back(categorical("c1", QT::BinaryPresence, "yes"));
  ps.push_back(says("c1", std::string("yes")));
  qs.push_back(numeric("m", QT::TotalArea, 10, 8, 12));  // never answered

  const std::vector<double> grid{1.0, 1.2, 1.4, 1.6, 1.8, 2.0};
  const auto curve = range_sensitivity(ps, qs, grid);
  const std::vector<int> expect{2, 3, 4, 5, 6, 7};
  REQUIRE(curve.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(curve[i].multiplier == grid[i]);
    CHECK(curve[i].cell == Cell{expect[i], 10});
    CHECK(curve[i].delta == doctest::Approx(100.0 * (expect[i] - 2) / 10.0));
    if (i) CHECK(curve[i].cell.correct >= curve[i - 1].cell.correct);
  }
  CHECK(curve.front().cell == aggregate(ps, qs).overall);

  const std::vector<double> unsorted{1.5, 1.0};
  CHECK_THROWS_AS(range_sensitivity(ps, qs, unsorted), Error);
  const std::vector<double> shrink{0.5, 1.0};
  CHECK_THROWS_AS(range_sensitivity(ps, qs, shrink), Error);

  const std::string csv = sensitivity_csv(curve);
  CHECK(csv.rfind("multiplier,correct,total,accuracy,delta_points\n1.00,2,10,0.200000,0.0000\n", 0) == 0);
  CHECK(csv.find("2.00,7,10,0.700000,50.0000\n") != std::string::npos);
}

TEST_CASE("sensitivity is monotone on random runs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 30.0);
  std::vector<QuestionRecord> qs;
  std::vector<Prediction> ps;
  for (int i = 0; i < 300; ++i) {
    const double a = std::round(u(rng));
    qs.push_back(numeric("q" + std::to_string(i), QT::Count, a, std::floor(a * 0.81), std::ceil(a * 1.19)));
    ps.push_back(says(qs.back().id, a + u(rng) - 15.0));
  }
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(1.0 + 0.05 * i);
  const auto curve = range_sensitivity(ps, qs, grid);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].cell.correct >= curve[i - 1].cell.correct);
}

TEST_CASE("report round-trip and shape") {
  const std::vector<QuestionRecord> qs{numeric("q0", QT::Count, 4, 3, 5), categorical("q1", QT::BinaryPresence, "yes"),
                                       numeric("q2", QT::ComplexAverage, 2, 1.96, 2.04)};
  const std::vector<Prediction> ps{says("q0", 4.0), says("q1", 3.0)};
  const ResultTable t = aggregate(ps, qs);
  const std::string csv = report_csv(t);
  CHECK(parse_report_csv(csv) == t);

  std::istringstream in(csv);
  std::string line;
  int type_rows = 0;
  while (std::getline(in, line)) type_rows += line.rfind("type,", 0) == 0;
  CHECK(type_rows == kQuestionTypeCount);
  CHECK(csv.find("question,q1,1,binary_presence,0,1,0.000000,type_mismatch\n") != std::string::npos);
  CHECK(csv.find("question,q2,3,complex_average,0,1,0.000000,missing\n") != std::string::npos);
  CHECK(csv.find("overall,all,,,1,3,0.333333,\n") != std::string::npos);

  const std::string summary = report_summary(t);
  CHECK(summary.rfind("Overall: 1/3 (33.33%)\n", 0) == 0);
  CHECK(summary.find("Missing predictions: 1") != std::string::npos);

  CHECK_THROWS_AS(parse_report_csv("nope\n"), Error);
  CHECK_THROWS_AS(parse_report_csv("scope,key,tier,type,correct,total,accuracy,flags\nrow,1\n"), Error);
}

TEST_CASE("empty run writes header-only files") {
  const auto dir = oracle::scratch_dir("eval_empty");
  const ResultTable t = aggregate({}, {});
  emit_report(t, dir / "out");
  CHECK(slurp(dir / "out" / "report.csv") == "scope,key,tier,type,correct,total,accuracy,flags\n");
  CHECK(slurp(dir / "out" / "summary.txt").empty());
  CHECK(parse_report_csv(slurp(dir / "out" / "report.csv")) == t);
}

TEST_CASE("prediction files") {
  const auto dir = oracle::scratch_dir("eval_preds");
  const std::vector<Prediction> ps{says("a", 1.5), says("b", std::string("yes")),
                                   failed("c", PredictionStatus::ExecutionError),
                                   failed("d", PredictionStatus::Unparseable)};
  write_predictions(ps, dir / "p.jsonl");
  const auto back = read_predictions(dir / "p.jsonl");
  REQUIRE(back.size() == ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(back[i].question_id == ps[i].question_id);
    CHECK(back[i].status == ps[i].status);
    CHECK(back[i].value == ps[i].value);
    CHECK(back[i].trace == ps[i].trace);
  }
  CHECK_THROWS_AS(prediction_from_json({{"question_id", "x"}, {"status", "answered"}}), Error);
  CHECK_THROWS_AS(prediction_from_json({{"question_id", "x"}, {"status", "shrug"}}), Error);
  CHECK_THROWS_AS(read_predictions(dir / "missing.jsonl"), Error);
}
