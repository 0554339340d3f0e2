#include "doctest.h"
#include "oracles.hpp"

#include "qvlm/error.hpp"
#include "qvlm/fusion.hpp"

#include <random>

using namespace qvlm;

namespace {

LogitMap one_pixel(std::string model, std::vector<std::pair<std::string, float>> scores) {
  LogitMap m;
  m.model_id = std::move(model);
  m.width = m.height = 1;
  for (auto& [name, v] : scores) {
    m.classes.push_back(name);
    m.planes.push_back(Raster<float>::Constant(1, 1, v));
  }
  return m;
}

LogitMap random_map(std::mt19937_64& rng, std::string model, std::vector<std::string> classes, int w, int h) {
  LogitMap m;
  m.model_id = std::move(model);
  m.width = w;
  m.height = h;
  m.classes = std::move(classes);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    Raster<float> p(h, w);
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
    m.planes.push_back(p);
  }
  return m;
}

ClassMergeRule sem(std::string out, std::vector<MergeInput> in) {
  return {std::move(out), std::move(in), ClassKind::Semantic};
}

ClassMap random_classmap(std::mt19937_64& rng, int w, int h, int nclasses) {
  ClassMap m;
  for (int c = 0; c < nclasses; ++c) m.classes.push_back("c" + std::to_string(c));
  m.labels.resize(h, w);
  for (Eigen::Index i = 0; i < m.labels.size(); ++i) m.labels(i) = std::int32_t(rng() % unsigned(nclasses));
  return m;
}

}  // namespace

TEST_CASE("max over weighted inputs") {
  const std::vector<LogitMap> maps{one_pixel("A", {{"urban", 2.0f}, {"forest", 2.5f}}),
                                   one_pixel("B", {{"road", 3.0f}})};
  const std::vector<ClassMergeRule> rules{sem("urban", {{"A", "urban", 1.0}, {"B", "road", 1.0}}),
                                          sem("forest", {{"A", "forest", 1.0}})};
  const auto scores = fused_scores<float>(maps, rules);
  CHECK(scores[0](0, 0) == 3.0);
  const ClassMap m = fuse_logits<float>(maps, rules);
  CHECK(m.labels(0, 0) == 0);
}

TEST_CASE("weight 0 takes an input out of contention") {
  const std::vector<LogitMap> maps{one_pixel("A", {{"urban", -1.0f}, {"forest", 0.5f}}),
                                   one_pixel("B", {{"road", 3.0f}})};
  std::vector<ClassMergeRule> rules{sem("urban", {{"A", "urban", 1.0}, {"B", "road", 0.0}}),
                                    sem("forest", {{"A", "forest", 1.0}})};
  CHECK(fuse_logits<float>(maps, rules).labels(0, 0) == 1);
  rules[0].inputs[0].weight = 0.0;
  CHECK(std::isinf(fused_scores<float>(maps, rules)[0](0, 0)));
  CHECK(fuse_logits<float>(maps, rules).labels(0, 0) == 1);
}

TEST_CASE("ties go to the first rule") {
  const std::vector<LogitMap> maps{one_pixel("A", {{"x", 1.0f}, {"y", 1.0f}})};
  const std::vector<ClassMergeRule> rules{sem("y", {{"A", "y", 1.0}}), sem("x", {{"A", "x", 1.0}})};
  CHECK(fuse_logits<float>(maps, rules).labels(0, 0) == 0);
}

TEST_CASE("identity rules reproduce the model argmax") {
  std::mt19937_64 rng(2);
  const std::vector<LogitMap> maps{random_map(rng, "M", {"a", "b", "c", "d"}, 17, 11)};
  std::vector<ClassMergeRule> rules;
  for (const auto& c : maps[0].classes) rules.push_back(sem(c, {{"M", c, 1.0}}));
  const ClassMap m = fuse_logits<float>(maps, rules);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 17; ++x) {
      int best = 0;
      for (int c = 1; c < 4; ++c)
        if (maps[0].planes[std::size_t(c)](y, x) > maps[0].planes[std::size_t(best)](y, x)) best = c;
      CHECK(m.labels(y, x) == best);
    }
}

TEST_CASE("fusion matches the per-pixel definition") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<LogitMap> maps{random_map(rng, "DG", {"urban", "forest", "water"}, 23, 19),
                                     random_map(rng, "EV", {"road", "building", "forest"}, 23, 19)};
    std::uniform_real_distribution<double> w(0.0, 2.0);
    const std::vector<ClassMergeRule> rules{
        sem("urban", {{"DG", "urban", w(rng)}, {"EV", "road", w(rng)}, {"EV", "building", w(rng)}}),
        sem("forest", {{"DG", "forest", w(rng)}, {"EV", "forest", trial % 2 ? 0.0 : w(rng)}}),
        sem("water", {{"DG", "water", w(rng)}})};
    const ClassMap got = fuse_logits<float>(maps, rules);
    CHECK((got.labels == oracle::fuse(maps, rules)).all());

    // scaling every weight leaves the labels alone
    auto scaled = rules;
    for (auto& r : scaled)
      for (auto& in : r.inputs) in.weight *= 4.0;
    CHECK((fuse_logits<float>(maps, scaled).labels == got.labels).all());
  }
}

TEST_CASE("fusion errors") {
  const std::vector<LogitMap> maps{one_pixel("A", {{"x", 1.0f}})};
  auto code_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Domain;
  };
  CHECK(code_of([&] { fuse_logits<float>(maps, std::vector{sem("x", {{"B", "x", 1.0}})}); }) == ErrorCode::Config);
  CHECK(code_of([&] { fuse_logits<float>(maps, std::vector{sem("x", {{"A", "z", 1.0}})}); }) == ErrorCode::Config);
  LogitMap wide = one_pixel("B", {{"x", 1.0f}});
  wide.width = 2;
  wide.planes[0] = Raster<float>::Zero(1, 2);
  CHECK(code_of([&] { fuse_logits<float>(std::vector{maps[0], wide}, std::vector{sem("x", {{"A", "x", 1.0}})}); }) ==
        ErrorCode::Structural);
}

TEST_CASE("mode filter hand cases") {
  ClassMap m;
  m.classes = {"a", "b"};
  m.labels = Raster<std::int32_t>::Zero(3, 3);
  m.labels(1, 1) = 1;
  CHECK(mode_filter(m, 3).labels(1, 1) == 0);
  CHECK((mode_filter(m, 1).labels == m.labels).all());

  ClassMap uniform = m;
  uniform.labels.setConstant(1);
  for (int k : {1, 3, 5, 7}) CHECK((mode_filter(uniform, k).labels == uniform.labels).all());

  CHECK_THROWS_AS(mode_filter(m, 4), Error);
  CHECK_THROWS_AS(mode_filter(m, 0), Error);
}

TEST_CASE("mode filter matches the windowed count") {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    const int nclasses = 2 + int(rng() % 4), k = 1 + 2 * int(rng() % 4);
    const ClassMap m = random_classmap(rng, 5 + int(rng() % 30), 5 + int(rng() % 30), nclasses);
    CHECK((mode_filter(m, k).labels == oracle::mode_filter(m.labels, nclasses, k)).all());
  }
}

TEST_CASE("mode filter is stable on blocky maps") {
  ClassMap m;
  m.classes = {"a", "b", "c"};
  m.labels.resize(30, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 30; ++x) m.labels(y, x) = (x / 10) % 3;
  const ClassMap once = mode_filter(m, 5);
  CHECK((mode_filter(once, 5).labels == once.labels).all());
}

TEST_CASE("class masks partition the image") {
  std::mt19937_64 rng(6);
  const ClassMap m = random_classmap(rng, 20, 14, 4);
  const auto masks = masks_from_classmap(m);
  REQUIRE(masks.size() == 4);
  std::int64_t total = 0;
  for (std::size_t c = 0; c < masks.size(); ++c) {
    CHECK(masks[c].class_label == m.classes[c]);
    total += masks[c].count();
    for (int y = 0; y < 14; ++y)
      for (int x = 0; x < 20; ++x) CHECK(masks[c].at(x, y) == (m.labels(y, x) == int(c)));
  }
  CHECK(total == 20 * 14);
}

TEST_CASE("instance mask takes the argmax within its own model") {
  LogitMap airs;
  airs.model_id = "AIRS";
  airs.width = 3;
  airs.height = 1;
  airs.classes = {"background", "roof"};
  airs.planes = {Raster<float>::Zero(1, 3), Raster<float>(1, 3)};
  airs.planes[1] << -1.0f, 0.5f, 0.0f;
  const std::vector<LogitMap> maps{airs, one_pixel("DG", {{"urban", 9.0f}})};
  const ClassMergeRule rule{"roof", {{"AIRS", "roof", 1.0}}, ClassKind::Instance};
  const BinaryMask m = instance_mask<float>(std::vector{airs}, rule);
  CHECK_FALSE(m.at(0, 0));
  CHECK(m.at(1, 0));
  CHECK_FALSE(m.at(2, 0));
  (void)maps;
}

TEST_CASE("instances are components") {
  CHECK(split_instances(BinaryMask(10, 10), 0).empty());

  BinaryMask roofs(1024, 1024);
  for (int i = 0; i < 7; ++i)
    for (int y = 0; y < 36; ++y)
      for (int x = 0; x < 36; ++x) roofs.set(60 * i + x, y);
  for (int i = 0; i < 6; ++i)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x) roofs.set(60 * i + x, 100 + y);
  const auto all = split_instances(roofs, 0, 0.3);
  CHECK(all.size() == 13);
  CHECK(filter_by_area(all, 0.01, {}).size() == 7);

  BinaryMask touching(4, 4);
  touching.set(0, 0);
  touching.set(1, 1);
  CHECK(split_instances(touching, 0).size() == 1);
  CHECK(split_instances(touching, 0, 1.0, Connectivity::Four).size() == 2);
}

TEST_CASE("merge rules round-trip through a file") {
  const auto dir = oracle::scratch_dir("fusion_rules");
  const auto rules = default_merge_rules();
  save_merge_rules(rules, dir / "rules.json");
  const auto back = load_merge_rules(dir / "rules.json");
  REQUIRE(back.size() == rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    CHECK(back[i].output_class == rules[i].output_class);
    CHECK(back[i].kind == rules[i].kind);
    REQUIRE(back[i].inputs.size() == rules[i].inputs.size());
    for (std::size_t j = 0; j < rules[i].inputs.size(); ++j) {
      CHECK(back[i].inputs[j].model_id == rules[i].inputs[j].model_id);
      CHECK(back[i].inputs[j].class_name == rules[i].inputs[j].class_name);
      CHECK(back[i].inputs[j].weight == rules[i].inputs[j].weight);
    }
  }
  CHECK(rules.back().kind == ClassKind::Instance);
}
