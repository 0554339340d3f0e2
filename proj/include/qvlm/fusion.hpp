#pragma once

#include "qvlm/error.hpp"
#include "qvlm/raster.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace qvlm {

/// Per-class score planes from one segmentation model.
template <typename Scalar = float>
struct LogitMapT {
  std::string model_id;
  int width = 0;
  int height = 0;
  std::vector<std::string> classes;
  std::vector<Raster<Scalar>> planes;  // one per class, height x width

  void validate() const {
    if (planes.size() != classes.size())
      fail(ErrorCode::Structural, "logit map '" + model_id + "': plane count != class count");
    for (const auto& p : planes)
      if (p.rows() != height || p.cols() != width)
        fail(ErrorCode::Structural, "logit map '" + model_id + "': plane dimension mismatch");
  }

  const Raster<Scalar>* plane(const std::string& name) const {
    auto it = std::find(classes.begin(), classes.end(), name);
    return it == classes.end() ? nullptr : &planes[std::size_t(it - classes.begin())];
  }
};
using LogitMap = LogitMapT<float>;

enum class ClassKind { Semantic, Instance };

struct MergeInput {
  std::string model_id;
  std::string class_name;
  double weight = 1.0;
};

struct ClassMergeRule {
  std::string output_class;
  std::vector<MergeInput> inputs;
  ClassKind kind = ClassKind::Semantic;
};

struct ClassMap {
  Raster<std::int32_t> labels;  // index into classes
  std::vector<std::string> classes;

  int width() const { return int(labels.cols()); }
  int height() const { return int(labels.rows()); }
};

/// Merge rules mirroring the unified topic table: land-use classes take the
/// max over the DeepGlobe (DG) and EarthVQA (EV) models, solar comes from the
/// photovoltaic model (PV) and roofs from the instance model (AIRS).
std::vector<ClassMergeRule> default_merge_rules();

std::vector<ClassMergeRule> load_merge_rules(const std::filesystem::path& path);
void save_merge_rules(const std::vector<ClassMergeRule>& rules, const std::filesystem::path& path);

namespace detail {

template <typename Scalar>
const Raster<Scalar>& resolve_input(std::span<const LogitMapT<Scalar>> maps, const MergeInput& in,
                                    const std::string& rule) {
  for (const auto& m : maps) {
    if (m.model_id != in.model_id) continue;
    if (const auto* p = m.plane(in.class_name)) return *p;
  }
  fail(ErrorCode::Config, "merge rule '" + rule + "' references missing input " + in.model_id +
                              "[" + in.class_name + "]");
}

template <typename Scalar>
void check_frame(std::span<const LogitMapT<Scalar>> maps) {
  if (maps.empty()) fail(ErrorCode::Structural, "no logit maps");
  for (const auto& m : maps) {
    m.validate();
    if (m.width != maps.front().width || m.height != maps.front().height)
      fail(ErrorCode::Structural, "logit maps have different dimensions");
  }
}

}  // namespace detail

/// Score plane per semantic rule: max over inputs of weight * logit. Inputs
/// with weight 0 are disabled; a rule with no enabled input scores -inf.
template <typename Scalar>
std::vector<Raster<double>> fused_scores(std::span<const LogitMapT<Scalar>> maps,
                                         std::span<const ClassMergeRule> rules) {
  detail::check_frame(maps);
  const int h = maps.front().height, w = maps.front().width;
  std::vector<Raster<double>> scores;
  for (const ClassMergeRule& rule : rules) {
    if (rule.kind != ClassKind::Semantic) continue;
    if (rule.inputs.empty()) fail(ErrorCode::Config, "merge rule '" + rule.output_class + "' has no inputs");
    Raster<double> s = Raster<double>::Constant(h, w, -std::numeric_limits<double>::infinity());
    for (const MergeInput& in : rule.inputs) {
      if (!std::isfinite(in.weight) || in.weight < 0)
        fail(ErrorCode::Config, "merge rule '" + rule.output_class + "' has an invalid weight");
      const auto& plane = detail::resolve_input(maps, in, rule.output_class);
      if (in.weight == 0.0) continue;
      s = s.max(in.weight * plane.template cast<double>());
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

/// Per-pixel argmax over fused semantic scores; ties go to the rule declared first.
template <typename Scalar>
ClassMap fuse_logits(std::span<const LogitMapT<Scalar>> maps, std::span<const ClassMergeRule> rules) {
  const std::vector<Raster<double>> scores = fused_scores(maps, rules);
  ClassMap out;
  for (const ClassMergeRule& r : rules)
    if (r.kind == ClassKind::Semantic) out.classes.push_back(r.output_class);
  if (out.classes.empty()) fail(ErrorCode::Config, "no semantic merge rules");
  const int h = maps.front().height, w = maps.front().width;
  out.labels = Raster<std::int32_t>::Zero(h, w);
  Raster<double> best = scores.front();
  for (std::size_t c = 1; c < scores.size(); ++c) {
    const auto wins = (scores[c] > best).eval();
    best = wins.select(scores[c], best);
    out.labels = wins.select(Raster<std::int32_t>::Constant(h, w, std::int32_t(c)), out.labels);
  }
  return out;
}

/// Instance mask for an instance-kind rule: pixels where any enabled input
/// class is the argmax within its own model (first class wins ties).
template <typename Scalar>
BinaryMask instance_mask(std::span<const LogitMapT<Scalar>> maps, const ClassMergeRule& rule) {
  detail::check_frame(maps);
  BinaryMask mask(maps.front().width, maps.front().height, rule.output_class);
  for (const MergeInput& in : rule.inputs) {
    const auto& target = detail::resolve_input(maps, in, rule.output_class);
    if (in.weight == 0.0) continue;
    const LogitMapT<Scalar>* model = nullptr;
    for (const auto& m : maps)
      if (m.model_id == in.model_id) model = &m;
    const auto idx = std::size_t(std::find(model->classes.begin(), model->classes.end(), in.class_name) -
                                 model->classes.begin());
    auto is_max = Raster<std::uint8_t>::Ones(mask.height(), mask.width()).eval();
    for (std::size_t c = 0; c < model->planes.size(); ++c) {
      if (c == idx) continue;
      const auto& other = model->planes[c];
      // earlier classes win ties
      auto beats = (c < idx) ? (target > other).eval() : (target >= other).eval();
      is_max = is_max * beats.template cast<std::uint8_t>();
    }
    mask.bits = ((mask.bits != 0) || (is_max != 0)).template cast<std::uint8_t>();
  }
  return mask;
}

/// Mode (majority) box filter with an odd window clipped at the borders. Ties
/// favour the pixel's own label, then the lowest class index.
ClassMap mode_filter(const ClassMap& map, int k);

/// One mask per declared class, labelled with the class name.
std::vector<BinaryMask> masks_from_classmap(const ClassMap& map);

/// Instances of an instance-kind class are its connected components.
std::vector<Shape> split_instances(const BinaryMask& mask, std::int64_t min_area_pixels,
                                   double gsd = 1.0,
                                   Connectivity connectivity = Connectivity::Eight);

}  // namespace qvlm
