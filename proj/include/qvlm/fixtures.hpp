#pragma once

#include "qvlm/benchgen.hpp"

#include <cstdint>
#include <filesystem>

namespace qvlm {

struct CorpusOptions {
  std::uint64_t seed = 20240601;
  int earthvqa = 24;     // 768x768 at 0.3 m, land cover and roofs
  int deepglobe = 16;    // 768x768 at 0.5 m, land cover with a vegetation composite
  int solar = 12;        // 256x256 at 0.3 m, solar arrays
  int naip = 8;          // 384x384 at 1.0 m
  int naip_logits = 4;   // how many naip images carry 256x256 logit planes instead of masks
};

/// Writes a synthetic segmentation corpus (masks, logit planes, manifest.json)
/// under dir and returns the manifest path. Output is a pure function of the options.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const CorpusOptions& opt = {});

/// 1024x1024 scene at 0.3 m: one agricultural field of 143267 px and thirteen
/// roofs, seven of them larger than 0.01 ha, all within 200 m of the field.
std::filesystem::path write_roof_scene(const std::filesystem::path& dir);

inline constexpr const char* kRoofSceneImage = "earthvqa_0.3m/2923.png";
inline constexpr std::int64_t kRoofSceneFieldPixels = 143267;

/// The published record for the roof scene (answer 6, range [4, 8]).
QuestionRecord roof_scene_record();
QuestionParams roof_scene_params();

}  // namespace qvlm
