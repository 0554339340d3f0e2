#pragma once

#include "qvlm/raster.hpp"

#include "json.hpp"

namespace qvlm {

nlohmann::json to_json(const Shape& shape);
Shape shape_from_json(const nlohmann::json& j);

/// Wire form of a segmentation response: shapes, image_width, image_height, total_pixels.
nlohmann::json to_json(const SegmentationResult& result);
SegmentationResult segmentation_from_json(const nlohmann::json& j, double gsd);

}  // namespace qvlm
