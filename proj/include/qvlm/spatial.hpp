#pragma once

#include "qvlm/raster.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace qvlm {

/// Exact squared Euclidean distances (pixel center to pixel center) from every
/// pixel to the nearest foreground pixel. Background-only input yields -1 everywhere.
Raster<std::int64_t> squared_distance_transform(const Raster<std::uint8_t>& source);

template <typename Scalar = double>
struct DistanceFieldT {
  Raster<Scalar> values;  // +inf when the source mask is empty
  bool degenerate = false;

  int width() const { return int(values.cols()); }
  int height() const { return int(values.rows()); }
};
using DistanceField = DistanceFieldT<double>;

/// Euclidean distance transform of a mask (distances in pixels).
template <typename Scalar = double>
DistanceFieldT<Scalar> distance_transform(const BinaryMask& mask) {
  const Raster<std::int64_t> sq = squared_distance_transform(mask.bits);
  DistanceFieldT<Scalar> field;
  field.degenerate = mask.count() == 0;
  field.values = sq.unaryExpr([](std::int64_t v) {
    return v < 0 ? std::numeric_limits<Scalar>::infinity() : Scalar(std::sqrt(double(v)));
  });
  return field;
}

/// Clips each target to the pixels whose distance to the union of the
/// references is at most distance_meters, then splits the clipped pixels into
/// connected components. Returns new shapes (fresh ids 0..n-1, provenance set
/// to the parent target id, areas recomputed with `resolution` as gsd).
/// No references gives an empty result.
std::vector<Shape> find_shapes_within_distance(std::span<const Shape> targets,
                                               std::span<const Shape> references,
                                               double distance_meters, double resolution,
                                               Connectivity connectivity = Connectivity::Eight);

/// Returns the targets with distance_meters set to the minimum distance from
/// any of their pixels to the nearest reference pixel (0 when overlapping).
/// Throws ErrorCode::EmptyReferences when there is no reference pixel.
std::vector<Shape> calculate_shape_distances(std::span<const Shape> targets,
                                             std::span<const Shape> references,
                                             double resolution);

/// Pixel-center Euclidean inclusion test shared by buffering code paths.
inline bool within_buffer(std::int64_t squared_px, double resolution, double distance_meters) {
  return squared_px >= 0 && std::sqrt(double(squared_px)) * resolution <= distance_meters;
}

}  // namespace qvlm
