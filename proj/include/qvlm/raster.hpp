#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qvlm {

/// Row-major dense raster; rows index y, columns index x.
template <typename T>
using Raster = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Connectivity { Four = 4, Eight = 8 };

struct GeoImage {
  std::string id;
  int width = 0;
  int height = 0;
  double gsd = 1.0;  // meters per pixel
  std::optional<std::vector<std::uint8_t>> rgb;  // width*height*3 when present

  std::int64_t total_pixels() const { return std::int64_t(width) * height; }
  void validate() const;
};

struct BinaryMask {
  Raster<std::uint8_t> bits;  // nonzero = foreground
  std::string class_label;

  BinaryMask() = default;
  BinaryMask(int width, int height, std::string label = {});

  int width() const { return int(bits.cols()); }
  int height() const { return int(bits.rows()); }
  bool at(int x, int y) const { return bits(y, x) != 0; }
  void set(int x, int y, bool v = true) { bits(y, x) = v ? 1 : 0; }
  std::int64_t count() const;
};

/// Half-open horizontal run [x0, x1) on row y.
struct Run {
  int y = 0;
  int x0 = 0;
  int x1 = 0;
  int length() const { return x1 - x0; }
  friend bool operator==(const Run&, const Run&) = default;
};

struct BBox {
  int xmin = 0, ymin = 0, xmax = -1, ymax = -1;  // inclusive pixel bounds
  bool empty() const { return xmax < xmin || ymax < ymin; }
  int width() const { return xmax - xmin + 1; }
  int height() const { return ymax - ymin + 1; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Run-length encoded pixel set. Runs are sorted by (y, x0), non-overlapping and
/// maximal (adjacent runs on the same row are merged).
class PixelSet {
 public:
  PixelSet() = default;
  static PixelSet from_runs(std::vector<Run> runs);
  static PixelSet from_mask(const BinaryMask& mask);

  const std::vector<Run>& runs() const { return runs_; }
  std::int64_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  bool contains(int x, int y) const;
  BBox bbox() const;

  template <typename F>
  void for_each(F&& f) const {
    for (const Run& r : runs_)
      for (int x = r.x0; x < r.x1; ++x) f(x, r.y);
  }

  friend bool operator==(const PixelSet& a, const PixelSet& b) { return a.runs_ == b.runs_; }

 private:
  std::vector<Run> runs_;
  std::int64_t size_ = 0;
};

PixelSet set_union(std::span<const PixelSet> sets);

/// Closed ring of pixel-corner vertices (x, y); the closing edge back to the
/// first vertex is implicit. Collinear vertices are removed.
using Ring = std::vector<Eigen::Vector2i>;

struct Shape {
  int id = 0;
  std::string class_type;
  PixelSet pixels;
  std::int64_t area_pixels = 0;
  double area_hectares = 0.0;
  Ring polygon;             // outer boundary
  std::vector<Ring> holes;  // inner rings
  BBox bbox;
  std::optional<int> provenance;  // parent shape id when produced by clipping
  std::optional<double> distance_meters;
};

struct SegmentationResult {
  std::vector<Shape> shapes;
  int image_width = 0;
  int image_height = 0;
  std::int64_t total_pixels = 0;
  double gsd = 1.0;
};

/// area_pixels * gsd^2 / 10^4.
double area_hectares(std::int64_t area_pixels, double gsd);

/// Builds a shape from a (connected) pixel set: area, bbox and rings.
Shape make_shape(PixelSet pixels, std::string class_type, int id, double gsd,
                 Connectivity connectivity = Connectivity::Eight);

/// Boundary rings of a pixel set: first the outer rings (positive signed
/// area in image coordinates), then the holes.
struct RingSet {
  std::vector<Ring> outer;
  std::vector<Ring> holes;
};
RingSet trace_rings(const PixelSet& pixels, Connectivity connectivity);

/// Signed shoelace area; positive for outer rings in y-down image coordinates.
double signed_area(const Ring& ring);

/// One shape per maximal connected foreground set with at least
/// min_area_pixels pixels, ids 0..n-1 in scan order of each component's first
/// pixel. Small components are dropped before polygonization.
std::vector<Shape> connected_components(const BinaryMask& mask,
                                        Connectivity connectivity = Connectivity::Eight,
                                        std::int64_t min_area_pixels = 0, double gsd = 1.0);

/// Same, checking that the mask matches the owning image frame.
std::vector<Shape> connected_components(const BinaryMask& mask, const GeoImage& image,
                                        Connectivity connectivity = Connectivity::Eight,
                                        std::int64_t min_area_pixels = 0);

/// Pixel-set components; used where the caller only needs partitions.
std::vector<PixelSet> label_components(const BinaryMask& mask, Connectivity connectivity);

double coverage_percentage(std::span<const Shape> shapes, std::int64_t total_pixels);

/// Keeps shapes with min_ha < area_hectares <= max_ha (each bound optional).
std::vector<Shape> filter_by_area(std::span<const Shape> shapes, std::optional<double> min_ha,
                                  std::optional<double> max_ha);

std::vector<Shape> filter_by_class(std::span<const Shape> shapes, const std::string& class_type);

/// Paints shape pixel sets into a width x height mask.
BinaryMask rasterize(std::span<const Shape> shapes, int width, int height,
                     std::string label = {});
void paint(BinaryMask& mask, const PixelSet& pixels);

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);

}  // namespace qvlm
