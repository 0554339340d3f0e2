#include "qvlm/spatial.hpp"

#include "qvlm/error.hpp"

#include <algorithm>

namespace qvlm {

namespace {

constexpr std::int64_t kInf = -1;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over one line.
// Input/output use kInf for "no source"; all finite values are exact integers.
void envelope_1d(std::span<const std::int64_t> f, std::span<std::int64_t> out,
                 std::vector<int>& v, std::vector<double>& z) {
  const int n = int(f.size());
  v.clear();
  z.clear();
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = double(f[q]) + double(q) * q;
    while (!v.empty()) {
      const int p = v.back();
      const double s = (fq - (double(f[p]) + double(p) * p)) / (2.0 * (q - p));
      if (s <= z.back()) {
        v.pop_back();
        z.pop_back();
      } else {
        v.push_back(q);
        z.push_back(s);
        break;
      }
    }
    if (v.empty()) {
      v.push_back(q);
      z.push_back(-std::numeric_limits<double>::infinity());
    }
  }
  if (v.empty()) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  std::size_t k = 0;
  for (int x = 0; x < n; ++x) {
    while (k + 1 < v.size() && z[k + 1] < x) ++k;
    const std::int64_t dx = x - v[k];
    out[x] = dx * dx + f[v[k]];
  }
}

struct Frame {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

Frame frame_of(std::span<const Shape> a, std::span<const Shape> b) {
  BBox box;
  bool any = false;
  auto grow = [&](const Shape& s) {
    if (s.pixels.empty()) return;
    const BBox sb = s.pixels.bbox();
    if (!any) {
      box = sb;
      any = true;
      return;
    }
    box.xmin = std::min(box.xmin, sb.xmin);
    box.ymin = std::min(box.ymin, sb.ymin);
    box.xmax = std::max(box.xmax, sb.xmax);
    box.ymax = std::max(box.ymax, sb.ymax);
  };
  for (const Shape& s : a) grow(s);
  for (const Shape& s : b) grow(s);
  if (!any) return {};
  return {box.xmin, box.ymin, box.width(), box.height()};
}

// Squared distances to the union of references, over the frame.
Raster<std::int64_t> reference_distances(std::span<const Shape> references, const Frame& f) {
  Raster<std::uint8_t> src = Raster<std::uint8_t>::Zero(f.height, f.width);
  for (const Shape& s : references)
    for (const Run& r : s.pixels.runs())
      src.row(r.y - f.y0).segment(r.x0 - f.x0, r.length()).setOnes();
  return squared_distance_transform(src);
}

bool has_pixels(std::span<const Shape> shapes) {
  return std::any_of(shapes.begin(), shapes.end(), [](const Shape& s) { return !s.pixels.empty(); });
}

}  // namespace

Raster<std::int64_t> squared_distance_transform(const Raster<std::uint8_t>& source) {
  const int h = int(source.rows()), w = int(source.cols());
  Raster<std::int64_t> d(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d(y, x) = source(y, x) ? 0 : kInf;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<std::int64_t> line, out;
  // Columns first, then rows.
  line.resize(h);
  out.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) line[y] = d(y, x);
    envelope_1d(line, out, v, z);
    for (int y = 0; y < h; ++y) d(y, x) = out[y];
  }
  line.resize(w);
  out.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) line[x] = d(y, x);
    envelope_1d(line, out, v, z);
    for (int x = 0; x < w; ++x) d(y, x) = out[x];
  }
  return d;
}

std::vector<Shape> find_shapes_within_distance(std::span<const Shape> targets,
                                               std::span<const Shape> references,
                                               double distance_meters, double resolution,
                                               Connectivity connectivity) {
  if (!(resolution > 0.0)) fail(ErrorCode::Domain, "resolution must be positive");
  if (!(distance_meters >= 0.0)) fail(ErrorCode::Domain, "distance_meters must be non-negative");
  if (!has_pixels(references) || !has_pixels(targets)) return {};

  const Frame f = frame_of(targets, references);
  const Raster<std::int64_t> sq = reference_distances(references, f);

  std::vector<Shape> out;
  int next_id = 0;
  for (const Shape& target : targets) {
    if (target.pixels.empty()) continue;
    const BBox tb = target.pixels.bbox();
    BinaryMask clipped(tb.width(), tb.height(), target.class_type);
    bool any = false;
    for (const Run& r : target.pixels.runs()) {
      for (int x = r.x0; x < r.x1; ++x) {
        if (within_buffer(sq(r.y - f.y0, x - f.x0), resolution, distance_meters)) {
          clipped.set(x - tb.xmin, r.y - tb.ymin);
          any = true;
        }
      }
    }
    if (!any) continue;
    for (PixelSet& local : label_components(clipped, connectivity)) {
      std::vector<Run> runs = local.runs();
      for (Run& r : runs) {
        r.y += tb.ymin;
        r.x0 += tb.xmin;
        r.x1 += tb.xmin;
      }
      Shape s = make_shape(PixelSet::from_runs(std::move(runs)), target.class_type, next_id++,
                           resolution, connectivity);
      s.provenance = target.id;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<Shape> calculate_shape_distances(std::span<const Shape> targets,
                                             std::span<const Shape> references,
                                             double resolution) {
  if (!(resolution > 0.0)) fail(ErrorCode::Domain, "resolution must be positive");
  if (!has_pixels(references))
    fail(ErrorCode::EmptyReferences, "calculate_shape_distances: no reference pixels");

  std::vector<Shape> out(targets.begin(), targets.end());
  if (!has_pixels(targets)) return out;
  const Frame f = frame_of(targets, references);
  const Raster<std::int64_t> sq = reference_distances(references, f);
  for (Shape& s : out) {
    if (s.pixels.empty()) continue;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const Run& r : s.pixels.runs())
      best = std::min(best, sq.row(r.y - f.y0).segment(r.x0 - f.x0, r.length()).minCoeff());
    s.distance_meters = std::sqrt(double(best)) * resolution;
  }
  return out;
}

}  // namespace qvlm
