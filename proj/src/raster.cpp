#include "qvlm/raster.hpp"

#include "qvlm/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

namespace qvlm {

void GeoImage::validate() const {
  if (width <= 0 || height <= 0)
    fail(ErrorCode::Structural, "image '" + id + "' has non-positive dimensions");
  if (!(gsd > 0.0)) fail(ErrorCode::Domain, "image '" + id + "' has non-positive gsd");
  if (rgb && rgb->size() != std::size_t(total_pixels()) * 3)
    fail(ErrorCode::Structural, "image '" + id + "' pixel buffer does not match dimensions");
}

BinaryMask::BinaryMask(int width, int height, std::string label)
    : bits(Raster<std::uint8_t>::Zero(height, width)), class_label(std::move(label)) {
  if (width < 0 || height < 0) fail(ErrorCode::Structural, "negative mask dimensions");
}

std::int64_t BinaryMask::count() const {
  return (bits != 0).count();
}

// ---------------------------------------------------------------------------
// PixelSet

PixelSet PixelSet::from_runs(std::vector<Run> runs) {
  std::erase_if(runs, [](const Run& r) { return r.x1 <= r.x0; });
  std::sort(runs.begin(), runs.end(),
            [](const Run& a, const Run& b) { return a.y != b.y ? a.y < b.y : a.x0 < b.x0; });
  PixelSet out;
  for (const Run& r : runs) {
    if (!out.runs_.empty() && out.runs_.back().y == r.y && r.x0 <= out.runs_.back().x1) {
      out.runs_.back().x1 = std::max(out.runs_.back().x1, r.x1);
    } else {
      out.runs_.push_back(r);
    }
  }
  for (const Run& r : out.runs_) out.size_ += r.length();
  return out;
}

PixelSet PixelSet::from_mask(const BinaryMask& mask) {
  std::vector<Run> runs;
  for (int y = 0; y < mask.height(); ++y) {
    int x = 0;
    while (x < mask.width()) {
      if (!mask.at(x, y)) {
        ++x;
        continue;
      }
      int x0 = x;
      while (x < mask.width() && mask.at(x, y)) ++x;
      runs.push_back({y, x0, x});
    }
  }
  return from_runs(std::move(runs));
}

bool PixelSet::contains(int x, int y) const {
  auto it = std::lower_bound(runs_.begin(), runs_.end(), y,
                             [](const Run& r, int yy) { return r.y < yy; });
  for (; it != runs_.end() && it->y == y; ++it)
    if (x >= it->x0 && x < it->x1) return true;
  return false;
}

BBox PixelSet::bbox() const {
  BBox b;
  if (runs_.empty()) return b;
  b.xmin = runs_.front().x0;
  b.xmax = runs_.front().x1 - 1;
  b.ymin = runs_.front().y;
  b.ymax = runs_.back().y;
  for (const Run& r : runs_) {
    b.xmin = std::min(b.xmin, r.x0);
    b.xmax = std::max(b.xmax, r.x1 - 1);
  }
  return b;
}

PixelSet set_union(std::span<const PixelSet> sets) {
  std::vector<Run> all;
  for (const PixelSet& s : sets) all.insert(all.end(), s.runs().begin(), s.runs().end());
  return PixelSet::from_runs(std::move(all));
}

// ---------------------------------------------------------------------------
// Metric helpers

double area_hectares(std::int64_t area_pixels, double gsd) {
  if (!(gsd > 0.0)) fail(ErrorCode::Domain, "gsd must be positive");
  return double(area_pixels) * (gsd * gsd) / 1e4;
}

double coverage_percentage(std::span<const Shape> shapes, std::int64_t total_pixels) {
  if (total_pixels <= 0) fail(ErrorCode::Domain, "total_pixels must be positive");
  std::int64_t px = 0;
  for (const Shape& s : shapes) px += s.area_pixels;
  return 100.0 * double(px) / double(total_pixels);
}

std::vector<Shape> filter_by_area(std::span<const Shape> shapes, std::optional<double> min_ha,
                                  std::optional<double> max_ha) {
  if (min_ha && max_ha && *min_ha > *max_ha)
    fail(ErrorCode::Domain, "filter_by_area: min_ha exceeds max_ha");
  std::vector<Shape> out;
  for (const Shape& s : shapes) {
    if (min_ha && !(s.area_hectares > *min_ha)) continue;
    if (max_ha && !(s.area_hectares <= *max_ha)) continue;
    out.push_back(s);
  }
  return out;
}

std::vector<Shape> filter_by_class(std::span<const Shape> shapes, const std::string& class_type) {
  std::vector<Shape> out;
  for (const Shape& s : shapes)
    if (s.class_type == class_type) out.push_back(s);
  return out;
}

void paint(BinaryMask& mask, const PixelSet& pixels) {
  for (const Run& r : pixels.runs()) {
    if (r.y < 0 || r.y >= mask.height() || r.x0 < 0 || r.x1 > mask.width())
      fail(ErrorCode::Structural, "pixel set lies outside the mask frame");
    mask.bits.row(r.y).segment(r.x0, r.length()).setConstant(1);
  }
}

BinaryMask rasterize(std::span<const Shape> shapes, int width, int height, std::string label) {
  BinaryMask mask(width, height, std::move(label));
  for (const Shape& s : shapes) paint(mask, s.pixels);
  return mask;
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height())
    fail(ErrorCode::Structural, "mask_union: dimension mismatch");
  BinaryMask out = a;
  out.bits = ((a.bits != 0) || (b.bits != 0)).cast<std::uint8_t>();
  return out;
}

// ---------------------------------------------------------------------------
// Boundary tracing
//
// Boundary edges run along pixel sides, oriented so that the foreground lies
// to the right on screen (clockwise around a lone pixel in y-down coordinates).
// Directions: 0=E, 1=S, 2=W, 3=N. At a saddle vertex (two diagonal foreground
// pixels) the successor edge is chosen so that the traced ring joins the two
// pixels under 8-connectivity and separates them under 4-connectivity.

namespace {

constexpr std::array<int, 4> kDx = {1, 0, -1, 0};
constexpr std::array<int, 4> kDy = {0, 1, 0, -1};

struct EdgeGrid {
  int vw = 0, vh = 0;  // vertex grid dimensions
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> used;
  int index(int x, int y) const { return y * vw + x; }
};

}  // namespace

double signed_area(const Ring& ring) {
  double twice = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = ring[i];
    const auto& b = ring[(i + 1) % n];
    twice += double(a.x()) * b.y() - double(b.x()) * a.y();
  }
  return 0.5 * twice;
}

RingSet trace_rings(const PixelSet& pixels, Connectivity connectivity) {
  RingSet rings;
  if (pixels.empty()) return rings;
  const BBox bb = pixels.bbox();
  // Local frame with a one-pixel margin.
  const int ox = bb.xmin - 1, oy = bb.ymin - 1;
  const int w = bb.width() + 2, h = bb.height() + 2;
  Raster<std::uint8_t> local = Raster<std::uint8_t>::Zero(h, w);
  for (const Run& r : pixels.runs()) local.row(r.y - oy).segment(r.x0 - ox, r.length()).setOnes();

  EdgeGrid g;
  g.vw = w + 1;
  g.vh = h + 1;
  g.out.assign(std::size_t(g.vw) * g.vh, 0);
  g.used.assign(g.out.size(), 0);
  auto emit = [&](int vx, int vy, int dir) { g.out[g.index(vx, vy)] |= std::uint8_t(1u << dir); };
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      if (!local(y, x)) continue;
      if (!local(y - 1, x)) emit(x, y, 0);
      if (!local(y, x + 1)) emit(x + 1, y, 1);
      if (!local(y + 1, x)) emit(x + 1, y + 1, 2);
      if (!local(y, x - 1)) emit(x, y + 1, 3);
    }
  }

  const bool eight = connectivity == Connectivity::Eight;
  auto successor = [&](int vx, int vy, int dir_in) {
    const std::uint8_t out = g.out[g.index(vx, vy)];
    const int turn_pref = eight ? (dir_in + 3) % 4 : (dir_in + 1) % 4;
    if (std::popcount(out) > 1) {
      if (out & (1u << turn_pref)) return turn_pref;
    }
    for (int d : {dir_in, (dir_in + 1) % 4, (dir_in + 3) % 4})
      if (out & (1u << d)) return d;
    fail(ErrorCode::Structural, "trace_rings: open boundary");
  };

  // Scan vertices in row-major order; the first unused edge of the first
  // foreground pixel is its top edge, so outer rings start at a convex corner.
  for (int vy = 0; vy < g.vh; ++vy) {
    for (int vx = 0; vx < g.vw; ++vx) {
      for (int d0 = 0; d0 < 4; ++d0) {
        const int i0 = g.index(vx, vy);
        if (!(g.out[i0] & (1u << d0)) || (g.used[i0] & (1u << d0))) continue;
        Ring ring;
        int x = vx, y = vy, d = d0;
        int prev_dir = -1;
        // Walk until the start edge is reached again.
        while (true) {
          g.used[g.index(x, y)] |= std::uint8_t(1u << d);
          if (d != prev_dir) ring.emplace_back(x + ox, y + oy);
          prev_dir = d;
          x += kDx[d];
          y += kDy[d];
          const int nd = successor(x, y, d);
          if (x == vx && y == vy && nd == d0) break;
          d = nd;
        }
        // The first vertex is a corner unless the closing edge continues straight.
        if (ring.size() > 1 && prev_dir == d0) ring.erase(ring.begin());
        if (signed_area(ring) > 0)
          rings.outer.push_back(std::move(ring));
        else
          rings.holes.push_back(std::move(ring));
      }
    }
  }
  return rings;
}

Shape make_shape(PixelSet pixels, std::string class_type, int id, double gsd,
                 Connectivity connectivity) {
  Shape s;
  s.id = id;
  s.class_type = std::move(class_type);
  s.area_pixels = pixels.size();
  s.area_hectares = area_hectares(s.area_pixels, gsd);
  s.bbox = pixels.bbox();
  RingSet rings = trace_rings(pixels, connectivity);
  if (!rings.outer.empty()) s.polygon = std::move(rings.outer.front());
  // A connected pixel set has one outer ring; extra outer rings only arise for
  // disconnected input and are kept with the holes so nothing is lost.
  for (std::size_t i = 1; i < rings.outer.size(); ++i) s.holes.push_back(std::move(rings.outer[i]));
  for (Ring& r : rings.holes) s.holes.push_back(std::move(r));
  s.pixels = std::move(pixels);
  return s;
}

// ---------------------------------------------------------------------------
// Connected components: run-based union-find.

namespace {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Keep the earlier run as root so roots follow scan order.
    if (b < a) std::swap(a, b);
    parent[b] = a;
  }
};

}  // namespace

std::vector<PixelSet> label_components(const BinaryMask& mask, Connectivity connectivity) {
  const PixelSet all = PixelSet::from_mask(mask);
  const auto& runs = all.runs();
  DisjointSets sets(runs.size());
  const int reach = connectivity == Connectivity::Eight ? 1 : 0;

  std::size_t prev_begin = 0, prev_end = 0;  // runs on the previous row
  std::size_t i = 0;
  while (i < runs.size()) {
    const int y = runs[i].y;
    std::size_t row_end = i;
    while (row_end < runs.size() && runs[row_end].y == y) ++row_end;
    const bool adjacent_row = prev_end > prev_begin && runs[prev_begin].y == y - 1;
    if (adjacent_row) {
      std::size_t p = prev_begin;
      for (std::size_t c = i; c < row_end; ++c) {
        // advance past previous-row runs that end before this run can touch them
        while (p < prev_end && runs[p].x1 + reach <= runs[c].x0) ++p;
        for (std::size_t q = p; q < prev_end && runs[q].x0 < runs[c].x1 + reach; ++q)
          sets.unite(int(c), int(q));
      }
    }
    prev_begin = i;
    prev_end = row_end;
    i = row_end;
  }

  std::vector<int> slot(runs.size(), -1);
  std::vector<std::vector<Run>> groups;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const int root = sets.find(int(r));
    if (slot[root] < 0) {
      slot[root] = int(groups.size());
      groups.emplace_back();
    }
    groups[slot[root]].push_back(runs[r]);
  }
  std::vector<PixelSet> out;
  out.reserve(groups.size());
  for (auto& g : groups) out.push_back(PixelSet::from_runs(std::move(g)));
  return out;
}

std::vector<Shape> connected_components(const BinaryMask& mask, Connectivity connectivity,
                                        std::int64_t min_area_pixels, double gsd) {
  if (min_area_pixels < 0) fail(ErrorCode::Domain, "min_area_pixels must be non-negative");
  if (!(gsd > 0.0)) fail(ErrorCode::Domain, "gsd must be positive");
  std::vector<Shape> shapes;
  int next_id = 0;
  for (PixelSet& comp : label_components(mask, connectivity)) {
    if (comp.size() < min_area_pixels) continue;
    shapes.push_back(make_shape(std::move(comp), mask.class_label, next_id++, gsd, connectivity));
  }
  return shapes;
}

std::vector<Shape> connected_components(const BinaryMask& mask, const GeoImage& image,
                                        Connectivity connectivity, std::int64_t min_area_pixels) {
  image.validate();
  if (mask.width() != image.width || mask.height() != image.height)
    fail(ErrorCode::Structural, "mask '" + mask.class_label + "' does not match image '" +
                                    image.id + "' dimensions");
  return connected_components(mask, connectivity, min_area_pixels, image.gsd);
}

}  // namespace qvlm
