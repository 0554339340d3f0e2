#pragma once

// Slow reference implementations written from the definitions. Tests compare
// library output against these.

#include "qvlm/calibration.hpp"
#include "qvlm/fusion.hpp"
#include "qvlm/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using qvlm::BinaryMask;
using qvlm::Raster;

using Pixel = std::pair<int, int>;  // (y, x)
using Pixels = std::set<Pixel>;

inline Pixels pixels_of(const qvlm::PixelSet& s) {
  Pixels out;
  s.for_each([&](int x, int y) { out.emplace(y, x); });
  return out;
}

inline Pixels pixels_of(const BinaryMask& m) {
  Pixels out;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(x, y)) out.emplace(y, x);
  return out;
}

/// Breadth-first flood fill; components ordered by their first pixel in scan order.
inline std::vector<Pixels> flood_fill(const BinaryMask& m, int connectivity) {
  const int w = m.width(), h = m.height();
  std::vector<char> seen(std::size_t(w) * h, 0);
  std::vector<Pixels> out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m.at(x, y) || seen[std::size_t(y) * w + x]) continue;
      Pixels comp;
      std::deque<Pixel> queue{{y, x}};
      seen[std::size_t(y) * w + x] = 1;
      while (!queue.empty()) {
        const auto [cy, cx] = queue.front();
        queue.pop_front();
        comp.emplace(cy, cx);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dy && !dx) continue;
            if (connectivity == 4 && dy && dx) continue;
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            if (!m.at(nx, ny) || seen[std::size_t(ny) * w + nx]) continue;
            seen[std::size_t(ny) * w + nx] = 1;
            queue.emplace_back(ny, nx);
          }
      }
      out.push_back(std::move(comp));
    }
  return out;
}

/// Random mask: independent noise, blobs, or stripes.
inline BinaryMask random_mask(std::mt19937_64& rng, int w, int h) {
  BinaryMask m(w, h);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int style = int(rng() % 3);
  if (style == 0) {
    const double p = 0.1 + 0.5 * u(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.set(x, y, u(rng) < p);
  } else if (style == 1) {
    const int blobs = 1 + int(rng() % 8);
    for (int b = 0; b < blobs; ++b) {
      const double cx = u(rng) * w, cy = u(rng) * h, r = 1.0 + u(rng) * std::max(2, std::min(w, h) / 3);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, (b % 4) != 3);
    }
  } else {
    const int period = 2 + int(rng() % 6);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.set(x, y, ((x + y * (1 + int(rng() % 2))) / period) % 2 == 0 && u(rng) < 0.9);
  }
  return m;
}

/// Squared distance to the nearest foreground pixel, -1 when there is none:
/// a per-row nearest-column scan followed by a full minimum over rows.
inline Raster<std::int64_t> squared_distances(const BinaryMask& m) {
  const int w = m.width(), h = m.height();
  const std::int64_t none = std::numeric_limits<std::int64_t>::max();
  Raster<std::int64_t> row(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int64_t best = none;
      for (int x2 = 0; x2 < w; ++x2)
        if (m.at(x2, y)) best = std::min<std::int64_t>(best, std::int64_t(x - x2) * (x - x2));
      row(y, x) = best;
    }
  Raster<std::int64_t> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int64_t best = none;
      for (int y2 = 0; y2 < h; ++y2)
        if (row(y2, x) != none) best = std::min<std::int64_t>(best, row(y2, x) + std::int64_t(y - y2) * (y - y2));
      out(y, x) = best == none ? -1 : best;
    }
  return out;
}

/// Same quantity by enumerating every foreground pixel; for small masks.
inline std::int64_t brute_squared_distance(const Pixels& refs, int x, int y) {
  std::int64_t best = -1;
  for (const auto& [ry, rx] : refs) {
    const std::int64_t d = std::int64_t(x - rx) * (x - rx) + std::int64_t(y - ry) * (y - ry);
    if (best < 0 || d < best) best = d;
  }
  return best;
}

/// Clip each target to {p : |p - nearest reference| * res <= d}, then split
/// into components; returns all pieces in target order.
inline std::vector<Pixels> within_distance(const std::vector<Pixels>& targets, const BinaryMask& references,
                                           double res, double d, int connectivity, int w, int h) {
  const Raster<std::int64_t> sq = squared_distances(references);
  std::vector<Pixels> out;
  for (const Pixels& t : targets) {
    BinaryMask clipped(w, h);
    for (const auto& [y, x] : t)
      if (sq(y, x) >= 0 && std::sqrt(double(sq(y, x))) * res <= d) clipped.set(x, y);
    for (Pixels& piece : flood_fill(clipped, connectivity)) out.push_back(std::move(piece));
  }
  return out;
}

/// Even-odd rule at pixel centers over all rings.
inline Pixels fill_rings(const std::vector<qvlm::Ring>& rings, int w, int h) {
  Pixels out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      for (const qvlm::Ring& r : rings)
        for (std::size_t i = 0, j = r.size() - 1; i < r.size(); j = i++) {
          const double xi = r[i].x(), yi = r[i].y(), xj = r[j].x(), yj = r[j].y();
          if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
        }
      if (inside) out.emplace(y, x);
    }
  return out;
}

/// Krippendorff's alpha (interval metric) through the coincidence matrix.
inline double alpha_coincidence(const qvlm::ResponseMatrix& x) {
  std::map<std::pair<double, double>, double> o;
  for (Eigen::Index u = 0; u < x.rows(); ++u) {
    std::vector<double> vals;
    for (Eigen::Index a = 0; a < x.cols(); ++a)
      if (!std::isnan(x(u, a))) vals.push_back(x(u, a));
    if (vals.size() < 2) continue;
    for (std::size_t i = 0; i < vals.size(); ++i)
      for (std::size_t j = 0; j < vals.size(); ++j)
        if (i != j) o[{vals[i], vals[j]}] += 1.0 / double(vals.size() - 1);
  }
  std::map<double, double> marg;
  double n = 0;
  for (const auto& [ck, v] : o) {
    marg[ck.first] += v;
    n += v;
  }
  double d_o = 0, d_e = 0;
  for (const auto& [ck, v] : o) d_o += v * (ck.first - ck.second) * (ck.first - ck.second);
  for (const auto& [c, nc] : marg)
    for (const auto& [k, nk] : marg) d_e += nc * nk * (c - k) * (c - k);
  d_o /= n;
  d_e /= n * (n - 1);
  return 1.0 - d_o / d_e;
}

struct Anova {
  double msr, msc, mse;
};

/// Two-way ANOVA mean squares with the residual summed directly.
inline Anova anova(const qvlm::ResponseMatrix& x) {
  const int n = int(x.rows()), k = int(x.cols());
  double grand = 0;
  std::vector<double> rm(std::size_t(n), 0.0), cm(std::size_t(k), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      grand += x(i, j);
      rm[std::size_t(i)] += x(i, j) / k;
      cm[std::size_t(j)] += x(i, j) / n;
    }
  grand /= double(n) * k;
  double ssr = 0, ssc = 0, sse = 0;
  for (int i = 0; i < n; ++i) ssr += k * (rm[std::size_t(i)] - grand) * (rm[std::size_t(i)] - grand);
  for (int j = 0; j < k; ++j) ssc += n * (cm[std::size_t(j)] - grand) * (cm[std::size_t(j)] - grand);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const double r = x(i, j) - rm[std::size_t(i)] - cm[std::size_t(j)] + grand;
      sse += r * r;
    }
  return {ssr / (n - 1), ssc / (k - 1), sse / (double(n - 1) * (k - 1))};
}

inline double icc2k(const qvlm::ResponseMatrix& x) {
  const Anova a = anova(x);
  return (a.msr - a.mse) / (a.msr + (a.msc - a.mse) / double(x.rows()));
}

/// Majority label in the k x k window clipped to the image; ties keep the
/// center label if it is among the leaders, else the lowest index.
inline Raster<std::int32_t> mode_filter(const Raster<std::int32_t>& labels, int nclasses, int k) {
  const int h = int(labels.rows()), w = int(labels.cols()), r = k / 2;
  Raster<std::int32_t> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::vector<int> count(std::size_t(nclasses), 0);
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) ++count[std::size_t(labels(yy, xx))];
      const int top = *std::max_element(count.begin(), count.end());
      int pick = labels(y, x);
      if (count[std::size_t(pick)] != top)
        pick = int(std::find(count.begin(), count.end(), top) - count.begin());
      out(y, x) = pick;
    }
  return out;
}

/// Per pixel: score of each semantic rule = max of weight * logit over enabled
/// inputs, label = first rule with the highest score.
inline Raster<std::int32_t> fuse(const std::vector<qvlm::LogitMap>& maps,
                                 const std::vector<qvlm::ClassMergeRule>& rules) {
  const int h = maps.front().height, w = maps.front().width;
  Raster<std::int32_t> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = 0;
      int best_i = -1, i = 0;
      for (const auto& rule : rules) {
        if (rule.kind != qvlm::ClassKind::Semantic) continue;
        double s = -std::numeric_limits<double>::infinity();
        for (const auto& in : rule.inputs) {
          if (in.weight == 0.0) continue;
          for (const auto& m : maps)
            if (m.model_id == in.model_id)
              if (const auto* p = m.plane(in.class_name)) s = std::max(s, in.weight * double((*p)(y, x)));
        }
        if (best_i < 0 || s > best) best = s, best_i = i;
        ++i;
      }
      out(y, x) = best_i;
    }
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("qvlm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
