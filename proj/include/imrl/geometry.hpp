#pragma once

// Binary-mask geometry for picking where to scoop: centroid, box-window food
// density from a summed-area table, exact Euclidean distance to the mask
// boundary, and the margin-constrained density maximizer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "imrl/errors.hpp"
#include "imrl/image.hpp"

namespace imrl {

struct Pixel {
  int x = 0;
  int y = 0;
  bool operator==(const Pixel&) const = default;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, 0) {
    if (w < 1 || h < 1) throw ShapeError("mask dimensions must be positive");
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::uint8_t at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  void set(int x, int y, bool food) { cells[static_cast<std::size_t>(y) * width + x] = food ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
  }
  bool empty() const { return count() == 0; }

  bool operator==(const BinaryMask&) const = default;
};

struct Centroid {
  double x = 0.0;
  double y = 0.0;
};

inline Centroid centroid(const BinaryMask& mask) {
  std::int64_t sx = 0, sy = 0, n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        sx += x;
        sy += y;
        ++n;
      }
  if (n == 0) throw EmptyMask("centroid of an empty mask");
  return {static_cast<double>(sx) / static_cast<double>(n), static_cast<double>(sy) / static_cast<double>(n)};
}

/// Half-open rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
};

class SummedAreaTable {
 public:
  explicit SummedAreaTable(const BinaryMask& mask)
      : width_(mask.width), height_(mask.height),
        table_(static_cast<std::size_t>(mask.width + 1) * (mask.height + 1), 0) {
    for (int y = 0; y < height_; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < width_; ++x) {
        row += mask.at(x, y);
        entry(x + 1, y + 1) = entry(x + 1, y) + row;
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }

  /// Food count inside `rect` after clipping it to the image.
  std::int64_t box_sum(Rect rect) const {
    const Rect r = clip(rect);
    if (r.x0 >= r.x1 || r.y0 >= r.y1) return 0;
    return entry(r.x1, r.y1) - entry(r.x0, r.y1) - entry(r.x1, r.y0) + entry(r.x0, r.y0);
  }

  Rect clip(Rect rect) const {
    return {std::clamp(rect.x0, 0, width_), std::clamp(rect.y0, 0, height_), std::clamp(rect.x1, 0, width_),
            std::clamp(rect.y1, 0, height_)};
  }

 private:
  std::int64_t& entry(int x, int y) { return table_[static_cast<std::size_t>(y) * (width_ + 1) + x]; }
  std::int64_t entry(int x, int y) const { return table_[static_cast<std::size_t>(y) * (width_ + 1) + x]; }

  int width_;
  int height_;
  std::vector<std::int64_t> table_;
};

inline SummedAreaTable integral_image(const BinaryMask& mask) { return SummedAreaTable(mask); }

inline std::int64_t box_sum(const SummedAreaTable& table, Rect rect) { return table.box_sum(rect); }

/// Window around (x, y) of odd side `radius`, clipped to the image.
inline Rect density_window(int x, int y, int radius) {
  const int half = radius / 2;
  return {x - half, y - half, x + half + 1, y + half + 1};
}

/// Food fraction in the clipped r x r window around every pixel. Numerators and
/// denominators are kept as integers so exact comparisons are possible.
struct DensityMap {
  int width = 0;
  int height = 0;
  int radius = 0;
  std::vector<std::int32_t> food_counts;
  std::vector<std::int32_t> window_sizes;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t count_at(int x, int y) const { return food_counts[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t window_at(int x, int y) const { return window_sizes[static_cast<std::size_t>(y) * width + x]; }
};

inline void check_density_radius(int radius) {
  if (radius < 1 || radius % 2 == 0)
    throw ConfigError("density_radius must be a positive odd integer, got " + std::to_string(radius));
}

inline DensityMap local_density(const BinaryMask& mask, int radius) {
  check_density_radius(radius);
  const SummedAreaTable table(mask);
  DensityMap map{mask.width, mask.height, radius, {}, {}, {}};
  const std::size_t n = static_cast<std::size_t>(mask.width) * mask.height;
  map.food_counts.resize(n);
  map.window_sizes.resize(n);
  map.values.resize(n);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const Rect window = table.clip(density_window(x, y, radius));
      const auto count = static_cast<std::int32_t>(table.box_sum(window));
      const auto area = static_cast<std::int32_t>((window.x1 - window.x0) * (window.y1 - window.y0));
      const std::size_t i = static_cast<std::size_t>(y) * mask.width + x;
      map.food_counts[i] = count;
      map.window_sizes[i] = area;
      map.values[i] = static_cast<double>(count) / static_cast<double>(area);
    }
  return map;
}

/// Food pixels 4-adjacent to background or to the image edge.
inline bool is_boundary_pixel(const BinaryMask& mask, int x, int y) {
  if (!mask.at(x, y)) return false;
  constexpr int dx[4] = {1, -1, 0, 0};
  constexpr int dy[4] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int nx = x + dx[k];
    const int ny = y + dy[k];
    if (!mask.contains(nx, ny) || !mask.at(nx, ny)) return true;
  }
  return false;
}

/// Squared Euclidean distance from each food pixel to the nearest boundary
/// pixel (zero on and outside the boundary).
struct DistanceField {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> squared;

  std::int64_t squared_at(int x, int y) const { return squared[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return std::sqrt(static_cast<double>(squared_at(x, y))); }
};

/// Exact Euclidean distance transform, two separable passes (column scan, then
/// lower envelope of parabolas per row) in integer arithmetic.
inline DistanceField boundary_distance(const BinaryMask& mask) {
  const int w = mask.width;
  const int h = mask.height;
  if (mask.empty()) throw EmptyMask("boundary_distance of an empty mask");
  const std::int64_t inf = static_cast<std::int64_t>(w) + h + 1;

  std::vector<std::int64_t> g(static_cast<std::size_t>(w) * h);
  auto G = [&](int x, int y) -> std::int64_t& { return g[static_cast<std::size_t>(y) * w + x]; };

  for (int x = 0; x < w; ++x) {
    G(x, 0) = is_boundary_pixel(mask, x, 0) ? 0 : inf;
    for (int y = 1; y < h; ++y) G(x, y) = is_boundary_pixel(mask, x, y) ? 0 : std::min(inf, G(x, y - 1) + 1);
    for (int y = h - 2; y >= 0; --y)
      if (G(x, y + 1) < G(x, y)) G(x, y) = G(x, y + 1) + 1;
  }

  DistanceField field{w, h, std::vector<std::int64_t>(static_cast<std::size_t>(w) * h, 0)};
  std::vector<int> s(static_cast<std::size_t>(w));
  std::vector<std::int64_t> t(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    auto f = [&](std::int64_t x, std::int64_t i) {
      const std::int64_t gi = G(static_cast<int>(i), y);
      return (x - i) * (x - i) + gi * gi;
    };
    auto sep = [&](std::int64_t i, std::int64_t u) {
      const std::int64_t gi = G(static_cast<int>(i), y);
      const std::int64_t gu = G(static_cast<int>(u), y);
      const std::int64_t num = u * u - i * i + gu * gu - gi * gi;
      const std::int64_t den = 2 * (u - i);
      // floor division; num may be negative
      return num >= 0 ? num / den : -((-num + den - 1) / den);
    };
    int q = 0;
    s[0] = 0;
    t[0] = 0;
    for (int u = 1; u < w; ++u) {
      while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
      if (q < 0) {
        q = 0;
        s[0] = u;
      } else {
        const std::int64_t next = 1 + sep(s[q], u);
        if (next < w) {
          ++q;
          s[q] = u;
          t[q] = next;
        }
      }
    }
    for (int u = w - 1; u >= 0; --u) {
      if (mask.at(u, y)) field.squared[static_cast<std::size_t>(y) * w + u] = f(u, s[q]);
      if (u == t[q]) --q;
    }
  }
  return field;
}

struct ScoopPoint {
  int x = 0;
  int y = 0;
  double density = 0.0;
  double boundary_distance = 0.0;
};

/// Food pixel of maximal local density among those farther than `margin` from
/// the mask boundary. Ties go to the pixel nearest the centroid, then to the
/// first in row-major order.
inline ScoopPoint optimal_scoop_point(const BinaryMask& mask, int radius, double margin) {
  check_density_radius(radius);
  if (!(margin >= 0.0)) throw ConfigError("margin must be non-negative");
  if (mask.empty()) throw NoFeasiblePoint("mask has no food pixels");
  const DensityMap density = local_density(mask, radius);
  const DistanceField dist = boundary_distance(mask);

  std::int64_t sx = 0, sy = 0, n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        sx += x;
        sy += y;
        ++n;
      }
  // n^2 * squared distance to the centroid, exact.
  auto centroid_key = [&](int x, int y) {
    const std::int64_t ex = n * x - sx;
    const std::int64_t ey = n * y - sy;
    return ex * ex + ey * ey;
  };

  const double margin_sq = margin * margin;
  bool found = false;
  int best_x = 0, best_y = 0;
  std::int64_t best_count = 0, best_area = 1, best_key = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      if (!(static_cast<double>(dist.squared_at(x, y)) > margin_sq)) continue;
      const std::int64_t count = density.count_at(x, y);
      const std::int64_t area = density.window_at(x, y);
      const std::int64_t key = centroid_key(x, y);
      bool better = !found;
      if (found) {
        const std::int64_t lhs = count * best_area;
        const std::int64_t rhs = best_count * area;
        better = lhs > rhs || (lhs == rhs && key < best_key);
      }
      if (better) {
        found = true;
        best_x = x;
        best_y = y;
        best_count = count;
        best_area = area;
        best_key = key;
      }
    }
  if (!found) throw NoFeasiblePoint("no food pixel lies farther than the margin from the boundary");
  return {best_x, best_y, density.at(best_x, best_y), dist.at(best_x, best_y)};
}

inline std::string format_scoop_point(const ScoopPoint& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d %d %.6f %.6f", p.x, p.y, p.density, p.boundary_distance);
  return buf;
}

/// Marks a pixel as food when every channel is within `tolerance` of one of the
/// food colors.
inline BinaryMask threshold_segment(const RgbImage& frame, std::span<const Rgb> food_colors, int tolerance) {
  if (tolerance < 0) throw ConfigError("tolerance must be non-negative");
  BinaryMask mask(frame.width, frame.height);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      const Rgb p = frame.at(x, y);
      for (const Rgb& c : food_colors) {
        if (std::abs(p.r - c.r) <= tolerance && std::abs(p.g - c.g) <= tolerance &&
            std::abs(p.b - c.b) <= tolerance) {
          mask.set(x, y, true);
          break;
        }
      }
    }
  return mask;
}

inline BinaryMask threshold_segment(const RgbImage& frame, Rgb food_color, int tolerance) {
  return threshold_segment(frame, std::span<const Rgb>(&food_color, 1), tolerance);
}

// ---------------------------------------------------------------------------
// Plain-text PGM (P2, maxval 1).

inline void write_pgm(std::ostream& out, const BinaryMask& mask) {
  out << "P2\n" << mask.width << ' ' << mask.height << "\n1\n";
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) out << (x ? " " : "") << int(mask.at(x, y));
    out << '\n';
  }
}

inline void write_pgm(const std::string& path, const BinaryMask& mask) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_pgm(out, mask);
  if (!out) throw IoError("failed writing " + path);
}

inline BinaryMask read_pgm(std::istream& in) {
  auto next_token = [&in]() {
    std::string token;
    while (in >> token) {
      if (token[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return token;
    }
    throw IoError("PGM truncated");
  };
  if (next_token() != "P2") throw IoError("only plain PGM (P2) masks are supported");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::logic_error&) {
    throw IoError("malformed PGM header");
  }
  if (w < 1 || h < 1 || maxval < 1) throw IoError("malformed PGM header");
  BinaryMask mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int v = 0;
      try {
        v = std::stoi(next_token());
      } catch (const std::logic_error&) {
        throw IoError("malformed PGM pixel");
      }
      if (v < 0 || v > maxval) throw IoError("PGM pixel out of range");
      mask.set(x, y, v > 0);
    }
  return mask;
}

inline BinaryMask read_pgm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_pgm(in);
}

}  // namespace imrl
