#pragma once
// Reference computations used only by tests. Each one is written from the
// definition, not from the library's algorithm, so agreement is evidence.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "platefind/model.hpp"
#include "platefind/plate_localization.hpp"
#include "platefind/query_match.hpp"

namespace oracle {

using platefind::Point;
using platefind::Quadrilateral;

/// Shoelace formula.
inline double polygon_area(const std::vector<Point>& p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Point& a = p[i];
    const Point& b = p[(i + 1) % p.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return std::abs(s) / 2.0;
}

/// Even-odd crossing test.
inline bool inside(const std::array<Point, 4>& poly, double x, double y) {
  bool in = false;
  for (int i = 0, j = 3; i < 4; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

/// Quad IoU by point sampling on a grid of `step` px over the joint bounds.
inline double raster_quad_iou(const Quadrilateral& qa, const Quadrilateral& qb, double step = 0.2) {
  const auto& a = qa.corners();
  const auto& b = qb.corners();
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto* q : {&a, &b}) {
    for (const Point& p : *q) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
  }
  long inter = 0, uni = 0;
  for (double y = y0 + step / 2; y < y1; y += step) {
    for (double x = x0 + step / 2; x < x1; x += step) {
      const bool ia = inside(a, x, y), ib = inside(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Integer-pixel box IoU by counting covered unit cells.
inline double pixel_box_iou(int ax0, int ay0, int ax1, int ay1, int bx0, int by0, int bx1, int by1) {
  long inter = 0, uni = 0;
  for (int y = std::min(ay0, by0); y < std::max(ay1, by1); ++y) {
    for (int x = std::min(ax0, bx0); x < std::max(ax1, bx1); ++x) {
      const bool ia = x >= ax0 && x < ax1 && y >= ay0 && y < ay1;
      const bool ib = x >= bx0 && x < bx1 && y >= by0 && y < by1;
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Greedy NMS by exhaustive search: the kept set is the unique subset S in
/// which an item belongs to S exactly when no higher-ranked member of S
/// overlaps it at or above the threshold. Rank = descending score, ties by index.
/// Returns indices of S in rank order.
inline std::vector<int> brute_force_nms(const std::vector<platefind::ScoredQuad>& items, double threshold,
                                        const std::function<double(const Quadrilateral&, const Quadrilateral&)>& iou) {
  const int n = static_cast<int>(items.size());
  std::vector<int> rank(n);
  for (int i = 0; i < n; ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return items[a].score > items[b].score; });
  std::vector<int> pos(n);
  for (int r = 0; r < n; ++r) pos[rank[r]] = r;

  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m[i][j] = i == j ? 1.0 : iou(items[i].quad, items[j].quad);

  std::vector<int> found;
  int solutions = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      bool suppressed = false;
      for (int j = 0; j < n; ++j) {
        if ((mask >> j & 1u) && pos[j] < pos[i] && m[i][j] >= threshold) suppressed = true;
      }
      const bool member = mask >> i & 1u;
      if (member == suppressed) ok = false;
    }
    if (!ok) continue;
    ++solutions;
    found.clear();
    for (int r = 0; r < n; ++r)
      if (mask >> rank[r] & 1u) found.push_back(rank[r]);
  }
  if (solutions != 1) return {-1};  // cannot happen for a strict ranking
  return found;
}

/// Weighted edit distance by plain recursion over the three edit operations.
inline double recursive_edit_distance(const std::string& a, const std::string& b, std::size_t i, std::size_t j,
                                      const std::function<double(char, char)>& sub) {
  if (i == a.size()) return static_cast<double>(b.size() - j);
  if (j == b.size()) return static_cast<double>(a.size() - i);
  const double del = 1.0 + recursive_edit_distance(a, b, i + 1, j, sub);
  const double ins = 1.0 + recursive_edit_distance(a, b, i, j + 1, sub);
  const double rep = sub(a[i], b[j]) + recursive_edit_distance(a, b, i + 1, j + 1, sub);
  return std::min({del, ins, rep});
}

inline double recursive_edit_distance(const std::string& a, const std::string& b,
                                      const std::function<double(char, char)>& sub) {
  return recursive_edit_distance(a, b, 0, 0, sub);
}

/// Random convex quad: four points at increasing angles around a centre,
/// redrawn until convex.
inline Quadrilateral random_convex_quad(std::mt19937_64& rng, double cx, double cy, double rmin, double rmax) {
  std::uniform_real_distribution<double> radius(rmin, rmax);
  std::uniform_real_distribution<double> jitter(-0.6, 0.6);
  std::uniform_real_distribution<double> phase(0, 2 * M_PI);
  for (;;) {
    const double base = phase(rng);
    std::array<Point, 4> pts;
    for (int k = 0; k < 4; ++k) {
      const double ang = base + k * M_PI / 2 + jitter(rng);
      const double r = radius(rng);
      pts[k] = {cx + r * std::cos(ang), cy + r * std::sin(ang)};
    }
    const Quadrilateral q = Quadrilateral::from_unordered(pts);
    if (q.is_convex()) return q;
  }
}

/// Random plate string over a restricted alphabet (more collisions).
inline std::string random_string(std::mt19937_64& rng, std::size_t max_len, const std::string& alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(len(rng), ' ');
  for (char& c : s) c = alphabet[pick(rng)];
  return s;
}

/// A random confusion table that passes validation: entries with costs in
/// [0.1, 1] are added one at a time and kept only if the table stays valid.
inline platefind::ConfusionTable random_valid_table(std::mt19937_64& rng, const std::string& alphabet, int pairs) {
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_real_distribution<double> cost(0.1, 1.0);
  std::vector<std::tuple<char, char, double>> entries;
  std::vector<std::pair<char, char>> used;
  for (int attempt = 0; attempt < pairs * 20 && static_cast<int>(entries.size()) < pairs; ++attempt) {
    char a = alphabet[pick(rng)], b = alphabet[pick(rng)];
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (std::find(used.begin(), used.end(), std::pair{a, b}) != used.end()) continue;
    entries.emplace_back(a, b, cost(rng));
    try {
      (void)platefind::ConfusionTable::from_entries(entries);
      used.emplace_back(a, b);
    } catch (const platefind::Error&) {
      entries.pop_back();
    }
  }
  return platefind::ConfusionTable::from_entries(entries);
}

}  // namespace oracle
