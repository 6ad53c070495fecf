#pragma once

// Mean-shift segmentation in the joint spatial-range domain.
//
// Feature points are (row/h_s, col/h_s, intensity/h_r), so the window is the
// unit ball. With the Epanechnikov kernel the mean-shift step is the plain
// mean of the in-ball samples, and the density estimate never decreases
// along a trajectory.
//
// Two routes are provided. The generic one works on arbitrary double-valued
// point sets by brute force. The raster route used by segment() keeps every
// trajectory point as an exact rational (integer coordinate sums over a
// sample count) and scans only the spatial window around it. Membership and
// convergence tests depend on integer differences alone, so translating the
// ROI or adding a constant to all intensities leaves every decision, and thus
// the final partition, bit-for-bit unchanged.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ntscan/image.hpp"

namespace ntscan {

struct MeanShiftParams {
  double h_s = 6.0;           // spatial bandwidth, px
  double h_r = 24.0;          // range bandwidth, intensity levels
  double tol = 1e-3;          // feature units
  int max_iter = 100;
  double link_radius = 0.5;   // feature units
  int min_region = 20;        // px

  void validate() const {
    if (!(h_s > 0.0) || !(h_r > 0.0)) {
      throw std::invalid_argument("mean-shift bandwidths must be > 0");
    }
    if (!(tol > 0.0)) throw std::invalid_argument("mean-shift tol must be > 0");
    if (max_iter < 1) throw std::invalid_argument("mean-shift max_iter must be positive");
    if (!(link_radius > 0.0)) throw std::invalid_argument("link_radius must be > 0");
    if (min_region < 1) throw std::invalid_argument("min_region must be >= 1");
  }
};

using FeaturePoint = FeaturePointSet::Point;

/// Volume of the unit d-ball for d = 1, 2, 3.
inline double unit_ball_volume(std::size_t d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi / 3.0;
    default: throw std::invalid_argument("Epanechnikov kernel supports d in {1,2,3}, got " +
                                         std::to_string(d));
  }
}

/// K(x) = (d+2) / (2 c_d) * (1 - |x|^2) inside the unit ball, 0 outside.
inline double epanechnikov_kernel(std::span<const double> x) {
  const std::size_t d = x.size();
  const double cd = unit_ball_volume(d);
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  if (r2 >= 1.0) return 0.0;
  return 0.5 / cd * static_cast<double>(d + 2) * (1.0 - r2);
}

template <std::size_t D>
double squared_distance(const std::array<double, D>& a, const std::array<double, D>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < D; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

/// Kernel density estimate (1 / (n h^d)) * sum K((x - x_i) / h).
template <std::size_t D>
double density_estimate(const std::array<double, D>& x,
                        std::span<const std::array<double, D>> points, double h = 1.0) {
  if (points.empty()) throw std::invalid_argument("density estimate over an empty point set");
  if (!(h > 0.0)) throw std::invalid_argument("density bandwidth must be > 0");
  double sum = 0.0;
  std::array<double, D> u{};
  for (const auto& p : points) {
    for (std::size_t k = 0; k < D; ++k) u[k] = (x[k] - p[k]) / h;
    sum += epanechnikov_kernel(u);
  }
  return sum / (static_cast<double>(points.size()) * std::pow(h, static_cast<double>(D)));
}

inline double density_estimate(const FeaturePoint& x, const FeaturePointSet& fs, double h = 1.0) {
  return density_estimate<3>(x, std::span<const FeaturePoint>(fs.points), h);
}

/// Mean of the samples strictly inside the radius-h ball, minus x.
/// nullopt when the ball is empty.
template <std::size_t D>
std::optional<std::array<double, D>> mean_shift_vector(
    const std::array<double, D>& x, std::span<const std::array<double, D>> points,
    double h = 1.0) {
  const double h2 = h * h;
  std::array<double, D> sum{};
  std::size_t count = 0;
  for (const auto& p : points) {
    if (squared_distance(p, x) < h2) {
      for (std::size_t k = 0; k < D; ++k) sum[k] += p[k];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  std::array<double, D> m{};
  for (std::size_t k = 0; k < D; ++k) m[k] = sum[k] / static_cast<double>(count) - x[k];
  return m;
}

template <std::size_t D>
struct ModeTrajectory {
  std::array<double, D> z{};
  int iters = 0;                // mean-shift updates applied
  bool hit_max_iter = false;
  std::vector<std::array<double, D>> path;  // x_0 .. z, filled on request
};

/// Iterates x <- x + M(x) until |M| < tol or max_iter updates have been
/// applied. A start with an empty ball is its own mode.
template <std::size_t D>
ModeTrajectory<D> converge_point(const std::array<double, D>& x0,
                                 std::span<const std::array<double, D>> points, double tol,
                                 int max_iter, double h = 1.0, bool record_path = false) {
  ModeTrajectory<D> out;
  std::array<double, D> x = x0;
  if (record_path) out.path.push_back(x);
  while (true) {
    const auto m = mean_shift_vector<D>(x, points, h);
    if (!m) break;
    double norm2 = 0.0;
    for (double v : *m) norm2 += v * v;
    if (norm2 < tol * tol) break;
    if (out.iters == max_iter) {
      out.hit_max_iter = true;
      break;
    }
    for (std::size_t k = 0; k < D; ++k) x[k] += (*m)[k];
    ++out.iters;
    if (record_path) out.path.push_back(x);
  }
  out.z = x;
  return out;
}

inline ModeTrajectory<3> converge_point(const FeaturePoint& x0, const FeaturePointSet& fs,
                                        const MeanShiftParams& p, bool record_path = false) {
  return converge_point<3>(x0, std::span<const FeaturePoint>(fs.points), p.tol, p.max_iter, 1.0,
                           record_path);
}

namespace detail {

/// Point of the joint domain held as integer coordinate sums over `n`
/// samples: (sr/n, sc/n, si/n) in raw (row, col, intensity) units.
struct RationalPoint {
  std::int64_t sr = 0;
  std::int64_t sc = 0;
  std::int64_t si = 0;
  std::int64_t n = 1;

  RationalPoint reduced() const {
    std::int64_t g = std::gcd(std::gcd(std::gcd(sr, sc), si), n);
    if (g <= 1) return *this;
    return {sr / g, sc / g, si / g, n / g};
  }
  bool operator==(const RationalPoint&) const = default;
};

struct RationalPointHash {
  std::size_t operator()(const RationalPoint& p) const noexcept {
    std::size_t h = std::hash<std::int64_t>{}(p.sr);
    for (std::int64_t v : {p.sc, p.si, p.n}) {
      h ^= std::hash<std::int64_t>{}(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

/// Squared normalized distance between two rational points, from integer
/// cross-differences only.
inline double rational_distance2(const RationalPoint& a, const RationalPoint& b, double inv_hs2,
                                 double inv_hr2) {
  const double den = static_cast<double>(a.n) * static_cast<double>(b.n);
  const double dr = static_cast<double>(a.sr * b.n - b.sr * a.n) / den;
  const double dc = static_cast<double>(a.sc * b.n - b.sc * a.n) / den;
  const double di = static_cast<double>(a.si * b.n - b.si * a.n) / den;
  return (dr * dr + dc * dc) * inv_hs2 + di * di * inv_hr2;
}

inline FeaturePoint to_feature(const RationalPoint& p, double h_s, double h_r) {
  const double n = static_cast<double>(p.n);
  return {static_cast<double>(p.sr) / n / h_s, static_cast<double>(p.sc) / n / h_s,
          static_cast<double>(p.si) / n / h_r};
}

/// Exact mode seeker over the pixels of a raster.
class RasterModeSeeker {
 public:
  RasterModeSeeker(const Raster<std::uint8_t>& img, const MeanShiftParams& params)
      : img_(img),
        params_(params),
        inv_hs2_(1.0 / (params.h_s * params.h_s)),
        inv_hr2_(1.0 / (params.h_r * params.h_r)),
        reach_(static_cast<int>(std::ceil(params.h_s)) + 1) {}

  struct Result {
    RationalPoint z;
    int iters = 0;
    bool hit_max_iter = false;
  };

  Result seek(int row, int col, std::vector<RationalPoint>* path = nullptr) const {
    RationalPoint x{row, col, img_(row, col), 1};
    if (path) path->push_back(x);
    Result res;
    while (true) {
      const RationalPoint next = ball_sum(x);
      // |M|^2 from the integer difference next/n' - x/n.
      const double den = static_cast<double>(next.n) * static_cast<double>(x.n);
      const double mr = static_cast<double>(next.sr * x.n - x.sr * next.n) / den;
      const double mc = static_cast<double>(next.sc * x.n - x.sc * next.n) / den;
      const double mi = static_cast<double>(next.si * x.n - x.si * next.n) / den;
      const double norm2 = (mr * mr + mc * mc) * inv_hs2_ + mi * mi * inv_hr2_;
      if (norm2 < params_.tol * params_.tol) break;
      if (res.iters == params_.max_iter) {
        res.hit_max_iter = true;
        break;
      }
      x = next;
      ++res.iters;
      if (path) path->push_back(x);
    }
    res.z = x;
    return res;
  }

 private:
  // Sum and count of the samples strictly inside the unit ball around x.
  // The ball always contains at least one sample: x is a mean of samples
  // from a previous ball, and the mean squared distance to x of those
  // samples is below 1.
  RationalPoint ball_sum(const RationalPoint& x) const {
    const double cr = static_cast<double>(x.sr) / static_cast<double>(x.n);
    const double cc = static_cast<double>(x.sc) / static_cast<double>(x.n);
    const int r_lo = std::max(0, static_cast<int>(std::floor(cr)) - reach_);
    const int r_hi = std::min(img_.height() - 1, static_cast<int>(std::ceil(cr)) + reach_);
    const int c_lo = std::max(0, static_cast<int>(std::floor(cc)) - reach_);
    const int c_hi = std::min(img_.width() - 1, static_cast<int>(std::ceil(cc)) + reach_);
    const double n2 = static_cast<double>(x.n) * static_cast<double>(x.n);
    RationalPoint acc{0, 0, 0, 0};
    for (int r = r_lo; r <= r_hi; ++r) {
      const std::int64_t dr = x.sr - x.n * r;
      const double dr2 = static_cast<double>(dr * dr);
      if (dr2 * inv_hs2_ >= n2) continue;
      for (int c = c_lo; c <= c_hi; ++c) {
        const std::int64_t dc = x.sc - x.n * c;
        const std::int64_t v = img_(r, c);
        const std::int64_t di = x.si - x.n * v;
        const double d2 = static_cast<double>(dr * dr + dc * dc) * inv_hs2_ +
                          static_cast<double>(di * di) * inv_hr2_;
        if (d2 < n2) {
          acc.sr += r;
          acc.sc += c;
          acc.si += v;
          ++acc.n;
        }
      }
    }
    return acc;
  }

  const Raster<std::uint8_t>& img_;
  MeanShiftParams params_;
  double inv_hs2_;
  double inv_hr2_;
  int reach_;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

/// Connected components of the graph joining points closer than `radius`.
/// `approx` positions only drive the grid; `dist2(i, j)` decides each edge.
template <typename Dist2>
std::vector<std::size_t> link_points(const std::vector<FeaturePoint>& approx, double radius,
                                     Dist2&& dist2) {
  const std::size_t n = approx.size();
  UnionFind uf(n);
  // Cell slightly wider than the radius: any linked pair sits in adjacent cells.
  const double cell = radius * (1.0 + 1e-6);
  using Key = std::array<std::int64_t, 3>;
  std::map<Key, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < n; ++i) {
    Key k{};
    for (std::size_t a = 0; a < 3; ++a) {
      k[a] = static_cast<std::int64_t>(std::floor(approx[i][a] / cell));
    }
    grid[k].push_back(i);
  }
  const double r2 = radius * radius;
  for (const auto& [key, members] : grid) {
    for (std::int64_t d0 = -1; d0 <= 1; ++d0) {
      for (std::int64_t d1 = -1; d1 <= 1; ++d1) {
        for (std::int64_t d2 = -1; d2 <= 1; ++d2) {
          const Key other{key[0] + d0, key[1] + d1, key[2] + d2};
          if (other < key) continue;  // each cell pair once
          const auto it = grid.find(other);
          if (it == grid.end()) continue;
          const bool same = other == key;
          for (std::size_t ai = 0; ai < members.size(); ++ai) {
            const std::size_t a = members[ai];
            for (std::size_t bi = same ? ai + 1 : 0; bi < it->second.size(); ++bi) {
              const std::size_t b = it->second[bi];
              if (uf.find(a) == uf.find(b)) continue;
              if (dist2(a, b) < r2) uf.unite(a, b);
            }
          }
        }
      }
    }
  }
  std::vector<std::size_t> comp(n);
  for (std::size_t i = 0; i < n; ++i) comp[i] = uf.find(i);
  return comp;
}

}  // namespace detail

/// Per-point convergence of a point set. width * height == z.size(); a
/// point set that did not come from a raster is laid out as one row.
struct ConvergenceResult {
  int width = 0;
  int height = 0;
  std::vector<FeaturePoint> z;
  std::vector<int> iters;
  std::vector<std::uint8_t> hit_max_iter;
  // Exact modes, present when produced by the raster route.
  std::vector<detail::RationalPoint> exact;
  double h_s = 1.0;
  double h_r = 1.0;

  std::size_t size() const noexcept { return z.size(); }
  std::size_t capped_count() const {
    return static_cast<std::size_t>(std::count(hit_max_iter.begin(), hit_max_iter.end(), 1));
  }
};

struct LabelMap {
  Raster<int> labels;                      // cluster id per pixel, in [0, cluster_count)
  int cluster_count = 0;
  std::vector<FeaturePoint> cluster_modes; // representative mode per cluster
  bool pruning_degenerate = false;         // every region was below min_region
  std::size_t trajectories_capped = 0;     // starts that hit max_iter

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(cluster_count), 0);
    for (int v : labels.data()) ++sizes[static_cast<std::size_t>(v)];
    return sizes;
  }
};

/// Brute-force convergence of every point of a feature set (generic route).
inline ConvergenceResult converge_all(const FeaturePointSet& fs, const MeanShiftParams& params) {
  params.validate();
  ConvergenceResult out;
  out.width = fs.origin_roi.w > 0 ? fs.origin_roi.w : static_cast<int>(fs.size());
  out.height = fs.origin_roi.w > 0 ? fs.origin_roi.h : 1;
  if (static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height) != fs.size()) {
    out.width = static_cast<int>(fs.size());
    out.height = 1;
  }
  out.h_s = fs.h_s;
  out.h_r = fs.h_r;
  for (const auto& p : fs.points) {
    const auto t = converge_point(p, fs, params);
    out.z.push_back(t.z);
    out.iters.push_back(t.iters);
    out.hit_max_iter.push_back(t.hit_max_iter ? 1 : 0);
  }
  return out;
}

/// Exact raster route: one trajectory per pixel.
inline ConvergenceResult seek_modes(const Raster<std::uint8_t>& img,
                                    const MeanShiftParams& params) {
  params.validate();
  if (img.empty()) throw std::invalid_argument("mean-shift needs a non-empty image");
  detail::RasterModeSeeker seeker(img, params);
  ConvergenceResult out;
  out.width = img.width();
  out.height = img.height();
  out.h_s = params.h_s;
  out.h_r = params.h_r;
  out.z.reserve(img.size());
  out.exact.reserve(img.size());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const auto res = seeker.seek(r, c);
      out.exact.push_back(res.z);
      out.z.push_back(detail::to_feature(res.z, params.h_s, params.h_r));
      out.iters.push_back(res.iters);
      out.hit_max_iter.push_back(res.hit_max_iter ? 1 : 0);
    }
  }
  return out;
}

/// Trajectory of one pixel's start under the raster route, in feature units.
inline std::vector<FeaturePoint> trace_mode(const Raster<std::uint8_t>& img,
                                            const MeanShiftParams& params, int row, int col) {
  params.validate();
  detail::RasterModeSeeker seeker(img, params);
  std::vector<detail::RationalPoint> path;
  seeker.seek(row, col, &path);
  std::vector<FeaturePoint> out;
  for (const auto& p : path) out.push_back(detail::to_feature(p, params.h_s, params.h_r));
  return out;
}

/// Clusters are the connected components of the convergence points under
/// "closer than link_radius". Labels are numbered by first appearance in
/// row-major order.
inline LabelMap link_clusters(const ConvergenceResult& conv, double link_radius) {
  if (conv.z.empty()) throw std::invalid_argument("link_clusters needs convergence points");
  if (!(link_radius > 0.0)) throw std::invalid_argument("link_radius must be > 0");

  // Collapse identical modes first; most trajectories end on a shared one.
  std::vector<std::size_t> unique_of(conv.size());
  std::vector<std::size_t> representative;
  std::vector<FeaturePoint> approx;
  std::vector<detail::RationalPoint> exact_unique;
  const bool exact = !conv.exact.empty();
  if (exact) {
    std::unordered_map<detail::RationalPoint, std::size_t, detail::RationalPointHash> seen;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      const auto key = conv.exact[i].reduced();
      auto [it, inserted] = seen.try_emplace(key, representative.size());
      if (inserted) {
        representative.push_back(i);
        approx.push_back(conv.z[i]);
        exact_unique.push_back(key);
      }
      unique_of[i] = it->second;
    }
  } else {
    std::map<FeaturePoint, std::size_t> seen;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      auto [it, inserted] = seen.try_emplace(conv.z[i], representative.size());
      if (inserted) {
        representative.push_back(i);
        approx.push_back(conv.z[i]);
      }
      unique_of[i] = it->second;
    }
  }

  std::vector<std::size_t> comp;
  if (exact) {
    const double inv_hs2 = 1.0 / (conv.h_s * conv.h_s);
    const double inv_hr2 = 1.0 / (conv.h_r * conv.h_r);
    comp = detail::link_points(approx, link_radius, [&](std::size_t a, std::size_t b) {
      return detail::rational_distance2(exact_unique[a], exact_unique[b], inv_hs2, inv_hr2);
    });
  } else {
    comp = detail::link_points(approx, link_radius, [&](std::size_t a, std::size_t b) {
      return squared_distance(approx[a], approx[b]);
    });
  }

  LabelMap out;
  out.labels = Raster<int>(conv.width, conv.height, -1);
  std::unordered_map<std::size_t, int> label_of_comp;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const std::size_t c = comp[unique_of[i]];
    auto [it, inserted] = label_of_comp.try_emplace(c, out.cluster_count);
    if (inserted) {
      ++out.cluster_count;
      out.cluster_modes.push_back(conv.z[i]);
    }
    out.labels.data()[i] = it->second;
  }
  out.trajectories_capped = conv.capped_count();
  return out;
}

namespace detail {

constexpr int kDr8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kDc8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

/// 8-connected regions of equal value. Region ids follow the row-major
/// position of each region's first pixel.
template <typename T>
Raster<int> label_regions(const Raster<T>& values, int& region_count,
                          const std::function<bool(const T&)>& include = nullptr) {
  Raster<int> region(values.width(), values.height(), -1);
  region_count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < values.height(); ++r) {
    for (int c = 0; c < values.width(); ++c) {
      if (region(r, c) >= 0 || (include && !include(values(r, c)))) continue;
      const T v = values(r, c);
      const int id = region_count++;
      region(r, c) = id;
      stack.emplace_back(r, c);
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        for (int k = 0; k < 8; ++k) {
          const int nr = pr + kDr8[k];
          const int nc = pc + kDc8[k];
          if (values.contains(nr, nc) && region(nr, nc) < 0 && values(nr, nc) == v) {
            region(nr, nc) = id;
            stack.emplace_back(nr, nc);
          }
        }
      }
    }
  }
  return region;
}

/// Renumbers cluster labels by first row-major appearance and drops unused
/// modes.
inline void compact_labels(LabelMap& lm) {
  std::vector<int> remap(static_cast<std::size_t>(lm.cluster_count), -1);
  std::vector<FeaturePoint> modes;
  int next = 0;
  for (int& v : lm.labels.data()) {
    int& m = remap[static_cast<std::size_t>(v)];
    if (m < 0) {
      m = next++;
      modes.push_back(lm.cluster_modes[static_cast<std::size_t>(v)]);
    }
    v = m;
  }
  lm.cluster_count = next;
  lm.cluster_modes = std::move(modes);
}

}  // namespace detail

/// Merges 8-connected regions smaller than `min_region` pixels into the
/// neighbouring region with which they share the most 8-adjacent pixel pairs
/// (ties: the neighbour whose first pixel comes first). Smallest regions are
/// merged first. If every region is below the limit, all pixels take the
/// label of the largest region and `pruning_degenerate` is set.
inline LabelMap prune_regions(LabelMap lm, int min_region) {
  if (min_region < 1) throw std::invalid_argument("min_region must be >= 1");
  lm.pruning_degenerate = false;
  if (lm.labels.empty() || min_region == 1) return lm;

  int region_count = 0;
  const Raster<int> region = detail::label_regions(lm.labels, region_count);
  const auto nreg = static_cast<std::size_t>(region_count);

  std::vector<std::size_t> size(nreg, 0);
  std::vector<int> label(nreg, 0);
  for (std::size_t i = 0; i < region.size(); ++i) {
    const auto id = static_cast<std::size_t>(region.data()[i]);
    if (size[id]++ == 0) label[id] = lm.labels.data()[i];
  }

  const auto min_sz = static_cast<std::size_t>(min_region);
  if (std::all_of(size.begin(), size.end(), [&](std::size_t s) { return s < min_sz; })) {
    // Largest region wins; ties go to the earliest region.
    const auto largest = static_cast<std::size_t>(
        std::distance(size.begin(), std::max_element(size.begin(), size.end())));
    for (int& v : lm.labels.data()) v = label[largest];
    detail::compact_labels(lm);
    lm.pruning_degenerate = true;
    return lm;
  }

  // Shared 8-adjacent pixel pairs between regions, each unordered pair once.
  std::vector<std::map<std::size_t, std::size_t>> adj(nreg);
  constexpr int kFwdDr[4] = {0, 1, 1, 1};
  constexpr int kFwdDc[4] = {1, -1, 0, 1};
  for (int r = 0; r < region.height(); ++r) {
    for (int c = 0; c < region.width(); ++c) {
      const auto a = static_cast<std::size_t>(region(r, c));
      for (int k = 0; k < 4; ++k) {
        const int nr = r + kFwdDr[k];
        const int nc = c + kFwdDc[k];
        if (!region.contains(nr, nc)) continue;
        const auto b = static_cast<std::size_t>(region(nr, nc));
        if (a == b) continue;
        ++adj[a][b];
        ++adj[b][a];
      }
    }
  }

  std::vector<bool> alive(nreg, true);
  std::vector<std::size_t> survivor(nreg);
  std::iota(survivor.begin(), survivor.end(), 0);

  auto absorb = [&](std::size_t into, std::size_t from) {
    for (const auto& [k, cnt] : adj[from]) {
      if (k == into) continue;
      adj[into][k] += cnt;
      adj[k][into] += cnt;
      adj[k].erase(from);
    }
    adj[into].erase(from);
    adj[from].clear();
    size[into] += size[from];
    alive[from] = false;
    survivor[from] = into;
  };

  using Entry = std::pair<std::size_t, std::size_t>;  // (size, region id)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  for (std::size_t i = 0; i < nreg; ++i) {
    if (size[i] < min_sz) queue.emplace(size[i], i);
  }
  while (!queue.empty()) {
    const auto [sz, id] = queue.top();
    queue.pop();
    if (!alive[id] || size[id] != sz || size[id] >= min_sz) continue;
    // Neighbour sharing the longest boundary; std::map order breaks ties by id.
    std::size_t best = nreg;
    std::size_t best_len = 0;
    for (const auto& [k, len] : adj[id]) {
      if (len > best_len) {
        best = k;
        best_len = len;
      }
    }
    if (best == nreg) continue;  // isolated; cannot happen with >= 2 regions
    absorb(best, id);
    // Regions of the absorber's label that now touch it are the same region.
    for (bool again = true; again;) {
      again = false;
      for (const auto& [k, len] : adj[best]) {
        if (label[k] == label[best]) {
          absorb(best, k);
          again = true;
          break;
        }
      }
    }
    if (size[best] < min_sz) queue.emplace(size[best], best);
  }

  auto resolve = [&](std::size_t id) {
    while (survivor[id] != id) id = survivor[id];
    return id;
  };
  for (std::size_t i = 0; i < region.size(); ++i) {
    lm.labels.data()[i] = label[resolve(static_cast<std::size_t>(region.data()[i]))];
  }
  detail::compact_labels(lm);
  return lm;
}

/// Full segmentation of a ROI image: per-pixel mode seeking, linking,
/// labelling and small-region pruning. Deterministic.
inline LabelMap segment(const Raster<std::uint8_t>& img, const MeanShiftParams& params) {
  params.validate();
  const ConvergenceResult conv = seek_modes(img, params);
  return prune_regions(link_clusters(conv, params.link_radius), params.min_region);
}

/// Each pixel replaced by the rounded mean intensity of its cluster.
inline GrayImage cluster_mean_image(const LabelMap& lm, const Raster<std::uint8_t>& img) {
  if (lm.labels.width() != img.width() || lm.labels.height() != img.height()) {
    throw std::invalid_argument("label map does not cover the image");
  }
  std::vector<double> sum(static_cast<std::size_t>(lm.cluster_count), 0.0);
  std::vector<std::size_t> cnt(static_cast<std::size_t>(lm.cluster_count), 0);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const auto l = static_cast<std::size_t>(lm.labels.data()[i]);
    sum[l] += img.data()[i];
    ++cnt[l];
  }
  GrayImage out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const auto l = static_cast<std::size_t>(lm.labels.data()[i]);
    out.data()[i] = static_cast<std::uint8_t>(std::lround(sum[l] / static_cast<double>(cnt[l])));
  }
  return out;
}

}  // namespace ntscan
