#pragma once

#include "nap/common.hpp"

#include <array>
#include <string>

namespace nap::sim {

enum class TerrainKind {
  flat,
  smooth_slope,
  rough_slope,
  stairs_up,
  stairs_down,
  discrete_blocks,
  random,  // sampled by the configured proportions
};

inline std::string to_string(TerrainKind k) {
  switch (k) {
    case TerrainKind::flat: return "flat";
    case TerrainKind::smooth_slope: return "smooth_slope";
    case TerrainKind::rough_slope: return "rough_slope";
    case TerrainKind::stairs_up: return "stairs_up";
    case TerrainKind::stairs_down: return "stairs_down";
    case TerrainKind::discrete_blocks: return "discrete_blocks";
    case TerrainKind::random: return "random";
  }
  return "?";
}

inline TerrainKind terrain_kind_from_string(const std::string& s) {
  for (TerrainKind k : {TerrainKind::flat, TerrainKind::smooth_slope,
                        TerrainKind::rough_slope, TerrainKind::stairs_up,
                        TerrainKind::stairs_down, TerrainKind::discrete_blocks,
                        TerrainKind::random})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown terrain kind: " + s);
}

// Sampling proportions over the five non-flat kinds:
// [smooth_slope, rough_slope, stairs_up, stairs_down, discrete_blocks]
constexpr std::array<double, 5> kTerrainProportions = {0.25, 0.15, 0.25, 0.25,
                                                       0.1};

inline TerrainKind sample_terrain_kind(Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  const TerrainKind kinds[5] = {TerrainKind::smooth_slope,
                                TerrainKind::rough_slope, TerrainKind::stairs_up,
                                TerrainKind::stairs_down,
                                TerrainKind::discrete_blocks};
  for (int i = 0; i < 5; ++i) {
    acc += kTerrainProportions[i];
    if (u < acc) return kinds[i];
  }
  return TerrainKind::discrete_blocks;
}

constexpr int kMaxTerrainLevel = 4;

// Height field over a square arena, node-sampled, bilinear interpolation,
// edge-clamped outside the bounds.
struct TerrainField {
  Matd grid;           // node heights, (n x n), grid(ix, iy)
  double cell = 0.125; // m
  Vec2d origin{-12.0, -12.0};
  int level = 0;
  TerrainKind kind = TerrainKind::flat;

  int nodes() const { return static_cast<int>(grid.rows()); }
  double extent() const { return cell * (nodes() - 1); }

  double height(double x, double y) const {
    double gx = (x - origin.x()) / cell;
    double gy = (y - origin.y()) / cell;
    int n = nodes();
    gx = std::clamp(gx, 0.0, static_cast<double>(n - 1));
    gy = std::clamp(gy, 0.0, static_cast<double>(n - 1));
    int ix = std::min(static_cast<int>(gx), n - 2);
    int iy = std::min(static_cast<int>(gy), n - 2);
    double fx = gx - ix, fy = gy - iy;
    double h00 = grid(ix, iy), h10 = grid(ix + 1, iy);
    double h01 = grid(ix, iy + 1), h11 = grid(ix + 1, iy + 1);
    return h00 * (1 - fx) * (1 - fy) + h10 * fx * (1 - fy) +
           h01 * (1 - fx) * fy + h11 * fx * fy;
  }

  Vec2d gradient(double x, double y) const {
    double d = cell;
    return Vec2d((height(x + d, y) - height(x - d, y)) / (2 * d),
                 (height(x, y + d) - height(x, y - d)) / (2 * d));
  }

  // Height variance over a small node window around (x, y); drives the
  // roughness disturbance in the balance dynamics.
  double local_variance(double x, double y) const {
    int n = nodes();
    int cx = std::clamp(
        static_cast<int>(std::round((x - origin.x()) / cell)), 0, n - 1);
    int cy = std::clamp(
        static_cast<int>(std::round((y - origin.y()) / cell)), 0, n - 1);
    double sum = 0.0, sum2 = 0.0;
    int count = 0;
    for (int ix = std::max(0, cx - 2); ix <= std::min(n - 1, cx + 2); ++ix)
      for (int iy = std::max(0, cy - 2); iy <= std::min(n - 1, cy + 2); ++iy) {
        sum += grid(ix, iy);
        sum2 += grid(ix, iy) * grid(ix, iy);
        ++count;
      }
    double mean = sum / count;
    return std::max(0.0, sum2 / count - mean * mean);
  }
};

namespace detail {

// Coarse value noise bilinearly upsampled onto the node grid.
inline void add_value_noise(Matd& grid, double cell, double coarse_m,
                            double amplitude, Rng& rng) {
  int n = static_cast<int>(grid.rows());
  int stride = std::max(1, static_cast<int>(std::round(coarse_m / cell)));
  int cn = n / stride + 2;
  Matd coarse(cn, cn);
  for (int i = 0; i < cn; ++i)
    for (int j = 0; j < cn; ++j)
      coarse(i, j) = rng.uniform(-amplitude, amplitude);
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy) {
      double fx = static_cast<double>(ix) / stride;
      double fy = static_cast<double>(iy) / stride;
      int i0 = static_cast<int>(fx), j0 = static_cast<int>(fy);
      double ax = fx - i0, ay = fy - j0;
      grid(ix, iy) += coarse(i0, j0) * (1 - ax) * (1 - ay) +
                      coarse(i0 + 1, j0) * ax * (1 - ay) +
                      coarse(i0, j0 + 1) * (1 - ax) * ay +
                      coarse(i0 + 1, j0 + 1) * ax * ay;
    }
}

}  // namespace detail

// Deterministic procedural terrain. Difficulty parameters scale linearly with
// level; level 0 is exactly flat for every kind.
inline TerrainField generate_terrain(TerrainKind kind, int level,
                                     std::uint64_t seed, double arena = 24.0,
                                     double cell = 0.125) {
  if (level < 0 || level > kMaxTerrainLevel)
    throw ConfigError("terrain level must be in 0.." +
                      std::to_string(kMaxTerrainLevel));
  Rng rng = Rng(seed).derive(0x7e55a1);
  if (kind == TerrainKind::random) kind = sample_terrain_kind(rng);

  TerrainField field;
  field.cell = cell;
  field.origin = Vec2d(-arena / 2, -arena / 2);
  field.level = level;
  field.kind = kind;
  int n = static_cast<int>(std::round(arena / cell)) + 1;
  field.grid = Matd::Zero(n, n);
  double s = static_cast<double>(level) / kMaxTerrainLevel;
  if (level == 0 || kind == TerrainKind::flat) return field;

  auto node_xy = [&](int ix, int iy) {
    return Vec2d(field.origin.x() + ix * cell, field.origin.y() + iy * cell);
  };

  switch (kind) {
    case TerrainKind::smooth_slope:
    case TerrainKind::rough_slope: {
      double grade = 0.16 * s;
      double dir = rng.uniform(0.0, 2.0 * M_PI);
      Vec2d d(std::cos(dir), std::sin(dir));
      for (int ix = 0; ix < n; ++ix)
        for (int iy = 0; iy < n; ++iy)
          field.grid(ix, iy) = grade * node_xy(ix, iy).dot(d);
      if (kind == TerrainKind::rough_slope)
        detail::add_value_noise(field.grid, cell, 1.0, 0.06 * s, rng);
      break;
    }
    case TerrainKind::stairs_up:
    case TerrainKind::stairs_down: {
      double step_h = 0.16 * s;
      double run = 0.45;
      double sign = kind == TerrainKind::stairs_up ? 1.0 : -1.0;
      for (int ix = 0; ix < n; ++ix)
        for (int iy = 0; iy < n; ++iy) {
          Vec2d p = node_xy(ix, iy);
          double ring = std::floor(std::max(std::abs(p.x()), std::abs(p.y())) / run);
          field.grid(ix, iy) = sign * step_h * ring;
        }
      break;
    }
    case TerrainKind::discrete_blocks: {
      double block_h = 0.14 * s;
      int n_blocks = 70;
      for (int b = 0; b < n_blocks; ++b) {
        double cx = rng.uniform(field.origin.x(), -field.origin.x());
        double cy = rng.uniform(field.origin.y(), -field.origin.y());
        double wx = rng.uniform(0.5, 1.5), wy = rng.uniform(0.5, 1.5);
        double h = rng.uniform(0.3, 1.0) * block_h *
                   (rng.uniform() < 0.5 ? -1.0 : 1.0);
        if (std::hypot(cx, cy) < 1.2 + 0.5 * std::max(wx, wy)) continue;  // clear spawn
        int x0 = std::max(0, static_cast<int>((cx - wx / 2 - field.origin.x()) / cell));
        int x1 = std::min(n - 1, static_cast<int>((cx + wx / 2 - field.origin.x()) / cell));
        int y0 = std::max(0, static_cast<int>((cy - wy / 2 - field.origin.y()) / cell));
        int y1 = std::min(n - 1, static_cast<int>((cy + wy / 2 - field.origin.y()) / cell));
        for (int ix = x0; ix <= x1; ++ix)
          for (int iy = y0; iy <= y1; ++iy) field.grid(ix, iy) = h;
      }
      break;
    }
    default:
      throw ConfigError("generate_terrain: unknown kind");
  }
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      if (!std::isfinite(field.grid(ix, iy)))
        throw SimulationError("terrain generation produced non-finite height");
  return field;
}

}  // namespace nap::sim
