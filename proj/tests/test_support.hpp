#pragma once

// Shared helpers for the test suites: tiny mask builders, random blob masks,
// and the brute-force distance oracles that the fast implementations are
// checked against. Everything here is deliberately the slow-but-obvious
// version of the algorithms under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cemt/geometry.hpp"
#include "cemt/rng.hpp"
#include "cemt/volume.hpp"

namespace test_support {

// Builds a 2D mask from rows of '0'/'1' characters; rows[y][x] is voxel (x,y).
inline cemt::Volume mask2d(const std::vector<std::string>& rows,
                           std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  const int ny = static_cast<int>(rows.size());
  const int nx = static_cast<int>(rows.front().size());
  cemt::Volume m(2, {nx, ny, 1}, cemt::VolumeKind::BinaryMask, spacing);
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) m.at(x, y) = rows[y][x] == '1' ? 1.0 : 0.0;
  return m;
}

// Random blob mask: union of a few balls, retried until non-degenerate.
inline cemt::Volume random_blob_mask(cemt::Rng& rng, int dims, std::array<int, 3> extent,
                                     std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    cemt::Volume m(dims, extent, cemt::VolumeKind::BinaryMask, spacing);
    const int balls = 1 + static_cast<int>(rng.uniform_index(3));
    std::vector<std::array<double, 4>> spheres;
    for (int b = 0; b < balls; ++b) {
      spheres.push_back({rng.uniform(0.0, extent[0] - 1.0), rng.uniform(0.0, extent[1] - 1.0),
                         dims == 3 ? rng.uniform(0.0, extent[2] - 1.0) : 0.0,
                         rng.uniform(1.0, 0.45 * extent[0])});
    }
    for (int z = 0; z < extent[2]; ++z)
      for (int y = 0; y < extent[1]; ++y)
        for (int x = 0; x < extent[0]; ++x) {
          for (const auto& s : spheres) {
            const double dx = x - s[0], dy = y - s[1], dz = z - s[2];
            if (dx * dx + dy * dy + dz * dz <= s[3] * s[3]) {
              m.at(x, y, z) = 1.0;
              break;
            }
          }
        }
    const std::size_t fg = m.foreground_count();
    if (fg > 0 && fg < m.size()) return m;
  }
  throw std::runtime_error("random_blob_mask: failed to draw a non-degenerate mask");
}

// O(n * |surface|) signed distance oracle: per voxel, minimize the squared
// distance over every surface voxel. Squared terms accumulate x, y, then z —
// the same grouping the separable transform produces.
inline std::vector<double> oracle_signed_distance(const cemt::Volume& mask) {
  const cemt::SurfacePointSet surface = cemt::extract_surface(mask);
  const auto& e = mask.extent();
  const auto& s = mask.spacing();
  std::vector<double> out(mask.size());
  for (int z = 0; z < e[2]; ++z)
    for (int y = 0; y < e[1]; ++y)
      for (int x = 0; x < e[0]; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : surface.points) {
          const double dx = (x - p[0]) * s[0];
          const double dy = (y - p[1]) * s[1];
          const double dz = (z - p[2]) * s[2];
          const double d2 = dz * dz + (dy * dy + dx * dx);
          best = std::min(best, d2);
        }
        const double d = std::sqrt(best);
        out[mask.index(x, y, z)] = mask.at(x, y, z) != 0.0 ? -d : d;
      }
  return out;
}

// All-pairs directed surface distances: for every surface voxel of `source`,
// the distance to the nearest surface voxel of `target`.
inline std::vector<double> oracle_directed_distances(const cemt::Volume& source,
                                                     const cemt::Volume& target) {
  const cemt::SurfacePointSet src = cemt::extract_surface(source);
  const cemt::SurfacePointSet tgt = cemt::extract_surface(target);
  const auto& s = source.spacing();
  std::vector<double> out;
  out.reserve(src.size());
  for (const auto& p : src.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : tgt.points) {
      const double dx = (p[0] - q[0]) * s[0];
      const double dy = (p[1] - q[1]) * s[1];
      const double dz = (p[2] - q[2]) * s[2];
      const double d2 = dz * dz + (dy * dy + dx * dx);
      best = std::min(best, d2);
    }
    out.push_back(std::sqrt(best));
  }
  return out;
}

inline double oracle_asd(const cemt::Volume& a, const cemt::Volume& b) {
  const std::vector<double> ab = oracle_directed_distances(a, b);
  const std::vector<double> ba = oracle_directed_distances(b, a);
  double sum = 0.0;
  for (double d : ab) sum += d;
  for (double d : ba) sum += d;
  return sum / static_cast<double>(ab.size() + ba.size());
}

inline double oracle_percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
  if (lo == hi) return values[lo];
  const double frac = rank - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

inline double oracle_hd95(const cemt::Volume& a, const cemt::Volume& b) {
  std::vector<double> pooled = oracle_directed_distances(a, b);
  const std::vector<double> ba = oracle_directed_distances(b, a);
  pooled.insert(pooled.end(), ba.begin(), ba.end());
  return oracle_percentile(std::move(pooled), 95.0);
}

}  // namespace test_support
