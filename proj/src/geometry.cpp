#include "cemt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cemt {

namespace {

// Finite sentinel instead of IEEE infinity: envelope arithmetic must never
// produce NaN from inf - inf. Any real squared distance in a grid is far
// below this.
constexpr double kFar = 1e30;

void require_binary_mask(const Volume& mask, const char* where) {
  if (!mask.is_binary()) throw ShapeError(std::string(where) + ": mask is not binary");
}

// One lower-envelope pass along a line of squared distances. `f` holds the
// current squared distances at positions 0..n-1, `step` is the physical
// spacing of the axis. Output overwrites `f`.
void envelope_pass(std::vector<double>& f, std::vector<double>& scratch,
                   std::vector<int>& v, std::vector<double>& z, int n, double step) {
  const double s2 = step * step;
  const double inf = std::numeric_limits<double>::infinity();
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  scratch.resize(static_cast<std::size_t>(n));

  // Parabola heights use the finite kFar sentinel, so every intersection is
  // finite; the boundary array can use true infinities without NaN risk.
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    double intersect;
    while (true) {
      const int p = v[k];
      // Intersection of parabolas rooted at p and q with heights f[p], f[q].
      intersect = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
      if (intersect > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = intersect;
    z[k + 1] = inf;
  }

  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = (q - v[k]) * step;
    scratch[q] = d * d + f[v[k]];
  }
  std::copy(scratch.begin(), scratch.begin() + n, f.begin());
}

}  // namespace

std::vector<double> squared_distance_to_seeds(const std::vector<char>& seeds,
                                              const std::array<int, 3>& extent,
                                              const std::array<double, 3>& spacing) {
  const int nx = extent[0], ny = extent[1], nz = extent[2];
  const std::size_t total = static_cast<std::size_t>(nx) * ny * nz;
  if (seeds.size() != total) throw ShapeError("squared_distance_to_seeds: seed grid size mismatch");

  std::vector<double> d2(total, kFar);
  bool any = false;
  for (std::size_t i = 0; i < total; ++i) {
    if (seeds[i]) {
      d2[i] = 0.0;
      any = true;
    }
  }
  if (!any) throw DegenerateMask("squared_distance_to_seeds: no seed voxels");

  std::vector<double> line, scratch, z;
  std::vector<int> v;
  const auto idx = [&](int x, int y, int zz) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * zz);
  };

  // Axis passes in x, y, z order. Each pass combines the running squared
  // distance with the squared offset along that axis, so the final value is
  // (dx*sx)^2 + (dy*sy)^2 + (dz*sz)^2 for the minimizing seed.
  if (nx > 1) {
    line.resize(nx);
    for (int zz = 0; zz < nz; ++zz)
      for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) line[x] = d2[idx(x, y, zz)];
        envelope_pass(line, scratch, v, z, nx, spacing[0]);
        for (int x = 0; x < nx; ++x) d2[idx(x, y, zz)] = line[x];
      }
  }
  if (ny > 1) {
    line.resize(ny);
    for (int zz = 0; zz < nz; ++zz)
      for (int x = 0; x < nx; ++x) {
        for (int y = 0; y < ny; ++y) line[y] = d2[idx(x, y, zz)];
        envelope_pass(line, scratch, v, z, ny, spacing[1]);
        for (int y = 0; y < ny; ++y) d2[idx(x, y, zz)] = line[y];
      }
  }
  if (nz > 1) {
    line.resize(nz);
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        for (int zz = 0; zz < nz; ++zz) line[zz] = d2[idx(x, y, zz)];
        envelope_pass(line, scratch, v, z, nz, spacing[2]);
        for (int zz = 0; zz < nz; ++zz) d2[idx(x, y, zz)] = line[zz];
      }
  }
  return d2;
}

SurfacePointSet extract_surface(const Volume& mask) {
  require_binary_mask(mask, "extract_surface");
  const auto& e = mask.extent();
  SurfacePointSet out;
  out.spacing = mask.spacing();

  const int nx = e[0], ny = e[1], nz = e[2];
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        if (mask.at(x, y, z) == 0.0) continue;
        const bool boundary =
            (x > 0 && mask.at(x - 1, y, z) == 0.0) || (x + 1 < nx && mask.at(x + 1, y, z) == 0.0) ||
            (y > 0 && mask.at(x, y - 1, z) == 0.0) || (y + 1 < ny && mask.at(x, y + 1, z) == 0.0) ||
            (z > 0 && mask.at(x, y, z - 1) == 0.0) || (z + 1 < nz && mask.at(x, y, z + 1) == 0.0);
        if (boundary) out.points.push_back({x, y, z});
      }
    }
  }
  return out;
}

std::vector<double> signed_distance_field(const Volume& mask) {
  require_binary_mask(mask, "signed_distance_field");
  const std::size_t fg = mask.foreground_count();
  if (fg == 0) throw DegenerateMask("signed_distance_field: mask is all background");
  if (fg == mask.size()) throw DegenerateMask("signed_distance_field: mask is all foreground");

  const SurfacePointSet surface = extract_surface(mask);
  std::vector<char> seeds(mask.size(), 0);
  for (const auto& p : surface.points) seeds[mask.index(p[0], p[1], p[2])] = 1;

  std::vector<double> d2 = squared_distance_to_seeds(seeds, mask.extent(), mask.spacing());
  std::vector<double> sdf(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double d = std::sqrt(d2[i]);
    sdf[i] = mask.data()[i] != 0.0 ? -d : d;
  }
  return sdf;
}

Volume mask_to_sdf(const Volume& mask) {
  std::vector<double> sdf = signed_distance_field(mask);
  double max_abs = 0.0;
  for (double v : sdf) max_abs = std::max(max_abs, std::abs(v));
  Volume out(mask.dims(), mask.extent(), VolumeKind::Sdf, mask.spacing());
  if (max_abs > 0.0) {
    for (std::size_t i = 0; i < sdf.size(); ++i) out.data()[i] = sdf[i] / max_abs;
  }
  // max_abs == 0 means every voxel is a surface voxel; the SDF is all zeros.
  return out;
}

Volume sdf_target(const Volume& mask) {
  require_binary_mask(mask, "sdf_target");
  const std::size_t fg = mask.foreground_count();
  if (fg == 0 || fg == mask.size()) {
    Volume out(mask.dims(), mask.extent(), VolumeKind::Sdf, mask.spacing());
    const double fill = fg == 0 ? 1.0 : -1.0;
    std::fill(out.data().begin(), out.data().end(), fill);
    return out;
  }
  return mask_to_sdf(mask);
}

double sdf_to_mask_value(double z, double k) {
  const double t = std::clamp(k * z, -500.0, 500.0);
  return 1.0 / (1.0 + std::exp(t));
}

double sdf_to_mask_derivative(double z, double k) {
  const double t = std::clamp(k * z, -500.0, 500.0);
  if (t <= -500.0 || t >= 500.0) return 0.0;  // saturated: clamped region is flat
  const double p = 1.0 / (1.0 + std::exp(t));
  return -k * p * (1.0 - p);
}

Volume sdf_to_mask(const Volume& sdf, double k) {
  if (!(k > 0.0)) throw DomainError("sdf_to_mask: k must be positive");
  Volume out(sdf.dims(), sdf.extent(), VolumeKind::Probability, sdf.spacing());
  for (std::size_t i = 0; i < sdf.size(); ++i) out.data()[i] = sdf_to_mask_value(sdf.data()[i], k);
  return out;
}

Volume threshold_probability(const Volume& prob) {
  Volume out(prob.dims(), prob.extent(), VolumeKind::BinaryMask, prob.spacing());
  for (std::size_t i = 0; i < prob.size(); ++i) out.data()[i] = prob.data()[i] >= 0.5 ? 1.0 : 0.0;
  return out;
}

}  // namespace cemt
