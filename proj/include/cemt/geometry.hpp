#pragma once

#include <array>
#include <vector>

#include "cemt/volume.hpp"

namespace cemt {

// Voxel coordinates of mask surface points plus the spacing they live in.
struct SurfacePointSet {
  std::vector<std::array<int, 3>> points;
  std::array<double, 3> spacing = {1.0, 1.0, 1.0};

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

// All foreground voxels with at least one background face-neighbor
// (4-connectivity in 2D, 6-connectivity in 3D). Out-of-grid positions do not
// count as background, so an all-1 mask has an empty surface.
SurfacePointSet extract_surface(const Volume& mask);

// Signed Euclidean distance to the nearest surface voxel, in spacing units:
// negative strictly inside, zero on surface voxels, positive outside.
// Computed with a separable exact EDT (lower-envelope of parabolas per axis).
// Throws DegenerateMask for all-0 / all-1 masks (no surface exists).
std::vector<double> signed_distance_field(const Volume& mask);

// signed_distance_field normalized to [-1, 1] by the per-volume maximum
// absolute distance, packaged as an Sdf volume. Same error behavior.
Volume mask_to_sdf(const Volume& mask);

// mask_to_sdf with the degenerate cases mapped to constant volumes instead of
// an error: all-0 -> +1 everywhere, all-1 -> -1 everywhere. This is the form
// the training loop consumes.
Volume sdf_target(const Volume& mask);

// Smooth inverse transform: per-voxel 1 / (1 + exp(k*z)), oriented so that
// z < 0 (inside) maps above 0.5. The exponent is clamped to avoid overflow.
Volume sdf_to_mask(const Volume& sdf, double k);

// Scalar version of the transform and its derivative dp/dz.
double sdf_to_mask_value(double z, double k);
double sdf_to_mask_derivative(double z, double k);

// Threshold a probability volume at 0.5 (>= 0.5 is foreground).
Volume threshold_probability(const Volume& prob);

// Unsigned squared Euclidean distance (spacing-weighted) from every voxel to
// the nearest seed voxel. Seeds are the `true` entries; there must be at
// least one. Exposed for the metrics module, which reuses the same exact EDT.
std::vector<double> squared_distance_to_seeds(const std::vector<char>& seeds,
                                              const std::array<int, 3>& extent,
                                              const std::array<double, 3>& spacing);

}  // namespace cemt
