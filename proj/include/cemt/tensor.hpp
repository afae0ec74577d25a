#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

namespace cemt {

// Channels-first dense tensor over a 2D/3D spatial grid, x-fastest layout:
// value(c, x, y, z) = v[((c*nz + z)*ny + y)*nx + x]. A 2D tensor has sp[2]==1.
struct Tensor {
  int ch = 0;
  std::array<int, 3> sp = {0, 0, 1};
  std::vector<double> v;

  Tensor() = default;
  Tensor(int channels, std::array<int, 3> spatial) { resize(channels, spatial); }

  void resize(int channels, std::array<int, 3> spatial) {
    ch = channels;
    sp = spatial;
    v.assign(size(), 0.0);
  }

  std::size_t spatial_size() const {
    return static_cast<std::size_t>(sp[0]) * sp[1] * sp[2];
  }
  std::size_t size() const { return static_cast<std::size_t>(ch) * spatial_size(); }

  double* channel(int c) { return v.data() + static_cast<std::size_t>(c) * spatial_size(); }
  const double* channel(int c) const {
    return v.data() + static_cast<std::size_t>(c) * spatial_size();
  }

  // Plane z of channel c (nx*ny contiguous values).
  double* plane(int c, int z) {
    return channel(c) + static_cast<std::size_t>(z) * sp[0] * sp[1];
  }
  const double* plane(int c, int z) const {
    return channel(c) + static_cast<std::size_t>(z) * sp[0] * sp[1];
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool shape_equals(const Tensor& o) const { return ch == o.ch && sp == o.sp; }
};

}  // namespace cemt
