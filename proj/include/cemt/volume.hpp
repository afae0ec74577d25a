#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "cemt/errors.hpp"

namespace cemt {

enum class VolumeKind { Image, BinaryMask, Sdf, Probability };

const char* to_string(VolumeKind kind);
VolumeKind volume_kind_from_string(const std::string& name);

// Dense scalar grid, 2D or 3D, with per-axis physical spacing. Storage is
// x-fastest: index = x + nx*(y + ny*z). A 2D volume has extent[2] == 1.
//
// Value conventions by kind:
//   BinaryMask  : values in {0, 1}
//   Probability : values in [0, 1]
//   Sdf         : values in [-1, 1] (normalized signed distance)
//   Image       : unconstrained
class Volume {
 public:
  Volume() = default;
  Volume(int dims, std::array<int, 3> extent, VolumeKind kind,
         std::array<double, 3> spacing = {1.0, 1.0, 1.0});

  int dims() const { return dims_; }
  const std::array<int, 3>& extent() const { return extent_; }
  const std::array<double, 3>& spacing() const { return spacing_; }
  VolumeKind kind() const { return kind_; }
  void set_kind(VolumeKind kind) { kind_ = kind; }

  std::size_t size() const { return data_.size(); }
  std::size_t index(int x, int y, int z = 0) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(extent_[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(extent_[1]) * z);
  }

  double& at(int x, int y, int z = 0) { return data_[index(x, y, z)]; }
  double at(int x, int y, int z = 0) const { return data_[index(x, y, z)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Volume& other) const {
    return dims_ == other.dims_ && extent_ == other.extent_;
  }

  // True if every value is 0/1. Does not check the kind tag.
  bool is_binary() const;

  // Foreground voxel count (values != 0).
  std::size_t foreground_count() const;

  std::string shape_string() const;

 private:
  int dims_ = 2;
  std::array<int, 3> extent_ = {0, 0, 1};
  std::array<double, 3> spacing_ = {1.0, 1.0, 1.0};
  VolumeKind kind_ = VolumeKind::Image;
  std::vector<double> data_;
};

// Throws ShapeError unless both volumes have equal dims and extents.
void require_same_shape(const Volume& a, const Volume& b, const char* where);

}  // namespace cemt
