#include "cemt/volume.hpp"

#include <sstream>

namespace cemt {

const char* to_string(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::Image: return "image";
    case VolumeKind::BinaryMask: return "binary-mask";
    case VolumeKind::Sdf: return "sdf";
    case VolumeKind::Probability: return "probability";
  }
  return "unknown";
}

VolumeKind volume_kind_from_string(const std::string& name) {
  if (name == "image") return VolumeKind::Image;
  if (name == "binary-mask") return VolumeKind::BinaryMask;
  if (name == "sdf") return VolumeKind::Sdf;
  if (name == "probability") return VolumeKind::Probability;
  throw FormatError("unknown volume kind '" + name + "'");
}

Volume::Volume(int dims, std::array<int, 3> extent, VolumeKind kind,
               std::array<double, 3> spacing)
    : dims_(dims), extent_(extent), spacing_(spacing), kind_(kind) {
  if (dims != 2 && dims != 3) throw ShapeError("volume dims must be 2 or 3");
  if (dims == 2 && extent_[2] != 1) throw ShapeError("2D volume must have extent[2] == 1");
  for (int a = 0; a < 3; ++a) {
    if (extent_[a] < 1) throw ShapeError("volume extents must be >= 1");
    if (!(spacing_[a] > 0.0)) throw ShapeError("volume spacing must be strictly positive");
  }
  data_.assign(static_cast<std::size_t>(extent_[0]) * extent_[1] * extent_[2], 0.0);
}

bool Volume::is_binary() const {
  for (double v : data_) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

std::size_t Volume::foreground_count() const {
  std::size_t n = 0;
  for (double v : data_) {
    if (v != 0.0) ++n;
  }
  return n;
}

std::string Volume::shape_string() const {
  std::ostringstream os;
  os << extent_[0] << "x" << extent_[1];
  if (dims_ == 3) os << "x" << extent_[2];
  return os.str();
}

void require_same_shape(const Volume& a, const Volume& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace cemt
