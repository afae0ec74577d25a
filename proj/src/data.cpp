#include "cemt/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "cemt/geometry.hpp"
#include "cemt/hash.hpp"

namespace cemt {

namespace {

using nlohmann::json;

double sq(double x) { return x * x; }

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

void GenConfig::validate() const {
  if (count < 1) throw ConfigError("GenConfig: count must be >= 1");
  if (dims != 2 && dims != 3) throw ConfigError("GenConfig: dims must be 2 or 3");
  for (int a = 0; a < 3; ++a)
    if (extent[a] < 1) throw ConfigError("GenConfig: extents must be >= 1");
  if (dims == 2 && extent[2] != 1) throw ConfigError("GenConfig: 2D requires extent[2] == 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("GenConfig: noise_sigma must be >= 0");
  if (!(threshold > 0.0)) throw ConfigError("GenConfig: threshold must be positive");
  if (!(min_foreground >= 0.0 && min_foreground < max_foreground && max_foreground <= 1.0))
    throw ConfigError("GenConfig: need 0 <= min_foreground < max_foreground <= 1");
  if (max_retries < 1) throw ConfigError("GenConfig: max_retries must be >= 1");
}

LabeledSample generate_sample(const GenConfig& cfg, std::uint64_t index) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.seed, index);
  const std::array<int, 3>& e = cfg.extent;
  const std::size_t n = std::size_t(e[0]) * e[1] * e[2];

  struct Bump {
    std::array<double, 3> center = {0.0, 0.0, 0.0};
    std::array<double, 3> sigma = {1.0, 1.0, 1.0};
    double amp = 1.0;
  };

  std::vector<double> field(n);
  Volume mask(cfg.dims, e, VolumeKind::BinaryMask);
  bool accepted = false;
  for (int attempt = 0; attempt < cfg.max_retries && !accepted; ++attempt) {
    const int n_bumps = 2 + static_cast<int>(rng.uniform_index(3));
    std::vector<Bump> bumps(static_cast<std::size_t>(n_bumps));
    for (Bump& b : bumps) {
      for (int a = 0; a < cfg.dims; ++a) {
        b.center[a] = rng.uniform(0.2, 0.8) * (e[a] - 1);
        b.sigma[a] = rng.uniform(0.10, 0.32) * e[a];
      }
      b.amp = rng.uniform(0.5, 1.0);
    }
    std::size_t i = 0;
    std::size_t fg = 0;
    for (int z = 0; z < e[2]; ++z) {
      for (int y = 0; y < e[1]; ++y) {
        for (int x = 0; x < e[0]; ++x, ++i) {
          double s = 0.0;
          for (const Bump& b : bumps) {
            double q = sq((x - b.center[0]) / b.sigma[0]) + sq((y - b.center[1]) / b.sigma[1]);
            if (cfg.dims == 3) q += sq((z - b.center[2]) / b.sigma[2]);
            s += b.amp * std::exp(-0.5 * q);
          }
          field[i] = s;
          const bool inside = s >= cfg.threshold;
          mask.data()[i] = inside ? 1.0 : 0.0;
          fg += inside ? 1 : 0;
        }
      }
    }
    const double frac = static_cast<double>(fg) / static_cast<double>(n);
    accepted = frac >= cfg.min_foreground && frac <= cfg.max_foreground;
  }
  if (!accepted) {
    throw GenerationRetryExceeded(
        "generate_sample: no mask with foreground fraction in [" +
        std::to_string(cfg.min_foreground) + ", " + std::to_string(cfg.max_foreground) +
        "] after " + std::to_string(cfg.max_retries) + " attempts (seed=" +
        std::to_string(cfg.seed) + ", index=" + std::to_string(index) + ")");
  }

  // Image = min-max normalized field through a per-volume appearance model,
  // plus additive noise, quantized through float32 so the in-memory doubles
  // survive a VSEG1 round trip bit-exactly. The appearance model exists to
  // keep a small labeled subset from covering the test distribution:
  //   - distractor bumps appear in the image but not in the mask; they are
  //     sharper than the mask-defining bumps, so telling the populations
  //     apart is learnable but needs to be estimated from examples,
  //   - global contrast/brightness vary per volume,
  //   - a smooth multiplicative gain field varies the boundary contrast
  //     locally (feature normalization cannot undo a spatially varying gain),
  //   - the noise level itself varies per volume around cfg.noise_sigma.
  const int n_distractors = 5 + static_cast<int>(rng.uniform_index(5));
  std::vector<Bump> distractors(static_cast<std::size_t>(n_distractors));
  for (Bump& b : distractors) {
    for (int a = 0; a < cfg.dims; ++a) {
      b.center[a] = rng.uniform(0.05, 0.95) * (e[a] - 1);
      b.sigma[a] = rng.uniform(0.03, 0.09) * e[a];
    }
    b.amp = rng.uniform(0.4, 1.0);
  }
  std::vector<double> img_field = field;
  {
    std::size_t i = 0;
    for (int z = 0; z < e[2]; ++z) {
      for (int y = 0; y < e[1]; ++y) {
        for (int x = 0; x < e[0]; ++x, ++i) {
          double s = 0.0;
          for (const Bump& b : distractors) {
            double q = sq((x - b.center[0]) / b.sigma[0]) + sq((y - b.center[1]) / b.sigma[1]);
            if (cfg.dims == 3) q += sq((z - b.center[2]) / b.sigma[2]);
            s += b.amp * std::exp(-0.5 * q);
          }
          img_field[i] += s;
        }
      }
    }
  }

  const double contrast = rng.uniform(0.3, 1.0);
  const double brightness = rng.uniform(-0.3, 0.3);
  std::array<double, 3> gain_center = {0.0, 0.0, 0.0};
  std::array<double, 3> gain_sigma = {1.0, 1.0, 1.0};
  for (int a = 0; a < cfg.dims; ++a) {
    gain_center[a] = rng.uniform(0.0, 1.0) * (e[a] - 1);
    gain_sigma[a] = rng.uniform(0.5, 1.2) * e[a];
  }
  const double gain_amp = rng.uniform(0.0, 0.5);
  const double sigma_v = cfg.noise_sigma * rng.uniform(0.4, 1.6);

  const auto [lo_it, hi_it] = std::minmax_element(img_field.begin(), img_field.end());
  const double lo = *lo_it;
  const double inv = 1.0 / std::max(*hi_it - lo, 1e-12);
  Volume image(cfg.dims, e, VolumeKind::Image);
  std::size_t i = 0;
  for (int z = 0; z < e[2]; ++z) {
    for (int y = 0; y < e[1]; ++y) {
      for (int x = 0; x < e[0]; ++x, ++i) {
        double q = sq((x - gain_center[0]) / gain_sigma[0]) +
                   sq((y - gain_center[1]) / gain_sigma[1]);
        if (cfg.dims == 3) q += sq((z - gain_center[2]) / gain_sigma[2]);
        const double gain = 1.0 + gain_amp * (2.0 * std::exp(-0.5 * q) - 1.0);
        const double v = gain * (brightness + contrast * (img_field[i] - lo) * inv) +
                         sigma_v * rng.normal();
        image.data()[i] = static_cast<double>(static_cast<float>(v));
      }
    }
  }
  return {index, std::move(image), std::move(mask)};
}

SemiDataset generate_synthetic(const GenConfig& cfg) {
  cfg.validate();
  SemiDataset pool;
  pool.split_spec = {cfg.count, 0, cfg.seed};
  pool.labeled.reserve(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i)
    pool.labeled.push_back(generate_sample(cfg, static_cast<std::uint64_t>(i)));
  return pool;
}

SemiDataset generate_synthetic(std::uint64_t seed, int count, std::array<int, 3> extent,
                               int dims) {
  GenConfig cfg;
  cfg.seed = seed;
  cfg.count = count;
  cfg.extent = extent;
  cfg.dims = dims;
  return generate_synthetic(cfg);
}

SemiDataset split(const SemiDataset& pool, int n_labeled, std::uint64_t seed) {
  if (!pool.unlabeled.empty()) throw SplitError("split: pool has already been split");
  const int pool_size = static_cast<int>(pool.labeled.size());
  if (pool_size == 0) throw SplitError("split: empty pool");
  if (n_labeled < 1 || n_labeled > pool_size) {
    throw SplitError("split: n_labeled=" + std::to_string(n_labeled) +
                     " outside [1, " + std::to_string(pool_size) + "]");
  }
  std::vector<int> order(static_cast<std::size_t>(pool_size));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = pool_size - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  SemiDataset out;
  out.split_spec = {n_labeled, pool_size - n_labeled, seed};
  for (int i = 0; i < pool_size; ++i) {
    const LabeledSample& s = pool.labeled[static_cast<std::size_t>(order[std::size_t(i)])];
    if (i < n_labeled)
      out.labeled.push_back(s);
    else
      out.unlabeled.push_back({s.id, s.image});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Patch sampling and augmentation
// ---------------------------------------------------------------------------

Tensor volume_to_tensor(const Volume& v) {
  Tensor t(1, v.extent());
  std::copy(v.data().begin(), v.data().end(), t.v.begin());
  return t;
}

Volume tensor_to_volume(const Tensor& t, VolumeKind kind, int dims,
                        std::array<double, 3> spacing) {
  if (t.ch != 1) throw ShapeError("tensor_to_volume: expected a 1-channel tensor");
  Volume v(dims, t.sp, kind, spacing);
  v.data() = t.v;
  return v;
}

Tensor crop_patch(const Volume& v, std::array<int, 3> corner, std::array<int, 3> patch) {
  for (int a = 0; a < 3; ++a) {
    if (patch[a] < 1 || corner[a] < 0 || corner[a] + patch[a] > v.extent()[a]) {
      throw ShapeError("crop_patch: corner " + std::to_string(corner[a]) + " + patch " +
                       std::to_string(patch[a]) + " leaves axis " + std::to_string(a) +
                       " of a " + v.shape_string() + " volume");
    }
  }
  Tensor t(1, patch);
  for (int z = 0; z < patch[2]; ++z) {
    for (int y = 0; y < patch[1]; ++y) {
      const double* src = v.data().data() + v.index(corner[0], corner[1] + y, corner[2] + z);
      double* dst = t.v.data() + (std::size_t(z) * patch[1] + y) * patch[0];
      std::copy(src, src + patch[0], dst);
    }
  }
  return t;
}

Tensor flipped(const Tensor& t, int axis) {
  if (axis < 0 || axis > 2) throw DomainError("flipped: axis must be 0, 1, or 2");
  Tensor out(t.ch, t.sp);
  const int nx = t.sp[0], ny = t.sp[1], nz = t.sp[2];
  for (int c = 0; c < t.ch; ++c) {
    for (int z = 0; z < nz; ++z) {
      const double* src = t.plane(c, axis == 2 ? nz - 1 - z : z);
      double* dst = out.plane(c, z);
      for (int y = 0; y < ny; ++y) {
        const double* row = src + std::size_t(axis == 1 ? ny - 1 - y : y) * nx;
        double* drow = dst + std::size_t(y) * nx;
        if (axis == 0)
          std::reverse_copy(row, row + nx, drow);
        else
          std::copy(row, row + nx, drow);
      }
    }
  }
  return out;
}

namespace {

// One counterclockwise quarter turn in the x-y plane: a value at (x, y) moves
// to (ny-1-y, x), and the x/y extents swap.
Tensor rotate_quarter(const Tensor& t) {
  Tensor out(t.ch, {t.sp[1], t.sp[0], t.sp[2]});
  const int onx = out.sp[0], ony = out.sp[1];
  for (int c = 0; c < t.ch; ++c) {
    for (int z = 0; z < t.sp[2]; ++z) {
      const double* src = t.plane(c, z);
      double* dst = out.plane(c, z);
      for (int y = 0; y < ony; ++y)
        for (int x = 0; x < onx; ++x)
          dst[std::size_t(y) * onx + x] = src[std::size_t(t.sp[1] - 1 - x) * t.sp[0] + y];
    }
  }
  return out;
}

struct Augmentation {
  bool flip_x = false;
  bool flip_y = false;
  bool flip_z = false;
  int quarter_turns = 0;
};

// Fixed draw order: flip x, flip y, (flip z when 3D), rotation.
Augmentation draw_augmentation(Rng& rng, int dims, const std::array<int, 3>& patch) {
  Augmentation a;
  a.flip_x = rng.bernoulli();
  a.flip_y = rng.bernoulli();
  if (dims == 3) a.flip_z = rng.bernoulli();
  if (patch[0] == patch[1])
    a.quarter_turns = static_cast<int>(rng.uniform_index(4));
  else
    a.quarter_turns = 2 * static_cast<int>(rng.uniform_index(2));
  return a;
}

Tensor apply_augmentation(Tensor t, const Augmentation& a) {
  if (a.flip_x) t = flipped(t, 0);
  if (a.flip_y) t = flipped(t, 1);
  if (a.flip_z) t = flipped(t, 2);
  if (a.quarter_turns != 0) t = rotated90(t, a.quarter_turns);
  return t;
}

std::array<int, 3> draw_corner(Rng& rng, const Volume& v, const std::array<int, 3>& patch) {
  std::array<int, 3> corner = {0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const int slack = v.extent()[a] - patch[a];
    if (slack < 0) {
      throw ShapeError("sample_batch: patch exceeds volume extent on axis " +
                       std::to_string(a));
    }
    corner[a] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(slack) + 1));
  }
  return corner;
}

}  // namespace

Tensor rotated90(const Tensor& t, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  Tensor out = t;
  for (; k > 0; --k) out = rotate_quarter(out);
  return out;
}

PatchBatch sample_batch(const SemiDataset& ds, std::array<int, 3> patch_shape, Rng& rng,
                        const SamplerOptions& opt) {
  if (opt.n_labeled < 0 || opt.n_unlabeled < 0)
    throw ConfigError("sample_batch: negative batch composition");
  if (opt.n_labeled > 0 && ds.labeled.empty())
    throw ConfigError("sample_batch: labeled patches requested from a dataset with none");
  if (opt.n_unlabeled > 0 && ds.unlabeled.empty())
    throw ConfigError("sample_batch: unlabeled patches requested from a dataset with none");

  PatchBatch b;
  b.patch_shape = patch_shape;
  for (int s = 0; s < opt.n_labeled; ++s) {
    const LabeledSample& smp = ds.labeled[rng.uniform_index(ds.labeled.size())];
    const std::array<int, 3> corner = draw_corner(rng, smp.image, patch_shape);
    const Augmentation aug = draw_augmentation(rng, smp.image.dims(), patch_shape);
    Tensor img = apply_augmentation(crop_patch(smp.image, corner, patch_shape), aug);
    Tensor msk = apply_augmentation(crop_patch(smp.mask, corner, patch_shape), aug);
    Tensor sdf;
    if (opt.sdf_from_full_volume) {
      sdf = apply_augmentation(crop_patch(sdf_target(smp.mask), corner, patch_shape), aug);
    } else {
      const Volume mpatch =
          tensor_to_volume(msk, VolumeKind::BinaryMask, smp.mask.dims(), smp.mask.spacing());
      sdf = volume_to_tensor(sdf_target(mpatch));
    }
    b.labeled_images.push_back(std::move(img));
    b.labeled_masks.push_back(std::move(msk));
    b.labeled_sdfs.push_back(std::move(sdf));
  }
  for (int s = 0; s < opt.n_unlabeled; ++s) {
    const UnlabeledSample& smp = ds.unlabeled[rng.uniform_index(ds.unlabeled.size())];
    const std::array<int, 3> corner = draw_corner(rng, smp.image, patch_shape);
    const Augmentation aug = draw_augmentation(rng, smp.image.dims(), patch_shape);
    b.unlabeled_images.push_back(
        apply_augmentation(crop_patch(smp.image, corner, patch_shape), aug));
  }
  return b;
}

// ---------------------------------------------------------------------------
// VSEG1 volume files
// ---------------------------------------------------------------------------

std::string encode_volume(const Volume& v) {
  const bool is_mask = v.kind() == VolumeKind::BinaryMask;
  if (is_mask && !v.is_binary())
    throw FormatError("encode_volume: BinaryMask volume holds non-binary values");

  json h;
  h["dtype"] = is_mask ? "uint8" : "float32";
  h["endianness"] = "little";
  h["kind"] = to_string(v.kind());
  json shape = json::array();
  json spacing = json::array();
  for (int a = 0; a < v.dims(); ++a) {
    shape.push_back(v.extent()[a]);
    spacing.push_back(v.spacing()[a]);
  }
  h["shape"] = shape;
  h["spacing"] = spacing;
  const std::string htxt = h.dump();

  std::string out;
  out.reserve(9 + htxt.size() + v.size() * (is_mask ? 1 : 4));
  out.append("VSEG1", 5);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htxt.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((hlen >> (8 * i)) & 0xff));
  out += htxt;
  if (is_mask) {
    for (double d : v.data()) out.push_back(d != 0.0 ? char(1) : char(0));
  } else {
    for (double d : v.data()) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(d));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  return out;
}

Volume decode_volume(const std::string& bytes, const std::string& origin) {
  const auto fail = [&origin](const std::string& what) {
    return FormatError("decode_volume: " + what + " (" + origin + ")");
  };
  if (bytes.size() < 9) throw fail("file shorter than the fixed header");
  if (bytes.compare(0, 5, "VSEG1") != 0) throw fail("bad magic");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i)
    hlen |= std::uint32_t(static_cast<unsigned char>(bytes[5 + std::size_t(i)])) << (8 * i);
  if (hlen > (1u << 20)) throw fail("header length out of range");
  if (bytes.size() < 9 + std::size_t(hlen)) throw fail("truncated header");

  int dims = 0;
  std::array<int, 3> extent = {1, 1, 1};
  std::array<double, 3> spacing = {1.0, 1.0, 1.0};
  VolumeKind kind = VolumeKind::Image;
  std::string dtype;
  try {
    const json h = json::parse(bytes.substr(9, hlen));
    const json& shape = h.at("shape");
    const json& spc = h.at("spacing");
    if (!shape.is_array() || (shape.size() != 2 && shape.size() != 3))
      throw fail("shape must hold 2 or 3 extents");
    if (!spc.is_array() || spc.size() != shape.size())
      throw fail("spacing length must match shape");
    dims = static_cast<int>(shape.size());
    for (int a = 0; a < dims; ++a) {
      extent[std::size_t(a)] = shape.at(std::size_t(a)).get<int>();
      spacing[std::size_t(a)] = spc.at(std::size_t(a)).get<double>();
      if (extent[std::size_t(a)] < 1) throw fail("non-positive extent");
      if (!(spacing[std::size_t(a)] > 0.0)) throw fail("non-positive spacing");
    }
    if (h.at("endianness").get<std::string>() != "little")
      throw fail("unsupported endianness");
    kind = volume_kind_from_string(h.at("kind").get<std::string>());
    dtype = h.at("dtype").get<std::string>();
  } catch (const json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }

  const bool is_mask = kind == VolumeKind::BinaryMask;
  if (dtype == "uint8") {
    if (!is_mask) throw fail("uint8 payload requires mask kind");
  } else if (dtype == "float32") {
    if (is_mask) throw fail("mask volumes must use uint8");
  } else {
    throw fail("unknown dtype '" + dtype + "'");
  }

  Volume v(dims, extent, kind, spacing);
  const std::size_t payload = bytes.size() - 9 - hlen;
  const std::size_t expected = v.size() * (is_mask ? 1 : 4);
  if (payload != expected) {
    throw fail("payload size mismatch: expected " + std::to_string(expected) +
               " bytes, found " + std::to_string(payload));
  }
  const unsigned char* p =
      reinterpret_cast<const unsigned char*>(bytes.data()) + 9 + hlen;
  if (is_mask) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (p[i] > 1) throw fail("mask byte out of range");
      v.data()[i] = p[i];
    }
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(p[4 * i + std::size_t(b)]) << (8 * b);
      v.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return v;
}

void save_volume(const std::filesystem::path& path, const Volume& v) {
  write_file(path, encode_volume(v));
}

Volume load_volume(const std::filesystem::path& path) {
  return decode_volume(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

namespace {

json gen_to_json(const GenConfig& g) {
  return json{{"seed", g.seed},
              {"count", g.count},
              {"dims", g.dims},
              {"extent", {g.extent[0], g.extent[1], g.extent[2]}},
              {"noise_sigma", g.noise_sigma},
              {"threshold", g.threshold},
              {"min_foreground", g.min_foreground},
              {"max_foreground", g.max_foreground},
              {"max_retries", g.max_retries}};
}

GenConfig gen_from_json(const json& j) {
  GenConfig g;
  g.seed = j.at("seed").get<std::uint64_t>();
  g.count = j.at("count").get<int>();
  g.dims = j.at("dims").get<int>();
  for (int a = 0; a < 3; ++a) g.extent[std::size_t(a)] = j.at("extent").at(std::size_t(a)).get<int>();
  g.noise_sigma = j.at("noise_sigma").get<double>();
  g.threshold = j.at("threshold").get<double>();
  g.min_foreground = j.at("min_foreground").get<double>();
  g.max_foreground = j.at("max_foreground").get<double>();
  g.max_retries = j.at("max_retries").get<int>();
  return g;
}

json manifest_to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const ManifestSample& s : m.samples) {
    samples.push_back(json{{"id", s.id},
                           {"role", s.role},
                           {"image", s.image_path},
                           {"image_sha256", s.image_sha256},
                           {"mask", s.mask_path},
                           {"mask_sha256", s.mask_sha256}});
  }
  json splits = json::array();
  for (const ManifestSplit& s : m.splits) {
    splits.push_back(json{{"name", s.name},
                          {"n_labeled", s.n_labeled},
                          {"seed", s.seed},
                          {"labeled", s.labeled_ids},
                          {"unlabeled", s.unlabeled_ids}});
  }
  return json{{"format", "cemt-dataset-1"},
              {"generator", gen_to_json(m.gen)},
              {"test_count", m.test_count},
              {"samples", samples},
              {"splits", splits}};
}

void write_or_verify(const std::filesystem::path& path, const std::string& bytes,
                     const std::string& sha) {
  if (std::filesystem::exists(path)) {
    if (sha256_file(path) != sha)
      throw HashMismatch("write_dataset: " + path.string() +
                         " does not match its expected content");
  } else {
    write_file(path, bytes);
  }
}

Volume load_verified(const std::filesystem::path& base, const std::string& rel,
                     const std::string& sha) {
  const std::filesystem::path p = base / rel;
  if (sha256_file(p) != sha)
    throw HashMismatch("load: " + p.string() + " does not match its manifest hash");
  return load_volume(p);
}

}  // namespace

DatasetManifest write_dataset(const std::filesystem::path& dir, const GenConfig& cfg,
                              int test_count, const std::vector<SplitRequest>& splits) {
  cfg.validate();
  if (test_count < 0 || test_count >= cfg.count)
    throw ConfigError("write_dataset: test_count must be in [0, count)");
  for (const SplitRequest& r : splits)
    if (r.name.empty()) throw ConfigError("write_dataset: empty split name");

  std::error_code ec;
  std::filesystem::create_directories(dir / "volumes", ec);
  if (ec)
    throw IoError("write_dataset: cannot create " + (dir / "volumes").string() + ": " +
                  ec.message());

  DatasetManifest m;
  m.gen = cfg;
  m.test_count = test_count;
  const int train_count = cfg.count - test_count;
  SemiDataset pool;
  pool.split_spec = {train_count, 0, cfg.seed};
  for (int i = 0; i < cfg.count; ++i) {
    LabeledSample s = generate_sample(cfg, static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04d", i);
    ManifestSample ms;
    ms.id = static_cast<std::uint64_t>(i);
    ms.role = i < train_count ? "train" : "test";
    ms.image_path = std::string("volumes/") + name + "_image.vseg";
    ms.mask_path = std::string("volumes/") + name + "_mask.vseg";
    const std::string image_bytes = encode_volume(s.image);
    const std::string mask_bytes = encode_volume(s.mask);
    ms.image_sha256 = sha256_hex(image_bytes);
    ms.mask_sha256 = sha256_hex(mask_bytes);
    write_or_verify(dir / ms.image_path, image_bytes, ms.image_sha256);
    write_or_verify(dir / ms.mask_path, mask_bytes, ms.mask_sha256);
    m.samples.push_back(std::move(ms));
    if (i < train_count) pool.labeled.push_back(std::move(s));
  }
  for (const SplitRequest& r : splits) {
    const SemiDataset sd = split(pool, r.n_labeled, r.seed);
    ManifestSplit ms;
    ms.name = r.name;
    ms.n_labeled = r.n_labeled;
    ms.seed = r.seed;
    for (const LabeledSample& s : sd.labeled) ms.labeled_ids.push_back(s.id);
    for (const UnlabeledSample& s : sd.unlabeled) ms.unlabeled_ids.push_back(s.id);
    m.splits.push_back(std::move(ms));
  }

  const std::string mtxt = manifest_to_json(m).dump(2) + "\n";
  const std::filesystem::path mpath = dir / "manifest.json";
  if (std::filesystem::exists(mpath)) {
    if (read_file(mpath) != mtxt)
      throw HashMismatch("write_dataset: existing manifest " + mpath.string() +
                         " disagrees with this configuration");
  } else {
    write_file(mpath, mtxt);
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  const std::string text = read_file(manifest_path);
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "cemt-dataset-1")
      throw FormatError("load_manifest: unknown format tag in " + manifest_path.string());
    m.gen = gen_from_json(j.at("generator"));
    m.test_count = j.at("test_count").get<int>();
    for (const json& s : j.at("samples")) {
      ManifestSample ms;
      ms.id = s.at("id").get<std::uint64_t>();
      ms.role = s.at("role").get<std::string>();
      if (ms.role != "train" && ms.role != "test")
        throw FormatError("load_manifest: unknown sample role '" + ms.role + "'");
      ms.image_path = s.at("image").get<std::string>();
      ms.mask_path = s.at("mask").get<std::string>();
      ms.image_sha256 = s.at("image_sha256").get<std::string>();
      ms.mask_sha256 = s.at("mask_sha256").get<std::string>();
      m.samples.push_back(std::move(ms));
    }
    for (const json& s : j.at("splits")) {
      ManifestSplit ms;
      ms.name = s.at("name").get<std::string>();
      ms.n_labeled = s.at("n_labeled").get<int>();
      ms.seed = s.at("seed").get<std::uint64_t>();
      ms.labeled_ids = s.at("labeled").get<std::vector<std::uint64_t>>();
      ms.unlabeled_ids = s.at("unlabeled").get<std::vector<std::uint64_t>>();
      m.splits.push_back(std::move(ms));
    }
  } catch (const json::exception& e) {
    throw FormatError("load_manifest: malformed " + manifest_path.string() + ": " + e.what());
  }
  return m;
}

SemiDataset load_split(const std::filesystem::path& manifest_path,
                       const std::string& split_name) {
  const DatasetManifest m = load_manifest(manifest_path);
  const ManifestSplit* sp = nullptr;
  for (const ManifestSplit& s : m.splits)
    if (s.name == split_name) sp = &s;
  if (sp == nullptr)
    throw ConfigError("load_split: no split named '" + split_name + "' in " +
                      manifest_path.string());

  std::vector<const ManifestSample*> by_id;
  for (const ManifestSample& s : m.samples) {
    if (by_id.size() <= s.id) by_id.resize(std::size_t(s.id) + 1, nullptr);
    by_id[s.id] = &s;
  }
  const auto sample_for = [&](std::uint64_t id) -> const ManifestSample& {
    if (id >= by_id.size() || by_id[id] == nullptr)
      throw FormatError("load_split: split references unknown sample id " + std::to_string(id));
    return *by_id[id];
  };

  const std::filesystem::path base = manifest_path.parent_path();
  SemiDataset ds;
  ds.split_spec = {sp->n_labeled, static_cast<int>(sp->unlabeled_ids.size()), sp->seed};
  for (std::uint64_t id : sp->labeled_ids) {
    const ManifestSample& s = sample_for(id);
    ds.labeled.push_back({id, load_verified(base, s.image_path, s.image_sha256),
                          load_verified(base, s.mask_path, s.mask_sha256)});
  }
  for (std::uint64_t id : sp->unlabeled_ids) {
    const ManifestSample& s = sample_for(id);
    ds.unlabeled.push_back({id, load_verified(base, s.image_path, s.image_sha256)});
  }
  return ds;
}

std::vector<LabeledSample> load_test_cases(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = load_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<LabeledSample> cases;
  for (const ManifestSample& s : m.samples) {
    if (s.role != "test") continue;
    cases.push_back({s.id, load_verified(base, s.image_path, s.image_sha256),
                     load_verified(base, s.mask_path, s.mask_sha256)});
  }
  return cases;
}

}  // namespace cemt
