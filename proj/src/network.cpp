#include "cemt/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cemt/rng.hpp"

namespace cemt {

namespace {

constexpr double kNormEps = 1e-5;

// ---------------------------------------------------------------------------
// Plane-level convolution kernels. Each operates on one (nx, ny) plane and
// accumulates into the output, so channel sums fall out of the call order.
// ---------------------------------------------------------------------------

void plane3x3_row_generic(const double* in, double* orow, const double* k, int nx, int ny, int y) {
  for (int x = 0; x < nx; ++x) {
    double acc = 0.0;
    for (int ky = 0; ky < 3; ++ky) {
      const int iy = y + ky - 1;
      if (iy < 0 || iy >= ny) continue;
      const double* irow = in + static_cast<std::size_t>(iy) * nx;
      for (int kx = 0; kx < 3; ++kx) {
        const int ix = x + kx - 1;
        if (ix < 0 || ix >= nx) continue;
        acc += k[ky * 3 + kx] * irow[ix];
      }
    }
    orow[x] += acc;
  }
}

// 3x3 same-padding correlation, out += in * k. The interior is a fused 9-tap
// pass; borders are handled separately so the hot loop has no branches.
void plane3x3_acc(const double* in, double* out, const double* k, int nx, int ny) {
  if (nx < 2 || ny < 2) {
    for (int y = 0; y < ny; ++y)
      plane3x3_row_generic(in, out + static_cast<std::size_t>(y) * nx, k, nx, ny, y);
    return;
  }
  const double k00 = k[0], k01 = k[1], k02 = k[2];
  const double k10 = k[3], k11 = k[4], k12 = k[5];
  const double k20 = k[6], k21 = k[7], k22 = k[8];
  for (int y = 0; y < ny; ++y) {
    double* orow = out + static_cast<std::size_t>(y) * nx;
    if (y == 0 || y == ny - 1) {
      plane3x3_row_generic(in, orow, k, nx, ny, y);
      continue;
    }
    const double* r0 = in + static_cast<std::size_t>(y - 1) * nx;
    const double* r1 = r0 + nx;
    const double* r2 = r1 + nx;
    for (int x = 1; x + 1 < nx; ++x) {
      double acc = k00 * r0[x - 1] + k01 * r0[x] + k02 * r0[x + 1];
      acc += k10 * r1[x - 1] + k11 * r1[x] + k12 * r1[x + 1];
      acc += k20 * r2[x - 1] + k21 * r2[x] + k22 * r2[x + 1];
      orow[x] += acc;
    }
    orow[0] += k01 * r0[0] + k02 * r0[1] + k11 * r1[0] + k12 * r1[1] + k21 * r2[0] + k22 * r2[1];
    orow[nx - 1] += k00 * r0[nx - 2] + k01 * r0[nx - 1] + k10 * r1[nx - 2] + k11 * r1[nx - 1] +
                    k20 * r2[nx - 2] + k21 * r2[nx - 1];
  }
}

// dk += correlation of dout with in at each of the nine taps. Nine
// range-limited dot products keep the inner loops contiguous.
void plane3x3_gradw(const double* in, const double* dout, double* dk, int nx, int ny) {
  for (int ky = 0; ky < 3; ++ky) {
    const int y0 = std::max(0, 1 - ky), y1 = std::min(ny, ny + 1 - ky);
    for (int kx = 0; kx < 3; ++kx) {
      const int x0 = std::max(0, 1 - kx), x1 = std::min(nx, nx + 1 - kx);
      double acc = 0.0;
      for (int y = y0; y < y1; ++y) {
        const double* drow = dout + static_cast<std::size_t>(y) * nx;
        const double* irow = in + static_cast<std::size_t>(y + ky - 1) * nx + (kx - 1);
        for (int x = x0; x < x1; ++x) acc += drow[x] * irow[x];
      }
      dk[ky * 3 + kx] += acc;
    }
  }
}

// 2x2 stride-2 correlation (input plane is 2x the output in each axis).
void plane_down2_acc(const double* in, double* out, const double* k, int onx, int ony) {
  const int inx = 2 * onx;
  for (int y = 0; y < ony; ++y) {
    const double* r0 = in + static_cast<std::size_t>(2 * y) * inx;
    const double* r1 = r0 + inx;
    double* orow = out + static_cast<std::size_t>(y) * onx;
    for (int x = 0; x < onx; ++x) {
      orow[x] += k[0] * r0[2 * x] + k[1] * r0[2 * x + 1] + k[2] * r1[2 * x] + k[3] * r1[2 * x + 1];
    }
  }
}

void plane_down2_backin(double* din, const double* dout, const double* k, int onx, int ony) {
  const int inx = 2 * onx;
  for (int y = 0; y < ony; ++y) {
    double* r0 = din + static_cast<std::size_t>(2 * y) * inx;
    double* r1 = r0 + inx;
    const double* drow = dout + static_cast<std::size_t>(y) * onx;
    for (int x = 0; x < onx; ++x) {
      const double g = drow[x];
      r0[2 * x] += k[0] * g;
      r0[2 * x + 1] += k[1] * g;
      r1[2 * x] += k[2] * g;
      r1[2 * x + 1] += k[3] * g;
    }
  }
}

void plane_down2_gradw(const double* in, const double* dout, double* dk, int onx, int ony) {
  const int inx = 2 * onx;
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  for (int y = 0; y < ony; ++y) {
    const double* r0 = in + static_cast<std::size_t>(2 * y) * inx;
    const double* r1 = r0 + inx;
    const double* drow = dout + static_cast<std::size_t>(y) * onx;
    for (int x = 0; x < onx; ++x) {
      const double g = drow[x];
      a0 += g * r0[2 * x];
      a1 += g * r0[2 * x + 1];
      a2 += g * r1[2 * x];
      a3 += g * r1[2 * x + 1];
    }
  }
  dk[0] += a0;
  dk[1] += a1;
  dk[2] += a2;
  dk[3] += a3;
}

// Transposed 2x2 stride-2: output plane is 2x the input in each axis.
void plane_up2_acc(const double* in, double* out, const double* k, int inx, int iny) {
  const int onx = 2 * inx;
  for (int y = 0; y < iny; ++y) {
    const double* irow = in + static_cast<std::size_t>(y) * inx;
    double* o0 = out + static_cast<std::size_t>(2 * y) * onx;
    double* o1 = o0 + onx;
    for (int x = 0; x < inx; ++x) {
      const double v = irow[x];
      o0[2 * x] += k[0] * v;
      o0[2 * x + 1] += k[1] * v;
      o1[2 * x] += k[2] * v;
      o1[2 * x + 1] += k[3] * v;
    }
  }
}

// Backward-input of the transposed conv is the 2x2 stride-2 gather.
void plane_up2_backin(double* din, const double* dout, const double* k, int inx, int iny) {
  const int onx = 2 * inx;
  for (int y = 0; y < iny; ++y) {
    double* irow = din + static_cast<std::size_t>(y) * inx;
    const double* o0 = dout + static_cast<std::size_t>(2 * y) * onx;
    const double* o1 = o0 + onx;
    for (int x = 0; x < inx; ++x) {
      irow[x] += k[0] * o0[2 * x] + k[1] * o0[2 * x + 1] + k[2] * o1[2 * x] + k[3] * o1[2 * x + 1];
    }
  }
}

void plane_up2_gradw(const double* in, const double* dout, double* dk, int inx, int iny) {
  const int onx = 2 * inx;
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  for (int y = 0; y < iny; ++y) {
    const double* irow = in + static_cast<std::size_t>(y) * inx;
    const double* o0 = dout + static_cast<std::size_t>(2 * y) * onx;
    const double* o1 = o0 + onx;
    for (int x = 0; x < inx; ++x) {
      const double v = irow[x];
      a0 += v * o0[2 * x];
      a1 += v * o0[2 * x + 1];
      a2 += v * o1[2 * x];
      a3 += v * o1[2 * x + 1];
    }
  }
  dk[0] += a0;
  dk[1] += a1;
  dk[2] += a2;
  dk[3] += a3;
}

}  // namespace

namespace detail {

std::size_t ConvSpec::weight_count() const {
  switch (kind) {
    case Kind::Same3:
      return static_cast<std::size_t>(in_ch) * out_ch * 9 * kz;
    case Kind::Down2:
    case Kind::Up2:
      return static_cast<std::size_t>(in_ch) * out_ch * 4 * kz;
    case Kind::Point1:
      return static_cast<std::size_t>(in_ch) * out_ch;
  }
  return 0;
}

}  // namespace detail

namespace {

using detail::ConvSpec;

std::array<int, 3> conv_out_shape(const ConvSpec& s, const std::array<int, 3>& in) {
  switch (s.kind) {
    case ConvSpec::Kind::Same3:
    case ConvSpec::Kind::Point1:
      return in;
    case ConvSpec::Kind::Down2:
      return {in[0] / 2, in[1] / 2, s.kz == 2 ? in[2] / 2 : in[2]};
    case ConvSpec::Kind::Up2:
      return {in[0] * 2, in[1] * 2, s.kz == 2 ? in[2] * 2 : in[2]};
  }
  return in;
}

void conv_forward(const ConvSpec& s, const double* params, const Tensor& in, Tensor& out) {
  out.resize(s.out_ch, conv_out_shape(s, in.sp));
  const double* w = params + s.w_off;
  const double* b = params + s.b_off;
  const int nz_in = in.sp[2], nz_out = out.sp[2];

  for (int oc = 0; oc < s.out_ch; ++oc) {
    double* ochan = out.channel(oc);
    std::fill(ochan, ochan + out.spatial_size(), b[oc]);
  }

  switch (s.kind) {
    case ConvSpec::Kind::Same3: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double* k = w + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 9 * s.kz;
          for (int z = 0; z < nz_out; ++z)
            for (int kz = 0; kz < s.kz; ++kz) {
              const int iz = z + kz - s.kz / 2;
              if (iz < 0 || iz >= nz_in) continue;
              plane3x3_acc(in.plane(ic, iz), out.plane(oc, z), k + kz * 9, in.sp[0], in.sp[1]);
            }
        }
      break;
    }
    case ConvSpec::Kind::Down2: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double* k = w + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 4 * s.kz;
          for (int z = 0; z < nz_out; ++z)
            for (int kz = 0; kz < s.kz; ++kz) {
              const int iz = s.kz == 2 ? 2 * z + kz : z;
              plane_down2_acc(in.plane(ic, iz), out.plane(oc, z), k + kz * 4, out.sp[0],
                              out.sp[1]);
            }
        }
      break;
    }
    case ConvSpec::Kind::Up2: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double* k = w + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 4 * s.kz;
          for (int z = 0; z < nz_in; ++z)
            for (int kz = 0; kz < s.kz; ++kz)
              plane_up2_acc(in.plane(ic, z), out.plane(oc, s.kz == 2 ? 2 * z + kz : z), k + kz * 4,
                            in.sp[0], in.sp[1]);
        }
      break;
    }
    case ConvSpec::Kind::Point1: {
      const std::size_t n = in.spatial_size();
      for (int oc = 0; oc < s.out_ch; ++oc) {
        double* ochan = out.channel(oc);
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double kv = w[static_cast<std::size_t>(oc) * s.in_ch + ic];
          const double* ichan = in.channel(ic);
          for (std::size_t i = 0; i < n; ++i) ochan[i] += kv * ichan[i];
        }
      }
      break;
    }
  }
}

// din += dL/d(in). din must already be sized like the conv input.
void conv_backward_input(const ConvSpec& s, const double* params, const Tensor& dout, Tensor& din) {
  const double* w = params + s.w_off;
  const int nz_in = din.sp[2], nz_out = dout.sp[2];

  switch (s.kind) {
    case ConvSpec::Kind::Same3: {
      std::array<double, 27> flipped{};
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double* k = w + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 9 * s.kz;
          const int kn = 9 * s.kz;
          for (int i = 0; i < kn; ++i) flipped[i] = k[kn - 1 - i];
          for (int z = 0; z < nz_in; ++z)
            for (int kz = 0; kz < s.kz; ++kz) {
              const int oz = z + kz - s.kz / 2;
              if (oz < 0 || oz >= nz_out) continue;
              plane3x3_acc(dout.plane(oc, oz), din.plane(ic, z), flipped.data() + kz * 9,
                           dout.sp[0], dout.sp[1]);
            }
        }
      break;
    }
    case ConvSpec::Kind::Down2: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double* k = w + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 4 * s.kz;
          for (int z = 0; z < nz_out; ++z)
            for (int kz = 0; kz < s.kz; ++kz)
              plane_down2_backin(din.plane(ic, s.kz == 2 ? 2 * z + kz : z), dout.plane(oc, z),
                                 k + kz * 4, dout.sp[0], dout.sp[1]);
        }
      break;
    }
    case ConvSpec::Kind::Up2: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double* k = w + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 4 * s.kz;
          for (int z = 0; z < nz_in; ++z)
            for (int kz = 0; kz < s.kz; ++kz)
              plane_up2_backin(din.plane(ic, z), dout.plane(oc, s.kz == 2 ? 2 * z + kz : z),
                               k + kz * 4, din.sp[0], din.sp[1]);
        }
      break;
    }
    case ConvSpec::Kind::Point1: {
      const std::size_t n = din.spatial_size();
      for (int ic = 0; ic < s.in_ch; ++ic) {
        double* ichan = din.channel(ic);
        for (int oc = 0; oc < s.out_ch; ++oc) {
          const double kv = w[static_cast<std::size_t>(oc) * s.in_ch + ic];
          const double* ochan = dout.channel(oc);
          for (std::size_t i = 0; i < n; ++i) ichan[i] += kv * ochan[i];
        }
      }
      break;
    }
  }
}

void conv_backward_params(const ConvSpec& s, const Tensor& in, const Tensor& dout, double* grads) {
  double* dw = grads + s.w_off;
  double* db = grads + s.b_off;
  const int nz_in = in.sp[2], nz_out = dout.sp[2];

  for (int oc = 0; oc < s.out_ch; ++oc) {
    const double* ochan = dout.channel(oc);
    double acc = 0.0;
    for (std::size_t i = 0; i < dout.spatial_size(); ++i) acc += ochan[i];
    db[oc] += acc;
  }

  switch (s.kind) {
    case ConvSpec::Kind::Same3: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          double* dk = dw + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 9 * s.kz;
          for (int z = 0; z < nz_out; ++z)
            for (int kz = 0; kz < s.kz; ++kz) {
              const int iz = z + kz - s.kz / 2;
              if (iz < 0 || iz >= nz_in) continue;
              plane3x3_gradw(in.plane(ic, iz), dout.plane(oc, z), dk + kz * 9, in.sp[0], in.sp[1]);
            }
        }
      break;
    }
    case ConvSpec::Kind::Down2: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          double* dk = dw + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 4 * s.kz;
          for (int z = 0; z < nz_out; ++z)
            for (int kz = 0; kz < s.kz; ++kz)
              plane_down2_gradw(in.plane(ic, s.kz == 2 ? 2 * z + kz : z), dout.plane(oc, z),
                                dk + kz * 4, dout.sp[0], dout.sp[1]);
        }
      break;
    }
    case ConvSpec::Kind::Up2: {
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          double* dk = dw + (static_cast<std::size_t>(oc) * s.in_ch + ic) * 4 * s.kz;
          for (int z = 0; z < nz_in; ++z)
            for (int kz = 0; kz < s.kz; ++kz)
              plane_up2_gradw(in.plane(ic, z), dout.plane(oc, s.kz == 2 ? 2 * z + kz : z),
                              dk + kz * 4, in.sp[0], in.sp[1]);
        }
      break;
    }
    case ConvSpec::Kind::Point1: {
      const std::size_t n = in.spatial_size();
      for (int oc = 0; oc < s.out_ch; ++oc)
        for (int ic = 0; ic < s.in_ch; ++ic) {
          const double* ochan = dout.channel(oc);
          const double* ichan = in.channel(ic);
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += ochan[i] * ichan[i];
          dw[static_cast<std::size_t>(oc) * s.in_ch + ic] += acc;
        }
      break;
    }
  }
}

void relu_from(const Tensor& pre, Tensor& act) {
  act.resize(pre.ch, pre.sp);
  for (std::size_t i = 0; i < pre.v.size(); ++i) act.v[i] = pre.v[i] > 0.0 ? pre.v[i] : 0.0;
}

// g_pre = g_act masked by act > 0. Safe when g_pre aliases g_act: resize
// (which zeroes) only happens for a non-aliasing, differently-shaped target.
void relu_backward(const Tensor& act, const Tensor& g_act, Tensor& g_pre) {
  if (!g_pre.shape_equals(act)) g_pre.resize(act.ch, act.sp);
  for (std::size_t i = 0; i < act.v.size(); ++i) g_pre.v[i] = act.v[i] > 0.0 ? g_act.v[i] : 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config / layout
// ---------------------------------------------------------------------------

const char* to_string(ActiveHead head) {
  switch (head) {
    case ActiveHead::Seg: return "seg";
    case ActiveHead::Reg: return "reg";
    case ActiveHead::Both: return "both";
  }
  return "unknown";
}

void NetworkConfig::validate() const {
  if (dims != 2 && dims != 3) throw ConfigError("dims must be 2 or 3");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (num_classes != 2) throw ConfigError("num_classes must be 2 (foreground/background)");
}

std::uint64_t NetworkConfig::fingerprint() const {
  std::uint64_t h = 0x43454d54u;  // "CEMT"
  h = Rng::mix(h, static_cast<std::uint64_t>(dims));
  h = Rng::mix(h, static_cast<std::uint64_t>(in_channels));
  h = Rng::mix(h, static_cast<std::uint64_t>(base_channels));
  h = Rng::mix(h, static_cast<std::uint64_t>(depth));
  h = Rng::mix(h, static_cast<std::uint64_t>(num_classes));
  h = Rng::mix(h, instance_norm ? 1 : 0);
  return h;
}

const ParamSegment& ParamLayout::segment(const std::string& name) const {
  for (const ParamSegment& s : segments) {
    if (s.name == name) return s;
  }
  throw LayoutMismatch("no segment named '" + name + "'");
}

void require_same_layout(const ParamLayout& a, const ParamLayout& b, const char* where) {
  if (!(a == b)) throw LayoutMismatch(std::string(where) + ": parameter layouts differ");
}

// ---------------------------------------------------------------------------
// DualHeadNetwork
// ---------------------------------------------------------------------------

DualHeadNetwork::DualHeadNetwork(const NetworkConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  build_layout();
  init_params(seed);
}

void DualHeadNetwork::build_layout() {
  const int L = config_.depth;
  const int kz3 = config_.dims == 3 ? 3 : 1;
  const int kz2 = config_.dims == 3 ? 2 : 1;
  levels_.resize(L);
  decoder_.resize(L >= 2 ? L - 1 : 0);

  std::size_t off = 0;
  auto place_conv = [&off](detail::ConvSpec& s) {
    s.w_off = off;
    off += s.weight_count();
    s.b_off = off;
    off += static_cast<std::size_t>(s.out_ch);
  };
  auto place_norm = [&off, this](detail::NormSpec& n, int ch) {
    if (!config_.instance_norm) return;
    n.ch = ch;
    n.gamma_off = off;
    off += static_cast<std::size_t>(ch);
    n.beta_off = off;
    off += static_cast<std::size_t>(ch);
  };

  for (int i = 0; i < L; ++i) {
    const int c = config_.base_channels << i;
    Level& lv = levels_[i];
    if (i > 0) {
      lv.down = {detail::ConvSpec::Kind::Down2, config_.base_channels << (i - 1), c, kz2};
      place_conv(lv.down);
    }
    lv.conv = {detail::ConvSpec::Kind::Same3, i == 0 ? config_.in_channels : c, c, kz3};
    place_conv(lv.conv);
    place_norm(lv.norm, c);
  }
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    const int lev = L - 2 - static_cast<int>(j);
    const int c = config_.base_channels << lev;
    DecoderLevel& d = decoder_[j];
    d.up = {detail::ConvSpec::Kind::Up2, c * 2, c, kz2};
    place_conv(d.up);
    d.conv = {detail::ConvSpec::Kind::Same3, c * 2, c, kz3};
    place_conv(d.conv);
    place_norm(d.norm, c);
  }
  const std::size_t backbone_size = off;

  seg_conv_ = {detail::ConvSpec::Kind::Point1, config_.base_channels, config_.num_classes, 1};
  place_conv(seg_conv_);
  const std::size_t seg_size = off - backbone_size;

  reg_conv_ = {detail::ConvSpec::Kind::Same3, config_.base_channels, 1, kz3};
  place_conv(reg_conv_);
  const std::size_t reg_size = off - backbone_size - seg_size;

  layout_.total = off;
  layout_.segments = {ParamSegment{"backbone", 0, backbone_size},
                      ParamSegment{"seg_head", backbone_size, seg_size},
                      ParamSegment{"reg_head", backbone_size + seg_size, reg_size}};
  layout_.config_hash = config_.fingerprint();

  params_.assign(layout_.total, 0.0);
  grads_.assign(layout_.total, 0.0);
}

void DualHeadNetwork::init_params(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x696e6974);  // dedicated init stream

  auto init_conv = [&](const detail::ConvSpec& s) {
    std::size_t fan_in = 0;
    switch (s.kind) {
      case detail::ConvSpec::Kind::Same3: fan_in = static_cast<std::size_t>(s.in_ch) * 9 * s.kz; break;
      case detail::ConvSpec::Kind::Down2: fan_in = static_cast<std::size_t>(s.in_ch) * 4 * s.kz; break;
      case detail::ConvSpec::Kind::Up2: fan_in = static_cast<std::size_t>(s.in_ch); break;
      case detail::ConvSpec::Kind::Point1: fan_in = static_cast<std::size_t>(s.in_ch); break;
    }
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < s.weight_count(); ++i) params_[s.w_off + i] = sigma * rng.normal();
    // biases stay zero
  };
  auto init_norm = [&](const detail::NormSpec& n) {
    if (!config_.instance_norm) return;
    for (int c = 0; c < n.ch; ++c) params_[n.gamma_off + c] = 1.0;
    // betas stay zero
  };

  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (i > 0) init_conv(levels_[i].down);
    init_conv(levels_[i].conv);
    init_norm(levels_[i].norm);
  }
  for (DecoderLevel& d : decoder_) {
    init_conv(d.up);
    init_conv(d.conv);
    init_norm(d.norm);
  }
  init_conv(seg_conv_);
  init_conv(reg_conv_);
}

void DualHeadNetwork::check_patch(const Tensor& patch) const {
  if (patch.ch != config_.in_channels)
    throw ShapeError("forward: patch has " + std::to_string(patch.ch) + " channels, expected " +
                     std::to_string(config_.in_channels));
  if (config_.dims == 2 && patch.sp[2] != 1)
    throw ShapeError("forward: 2D network got a 3D patch");
  const int f = config_.level_factor();
  const int naxes = config_.dims;
  for (int a = 0; a < naxes; ++a) {
    if (patch.sp[a] < f || patch.sp[a] % f != 0)
      throw ShapeError("forward: patch side " + std::to_string(patch.sp[a]) +
                       " not divisible by " + std::to_string(f));
  }
}

void DualHeadNetwork::conv_block_forward(const detail::ConvSpec& conv,
                                         const detail::NormSpec& norm, const Tensor& in,
                                         Tensor& pre, std::vector<double>& inv_std, Tensor& xhat,
                                         Tensor& act) {
  conv_forward(conv, params_.data(), in, pre);
  if (config_.instance_norm) {
    xhat.resize(pre.ch, pre.sp);
    act.resize(pre.ch, pre.sp);
    inv_std.assign(static_cast<std::size_t>(pre.ch), 0.0);
    const std::size_t n = pre.spatial_size();
    for (int c = 0; c < pre.ch; ++c) {
      const double* x = pre.channel(c);
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x[i];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
      var /= static_cast<double>(n);
      const double inv = 1.0 / std::sqrt(var + kNormEps);
      inv_std[c] = inv;
      const double gamma = params_[norm.gamma_off + c];
      const double beta = params_[norm.beta_off + c];
      double* xh = xhat.channel(c);
      double* a = act.channel(c);
      for (std::size_t i = 0; i < n; ++i) {
        xh[i] = (x[i] - mean) * inv;
        const double y = gamma * xh[i] + beta;
        a[i] = y > 0.0 ? y : 0.0;
      }
    }
  } else {
    relu_from(pre, act);
  }
}

void DualHeadNetwork::conv_block_backward(const detail::ConvSpec& conv,
                                          const detail::NormSpec& norm, const Tensor& in,
                                          const Tensor& pre, const std::vector<double>& inv_std,
                                          const Tensor& xhat, const Tensor& act, Tensor& g_act,
                                          Tensor& g_pre, Tensor& g_in) {
  if (config_.instance_norm) {
    // ReLU backward to get dL/dy, then instance-norm backward to dL/d(conv out).
    relu_backward(act, g_act, g_act);
    g_pre.resize(pre.ch, pre.sp);
    const std::size_t n = pre.spatial_size();
    for (int c = 0; c < pre.ch; ++c) {
      const double gamma = params_[norm.gamma_off + c];
      const double inv = inv_std[c];
      const double* gy = g_act.channel(c);
      const double* xh = xhat.channel(c);
      double* gx = g_pre.channel(c);
      double sum_gy = 0.0, sum_gy_xh = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_gy += gy[i];
        sum_gy_xh += gy[i] * xh[i];
      }
      grads_[norm.beta_off + c] += sum_gy;
      grads_[norm.gamma_off + c] += sum_gy_xh;
      const double mean_gy = sum_gy / static_cast<double>(n);
      const double mean_gy_xh = sum_gy_xh / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        gx[i] = gamma * inv * (gy[i] - mean_gy - xh[i] * mean_gy_xh);
      }
    }
  } else {
    relu_backward(act, g_act, g_pre);
  }
  conv_backward_params(conv, in, g_pre, grads_.data());
  if (g_in.v.size() == in.v.size() && g_in.ch == in.ch) {
    conv_backward_input(conv, params_.data(), g_pre, g_in);
  }
}

void DualHeadNetwork::forward(const Tensor& patch) {
  check_patch(patch);
  input_ = patch;

  const Tensor* cur = &input_;
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    Level& lv = levels_[i];
    if (i > 0) {
      // down conv + relu in place; the backward mask only needs the post-act
      conv_forward(lv.down, params_.data(), *cur, lv.down_act);
      for (double& v : lv.down_act.v) v = v > 0.0 ? v : 0.0;
      cur = &lv.down_act;
    }
    conv_block_forward(lv.conv, lv.norm, *cur, lv.conv_pre, lv.inv_std, lv.norm_xhat, lv.conv_act);
    cur = &lv.conv_act;
  }

  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    DecoderLevel& d = decoder_[j];
    const int lev = static_cast<int>(levels_.size()) - 2 - static_cast<int>(j);
    conv_forward(d.up, params_.data(), *cur, d.g_up_act);
    relu_from(d.g_up_act, d.up_act);
    // concat up output with the encoder skip at this resolution
    const Tensor& skip = levels_[lev].conv_act;
    d.cat.resize(d.up_act.ch + skip.ch, d.up_act.sp);
    std::copy(d.up_act.v.begin(), d.up_act.v.end(), d.cat.v.begin());
    std::copy(skip.v.begin(), skip.v.end(), d.cat.v.begin() + d.up_act.v.size());
    conv_block_forward(d.conv, d.norm, d.cat, d.conv_pre, d.inv_std, d.norm_xhat, d.conv_act);
    cur = &d.conv_act;
  }

  const Tensor& head_in = *cur;
  has_seg_out_ = active_head_ != ActiveHead::Reg;
  has_sdf_out_ = active_head_ != ActiveHead::Seg;

  if (has_seg_out_) {
    conv_forward(seg_conv_, params_.data(), head_in, seg_logits_);
    seg_prob_.resize(seg_logits_.ch, seg_logits_.sp);
    const std::size_t n = seg_logits_.spatial_size();
    for (std::size_t i = 0; i < n; ++i) {
      double m = seg_logits_.channel(0)[i];
      for (int c = 1; c < seg_logits_.ch; ++c) m = std::max(m, seg_logits_.channel(c)[i]);
      double sum = 0.0;
      for (int c = 0; c < seg_logits_.ch; ++c) {
        const double e = std::exp(seg_logits_.channel(c)[i] - m);
        seg_prob_.channel(c)[i] = e;
        sum += e;
      }
      for (int c = 0; c < seg_logits_.ch; ++c) seg_prob_.channel(c)[i] /= sum;
    }
  }
  if (has_sdf_out_) {
    conv_forward(reg_conv_, params_.data(), head_in, reg_pre_);
    sdf_out_.resize(1, reg_pre_.sp);
    for (std::size_t i = 0; i < reg_pre_.v.size(); ++i) sdf_out_.v[i] = std::tanh(reg_pre_.v[i]);
  }
}

const Tensor& DualHeadNetwork::seg_prob() const {
  if (!has_seg_out_) throw ShapeError("seg_prob: segmentation head not active in last forward");
  return seg_prob_;
}

const Tensor& DualHeadNetwork::sdf_out() const {
  if (!has_sdf_out_) throw ShapeError("sdf_out: regression head not active in last forward");
  return sdf_out_;
}

void DualHeadNetwork::backward(const Tensor* dseg_prob, const Tensor* dsdf_out) {
  if (!trainable_)
    throw TrainingAborted("backward called on a non-trainable network (teacher passivity)");
  if (input_.v.empty()) throw ShapeError("backward called before forward");
  if (dseg_prob && !has_seg_out_)
    throw ShapeError("backward: seg gradient supplied but seg head was not run");
  if (dsdf_out && !has_sdf_out_)
    throw ShapeError("backward: sdf gradient supplied but reg head was not run");

  // Zero all activation gradients; everything below accumulates.
  auto zero_like = [](Tensor& g, const Tensor& ref) {
    g.resize(ref.ch, ref.sp);
    g.fill(0.0);
  };
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    zero_like(levels_[i].g_conv_act, levels_[i].conv_act);
    if (i > 0) zero_like(levels_[i].g_down_act, levels_[i].down_act);
  }
  for (DecoderLevel& d : decoder_) {
    zero_like(d.g_conv_act, d.conv_act);
    zero_like(d.g_up_act, d.up_act);
    zero_like(d.g_cat, d.cat);
  }

  Tensor& g_head_in = decoder_.empty() ? levels_.back().g_conv_act : decoder_.back().g_conv_act;
  const Tensor& head_in = decoder_.empty() ? levels_.back().conv_act : decoder_.back().conv_act;

  if (dseg_prob) {
    if (!dseg_prob->shape_equals(seg_prob_)) throw ShapeError("backward: seg gradient shape");
    // softmax backward: dL/dl_c = p_c * (g_c - sum_k g_k p_k)
    g_seg_logits_.resize(seg_prob_.ch, seg_prob_.sp);
    const std::size_t n = seg_prob_.spatial_size();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int c = 0; c < seg_prob_.ch; ++c)
        dot += dseg_prob->channel(c)[i] * seg_prob_.channel(c)[i];
      for (int c = 0; c < seg_prob_.ch; ++c) {
        g_seg_logits_.channel(c)[i] =
            seg_prob_.channel(c)[i] * (dseg_prob->channel(c)[i] - dot);
      }
    }
    conv_backward_params(seg_conv_, head_in, g_seg_logits_, grads_.data());
    conv_backward_input(seg_conv_, params_.data(), g_seg_logits_, g_head_in);
  }
  if (dsdf_out) {
    if (!dsdf_out->shape_equals(sdf_out_)) throw ShapeError("backward: sdf gradient shape");
    g_reg_pre_.resize(1, sdf_out_.sp);
    for (std::size_t i = 0; i < sdf_out_.v.size(); ++i) {
      g_reg_pre_.v[i] = dsdf_out->v[i] * (1.0 - sdf_out_.v[i] * sdf_out_.v[i]);
    }
    conv_backward_params(reg_conv_, head_in, g_reg_pre_, grads_.data());
    conv_backward_input(reg_conv_, params_.data(), g_reg_pre_, g_head_in);
  }

  // Decoder, deepest-processed-last first.
  for (int j = static_cast<int>(decoder_.size()) - 1; j >= 0; --j) {
    DecoderLevel& d = decoder_[j];
    const int lev = static_cast<int>(levels_.size()) - 2 - j;
    conv_block_backward(d.conv, d.norm, d.cat, d.conv_pre, d.inv_std, d.norm_xhat, d.conv_act,
                        d.g_conv_act, d.g_conv_pre, d.g_cat);
    // split concat gradient: first up_act channels, then the encoder skip
    std::copy(d.g_cat.v.begin(), d.g_cat.v.begin() + d.up_act.v.size(), d.g_up_act.v.begin());
    {
      Tensor& g_skip = levels_[lev].g_conv_act;
      const double* src = d.g_cat.v.data() + d.up_act.v.size();
      for (std::size_t i = 0; i < g_skip.v.size(); ++i) g_skip.v[i] += src[i];
    }
    relu_backward(d.up_act, d.g_up_act, d.g_up_act);
    const Tensor& up_in = (j == 0) ? levels_.back().conv_act : decoder_[j - 1].conv_act;
    Tensor& g_up_in = (j == 0) ? levels_.back().g_conv_act : decoder_[j - 1].g_conv_act;
    conv_backward_params(d.up, up_in, d.g_up_act, grads_.data());
    conv_backward_input(d.up, params_.data(), d.g_up_act, g_up_in);
  }

  // Encoder, bottom first.
  for (int i = static_cast<int>(levels_.size()) - 1; i >= 0; --i) {
    Level& lv = levels_[i];
    const Tensor& in = (i == 0) ? input_ : lv.down_act;
    Tensor* g_in = (i == 0) ? &g_input_ : &lv.g_down_act;
    if (i == 0) {
      g_input_.ch = 0;  // gradient w.r.t. the data is not needed; skip it
      g_input_.v.clear();
    }
    conv_block_backward(lv.conv, lv.norm, in, lv.conv_pre, lv.inv_std, lv.norm_xhat, lv.conv_act,
                        lv.g_conv_act, lv.g_conv_pre, *g_in);
    if (i > 0) {
      relu_backward(lv.down_act, lv.g_down_act, lv.g_down_act);
      conv_backward_params(lv.down, levels_[i - 1].conv_act, lv.g_down_act, grads_.data());
      conv_backward_input(lv.down, params_.data(), lv.g_down_act, levels_[i - 1].g_conv_act);
    }
  }
}

void DualHeadNetwork::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void DualHeadNetwork::sgd_step(double lr, double momentum) {
  if (momentum != 0.0) {
    if (velocity_.size() != params_.size()) velocity_.assign(params_.size(), 0.0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      velocity_[i] = momentum * velocity_[i] + grads_[i];
      params_[i] -= lr * velocity_[i];
    }
  } else {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= lr * grads_[i];
  }
}

ParamVector DualHeadNetwork::params() const {
  return ParamVector{params_, layout_};
}

void DualHeadNetwork::set_params(const ParamVector& p) {
  require_same_layout(p.layout, layout_, "set_params");
  if (p.values.size() != params_.size()) throw LayoutMismatch("set_params: value count differs");
  params_ = p.values;
}

DualHeadNetwork build_network(const NetworkConfig& config, std::uint64_t seed) {
  return DualHeadNetwork(config, seed);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[] = "CEMTNET1\n";

nlohmann::json config_to_json(const NetworkConfig& c) {
  return nlohmann::json{{"dims", c.dims},
                        {"in_channels", c.in_channels},
                        {"base_channels", c.base_channels},
                        {"depth", c.depth},
                        {"num_classes", c.num_classes},
                        {"instance_norm", c.instance_norm}};
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.dims = j.at("dims").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.depth = j.at("depth").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.instance_norm = j.at("instance_norm").get<bool>();
  return c;
}
}  // namespace

void save_checkpoint(const std::string& path, const NetworkConfig& config,
                     const ParamVector& params) {
  nlohmann::json header;
  header["config"] = config_to_json(config);
  nlohmann::json segs = nlohmann::json::array();
  for (const ParamSegment& s : params.layout.segments) {
    segs.push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
  }
  header["layout"] = {{"total", params.layout.total}, {"segments", segs}};
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw FormatError("bad checkpoint magic in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1u << 20)) throw FormatError("bad checkpoint header length in " + path);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("truncated checkpoint header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  // Rebuild the layout from the config and cross-check against the header.
  DualHeadNetwork probe(ck.config, 0);
  ck.params.layout = probe.layout();
  if (header.at("layout").at("total").get<std::size_t>() != ck.params.layout.total)
    throw FormatError("checkpoint layout does not match its config: " + path);

  ck.params.values.resize(ck.params.layout.total);
  in.read(reinterpret_cast<char*>(ck.params.values.data()),
          static_cast<std::streamsize>(ck.params.values.size() * sizeof(double)));
  if (!in) throw FormatError("truncated checkpoint payload in " + path);
  char extra;
  if (in.read(&extra, 1)) throw FormatError("trailing bytes in checkpoint " + path);
  return ck;
}

}  // namespace cemt
