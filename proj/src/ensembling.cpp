#include "cemt/ensembling.hpp"

#include <cmath>

#include "cemt/errors.hpp"

namespace cemt {

namespace {

constexpr double kDegenerateDenom = 1e-8;

void require_unit_interval(double l, const char* name) {
  if (!(l >= 0.0 && l <= 1.0))
    throw DomainError(std::string(name) + " = " + std::to_string(l) + " is outside [0, 1]");
}

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("EMA alpha must lie in [0, 1)");
}

// Classic EMA on one contiguous range.
void blend_classic(const double* t, const double* s, double* out, std::size_t off,
                   std::size_t size, double alpha) {
  for (std::size_t i = off; i < off + size; ++i) out[i] = alpha * t[i] + (1.0 - alpha) * s[i];
}

// Competitive EMA on one contiguous range. Weights exactly 1 short-circuit to
// the classic form so a pinned run reproduces it bit-for-bit (no 0.0 * x
// term, which could otherwise flip signed zeros or absorb NaNs).
void blend_competitive(const double* t, const double* s1, const double* s2, double* out,
                       std::size_t off, std::size_t size, double alpha, double r1, double r2) {
  if (r1 == 1.0) {
    blend_classic(t, s1, out, off, size, alpha);
    return;
  }
  if (r2 == 1.0) {
    blend_classic(t, s2, out, off, size, alpha);
    return;
  }
  for (std::size_t i = off; i < off + size; ++i) {
    out[i] = alpha * t[i] + (1.0 - alpha) * (r1 * s1[i] + r2 * s2[i]);
  }
}

}  // namespace

const char* to_string(EnsembleStrategy strategy) {
  switch (strategy) {
    case EnsembleStrategy::Classic: return "classic";
    case EnsembleStrategy::Unidirectional: return "unidirectional";
    case EnsembleStrategy::Bidirectional: return "bidirectional";
  }
  return "unknown";
}

const char* to_string(HeadPolicy policy) {
  return policy == HeadPolicy::FullVector ? "full-vector" : "per-head";
}

HeadPolicy head_policy_from_string(const std::string& name) {
  if (name == "full-vector") return HeadPolicy::FullVector;
  if (name == "per-head") return HeadPolicy::PerHead;
  throw FormatError("head_policy_from_string: unknown policy '" + name + "'");
}

CompetitiveWeights weights_unidirectional(double l1, double l2) {
  require_unit_interval(l1, "l1");
  require_unit_interval(l2, "l2");
  CompetitiveWeights w;
  w.strategy = EnsembleStrategy::Unidirectional;
  w.r1 = l1 < l2 ? 1.0 : 0.0;  // the tie l1 == l2 keeps student 2
  w.r2 = 1.0 - w.r1;
  return w;
}

CompetitiveWeights weights_bidirectional(double l1, double l2) {
  require_unit_interval(l1, "l1");
  require_unit_interval(l2, "l2");
  CompetitiveWeights w;
  w.strategy = EnsembleStrategy::Bidirectional;
  const double denom = 2.0 - l1 - l2;
  if (denom < kDegenerateDenom) {
    w.r1 = 0.5;
    w.r2 = 0.5;
    return w;
  }
  w.r1 = (1.0 - l1) / denom;
  w.r2 = 1.0 - w.r1;  // keeps the simplex exact; equals (1-l2)/denom to an ulp
  return w;
}

ParamVector ema_update_classic(const ParamVector& teacher, const ParamVector& student,
                               double alpha) {
  require_same_layout(teacher.layout, student.layout, "ema_update_classic");
  require_alpha(alpha);
  ParamVector out;
  out.layout = teacher.layout;
  out.values.resize(teacher.values.size());
  blend_classic(teacher.values.data(), student.values.data(), out.values.data(), 0,
                teacher.values.size(), alpha);
  return out;
}

ParamVector ema_update_competitive(const ParamVector& teacher, const ParamVector& s1,
                                   const ParamVector& s2, const CompetitiveWeights& w,
                                   const EmaConfig& cfg) {
  require_same_layout(teacher.layout, s1.layout, "ema_update_competitive");
  require_same_layout(teacher.layout, s2.layout, "ema_update_competitive");
  require_alpha(cfg.alpha);
  if (!(w.r1 >= 0.0 && w.r2 >= 0.0 && w.r1 + w.r2 == 1.0))
    throw DomainError("competitive weights must be a point on the unit simplex");

  ParamVector out;
  out.layout = teacher.layout;
  out.values.resize(teacher.values.size());
  const double* t = teacher.values.data();
  const double* v1 = s1.values.data();
  const double* v2 = s2.values.data();
  double* o = out.values.data();

  if (cfg.head_policy == HeadPolicy::FullVector) {
    blend_competitive(t, v1, v2, o, 0, teacher.values.size(), cfg.alpha, w.r1, w.r2);
    return out;
  }

  const ParamSegment& backbone = teacher.layout.segment("backbone");
  const ParamSegment& seg_head = teacher.layout.segment("seg_head");
  const ParamSegment& reg_head = teacher.layout.segment("reg_head");
  blend_competitive(t, v1, v2, o, backbone.offset, backbone.size, cfg.alpha, w.r1, w.r2);
  blend_classic(t, v1, o, seg_head.offset, seg_head.size, cfg.alpha);
  blend_classic(t, v2, o, reg_head.offset, reg_head.size, cfg.alpha);
  return out;
}

}  // namespace cemt
