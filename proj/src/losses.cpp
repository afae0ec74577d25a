#include "cemt/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cemt/errors.hpp"
#include "cemt/geometry.hpp"

namespace cemt {

namespace {

void require_mask_shape(const Tensor& pred, const Tensor& mask, const char* where) {
  if (mask.ch != 1) throw ShapeError(std::string(where) + ": target mask must be single-channel");
  if (pred.sp != mask.sp) throw ShapeError(std::string(where) + ": prediction/target shapes differ");
}

// Foreground probability channel: the last channel by convention, so both
// [1, spatial] head outputs and [2, spatial] softmax outputs work directly.
const double* foreground(const Tensor& pred) { return pred.channel(pred.ch - 1); }

struct DiceTerms {
  double inter = 0.0;  // sum(p * t)
  double psum = 0.0;   // sum(p)
  double tsum = 0.0;   // sum(t)
  double loss() const { return 1.0 - (2.0 * inter + kDiceEps) / (psum + tsum + kDiceEps); }
};

DiceTerms dice_terms(const double* p, const double* t, std::size_t n) {
  DiceTerms d;
  for (std::size_t i = 0; i < n; ++i) {
    d.inter += p[i] * t[i];
    d.psum += p[i];
    d.tsum += t[i];
  }
  return d;
}

}  // namespace

double dice_loss(const Tensor& pred, const Tensor& target_mask) {
  require_mask_shape(pred, target_mask, "dice_loss");
  return dice_terms(foreground(pred), target_mask.v.data(), pred.spatial_size()).loss();
}

double dice_loss_grad(const Tensor& pred, const Tensor& target_mask, Tensor& dpred,
                      double scale) {
  require_mask_shape(pred, target_mask, "dice_loss");
  if (!dpred.shape_equals(pred)) throw ShapeError("dice_loss_grad: gradient buffer shape");
  const std::size_t n = pred.spatial_size();
  const double* p = foreground(pred);
  const double* t = target_mask.v.data();
  const DiceTerms d = dice_terms(p, t, n);

  // loss = 1 - (2*inter + eps) / denom with denom = psum + tsum + eps;
  // d(loss)/dp_i = -(2*t_i * denom - (2*inter + eps)) / denom^2.
  const double denom = d.psum + d.tsum + kDiceEps;
  const double num = 2.0 * d.inter + kDiceEps;
  double* g = dpred.channel(dpred.ch - 1);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] += scale * (num - 2.0 * t[i] * denom) / (denom * denom);
  }
  return d.loss();
}

double cross_entropy_loss(const Tensor& prob, const Tensor& target_mask) {
  require_mask_shape(prob, target_mask, "cross_entropy_loss");
  if (prob.ch != 2) throw ShapeError("cross_entropy_loss: expected 2 class channels");
  const std::size_t n = prob.spatial_size();
  const double* p0 = prob.channel(0);
  const double* p1 = prob.channel(1);
  const double* t = target_mask.v.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p_true = t[i] != 0.0 ? p1[i] : p0[i];
    sum -= std::log(std::max(p_true, kProbFloor));
  }
  return sum / static_cast<double>(n);
}

double cross_entropy_loss_grad(const Tensor& prob, const Tensor& target_mask, Tensor& dprob,
                               double scale) {
  require_mask_shape(prob, target_mask, "cross_entropy_loss");
  if (prob.ch != 2) throw ShapeError("cross_entropy_loss: expected 2 class channels");
  if (!dprob.shape_equals(prob)) throw ShapeError("cross_entropy_loss_grad: gradient buffer shape");
  const std::size_t n = prob.spatial_size();
  const double* p0 = prob.channel(0);
  const double* p1 = prob.channel(1);
  const double* t = target_mask.v.data();
  double* g0 = dprob.channel(0);
  double* g1 = dprob.channel(1);
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool fg = t[i] != 0.0;
    const double p_true = fg ? p1[i] : p0[i];
    sum -= std::log(std::max(p_true, kProbFloor));
    if (p_true > kProbFloor) {  // below the floor the clamped log is flat
      const double g = -inv_n / p_true * scale;
      (fg ? g1 : g0)[i] += g;
    }
  }
  return sum * inv_n;
}

LossValue supervised_seg_loss(const Tensor& prob, const Tensor& target_mask) {
  LossValue out;
  out.components.dice = dice_loss(prob, target_mask);
  out.components.ce = cross_entropy_loss(prob, target_mask);
  out.value = 0.5 * out.components.dice + 0.5 * out.components.ce;
  return out;
}

LossValue supervised_seg_loss_grad(const Tensor& prob, const Tensor& target_mask, Tensor& dprob,
                                   double scale) {
  LossValue out;
  out.components.dice = dice_loss_grad(prob, target_mask, dprob, 0.5 * scale);
  out.components.ce = cross_entropy_loss_grad(prob, target_mask, dprob, 0.5 * scale);
  out.value = 0.5 * out.components.dice + 0.5 * out.components.ce;
  return out;
}

namespace {

// The binary mask implied by a target SDF: inside and boundary (z <= 0).
Tensor mask_from_sdf(const Tensor& target_sdf) {
  Tensor mask(1, target_sdf.sp);
  for (std::size_t i = 0; i < target_sdf.v.size(); ++i)
    mask.v[i] = target_sdf.v[i] <= 0.0 ? 1.0 : 0.0;
  return mask;
}

}  // namespace

LossValue supervised_sdf_loss(const Tensor& pred_sdf, const Tensor& target_sdf, double k) {
  if (!pred_sdf.shape_equals(target_sdf))
    throw ShapeError("supervised_sdf_loss: prediction/target shapes differ");
  if (pred_sdf.ch != 1) throw ShapeError("supervised_sdf_loss: SDF tensors are single-channel");

  const std::size_t n = pred_sdf.v.size();
  double mse = 0.0;
  Tensor prob(1, pred_sdf.sp);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred_sdf.v[i] - target_sdf.v[i];
    mse += d * d;
    prob.v[i] = sdf_to_mask_value(pred_sdf.v[i], k);
  }
  mse /= static_cast<double>(n);

  LossValue out;
  out.components.mse = mse;
  out.components.dice = dice_loss(prob, mask_from_sdf(target_sdf));
  out.value = out.components.mse + out.components.dice;
  return out;
}

LossValue supervised_sdf_loss_grad(const Tensor& pred_sdf, const Tensor& target_sdf, double k,
                                   Tensor& dpred, double scale) {
  if (!pred_sdf.shape_equals(target_sdf))
    throw ShapeError("supervised_sdf_loss: prediction/target shapes differ");
  if (pred_sdf.ch != 1) throw ShapeError("supervised_sdf_loss: SDF tensors are single-channel");
  if (!dpred.shape_equals(pred_sdf)) throw ShapeError("supervised_sdf_loss_grad: buffer shape");

  const std::size_t n = pred_sdf.v.size();
  double mse = 0.0;
  Tensor prob(1, pred_sdf.sp);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred_sdf.v[i] - target_sdf.v[i];
    mse += d * d;
    dpred.v[i] += scale * 2.0 * d / static_cast<double>(n);
    prob.v[i] = sdf_to_mask_value(pred_sdf.v[i], k);
  }
  mse /= static_cast<double>(n);

  // Chain the dice gradient through the smooth inverse transform.
  Tensor dprob(1, prob.sp);
  const double dice = dice_loss_grad(prob, mask_from_sdf(target_sdf), dprob, scale);
  for (std::size_t i = 0; i < n; ++i) {
    dpred.v[i] += dprob.v[i] * sdf_to_mask_derivative(pred_sdf.v[i], k);
  }

  LossValue out;
  out.components.mse = mse;
  out.components.dice = dice;
  out.value = mse + dice;
  return out;
}

double consistency_loss(const Tensor& student_out, const Tensor& teacher_out) {
  if (!student_out.shape_equals(teacher_out))
    throw ShapeError("consistency_loss: student/teacher shapes differ");
  const std::size_t n = student_out.v.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = student_out.v[i] - teacher_out.v[i];
    sum += d * d;
  }
  return sum / static_cast<double>(n);
}

double consistency_loss_grad(const Tensor& student_out, const Tensor& teacher_out,
                             Tensor& dstudent, double scale) {
  if (!student_out.shape_equals(teacher_out))
    throw ShapeError("consistency_loss: student/teacher shapes differ");
  if (!dstudent.shape_equals(student_out))
    throw ShapeError("consistency_loss_grad: gradient buffer shape");
  const std::size_t n = student_out.v.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = student_out.v[i] - teacher_out.v[i];
    sum += d * d;
    dstudent.v[i] += scale * 2.0 * d * inv_n;
  }
  return sum * inv_n;
}

double rampup_weight(std::int64_t step, std::int64_t max_step, double w_max) {
  if (max_step <= 0) return w_max;
  const std::int64_t s = std::clamp<std::int64_t>(step, 0, max_step);
  const double r = 1.0 - static_cast<double>(s) / static_cast<double>(max_step);
  return w_max * std::exp(-5.0 * r * r);
}

}  // namespace cemt
