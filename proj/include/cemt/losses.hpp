#pragma once

#include <cstdint>

#include "cemt/errors.hpp"
#include "cemt/tensor.hpp"

namespace cemt {

// Smoothing used by the soft dice loss.
inline constexpr double kDiceEps = 1e-5;
// Probability floor inside logarithms.
inline constexpr double kProbFloor = 1e-7;

struct LossComponents {
  double dice = 0.0;
  double ce = 0.0;
  double mse = 0.0;
  double consistency = 0.0;
};

// A scalar objective plus the named breakdown it was combined from.
struct LossValue {
  double value = 0.0;
  LossComponents components;
};

// Soft dice loss 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps) between the
// foreground probability (last channel of `pred`) and a binary target mask.
double dice_loss(const Tensor& pred, const Tensor& target_mask);

// Mean over voxels of -log p(true class), probabilities floored at kProbFloor.
// `prob` holds per-class probabilities (channel 1 = foreground); the target
// mask selects the true class per voxel.
double cross_entropy_loss(const Tensor& prob, const Tensor& target_mask);

// 0.5 * dice + 0.5 * cross-entropy; the per-voxel-normalized segmentation
// objective for M1 and the supervised baseline.
LossValue supervised_seg_loss(const Tensor& prob, const Tensor& target_mask);

// MSE against the target SDF plus dice of the smooth inverse transform
// (gain k) against the mask implied by the target SDF (z <= 0 is foreground).
LossValue supervised_sdf_loss(const Tensor& pred_sdf, const Tensor& target_sdf, double k);

// Mean squared error in the head's native output space. The teacher output is
// a constant: gradients flow only to the student argument.
double consistency_loss(const Tensor& student_out, const Tensor& teacher_out);

// Gradient-accumulating variants. Each adds scale * dL/d(pred) into `dpred`
// (which must already match the prediction's shape) and returns the loss
// evaluated exactly as the plain version does.
double dice_loss_grad(const Tensor& pred, const Tensor& target_mask, Tensor& dpred,
                      double scale = 1.0);
double cross_entropy_loss_grad(const Tensor& prob, const Tensor& target_mask, Tensor& dprob,
                               double scale = 1.0);
LossValue supervised_seg_loss_grad(const Tensor& prob, const Tensor& target_mask, Tensor& dprob,
                                   double scale = 1.0);
LossValue supervised_sdf_loss_grad(const Tensor& pred_sdf, const Tensor& target_sdf, double k,
                                   Tensor& dpred, double scale = 1.0);
double consistency_loss_grad(const Tensor& student_out, const Tensor& teacher_out,
                             Tensor& dstudent, double scale = 1.0);

// Gaussian ramp w_max * exp(-5 * (1 - min(step, max_step)/max_step)^2);
// reaches w_max at step >= max_step. max_step <= 0 means "no ramp": w_max
// from the first step.
double rampup_weight(std::int64_t step, std::int64_t max_step, double w_max);

}  // namespace cemt
