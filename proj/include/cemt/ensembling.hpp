#pragma once

#include <string>

#include "cemt/network.hpp"

namespace cemt {

enum class EnsembleStrategy { Classic, Unidirectional, Bidirectional };
const char* to_string(EnsembleStrategy strategy);

// How Eq.-6-style updates treat the head segments of the parameter vector.
//   FullVector: the competitive blend applies to every scalar (literal
//               reading of the update equation).
//   PerHead:    competitive blend on the backbone only; the teacher's seg
//               head tracks student 1's seg head and its reg head tracks
//               student 2's reg head (each with classic EMA). This avoids
//               mixing a student's never-trained head into the teacher.
enum class HeadPolicy { FullVector, PerHead };
const char* to_string(HeadPolicy policy);
HeadPolicy head_policy_from_string(const std::string& name);  // throws FormatError

// Blend weights for the two students plus the rule that produced them.
// Invariant: r1, r2 >= 0 and r1 + r2 == 1 exactly.
struct CompetitiveWeights {
  double r1 = 0.5;
  double r2 = 0.5;
  EnsembleStrategy strategy = EnsembleStrategy::Bidirectional;
};

struct EmaConfig {
  double alpha = 0.99;
  HeadPolicy head_policy = HeadPolicy::PerHead;
};

// Winner-takes-all on the current dice losses; ties go to student 2.
// Throws DomainError unless both losses lie in [0, 1].
CompetitiveWeights weights_unidirectional(double l1, double l2);

// Proportional blend r1 = (1-l1) / (2-l1-l2); the 0/0 degeneracy at
// l1 = l2 = 1 falls back to (0.5, 0.5). Same domain check.
CompetitiveWeights weights_bidirectional(double l1, double l2);

// theta' <- alpha * theta' + (1 - alpha) * theta, element-wise.
// Throws LayoutMismatch on differing layouts, DomainError for alpha outside
// [0, 1).
ParamVector ema_update_classic(const ParamVector& teacher, const ParamVector& student,
                               double alpha);

// theta' <- alpha * theta' + (1 - alpha) * (r1 * theta1 + r2 * theta2) over
// the segments selected by cfg.head_policy. When a weight is exactly 1 the
// blend short-circuits to that student, making a permanently pinned
// competitive run bit-identical to the classic update.
ParamVector ema_update_competitive(const ParamVector& teacher, const ParamVector& s1,
                                   const ParamVector& s2, const CompetitiveWeights& w,
                                   const EmaConfig& cfg);

}  // namespace cemt
