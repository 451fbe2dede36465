#pragma once

#include <stdexcept>

namespace ccq {

// Smoothed step function built from the quartic kernel.  The step has
// compact support: it is 1 below -epsilon, 0 above +epsilon, and a strictly
// decreasing C^2 quintic in between.  Alternate kernels can be added by
// implementing the same four evaluations against a different polynomial,
// but only the quartic kernel ships.
class SmoothingKernel {
public:
  explicit SmoothingKernel(double epsilon);

  double epsilon() const { return eps_; }

  // Step value in [0, 1].
  double gamma(double y) const;
  // First derivative, <= 0 everywhere, 0 outside (-eps, eps).
  double gamma_d1(double y) const;
  // Second derivative, 0 outside (-eps, eps) and at the boundary.
  double gamma_d2(double y) const;
  // Unique y in (-eps, eps) with gamma(y) == v, for v in (0, 1).
  double gamma_inverse(double v) const;

private:
  double eps_;
};

}  // namespace ccq
