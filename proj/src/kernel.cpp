#include "ccq/kernel.hpp"

#include <cmath>
#include <limits>

namespace ccq {

SmoothingKernel::SmoothingKernel(double epsilon) : eps_(epsilon) {
  if (!std::isfinite(epsilon) || epsilon <= 0.0)
    throw std::invalid_argument("SmoothingKernel: epsilon must be finite and > 0");
}

double SmoothingKernel::gamma(double y) const {
  if (!std::isfinite(y)) throw std::invalid_argument("gamma: non-finite argument");
  if (y <= -eps_) return 1.0;
  if (y >= eps_) return 0.0;
  // Horner form in u = y/eps of the quintic
  //   (15/16) (-u^5/5 + 2u^3/3 - u + 8/15)
  const double u = y / eps_;
  const double u2 = u * u;
  return 0.5 - (15.0 / 16.0) * u * (1.0 + u2 * (-2.0 / 3.0 + u2 * (1.0 / 5.0)));
}

double SmoothingKernel::gamma_d1(double y) const {
  if (!std::isfinite(y)) throw std::invalid_argument("gamma_d1: non-finite argument");
  if (y <= -eps_ || y >= eps_) return 0.0;
  const double u = y / eps_;
  const double t = 1.0 - u * u;
  return -(15.0 / (16.0 * eps_)) * t * t;
}

double SmoothingKernel::gamma_d2(double y) const {
  if (!std::isfinite(y)) throw std::invalid_argument("gamma_d2: non-finite argument");
  if (y <= -eps_ || y >= eps_) return 0.0;
  const double u = y / eps_;
  return (15.0 / (4.0 * eps_ * eps_)) * u * (1.0 - u * u);
}

double SmoothingKernel::gamma_inverse(double v) const {
  if (!(v > 0.0 && v < 1.0))
    throw std::invalid_argument("gamma_inverse: value must lie in (0,1)");
  // gamma is strictly decreasing on (-eps, eps); safeguarded Newton with a
  // shrinking bisection bracket.
  double lo = -eps_, hi = eps_;  // gamma(lo)=1 > v > 0=gamma(hi)
  double y = eps_ * (1.0 - 2.0 * v);  // linear seed
  for (int it = 0; it < 200; ++it) {
    const double f = gamma(y) - v;
    if (std::fabs(f) <= 1e-12) return y;
    if (f > 0.0)
      lo = y;  // gamma too big -> root to the right
    else
      hi = y;
    const double d = gamma_d1(y);
    double step_y = std::numeric_limits<double>::quiet_NaN();
    if (d != 0.0) step_y = y - f / d;
    if (!std::isfinite(step_y) || step_y <= lo || step_y >= hi)
      step_y = 0.5 * (lo + hi);
    y = step_y;
  }
  return y;
}

}  // namespace ccq
