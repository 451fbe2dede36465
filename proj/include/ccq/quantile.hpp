#pragma once

#include <Eigen/Core>

#include "ccq/kernel.hpp"

namespace ccq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct QuantileConfig {
  double alpha = 0.05;       // risk level in (0,1)
  double b_shift = 0.5;      // added to (1-alpha)N when that product is integral
  double root_tol = 0.0;     // absolute tolerance on psi(Q); 0 -> 1e-10*N
  int max_root_iters = 100;

  // Target count t* = (1-alpha)N (+ b_shift when integral).  Throws if the
  // result is integral or outside (0, N).
  double target(int N) const;
};

// Root of sum_i Gamma_eps(z_i - Q) = t* together with the kernel weights
// needed for first and second derivatives.  Immutable after construction.
struct QuantileEval {
  double value = 0.0;        // the root Q
  Vector weights;            // w_i = Gamma'(z_i - Q), <= 0
  Vector weight_d;           // w'_i = Gamma''(z_i - Q)
  double W = 0.0;            // sum of weights, < 0
  double W_d = 0.0;          // sum of weight_d
  int active_count = 0;      // scenarios with |z_i - Q| < eps
};

// M-th smallest entry, M = ceil((1-alpha) N); selection, not a full sort.
double empirical_quantile(const Vector& z, double alpha);

QuantileEval solve_quantile(const Vector& z, const QuantileConfig& cfg,
                            const SmoothingKernel& k);

// [grad]_i = w_i / W; nonnegative, sums to 1.
Vector quantile_gradient(const QuantileEval& q);

// Rank-2-plus-diagonal factorization of the N x N Hessian:
//   H = c_ww * w w^T + c_x * (w wd^T + wd w^T) + c_d * diag(wd).
struct QuantileHessian {
  Vector w;
  Vector wd;
  double c_ww = 0.0;   // W_d / W^3
  double c_x = 0.0;    // -1 / W^2
  double c_d = 0.0;    // 1 / W

  double entry(int i, int j) const;
  Matrix dense() const;
  // y = H x without forming the dense matrix; O(N).
  Vector apply(const Vector& x) const;
};

QuantileHessian quantile_hessian(const QuantileEval& q);

}  // namespace ccq
