#include "ccq/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ccq {

double QuantileConfig::target(int N) const {
  if (N < 1) throw std::invalid_argument("QuantileConfig::target: N must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("QuantileConfig::target: alpha must lie in (0,1)");
  if (!(b_shift >= 0.0 && b_shift < 1.0))
    throw std::invalid_argument("QuantileConfig::target: b_shift must lie in [0,1)");
  double t = (1.0 - alpha) * static_cast<double>(N);
  const double nearest = std::round(t);
  if (std::fabs(t - nearest) <= 1e-9 * std::max(1.0, std::fabs(t)))
    t = nearest + b_shift;  // restore Lemma-style uniqueness
  if (!(t > 0.0 && t < static_cast<double>(N)))
    throw std::invalid_argument("QuantileConfig::target: target count outside (0,N)");
  if (std::fabs(t - std::round(t)) < 1e-6)
    throw std::invalid_argument(
        "QuantileConfig::target: (1-alpha)N is too close to an integer; "
        "perturb alpha or set a b_shift");
  return t;
}

double empirical_quantile(const Vector& z, double alpha) {
  const int N = static_cast<int>(z.size());
  if (N < 1) throw std::invalid_argument("empirical_quantile: empty vector");
  const double t = (1.0 - alpha) * N;
  int M = static_cast<int>(std::ceil(t - 1e-9 * std::max(1.0, t)));
  M = std::clamp(M, 1, N);
  std::vector<double> v(z.data(), z.data() + N);
  std::nth_element(v.begin(), v.begin() + (M - 1), v.end());
  return v[M - 1];
}

namespace {

struct PsiEval {
  double psi;
  double dpsi;
};

// psi(Q) = sum_i Gamma(z_i - Q) - target over the sorted values.  Entries
// below Q - eps contribute 1, entries above Q + eps contribute 0; only the
// active window is evaluated.  The window sum runs in sorted order so the
// reduction is deterministic.
PsiEval eval_psi(const std::vector<double>& zs, double Q, double target,
                 const SmoothingKernel& k) {
  const double eps = k.epsilon();
  const auto lo = std::upper_bound(zs.begin(), zs.end(), Q - eps);
  const auto hi = std::lower_bound(lo, zs.end(), Q + eps);
  double psi = static_cast<double>(lo - zs.begin()) - target;
  double dpsi = 0.0;
  for (auto it = lo; it != hi; ++it) {
    psi += k.gamma(*it - Q);
    dpsi -= k.gamma_d1(*it - Q);
  }
  return {psi, dpsi};
}

}  // namespace

QuantileEval solve_quantile(const Vector& z, const QuantileConfig& cfg,
                            const SmoothingKernel& k) {
  const int N = static_cast<int>(z.size());
  const double target = cfg.target(N);
  for (int i = 0; i < N; ++i)
    if (!std::isfinite(z[i]))
      throw std::invalid_argument("solve_quantile: non-finite scenario value");

  const double eps = k.epsilon();
  const double zmin = z.minCoeff();
  const double zmax = z.maxCoeff();
  const double root_tol = cfg.root_tol > 0.0 ? cfg.root_tol : 1e-10 * N;

  double Q;
  if (zmin == zmax) {
    // Degenerate sample: Gamma(z - Q) = t*/N has the exact analytic root.
    Q = zmin - k.gamma_inverse(target / N);
  } else {
    std::vector<double> zs(z.data(), z.data() + N);
    std::sort(zs.begin(), zs.end());

    double lo = zmin - eps;   // psi(lo) = -t* < 0
    double hi = zmax + eps;   // psi(hi) = N - t* > 0
    Q = empirical_quantile(z, cfg.alpha);
    const double dpsi_floor = 1e-12 * N / eps;

    bool converged = false;
    for (int it = 0; it < cfg.max_root_iters; ++it) {
      const PsiEval pe = eval_psi(zs, Q, target, k);
      if (std::fabs(pe.psi) <= root_tol) {
        converged = true;
        break;
      }
      if (pe.psi < 0.0)
        lo = Q;
      else
        hi = Q;
      double next = std::numeric_limits<double>::quiet_NaN();
      if (pe.dpsi > dpsi_floor) next = Q - pe.psi / pe.dpsi;
      if (!std::isfinite(next) || next <= lo || next >= hi)
        next = 0.5 * (lo + hi);
      Q = next;
    }
    if (!converged) {
      // One last check; the bisection fallback makes stagnation here rare.
      const PsiEval pe = eval_psi(zs, Q, target, k);
      if (std::fabs(pe.psi) > root_tol)
        throw std::runtime_error("solve_quantile: root solve did not converge");
    }
  }

  QuantileEval out;
  out.value = Q;
  out.weights.resize(N);
  out.weight_d.resize(N);
  double W = 0.0, Wd = 0.0;
  int active = 0;
  for (int i = 0; i < N; ++i) {
    const double y = z[i] - Q;
    out.weights[i] = k.gamma_d1(y);
    out.weight_d[i] = k.gamma_d2(y);
    W += out.weights[i];
    Wd += out.weight_d[i];
    if (std::fabs(y) < eps) ++active;
  }
  out.W = W;
  out.W_d = Wd;
  out.active_count = active;
  if (!(out.W < 0.0))
    throw std::runtime_error("solve_quantile: no scenario inside the kernel window");
  return out;
}

Vector quantile_gradient(const QuantileEval& q) {
  if (!(q.W < 0.0)) throw std::invalid_argument("quantile_gradient: invalid eval");
  return q.weights / q.W;
}

double QuantileHessian::entry(int i, int j) const {
  double v = c_ww * w[i] * w[j] + c_x * (w[i] * wd[j] + wd[i] * w[j]);
  if (i == j) v += c_d * wd[i];
  return v;
}

Matrix QuantileHessian::dense() const {
  const Eigen::Index N = w.size();
  Matrix H = c_ww * (w * w.transpose());
  H.noalias() += c_x * (w * wd.transpose() + wd * w.transpose());
  H.diagonal() += c_d * wd;
  (void)N;
  return H;
}

Vector QuantileHessian::apply(const Vector& x) const {
  const double wx = w.dot(x);
  const double wdx = wd.dot(x);
  return c_ww * wx * w + c_x * (wdx * w + wx * wd) + c_d * wd.cwiseProduct(x);
}

QuantileHessian quantile_hessian(const QuantileEval& q) {
  if (!(q.W < 0.0)) throw std::invalid_argument("quantile_hessian: invalid eval");
  QuantileHessian h;
  h.w = q.weights;
  h.wd = q.weight_d;
  const double W = q.W;
  h.c_ww = q.W_d / (W * W * W);
  h.c_x = -1.0 / (W * W);
  h.c_d = 1.0 / W;
  return h;
}

}  // namespace ccq
