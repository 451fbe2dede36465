#include <cmath>
#include <stdexcept>

#include "ccq/model.hpp"
#include "ccq/rng.hpp"

namespace ccq {

namespace {

Matrix zero_hess(int n) { return Matrix::Zero(n, n); }

// Box rows x_j <= 1 and -x_j <= 0 for the first nb coordinates, appended
// after `extra` leading rows filled by the caller.
void append_box_rows(Vector& gv, const Vector& x, int nb, int extra) {
  for (int j = 0; j < nb; ++j) {
    gv[extra + j] = x[j] - 1.0;
    gv[extra + nb + j] = -x[j];
  }
}

void append_box_jac(Matrix& J, int nb, int extra) {
  for (int j = 0; j < nb; ++j) {
    J(extra + j, j) = 1.0;
    J(extra + nb + j, j) = -1.0;
  }
}

}  // namespace

Instance builtin_nonconvex1d() {
  Instance inst;
  inst.name = "nonconvex1d";
  inst.alpha = 0.05;
  inst.generator_id = "normal_diag";
  Matrix sigma(2, 1);
  sigma << std::sqrt(3.0), 12.0;  // N(0,3), N(0,144) read as variances
  inst.gen_params.mat["sigma"] = sigma;

  ProblemSpec ps;
  ps.n = 2;
  ps.p = 0;
  ps.m = 1;
  ps.s = 2;
  ps.f = [](const Vector& x) { return x[1]; };
  ps.grad_f = [](const Vector&) { return (Vector(2) << 0.0, 1.0).finished(); };
  ps.hess_f = [](const Vector&) { return zero_hess(2); };
  ps.g = [](const Vector&) { return Vector(0); };
  ps.g_jac = [](const Vector&) { return Matrix(0, 2); };
  ps.g_hess = [](const Vector&, int) -> Matrix {
    throw std::out_of_range("nonconvex1d has no deterministic rows");
  };
  ps.c = [](const Vector& x, const Vector& xi) {
    const double t = x[0];
    Vector v(1);
    v[0] = 0.25 * t * t * t * t - t * t * t / 3.0 - t * t + 0.2 * t - 19.5 +
           xi[0] * t + xi[1] - x[1];
    return v;
  };
  ps.c_jac = [](const Vector& x, const Vector& xi) {
    const double t = x[0];
    Matrix J(1, 2);
    J(0, 0) = t * t * t - t * t - 2.0 * t + 0.2 + xi[0];
    J(0, 1) = -1.0;
    return J;
  };
  ps.c_hess = [](const Vector& x, const Vector&, int) {
    const double t = x[0];
    Matrix H = zero_hess(2);
    H(0, 0) = 3.0 * t * t - 2.0 * t - 2.0;
    return H;
  };
  inst.ps = ps;
  inst.x0 = (Vector(2) << 0.0, 2.5).finished();
  return inst;
}

Instance builtin_reinsurance(int n, std::uint64_t instance_seed) {
  Instance inst;
  inst.name = "reinsurance";
  inst.alpha = 0.05;
  inst.generator_id = "lognormal_bernoulli";

  // Synthetic contract book.  The loss of contract j is
  // Bernoulli(q) * LogNormal(mu_j, sigma_j); premiums carry a uniform
  // loading over the expected loss.
  Xoshiro256 rng(instance_seed, 0x5151ULL);
  Matrix mu(n, 1), sg(n, 1);
  Vector prem(n);
  const double q = 0.2;
  for (int j = 0; j < n; ++j) {
    mu(j, 0) = 1.5 + 1.5 * rng.next_uniform();
    sg(j, 0) = 0.5 + 1.0 * rng.next_uniform();
    const double loading = 0.1 + 0.4 * rng.next_uniform();
    prem[j] = (1.0 + loading) * q * std::exp(mu(j, 0) + 0.5 * sg(j, 0) * sg(j, 0));
  }
  const double prem_floor = 0.1 * prem.sum();
  inst.gen_params.scalar["q"] = q;
  inst.gen_params.mat["mu"] = mu;
  inst.gen_params.mat["sigma"] = sg;

  ProblemSpec ps;
  ps.n = n + 1;  // (x in [0,1]^n, z)
  ps.p = 2 * n + 1;
  ps.m = 1;
  ps.s = n;
  const int nv = ps.n;
  ps.f = [nv](const Vector& x) { return x[nv - 1]; };
  ps.grad_f = [nv](const Vector&) {
    Vector v = Vector::Zero(nv);
    v[nv - 1] = 1.0;
    return v;
  };
  ps.hess_f = [nv](const Vector&) { return zero_hess(nv); };
  ps.g = [n, prem, prem_floor](const Vector& x) {
    Vector gv(2 * n + 1);
    gv[0] = prem_floor - prem.dot(x.head(n));
    append_box_rows(gv, x, n, 1);
    return gv;
  };
  ps.g_jac = [n, nv, prem](const Vector&) {
    Matrix J = Matrix::Zero(2 * n + 1, nv);
    J.row(0).head(n) = -prem.transpose();
    append_box_jac(J, n, 1);
    return J;
  };
  ps.g_hess = [nv](const Vector&, int) { return zero_hess(nv); };
  ps.c = [n, nv](const Vector& x, const Vector& xi) {
    Vector v(1);
    v[0] = xi.dot(x.head(n)) - x[nv - 1];
    return v;
  };
  ps.c_jac = [n, nv](const Vector&, const Vector& xi) {
    Matrix J(1, nv);
    J.row(0).head(n) = xi.transpose();
    J(0, n) = -1.0;
    return J;
  };
  ps.c_hess = [nv](const Vector&, const Vector&, int) { return zero_hess(nv); };
  inst.ps = ps;
  inst.x0 = Vector::Zero(nv);
  inst.x0.head(n).setConstant(0.5);
  return inst;
}

Instance builtin_knapsack(int n, int m, double availability_q,
                          std::uint64_t instance_seed) {
  Instance inst;
  inst.name = "knapsack";
  inst.alpha = 0.05;
  inst.generator_id = "knapsack_weights";

  // Deterministic data in the style of the mk-* instance family: integer
  // mean weights in [1,100], profits in [10,100], capacities at half the
  // mean row load.
  Xoshiro256 rng(instance_seed, 0x6b6bULL);
  Matrix mu(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      mu(i, j) = 1.0 + std::floor(rng.next_uniform() * 100.0);
  // profits live on a [0.1, 1] scale so the default exact-penalty weight
  // dominates every multiplier of the box and weight rows
  Vector profit(n);
  for (int j = 0; j < n; ++j) profit[j] = 0.1 + 0.9 * rng.next_uniform();
  Vector cap(m);
  for (int i = 0; i < m; ++i) cap[i] = 0.5 * mu.row(i).sum();

  inst.gen_params.mat["mu"] = mu;
  inst.gen_params.scalar["q"] = availability_q;
  inst.gen_params.scalar["cv"] = 0.1;

  ProblemSpec ps;
  ps.n = n;
  ps.p = 2 * n;
  ps.m = m;
  ps.s = m * n;
  ps.f = [profit](const Vector& x) { return -profit.dot(x); };
  ps.grad_f = [profit](const Vector&) { return Vector(-profit); };
  ps.hess_f = [n](const Vector&) { return zero_hess(n); };
  ps.g = [n](const Vector& x) {
    Vector gv(2 * n);
    append_box_rows(gv, x, n, 0);
    return gv;
  };
  ps.g_jac = [n](const Vector&) {
    Matrix J = Matrix::Zero(2 * n, n);
    append_box_jac(J, n, 0);
    return J;
  };
  ps.g_hess = [n](const Vector&, int) { return zero_hess(n); };
  ps.c = [n, m, cap](const Vector& x, const Vector& xi) {
    Vector v(m);
    for (int i = 0; i < m; ++i)
      v[i] = xi.segment(i * n, n).dot(x) - cap[i];
    return v;
  };
  ps.c_jac = [n, m](const Vector&, const Vector& xi) {
    Matrix J(m, n);
    for (int i = 0; i < m; ++i) J.row(i) = xi.segment(i * n, n).transpose();
    return J;
  };
  ps.c_hess = [n](const Vector&, const Vector&, int) { return zero_hess(n); };
  inst.ps = ps;
  inst.x0 = Vector::Zero(n);
  return inst;
}

Instance builtin_instance(const std::string& name) {
  if (name == "nonconvex1d") return builtin_nonconvex1d();
  if (name == "reinsurance") return builtin_reinsurance();
  if (name == "knapsack") return builtin_knapsack();
  throw std::invalid_argument("unknown builtin instance '" + name + "'");
}

}  // namespace ccq
