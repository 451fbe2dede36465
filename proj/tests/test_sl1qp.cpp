#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <vector>

#include "ccq/model.hpp"
#include "ccq/quantile.hpp"
#include "ccq/rng.hpp"
#include "ccq/sl1qp.hpp"

using namespace ccq;

namespace {

ScenarioSet empty_scenarios() {
  ScenarioSet S;
  S.data = Matrix(0, 1);
  return S;
}

// min 1/2 |x - a|^2 subject to x_1 <= 0; optimum projects a onto the
// halfspace.
ProblemSpec projection_problem(const Vector& a) {
  const int n = static_cast<int>(a.size());
  ProblemSpec ps;
  ps.n = n;
  ps.p = 1;
  ps.m = 0;
  ps.s = 1;
  ps.f = [a](const Vector& x) { return 0.5 * (x - a).squaredNorm(); };
  ps.grad_f = [a](const Vector& x) { return Vector(x - a); };
  ps.hess_f = [n](const Vector&) { return Matrix::Identity(n, n); };
  ps.g = [](const Vector& x) { return Vector::Constant(1, x[0]); };
  ps.g_jac = [n](const Vector&) {
    Matrix J = Matrix::Zero(1, n);
    J(0, 0) = 1.0;
    return J;
  };
  ps.g_hess = [n](const Vector&, int) { return Matrix::Zero(n, n); };
  ps.c = [](const Vector&, const Vector&) { return Vector(0); };
  ps.c_jac = [n](const Vector&, const Vector&) { return Matrix(0, n); };
  ps.c_hess = [n](const Vector&, const Vector&, int) { return Matrix::Zero(n, n); };
  return ps;
}

}  // namespace

TEST_CASE("penalty value formula") {
  QuantileConfig cfg;
  SmoothingKernel k(1.0);

  // 1-D deterministic: f = 0, g = x - 1, pi = 10, x = 2 -> 10
  ProblemSpec ps;
  ps.n = 1;
  ps.p = 1;
  ps.m = 0;
  ps.s = 1;
  ps.f = [](const Vector&) { return 0.0; };
  ps.grad_f = [](const Vector&) { return Vector::Zero(1); };
  ps.hess_f = [](const Vector&) { return Matrix::Zero(1, 1); };
  ps.g = [](const Vector& x) { return Vector::Constant(1, x[0] - 1.0); };
  ps.g_jac = [](const Vector&) { return Matrix::Constant(1, 1, 1.0); };
  ps.g_hess = [](const Vector&, int) { return Matrix::Zero(1, 1); };
  ps.c = [](const Vector&, const Vector&) { return Vector(0); };
  ps.c_jac = [](const Vector&, const Vector&) { return Matrix(0, 1); };
  ps.c_hess = [](const Vector&, const Vector&, int) { return Matrix::Zero(1, 1); };

  const ScenarioSet S = empty_scenarios();
  CHECK(penalty_value(ps, S, Vector::Constant(1, 2.0), 10.0, cfg, k) ==
        doctest::Approx(10.0).epsilon(1e-14));
  // feasible point: zero penalty
  CHECK(penalty_value(ps, S, Vector::Constant(1, 0.5), 10.0, cfg, k) ==
        doctest::Approx(0.0).epsilon(1e-14));
  // pi = 0 always gives f
  CHECK(penalty_value(ps, S, Vector::Constant(1, 7.0), 0.0, cfg, k) ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("model equals the penalty at d = 0 and is exact for linear data") {
  const Instance inst = builtin_knapsack(8, 3);
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 60, 4);
  QuantileConfig cfg;
  cfg.alpha = inst.alpha;
  SmoothingKernel k(5.0);
  Xoshiro256 rng(17, 0);
  Vector x(inst.ps.n);
  for (int i = 0; i < inst.ps.n; ++i) x[i] = rng.next_uniform();

  const IterateCache ic = build_cache(inst.ps, S, x, cfg, k);
  const Matrix H = Matrix::Zero(inst.ps.n, inst.ps.n);
  const double pi = 10.0;
  CHECK(model_value(ic, H, Vector::Zero(inst.ps.n), pi) ==
        doctest::Approx(penalty_value(inst.ps, S, x, pi, cfg, k)).epsilon(1e-12));
}

TEST_CASE("model error decays quadratically in the step") {
  // Prop 5.3-style check: |phi(x+d) - m(x,H;d)| / |d|^2 stays bounded
  const Instance inst = builtin_knapsack(6, 4);
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 80, 21);
  QuantileConfig cfg;
  cfg.alpha = inst.alpha;
  SmoothingKernel k(8.0);
  const double pi = 10.0;
  Xoshiro256 rng(23, 5);

  for (int rep = 0; rep < 20; ++rep) {
    Vector x(inst.ps.n), dir(inst.ps.n);
    for (int i = 0; i < inst.ps.n; ++i) {
      x[i] = rng.next_uniform();
      dir[i] = rng.next_normal();
    }
    dir /= dir.norm();
    const IterateCache ic = build_cache(inst.ps, S, x, cfg, k);
    const Matrix H = build_hessian(inst.ps, S, ic, Vector::Zero(inst.ps.p), 1.0,
                                   Matrix::Ones(S.N(), inst.ps.m) / inst.ps.m);
    std::vector<double> ratios;
    for (double scale : {1e-1, 1e-2, 1e-3, 1e-4}) {
      const Vector d = scale * dir;
      const double err = std::fabs(penalty_value(inst.ps, S, x + d, pi, cfg, k) -
                                   model_value(ic, H, d, pi));
      ratios.push_back(err / (scale * scale));
    }
    const double hi = *std::max_element(ratios.begin(), ratios.end());
    // err / |d|^2 stays uniformly bounded as the step shrinks; the constant
    // absorbs the curvature of f, c and the smoothed quantile at this point
    CHECK(hi <= 1e3);
  }
}

TEST_CASE("hessian assembly against a dense oracle") {
  const Instance inst = builtin_nonconvex1d();
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 50, 3);
  QuantileConfig cfg;
  cfg.alpha = 0.05;
  SmoothingKernel k(2.0);
  const Vector x = (Vector(2) << 0.6, -3.0).finished();
  const IterateCache ic = build_cache(inst.ps, S, x, cfg, k);

  // lambda = 0 drops every stochastic term
  const Matrix H0 = build_hessian(inst.ps, S, ic, Vector(0), 0.0,
                                  Matrix::Ones(50, 1));
  CHECK((H0 - inst.ps.hess_f(x)).lpNorm<Eigen::Infinity>() == 0.0);

  const double lambda = 1.7;
  const Matrix mu_bar = Matrix::Ones(50, 1);
  const Matrix H = build_hessian(inst.ps, S, ic, Vector(0), lambda, mu_bar);

  // dense double-loop oracle
  Matrix want = inst.ps.hess_f(x);
  const QuantileHessian QH = quantile_hessian(ic.qe);
  const Matrix QD = QH.dense();
  Matrix M(2, 50);
  for (int i = 0; i < 50; ++i) {
    const Vector xi = S.data.row(i).transpose();
    want += lambda * ic.q_grad[i] * inst.ps.c_hess(x, xi, 0);
    M.col(i) = inst.ps.c_jac(x, xi).transpose() * mu_bar.row(i).transpose();
  }
  want += lambda * M * QD * M.transpose();
  CHECK((H - want).lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, want.norm()));
}

TEST_CASE("hessian matches finite differences of the lagrangian gradient") {
  const Instance inst = builtin_nonconvex1d();
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 30, 9);
  QuantileConfig cfg;
  cfg.alpha = 0.1;
  SmoothingKernel k(3.0);
  const double lambda = 0.8;
  const Matrix mu_bar = Matrix::Ones(30, 1);
  const Vector x = (Vector(2) << 1.1, -8.0).finished();

  // with m = 1 and mu_bar = 1, C-bar = C^N and the lagrangian gradient is
  // grad f + lambda * sum_i [grad Q]_i grad c_i; differentiate numerically
  auto lag_grad = [&](const Vector& xx) {
    const IterateCache c = build_cache(inst.ps, S, xx, cfg, k);
    Vector g = c.grad_f;
    for (int i = 0; i < 30; ++i)
      g += lambda * c.q_grad[i] *
           (c.c_jac[i].transpose() * mu_bar.row(i).transpose());
    return g;
  };
  const IterateCache ic = build_cache(inst.ps, S, x, cfg, k);
  const Matrix H = build_hessian(inst.ps, S, ic, Vector(0), lambda, mu_bar);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const Vector fd = (lag_grad(xp) - lag_grad(xm)) / (2 * h);
    for (int j = 0; j < 2; ++j)
      CHECK(H(j, i) == doctest::Approx(fd[j]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("mu-bar recovery") {
  const Instance inst = builtin_nonconvex1d();
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 12, 2);
  QuantileConfig cfg;
  cfg.alpha = 0.25;
  SmoothingKernel k(1.0);
  const Vector x = (Vector(2) << 0.0, -10.0).finished();
  const IterateCache ic = build_cache(inst.ps, S, x, cfg, k);

  QpSolution sol;
  sol.lambda = 0.0;
  sol.mu = Matrix::Ones(12, 1);
  // lambda = 0: indicator fallback everywhere (m = 1 -> all ones)
  Matrix mb = recover_mu_bar(sol, ic);
  CHECK((mb - Matrix::Ones(12, 1)).lpNorm<Eigen::Infinity>() == 0.0);

  // consistent duals mu_i = lambda q_i scale back to exactly one
  sol.lambda = 2.0;
  for (int i = 0; i < 12; ++i) sol.mu(i, 0) = sol.lambda * ic.q_grad[i];
  mb = recover_mu_bar(sol, ic);
  for (int i = 0; i < 12; ++i) CHECK(mb(i, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("deterministic projection problem solves in a few iterations") {
  const Vector a = (Vector(2) << 2.0, -1.0).finished();
  const ProblemSpec ps = projection_problem(a);
  const ScenarioSet S = empty_scenarios();
  QuantileConfig cfg;
  SmoothingKernel k(1.0);
  TrParams tr;
  tr.delta0 = 4.0;  // wide enough that the first step is unrestricted
  const SolveReport rep = solve(ps, S, (Vector(2) << 1.0, 1.0).finished(), cfg,
                                k, tr);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 3);
  CHECK(rep.x[0] == doctest::Approx(0.0).epsilon(1e-8).scale(1.0));
  CHECK(rep.x[1] == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(rep.kkt.grad_norm <= 1e-6);

  // restarting at the solution terminates without taking a step
  const SolveReport again = solve(ps, S, rep.x, cfg, k, tr);
  CHECK(again.converged);
  CHECK(again.iterations == 0);
}

TEST_CASE("nonconvex1d runs converge with loop invariants intact") {
  const Instance inst = builtin_nonconvex1d();
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 300, 1);
  QuantileConfig cfg;
  cfg.alpha = inst.alpha;
  SmoothingKernel k(1.0);
  TrParams tr;
  for (double t : {-1.0, 0.5, 2.0}) {
    const SolveReport rep =
        solve(inst.ps, S, (Vector(2) << t, 2.5).finished(), cfg, k, tr);
    CHECK(rep.converged);
    CHECK(rep.kkt.grad_norm <= 1e-6);
    CHECK(rep.kkt.g_viol <= 1e-6);
    CHECK(rep.kkt.q_viol <= 1e-6);
    // phi non-increasing over accepted steps; nonnegative model decrease
    double prev = std::numeric_limits<double>::infinity();
    for (const IterRecord& r : rep.trace) {
      if (!r.accepted) continue;
      CHECK(r.phi <= prev + 1e-12);
      prev = r.phi;
      CHECK(std::isfinite(r.rho));
    }
    // the penalty term at x* is bounded by pi times the feasibility slack
    CHECK(rep.phi >= rep.objective - 1e-12);
    CHECK(rep.phi - rep.objective <=
          tr.penalty * (tr.tol_feas_g + tr.tol_feas_q) + 1e-12);
  }
}

TEST_CASE("robust solve clears every scenario") {
  const Instance inst = builtin_knapsack(8, 3);
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 40, 6);
  TrParams tr;
  const SolveReport rep = solve_robust(inst.ps, S, inst.x0, tr);
  CHECK(rep.converged);
  const MaxReduction mr = eval_scenario_values(inst.ps, rep.x, S);
  CHECK(mr.values.maxCoeff() <= 1e-6);
  // objective should beat doing nothing whenever x = 0 is feasible
  CHECK(rep.objective <= inst.ps.f(inst.x0) + 1e-9);

  // no stochastic rows: plain NLP solve through the same entry point
  const Vector a = (Vector(2) << 0.5, 3.0).finished();
  const SolveReport nlp = solve_robust(projection_problem(a), empty_scenarios(),
                                       Vector::Zero(2), tr);
  CHECK(nlp.converged);
  CHECK(nlp.x[0] == doctest::Approx(0.0).epsilon(1e-7).scale(1.0));
  CHECK(nlp.x[1] == doctest::Approx(3.0).epsilon(1e-7));
}

TEST_CASE("trace csv round trip shape") {
  SolveReport rep;
  IterRecord r;
  r.iter = 0;
  r.phi = 1.25;
  r.accepted = true;
  rep.trace.push_back(r);
  write_trace_csv(rep, "test_trace_tmp.csv");
  std::ifstream in("test_trace_tmp.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header ==
        "iter,phi,delta,step_norm,rho,grad_norm,g_viol,q_viol,accepted");
  CHECK(row.substr(0, 7) == "0,1.25,");
  std::remove("test_trace_tmp.csv");
}
