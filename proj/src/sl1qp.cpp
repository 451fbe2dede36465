#include "ccq/sl1qp.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ccq {

namespace {

double pos(double v) { return v > 0.0 ? v : 0.0; }

// Values + jacobians at x; the quantile part is skipped for the robust solve.
IterateCache build_cache_impl(const ProblemSpec& ps, const ScenarioSet& S,
                              const Vector& x, const QuantileConfig* cfg,
                              const SmoothingKernel* k) {
  IterateCache ic;
  ic.x = x;
  ic.f = ps.f(x);
  ic.grad_f = ps.grad_f(x);
  if (ps.p > 0) {
    ic.g = ps.g(x);
    ic.g_jac = ps.g_jac(x);
  } else {
    ic.g = Vector(0);
    ic.g_jac = Matrix(0, ps.n);
  }

  const int N = S.N();
  ic.c.resize(N);
  ic.c_jac.resize(N);
  ic.mr.values = Vector(N);
  ic.mr.argmax_rows.resize(N);
  for (int i = 0; i < N; ++i) {
    const Vector xi = S.data.row(i);
    ic.c[i] = ps.c(x, xi);
    ic.c_jac[i] = ps.c_jac(x, xi);
    int best = 0;
    for (int j = 1; j < ps.m; ++j)
      if (ic.c[i][j] > ic.c[i][best]) best = j;
    if (!std::isfinite(ic.c[i][best]))
      throw std::runtime_error("non-finite constraint value at scenario " +
                               std::to_string(i));
    ic.mr.values[i] = ic.c[i][best];
    ic.mr.argmax_rows[i] = best;
  }
  if (cfg != nullptr && N > 0) {
    ic.qe = solve_quantile(ic.mr.values, *cfg, *k);
    ic.q_grad = quantile_gradient(ic.qe);
  } else {
    ic.q_grad = Vector::Zero(N);
  }
  return ic;
}

Matrix indicator_rows(const MaxReduction& mr, int m) {
  Matrix mu_bar = Matrix::Zero(mr.values.size(), m);
  for (int i = 0; i < mr.values.size(); ++i) mu_bar(i, mr.argmax_rows[i]) = 1.0;
  return mu_bar;
}

}  // namespace

void TrParams::validate() const {
  if (!(delta0 > 0 && delta0 < delta_max))
    throw std::invalid_argument("need 0 < delta0 < delta_max");
  if (!(eta > 0 && eta < 1)) throw std::invalid_argument("eta must be in (0,1)");
  if (!(shrink > 0 && shrink < 1))
    throw std::invalid_argument("shrink must be in (0,1)");
  if (!(expand > 1)) throw std::invalid_argument("expand must exceed 1");
  if (1.0 / expand > shrink)
    throw std::invalid_argument("need 1/expand <= shrink");
  if (penalty < 0) throw std::invalid_argument("penalty must be nonnegative");
}

IterateCache build_cache(const ProblemSpec& ps, const ScenarioSet& S,
                         const Vector& x, const QuantileConfig& cfg,
                         const SmoothingKernel& k) {
  return build_cache_impl(ps, S, x, &cfg, &k);
}

double penalty_value(const ProblemSpec& ps, const ScenarioSet& S, const Vector& x,
                     double pi, const QuantileConfig& cfg,
                     const SmoothingKernel& k) {
  double viol = 0.0;
  if (ps.p > 0) {
    const Vector g = ps.g(x);
    for (int j = 0; j < ps.p; ++j) viol += pos(g[j]);
  }
  if (S.N() > 0) {
    const MaxReduction mr = eval_scenario_values(ps, x, S);
    viol += pos(solve_quantile(mr.values, cfg, k).value);
  }
  return ps.f(x) + pi * viol;
}

double model_value(const IterateCache& ic, const Matrix& H, const Vector& d,
                   double pi) {
  double m = ic.f + ic.grad_f.dot(d) + 0.5 * d.dot(H * d);
  double viol = 0.0;
  const Vector gl = ic.g + ic.g_jac * d;
  for (int j = 0; j < gl.size(); ++j) viol += pos(gl[j]);
  const int N = static_cast<int>(ic.c.size());
  if (N > 0) {
    double q_tilde = ic.qe.value;
    for (int i = 0; i < N; ++i) {
      if (ic.q_grad[i] == 0.0) continue;
      const Vector lin = ic.c[i] + ic.c_jac[i] * d;
      q_tilde += ic.q_grad[i] * (lin.maxCoeff() - ic.mr.values[i]);
    }
    viol += pos(q_tilde);
  }
  return m + pi * viol;
}

Matrix build_hessian(const ProblemSpec& ps, const ScenarioSet& S,
                     const IterateCache& ic, const Vector& nu, double lambda,
                     const Matrix& mu_bar) {
  Matrix H = ps.hess_f(ic.x);
  for (int j = 0; j < ps.p; ++j)
    if (nu.size() > j && nu[j] != 0.0) H += nu[j] * ps.g_hess(ic.x, j);

  const int N = S.N();
  if (N == 0 || lambda == 0.0) return H;

  // curvature of the constraint rows, weighted by lambda [grad Q]_i mu_bar_ij
  for (int i = 0; i < N; ++i) {
    if (ic.q_grad[i] == 0.0) continue;
    const Vector xi = S.data.row(i);
    for (int j = 0; j < ps.m; ++j) {
      const double wgt = lambda * ic.q_grad[i] * mu_bar(i, j);
      if (wgt != 0.0) H += wgt * ps.c_hess(ic.x, xi, j);
    }
  }

  // lambda * M (grad^2 Q) M^T with M_col_i = c_jac_i^T mu_bar_i, using the
  // rank-2-plus-diagonal factorization of the quantile Hessian
  const QuantileHessian QH = quantile_hessian(ic.qe);
  Vector Mw = Vector::Zero(ps.n);
  Vector Mwd = Vector::Zero(ps.n);
  Matrix Mdiag = Matrix::Zero(ps.n, ps.n);
  for (int i = 0; i < N; ++i) {
    if (QH.w[i] == 0.0 && QH.wd[i] == 0.0) continue;
    const Vector col = ic.c_jac[i].transpose() * mu_bar.row(i).transpose();
    Mw += QH.w[i] * col;
    Mwd += QH.wd[i] * col;
    Mdiag += QH.wd[i] * (col * col.transpose());
  }
  H += lambda * (QH.c_ww * (Mw * Mw.transpose()) +
                 QH.c_x * (Mw * Mwd.transpose() + Mwd * Mw.transpose()) +
                 QH.c_d * Mdiag);
  return H;
}

Matrix recover_mu_bar(const QpSolution& sol, const IterateCache& ic) {
  const int N = static_cast<int>(ic.c.size());
  const int m = N > 0 ? static_cast<int>(ic.c[0].size()) : 0;
  Matrix mu_bar = Matrix::Zero(N, m);
  const double thresh = 1e-12 * (1.0 + sol.lambda);
  for (int i = 0; i < N; ++i) {
    const double denom = sol.lambda * ic.q_grad[i];
    if (denom > thresh) {
      for (int j = 0; j < m; ++j) mu_bar(i, j) = pos(sol.mu(i, j) / denom);
    } else {
      mu_bar(i, ic.mr.argmax_rows[i]) = 1.0;
    }
  }
  return mu_bar;
}

KktResidual kkt_residual(const ProblemSpec& ps, const ScenarioSet& S,
                         const IterateCache& ic, const Vector& nu, double lambda,
                         const Matrix& mu_bar, const QuantileConfig& cfg,
                         const SmoothingKernel& k) {
  KktResidual r;
  Vector grad = ic.grad_f;
  if (ps.p > 0) grad += ic.g_jac.transpose() * nu;

  const int N = S.N();
  if (N > 0 && lambda != 0.0) {
    // grad Q is taken at the mu-smoothed values C-bar_i = mu_bar_i' c_i
    Vector cbar(N);
    for (int i = 0; i < N; ++i) cbar[i] = mu_bar.row(i).dot(ic.c[i]);
    const Vector gq = quantile_gradient(solve_quantile(cbar, cfg, k));
    for (int i = 0; i < N; ++i) {
      if (gq[i] == 0.0) continue;
      grad += lambda * gq[i] *
              (ic.c_jac[i].transpose() * mu_bar.row(i).transpose());
    }
  }
  r.grad_norm = grad.lpNorm<Eigen::Infinity>();
  r.g_viol = ps.p > 0 ? pos(ic.g.maxCoeff()) : 0.0;
  r.q_viol = N > 0 ? pos(ic.qe.value) : 0.0;
  return r;
}

namespace {

// One trust-region loop serves both the quantile-penalty and the robust
// per-scenario-penalty problems; `robust` switches the QP mode, the penalty
// and model evaluations, and the multiplier bookkeeping.
SolveReport run_trust_region(const ProblemSpec& ps, const ScenarioSet& S,
                             const Vector& x0, const QuantileConfig* cfg,
                             const SmoothingKernel* k, const TrParams& tr,
                             const std::optional<WarmStart>& warm, bool robust) {
  tr.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const int N = S.N();
  const double pi = tr.penalty;

  auto robust_penalty = [&](const IterateCache& ic) {
    double viol = 0.0;
    for (int j = 0; j < ic.g.size(); ++j) viol += pos(ic.g[j]);
    for (int i = 0; i < N; ++i) viol += pos(ic.mr.values[i]);
    return ic.f + pi * viol;
  };
  auto robust_model = [&](const IterateCache& ic, const Matrix& H,
                          const Vector& d) {
    double m = ic.f + ic.grad_f.dot(d) + 0.5 * d.dot(H * d);
    double viol = 0.0;
    const Vector gl = ic.g + ic.g_jac * d;
    for (int j = 0; j < gl.size(); ++j) viol += pos(gl[j]);
    for (int i = 0; i < N; ++i) viol += pos((ic.c[i] + ic.c_jac[i] * d).maxCoeff());
    return m + pi * viol;
  };
  auto robust_kkt = [&](const IterateCache& ic, const Vector& nu,
                        const Matrix& mu) {
    KktResidual r;
    Vector grad = ic.grad_f;
    if (ps.p > 0) grad += ic.g_jac.transpose() * nu;
    for (int i = 0; i < N; ++i)
      grad += ic.c_jac[i].transpose() * mu.row(i).transpose();
    r.grad_norm = grad.lpNorm<Eigen::Infinity>();
    r.g_viol = ps.p > 0 ? pos(ic.g.maxCoeff()) : 0.0;
    r.q_viol = N > 0 ? pos(ic.mr.values.maxCoeff()) : 0.0;
    return r;
  };
  auto robust_hessian = [&](const IterateCache& ic, const Vector& nu,
                            const Matrix& mu) {
    Matrix H = ps.hess_f(ic.x);
    for (int j = 0; j < ps.p; ++j)
      if (nu.size() > j && nu[j] != 0.0) H += nu[j] * ps.g_hess(ic.x, j);
    for (int i = 0; i < N; ++i) {
      const Vector xi = S.data.row(i);
      for (int j = 0; j < ps.m; ++j)
        if (mu(i, j) != 0.0) H += mu(i, j) * ps.c_hess(ic.x, xi, j);
    }
    return H;
  };

  SolveReport rep;
  rep.epsilon = robust ? 0.0 : k->epsilon();

  IterateCache ic = build_cache_impl(ps, S, x0, robust ? nullptr : cfg,
                                     robust ? nullptr : k);
  Vector nu = Vector::Zero(ps.p);
  double lambda = 0.0;
  Matrix mu_bar = N > 0 ? indicator_rows(ic.mr, ps.m) : Matrix(0, ps.m);
  Matrix mu = Matrix::Zero(N, ps.m);  // raw scenario duals (robust mode)
  if (warm) {
    if (warm->nu.size() == ps.p) nu = warm->nu;
    lambda = warm->lambda;
    if (warm->mu_bar.rows() == N && warm->mu_bar.cols() == ps.m)
      mu_bar = warm->mu_bar;
  }

  double phi;
  if (robust) {
    phi = robust_penalty(ic);
  } else {
    double viol = 0.0;
    for (int j = 0; j < ic.g.size(); ++j) viol += pos(ic.g[j]);
    if (N > 0) viol += pos(ic.qe.value);
    phi = ic.f + pi * viol;
  }
  if (!std::isfinite(phi)) throw std::runtime_error("non-finite penalty at x0");

  double delta = tr.delta0;
  rep.status = "max_iters";
  int iter = 0;
  for (; iter < tr.max_outer_iters; ++iter) {
    const KktResidual res = robust ? robust_kkt(ic, nu, mu)
                                   : kkt_residual(ps, S, ic, nu, lambda, mu_bar,
                                                  *cfg, *k);
    if (res.grad_norm <= tr.tol_kkt && res.g_viol <= tr.tol_feas_g &&
        res.q_viol <= tr.tol_feas_q) {
      rep.converged = true;
      rep.status = "converged";
      rep.kkt = res;
      break;
    }

    const Matrix H_raw = robust ? robust_hessian(ic, nu, mu)
                                : build_hessian(ps, S, ic, nu, lambda, mu_bar);
    const auto [H, shift] = regularize_hessian(H_raw);
    (void)shift;

    QpSubproblem qp;
    qp.H = H;
    qp.grad_f = ic.grad_f;
    qp.penalty = pi;
    qp.radius = delta;
    qp.g_jac = ic.g_jac;
    qp.g_val = ic.g;
    qp.c_jac = ic.c_jac;
    qp.c_val = ic.c;
    qp.scenario_penalty_mode = robust;
    if (!robust && N > 0) {
      qp.q_grad = ic.q_grad;
      qp.c_max = ic.mr.values;
      qp.q_value = ic.qe.value;
    }
    const QpSolution sol = solve_qp(qp, tr.qp_tol, tr.qp_max_iters);
    if (sol.status == QpStatus::numerical_failure) {
      // treat an unusable subproblem like a rejected step: a smaller radius
      // gives a better-conditioned QP
      delta *= tr.shrink;
      if (delta < 1e-14 * std::max(1.0, ic.x.lpNorm<Eigen::Infinity>()))
        throw std::runtime_error("QP subproblem failed at outer iteration " +
                                 std::to_string(iter));
      continue;
    }

    const Vector d = sol.d;
    const double dnorm = d.lpNorm<Eigen::Infinity>();
    if (dnorm <= std::max(10.0 * tr.qp_tol, 1e-10) *
                     std::max(1.0, ic.x.lpNorm<Eigen::Infinity>())) {
      // a zero step means the iterate is stationary for the model; adopt the
      // QP multipliers so the reported residual reflects them
      nu = sol.nu;
      lambda = sol.lambda;
      if (robust)
        mu = sol.mu;
      else if (N > 0)
        mu_bar = recover_mu_bar(sol, ic);
      rep.converged = true;
      rep.status = "stationary";
      rep.kkt = robust ? robust_kkt(ic, nu, mu)
                       : kkt_residual(ps, S, ic, nu, lambda, mu_bar, *cfg, *k);
      break;
    }

    const double m0 = robust ? robust_model(ic, H, Vector::Zero(ps.n))
                             : model_value(ic, H, Vector::Zero(ps.n), pi);
    const double md = robust ? robust_model(ic, H, d) : model_value(ic, H, d, pi);
    double denom = m0 - md;
    const Vector x_trial = ic.x + d;
    double phi_trial;
    if (robust) {
      IterateCache trial = build_cache_impl(ps, S, x_trial, nullptr, nullptr);
      phi_trial = robust_penalty(trial);
    } else {
      phi_trial = penalty_value(ps, S, x_trial, pi, *cfg, *k);
    }
    if (!std::isfinite(phi_trial))
      throw std::runtime_error("non-finite penalty at trial point, iteration " +
                               std::to_string(iter));
    const double rho = (phi - phi_trial) / std::max(denom, 1e-300);

    IterRecord rec;
    rec.iter = iter;
    rec.phi = phi;
    rec.delta = delta;
    rec.step_norm = dnorm;
    rec.rho = rho;
    rec.grad_norm = res.grad_norm;
    rec.g_viol = res.g_viol;
    rec.q_viol = res.q_viol;

    if (rho < tr.eta || denom <= 0.0) {
      delta = tr.shrink * std::min(delta, dnorm);
      rec.accepted = false;
    } else {
      nu = sol.nu;
      lambda = sol.lambda;
      if (robust)
        mu = sol.mu;
      else if (N > 0)
        // recovery divides by lambda [grad Q]_i taken at the iterate the QP
        // was built from, so it happens before the cache moves to x + d
        mu_bar = recover_mu_bar(sol, ic);
      ic = build_cache_impl(ps, S, x_trial, robust ? nullptr : cfg,
                            robust ? nullptr : k);
      phi = phi_trial;
      if (dnorm >= delta * (1.0 - 1e-10))
        delta = std::min(tr.expand * delta, tr.delta_max);
      rec.accepted = true;
    }
    rep.trace.push_back(rec);
  }

  rep.iterations = iter;
  rep.x = ic.x;
  rep.nu = nu;
  rep.lambda = lambda;
  rep.mu_bar = robust ? mu : mu_bar;
  rep.objective = ic.f;
  rep.phi = phi;
  if (!rep.converged)
    rep.kkt = robust ? robust_kkt(ic, nu, mu)
                     : kkt_residual(ps, S, ic, nu, lambda, mu_bar, *cfg, *k);
  rep.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t_start)
                    .count();
  return rep;
}

}  // namespace

SolveReport solve(const ProblemSpec& ps, const ScenarioSet& S, const Vector& x0,
                  const QuantileConfig& cfg, const SmoothingKernel& k,
                  const TrParams& tr, const std::optional<WarmStart>& warm) {
  return run_trust_region(ps, S, x0, &cfg, &k, tr, warm, false);
}

SolveReport solve_robust(const ProblemSpec& ps, const ScenarioSet& S,
                         const Vector& x0, const TrParams& tr) {
  return run_trust_region(ps, S, x0, nullptr, nullptr, tr, std::nullopt, true);
}

void write_trace_csv(const SolveReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "iter,phi,delta,step_norm,rho,grad_norm,g_viol,q_viol,accepted\n";
  char buf[512];
  for (const IterRecord& r : rep.trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  r.iter, r.phi, r.delta, r.step_norm, r.rho, r.grad_norm,
                  r.g_viol, r.q_viol, r.accepted ? 1 : 0);
    out << buf;
  }
}

}  // namespace ccq
