#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccq/model.hpp"
#include "ccq/qp.hpp"
#include "ccq/quantile.hpp"

namespace ccq {

// Trust-region parameters.  Defaults follow the experimental setup:
// pi = 10, Delta_max = 1e6, Delta_0 = 1, eta = 1e-8, shrink/expand = 1/2, 2,
// termination thresholds 1e-6.
struct TrParams {
  double penalty = 10.0;
  double delta_max = 1e6;
  double delta0 = 1.0;
  double eta = 1e-8;
  double shrink = 0.5;
  double expand = 2.0;
  double tol_kkt = 1e-6;
  double tol_feas_g = 1e-6;
  double tol_feas_q = 1e-6;
  int max_outer_iters = 200;
  double qp_tol = 1e-9;
  int qp_max_iters = 100;

  void validate() const;
};

// Everything the outer loop needs at one x: values, first derivatives,
// the scenario max reduction, and the smoothed quantile of it.
struct IterateCache {
  Vector x;
  double f = 0.0;
  Vector grad_f;
  Vector g;
  Matrix g_jac;
  std::vector<Vector> c;      // per scenario, size m
  std::vector<Matrix> c_jac;  // per scenario, m x n
  MaxReduction mr;
  QuantileEval qe;            // at mr.values
  Vector q_grad;
};

IterateCache build_cache(const ProblemSpec& ps, const ScenarioSet& S,
                         const Vector& x, const QuantileConfig& cfg,
                         const SmoothingKernel& k);

struct IterRecord {
  int iter = 0;
  double phi = 0.0;
  double delta = 0.0;
  double step_norm = 0.0;
  double rho = 0.0;
  double grad_norm = 0.0;
  double g_viol = 0.0;
  double q_viol = 0.0;
  bool accepted = false;
};

struct KktResidual {
  double grad_norm = 0.0;
  double g_viol = 0.0;
  double q_viol = 0.0;
};

struct SolveReport {
  Vector x;
  Vector nu;
  double lambda = 0.0;
  Matrix mu_bar;  // N x m
  double objective = 0.0;
  double phi = 0.0;
  KktResidual kkt;
  bool converged = false;
  std::string status;
  int iterations = 0;
  std::vector<IterRecord> trace;
  double wall_ms = 0.0;
  double epsilon = 0.0;
  double oos_probability = -1.0;  // filled by tuner/validation when known
};

// phi_pi(x) = f + pi (|[g]+|_1 + [Q_eps(C^N(x))]+), evaluated from scratch.
double penalty_value(const ProblemSpec& ps, const ScenarioSet& S, const Vector& x,
                     double pi, const QuantileConfig& cfg, const SmoothingKernel& k);

// Piecewise-quadratic model of phi_pi around the cached iterate.
double model_value(const IterateCache& ic, const Matrix& H, const Vector& d,
                   double pi);

// Lagrangian Hessian recipe; derivatives of Q_eps are taken at the raw max
// values C^N(x), not the mu-smoothed ones.
Matrix build_hessian(const ProblemSpec& ps, const ScenarioSet& S,
                     const IterateCache& ic, const Vector& nu, double lambda,
                     const Matrix& mu_bar);

// mu_bar_ij = mu_ij / (lambda [grad Q]_i) where the denominator is safely
// positive; otherwise the indicator of the achieving max row.
Matrix recover_mu_bar(const QpSolution& sol, const IterateCache& ic);

KktResidual kkt_residual(const ProblemSpec& ps, const ScenarioSet& S,
                         const IterateCache& ic, const Vector& nu, double lambda,
                         const Matrix& mu_bar, const QuantileConfig& cfg,
                         const SmoothingKernel& k);

struct WarmStart {
  Vector nu;
  double lambda = 0.0;
  Matrix mu_bar;
};

SolveReport solve(const ProblemSpec& ps, const ScenarioSet& S, const Vector& x0,
                  const QuantileConfig& cfg, const SmoothingKernel& k,
                  const TrParams& tr,
                  const std::optional<WarmStart>& warm = std::nullopt);

// Robust variant: minimize f subject to g <= 0 and C(x, xi_i) <= 0 for every
// scenario, through the per-scenario penalty pi * sum_i [C(x, xi_i)]+.
SolveReport solve_robust(const ProblemSpec& ps, const ScenarioSet& S,
                         const Vector& x0, const TrParams& tr);

void write_trace_csv(const SolveReport& rep, const std::string& path);

}  // namespace ccq
