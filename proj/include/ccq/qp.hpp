#pragma once

#include <vector>

#include <Eigen/Core>

namespace ccq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Trust-region subproblem in variables (d, t, z, w):
//
//   min  grad_f'd + 1/2 d'H d + pi (1't + w)
//   s.t. g_jac d + g_val <= t,            t >= 0
//        c_jac_i d + c_val_i <= z_i 1_m,  i = 1..N
//        q_grad'(z - c_max) + q_value <= w,  w >= 0
//        |d|_inf <= radius
//
// The point (d=0, t=[g]+, z_i=c_max_i, w=[q_value]+) is always feasible.
//
// With scenario_penalty_mode set, the quantile row and w are dropped and z
// is penalized directly:  min ... + pi (1't + 1'z), z >= 0.  That variant
// backs the robust (all-scenarios) solve.
struct QpSubproblem {
  Matrix H;
  Vector grad_f;
  double penalty = 10.0;
  double radius = 1.0;

  Matrix g_jac;   // p x n
  Vector g_val;   // p

  std::vector<Matrix> c_jac;  // N entries, each m x n
  std::vector<Vector> c_val;  // N entries, each m

  Vector q_grad;  // N
  Vector c_max;   // N
  double q_value = 0.0;

  bool scenario_penalty_mode = false;

  int n() const { return static_cast<int>(grad_f.size()); }
  int p() const { return static_cast<int>(g_val.size()); }
  int N() const { return static_cast<int>(c_val.size()); }
  int m() const { return c_val.empty() ? 0 : static_cast<int>(c_val[0].size()); }
};

enum class QpStatus { optimal, max_iter, numerical_failure };

struct QpSolution {
  Vector d;
  Vector t;
  Vector z;
  double w = 0.0;

  Vector nu;      // duals of the g rows
  Matrix mu;      // N x m duals of the scenario rows
  double lambda = 0.0;  // dual of the quantile row

  QpStatus status = QpStatus::numerical_failure;
  double kkt_residual = 0.0;
  double objective = 0.0;  // model objective, without the constant f(x)
  int iterations = 0;
};

QpSolution solve_qp(const QpSubproblem& qp, double tol = 1e-9, int max_iters = 100);

// H + sigma I with sigma found by a Cholesky-probe loop (doubling from
// 1e-8 |H|_inf).  Returns the shifted matrix and the shift.
std::pair<Matrix, double> regularize_hessian(const Matrix& H);

}  // namespace ccq
