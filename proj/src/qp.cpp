#include "ccq/qp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace ccq {

std::pair<Matrix, double> regularize_hessian(const Matrix& H) {
  const int n = static_cast<int>(H.rows());
  Matrix Hs = 0.5 * (H + H.transpose());
  Eigen::LLT<Matrix> llt(Hs);
  if (llt.info() == Eigen::Success) return {Hs, 0.0};
  const double scale = std::max(1.0, Hs.cwiseAbs().rowwise().sum().maxCoeff());
  double sigma = 1e-8 * scale;
  for (int probe = 0; probe < 80; ++probe) {
    Matrix cand = Hs + sigma * Matrix::Identity(n, n);
    llt.compute(cand);
    if (llt.info() == Eigen::Success) return {cand, sigma};
    sigma *= 2.0;
  }
  throw std::runtime_error("regularize_hessian: could not reach a factorizable shift");
}

namespace {

// Row-segment offsets of the stacked constraint system.  Order: g rows,
// scenario rows, then (quantile row, t bounds, w bound) or (z bounds,
// t bounds) in penalty mode, then the trust-region box (upper, lower).
struct Layout {
  int n, p, N, m;
  bool robust;
  bool has_q;

  int nx;        // variables: d, t, z (+ w)
  int mc;        // constraint rows
  int off_t, off_z, off_w;               // variable offsets
  int row_sc, row_q, row_zb, row_tb, row_wb, row_du, row_dl;

  explicit Layout(const QpSubproblem& qp) {
    n = qp.n();
    p = qp.p();
    N = qp.N();
    m = qp.m();
    robust = qp.scenario_penalty_mode;
    has_q = !robust && N > 0;
    if (has_q && qp.q_grad.size() != N)
      throw std::invalid_argument("solve_qp: q_grad size must match scenario count");
    off_t = n;
    off_z = n + p;
    off_w = n + p + N;
    nx = n + p + N + (has_q ? 1 : 0);
    int r = p;
    row_sc = p;
    r += N * m;
    if (robust) {
      row_q = -1;
      row_zb = r;
      r += N;
      row_tb = r;
      r += p;
      row_wb = -1;
    } else {
      row_q = has_q ? r : -1;
      r += has_q ? 1 : 0;
      row_zb = -1;
      row_tb = r;
      r += p;
      row_wb = has_q ? r : -1;
      r += has_q ? 1 : 0;
    }
    row_du = r;
    r += n;
    row_dl = r;
    r += n;
    mc = r;
  }
};

struct Workspace {
  const QpSubproblem& qp;
  const Layout& L;
  Vector cobj;  // linear objective over x
  Vector bvec;  // right-hand sides

  Workspace(const QpSubproblem& q, const Layout& lay) : qp(q), L(lay) {
    cobj = Vector::Zero(L.nx);
    cobj.head(L.n) = qp.grad_f;
    cobj.segment(L.off_t, L.p).setConstant(qp.penalty);
    if (L.robust) cobj.segment(L.off_z, L.N).setConstant(qp.penalty);
    if (L.has_q) cobj[L.off_w] = qp.penalty;

    bvec = Vector::Zero(L.mc);
    bvec.head(L.p) = -qp.g_val;
    for (int i = 0; i < L.N; ++i)
      bvec.segment(L.row_sc + i * L.m, L.m) = -qp.c_val[i];
    if (L.has_q) bvec[L.row_q] = qp.q_grad.dot(qp.c_max) - qp.q_value;
    bvec.segment(L.row_du, L.n).setConstant(qp.radius);
    bvec.segment(L.row_dl, L.n).setConstant(qp.radius);
  }

  Vector A_mul(const Vector& x) const {
    Vector y(L.mc);
    const auto d = x.head(L.n);
    y.head(L.p) = qp.g_jac * d - x.segment(L.off_t, L.p);
    for (int i = 0; i < L.N; ++i)
      y.segment(L.row_sc + i * L.m, L.m) =
          qp.c_jac[i] * d - Vector::Constant(L.m, x[L.off_z + i]);
    if (L.has_q)
      y[L.row_q] = qp.q_grad.dot(x.segment(L.off_z, L.N)) - x[L.off_w];
    if (L.robust) y.segment(L.row_zb, L.N) = -x.segment(L.off_z, L.N);
    y.segment(L.row_tb, L.p) = -x.segment(L.off_t, L.p);
    if (L.has_q) y[L.row_wb] = -x[L.off_w];
    y.segment(L.row_du, L.n) = d;
    y.segment(L.row_dl, L.n) = -d;
    return y;
  }

  Vector At_mul(const Vector& v) const {
    Vector x = Vector::Zero(L.nx);
    x.head(L.n) = qp.g_jac.transpose() * v.head(L.p);
    x.segment(L.off_t, L.p) -= v.head(L.p);
    for (int i = 0; i < L.N; ++i) {
      const auto vi = v.segment(L.row_sc + i * L.m, L.m);
      x.head(L.n).noalias() += qp.c_jac[i].transpose() * vi;
      x[L.off_z + i] -= vi.sum();
    }
    if (L.has_q) {
      x.segment(L.off_z, L.N) += v[L.row_q] * qp.q_grad;
      x[L.off_w] -= v[L.row_q];
    }
    if (L.robust) x.segment(L.off_z, L.N) -= v.segment(L.row_zb, L.N);
    x.segment(L.off_t, L.p) -= v.segment(L.row_tb, L.p);
    if (L.has_q) x[L.off_w] -= v[L.row_wb];
    x.head(L.n) += v.segment(L.row_du, L.n) - v.segment(L.row_dl, L.n);
    return x;
  }

  Vector Q_mul(const Vector& x) const {
    Vector y = Vector::Zero(L.nx);
    y.head(L.n).noalias() = qp.H * x.head(L.n);
    return y;
  }
};

// One factorization of the condensed KKT system M dx = r for fixed scaling
// weights D = y/s; the (z, w, t) blocks are eliminated analytically so only
// an n x n Cholesky factorization remains.
class ReducedKkt {
public:
  ReducedKkt(const Workspace& ws, const Vector& Dw) : ws_(ws), L_(ws.L), Dw_(Dw) {
    const auto& qp = ws.qp;
    const int n = L_.n;

    Dg_ = Dw.head(L_.p);
    Dtb_ = Dw.segment(L_.row_tb, L_.p);
    Dt_eff_ = Dg_ + Dtb_;

    Matrix M = qp.H;
    M.diagonal() += Dw.segment(L_.row_du, n) + Dw.segment(L_.row_dl, n);
    if (L_.p > 0) {
      // t eliminated: the g rows act with weight D1*D4/(D1+D4)
      const Vector geff = Dg_.cwiseProduct(Dtb_).cwiseQuotient(Dt_eff_);
      M.noalias() += qp.g_jac.transpose() * geff.asDiagonal() * qp.g_jac;
    }

    E_ = Vector::Zero(L_.N);
    bcols_.resize(n, L_.N);
    for (int i = 0; i < L_.N; ++i) {
      const auto Di = Dw.segment(L_.row_sc + i * L_.m, L_.m);
      E_[i] = Di.sum();
      if (L_.robust) E_[i] += Dw[L_.row_zb + i];
      bcols_.col(i).noalias() = -(qp.c_jac[i].transpose() * Di);
      M.noalias() += qp.c_jac[i].transpose() * Di.asDiagonal() * qp.c_jac[i];
      M.noalias() -= (1.0 / E_[i]) * bcols_.col(i) * bcols_.col(i).transpose();
    }

    if (L_.has_q) {
      d3_ = Dw[L_.row_q];
      d5_ = Dw[L_.row_wb];
      chat_ = d3_ * d5_ / (d3_ + d5_);
      Pq_ = qp.q_grad.cwiseQuotient(E_);
      const double qPq = qp.q_grad.dot(Pq_);
      sm_ = chat_ / (1.0 + chat_ * qPq);
      BPq_.noalias() = bcols_ * Pq_;
      M.noalias() += sm_ * BPq_ * BPq_.transpose();
    }

    llt_.compute(M);
    if (llt_.info() != Eigen::Success) {
      // scaling weights can make M lose definiteness in the last digits
      const double bump = 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff());
      for (int k = 0; k < 10 && llt_.info() != Eigen::Success; ++k)
        llt_.compute(M + bump * std::pow(10.0, k) * Matrix::Identity(n, n));
      if (llt_.info() != Eigen::Success)
        throw std::runtime_error("solve_qp: condensed system not factorizable");
    }
  }

  // (Q + A' D A) x = r with one round of iterative refinement; the barrier
  // weights get extreme near convergence and the condensed factorization
  // alone loses the last couple of digits
  Vector solve(const Vector& r) const {
    Vector x = solve_once(r);
    x += solve_once(r - apply(x));
    return x;
  }

private:
  Vector apply(const Vector& x) const {
    return ws_.Q_mul(x) + ws_.At_mul(Dw_.cwiseProduct(ws_.A_mul(x)));
  }

  Vector solve_once(const Vector& r) const {
    const auto& qp = ws_.qp;
    const Vector rd = r.head(L_.n);
    const Vector rt = r.segment(L_.off_t, L_.p);
    Vector rz = r.segment(L_.off_z, L_.N);
    const double rw = L_.has_q ? r[L_.off_w] : 0.0;

    if (L_.has_q) rz += (d3_ * rw / (d3_ + d5_)) * qp.q_grad;

    Vector rhs = rd;
    if (L_.p > 0)
      rhs.noalias() +=
          qp.g_jac.transpose() * (Dg_.cwiseQuotient(Dt_eff_).cwiseProduct(rt));
    rhs.noalias() -= bcols_ * rz.cwiseQuotient(E_);
    if (L_.has_q) rhs += sm_ * Pq_.dot(rz) * BPq_;

    const Vector dd = llt_.solve(rhs);

    Vector x = Vector::Zero(L_.nx);
    x.head(L_.n) = dd;
    Vector u = rz;
    u.noalias() -= bcols_.transpose() * dd;
    Vector dz = u.cwiseQuotient(E_);
    if (L_.has_q) dz -= sm_ * Pq_.dot(u) * Pq_;
    x.segment(L_.off_z, L_.N) = dz;
    if (L_.has_q)
      x[L_.off_w] = (rw + d3_ * qp.q_grad.dot(dz)) / (d3_ + d5_);
    if (L_.p > 0)
      x.segment(L_.off_t, L_.p) =
          (rt + Dg_.cwiseProduct(qp.g_jac * dd)).cwiseQuotient(Dt_eff_);
    return x;
  }

private:
  const Workspace& ws_;
  const Layout& L_;
  Vector Dw_;
  Vector Dg_, Dtb_, Dt_eff_, E_, Pq_, BPq_;
  Matrix bcols_;
  double d3_ = 0.0, d5_ = 0.0, chat_ = 0.0, sm_ = 0.0;
  Eigen::LLT<Matrix> llt_;
};

double max_step(const Vector& v, const Vector& dv) {
  double a = 1.0;
  for (int i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

}  // namespace

QpSolution solve_qp(const QpSubproblem& qp, double tol, int max_iters) {
  if (!(qp.radius > 0.0) || !(qp.penalty > 0.0))
    throw std::invalid_argument("solve_qp: radius and penalty must be positive");
  const Layout L(qp);
  const Workspace ws(qp, L);

  // Strictly interior start built from the always-feasible reference point.
  Vector x = Vector::Zero(L.nx);
  for (int j = 0; j < L.p; ++j) x[L.off_t + j] = std::max(qp.g_val[j], 0.0) + 1.0;
  for (int i = 0; i < L.N; ++i) {
    double ci = qp.c_val[i].maxCoeff();
    x[L.off_z + i] = (L.robust ? std::max(ci, 0.0) : ci) + 1.0;
  }
  if (L.has_q) x[L.off_w] = std::max(qp.q_value, 0.0) + 2.0;

  Vector s = (ws.bvec - ws.A_mul(x)).cwiseMax(1.0);
  Vector y = Vector::Constant(L.mc, 1.0);

  QpSolution sol;
  sol.status = QpStatus::max_iter;
  double best_res = std::numeric_limits<double>::infinity();

  auto record = [&](const Vector& xv, const Vector& yv) {
    const Vector rd = ws.Q_mul(xv) + ws.cobj + ws.At_mul(yv);
    const Vector ax = ws.A_mul(xv);
    double res = rd.cwiseAbs().maxCoeff();
    for (int k = 0; k < L.mc; ++k) {
      const double slack = ws.bvec[k] - ax[k];
      res = std::max(res, std::max(0.0, -slack));            // primal violation
      res = std::max(res, std::fabs(yv[k] * slack));         // complementarity
    }
    if (res < best_res) {
      best_res = res;
      sol.d = xv.head(L.n);
      sol.t = xv.segment(L.off_t, L.p);
      sol.z = xv.segment(L.off_z, L.N);
      sol.w = L.has_q ? xv[L.off_w] : 0.0;
      sol.nu = yv.head(L.p);
      sol.mu.resize(L.N, L.m);
      for (int i = 0; i < L.N; ++i)
        sol.mu.row(i) = yv.segment(L.row_sc + i * L.m, L.m).transpose();
      sol.lambda = L.has_q ? yv[L.row_q] : 0.0;
      sol.kkt_residual = res;
      sol.objective = ws.cobj.dot(xv) + 0.5 * xv.head(L.n).dot(qp.H * xv.head(L.n));
    }
    return res;
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    const Vector rd = ws.Q_mul(x) + ws.cobj + ws.At_mul(y);
    const Vector rp = ws.A_mul(x) + s - ws.bvec;
    const double mu = s.dot(y) / L.mc;

    sol.iterations = iter;
    const double res = record(x, y);
    if (res <= tol) {
      sol.status = QpStatus::optimal;
      return sol;
    }

    try {
      const Vector Dw = y.cwiseQuotient(s);
      const ReducedKkt kkt(ws, Dw);

      auto newton = [&](const Vector& rc) {
        const Vector v = Dw.cwiseProduct(rp) - rc.cwiseQuotient(s);
        const Vector rhs = -(rd + ws.At_mul(v));
        const Vector dx = kkt.solve(rhs);
        const Vector adx = ws.A_mul(dx);
        const Vector dy = Dw.cwiseProduct(adx) + v;
        const Vector dsv = -rp - adx;
        return std::make_tuple(dx, dy, dsv);
      };

      // predictor
      auto [dxa, dya, dsa] = newton(s.cwiseProduct(y));
      const double ap_aff = max_step(s, dsa);
      const double ad_aff = max_step(y, dya);
      const double mu_aff =
          (s + ap_aff * dsa).dot(y + ad_aff * dya) / L.mc;
      const double sigma = std::pow(mu_aff / mu, 3.0);

      // corrector
      const Vector rc = s.cwiseProduct(y) + dsa.cwiseProduct(dya) -
                        Vector::Constant(L.mc, sigma * mu);
      auto [dx, dy, dsv] = newton(rc);

      // a common step length keeps Q dx and A' dy in sync, so the dual
      // residual contracts by exactly (1 - a) per iteration
      const double eta = std::max(0.995, 1.0 - 100.0 * mu);
      const double a = std::min(
          1.0, eta * std::min(max_step(s, dsv), max_step(y, dy)));
      if (a < 1e-12) break;  // stalled

      x += a * dx;
      s += a * dsv;
      y += a * dy;
      if (!x.allFinite() || !s.allFinite() || !y.allFinite()) break;
    } catch (const std::runtime_error&) {
      break;  // condensed system went indefinite; fall back to the best iterate
    }
  }

  record(x, y);
  if (!std::isfinite(best_res))
    sol.status = QpStatus::numerical_failure;
  else if (sol.kkt_residual <= tol)
    sol.status = QpStatus::optimal;
  return sol;
}

}  // namespace ccq
