#include "ccq/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ccq/rng.hpp"

namespace ccq {

namespace {

// Fills one scenario row from its dedicated stream.
void fill_row(const std::string& id, const GenParams& params, std::uint64_t seed,
              int row,
              Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  Xoshiro256 rng(seed, static_cast<std::uint64_t>(row));
  if (id == "constant") {
    out.setConstant(params.get("value", 0.0));
  } else if (id == "normal") {
    const double mu = params.get("mu", 0.0);
    const double sigma = params.get("sigma", 1.0);
    for (int j = 0; j < out.size(); ++j) out[j] = mu + sigma * rng.next_normal();
  } else if (id == "normal_diag") {
    // independent centered normals with per-coordinate std deviations
    const Matrix& sig = params.mat.at("sigma");
    for (int j = 0; j < out.size(); ++j) out[j] = sig(j, 0) * rng.next_normal();
  } else if (id == "lognormal_bernoulli") {
    // L_j = Bernoulli(q) * LogNormal(mu_j, sigma_j): sparse, skewed, heavy
    // tailed loss amounts
    const double q = params.get("q", 0.2);
    const Matrix& mu = params.mat.at("mu");
    const Matrix& sig = params.mat.at("sigma");
    for (int j = 0; j < out.size(); ++j) {
      const double on = rng.next_uniform() < q ? 1.0 : 0.0;
      const double normal = rng.next_normal();
      out[j] = on * std::exp(mu(j, 0) + sig(j, 0) * normal);
    }
  } else if (id == "knapsack_weights") {
    // One availability draw per item, shared by all m weight rows; the
    // scenario vector is the m x n weight matrix flattened row-major.
    const Matrix& mu = params.mat.at("mu");  // m x n
    const int m = static_cast<int>(mu.rows());
    const int n = static_cast<int>(mu.cols());
    const double q = params.get("q", 0.9);
    const double cv = params.get("cv", 0.1);
    std::vector<double> avail(n);
    for (int j = 0; j < n; ++j) avail[j] = rng.next_uniform() < q ? 1.0 : 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        out[i * n + j] = avail[j] * (mu(i, j) + cv * mu(i, j) * rng.next_normal());
  } else {
    throw std::invalid_argument("sample: unknown generator '" + id + "'");
  }
}

}  // namespace

ScenarioSet sample(const std::string& generator_id, const GenParams& params,
                   int N, std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("sample: N must be >= 1");
  int s = static_cast<int>(params.get("s", 1.0));
  if (generator_id == "knapsack_weights") {
    const Matrix& mu = params.mat.at("mu");
    s = static_cast<int>(mu.rows() * mu.cols());
  } else if (params.mat.count("mu")) {
    s = static_cast<int>(params.mat.at("mu").rows());
  } else if (params.mat.count("sigma")) {
    s = static_cast<int>(params.mat.at("sigma").rows());
  }
  if (s < 1) throw std::invalid_argument("sample: invalid dimension");

  ScenarioSet out;
  out.data.resize(N, s);
  out.seed = seed;
  out.generator_id = generator_id;
  for (int i = 0; i < N; ++i) fill_row(generator_id, params, seed, i, out.data.row(i));
  if (!out.data.allFinite()) throw std::runtime_error("sample: non-finite draw");
  return out;
}

MaxReduction eval_scenario_values(const ProblemSpec& ps, const Vector& x,
                                  const ScenarioSet& S) {
  if (x.size() != ps.n || !x.allFinite())
    throw std::invalid_argument("eval_scenario_values: bad decision vector");
  const int N = S.N();
  MaxReduction out;
  out.values.resize(N);
  out.argmax_rows.resize(N);
  for (int i = 0; i < N; ++i) {
    const Vector ci = ps.c(x, S.data.row(i).transpose());
    int arg = 0;
    double best = ci[0];
    for (int j = 1; j < ps.m; ++j)
      if (ci[j] > best) {
        best = ci[j];
        arg = j;
      }
    if (!std::isfinite(best))
      throw std::runtime_error("eval_scenario_values: non-finite constraint at scenario " +
                               std::to_string(i));
    out.values[i] = best;
    out.argmax_rows[i] = arg;
  }
  return out;
}

double check_derivatives(const Instance& inst, int num_points, std::uint64_t seed) {
  const ProblemSpec& ps = inst.ps;
  Xoshiro256 rng(seed, 0xdeadULL);
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 3, seed ^ 0x77ULL);
  double worst = 0.0;
  auto rel = [](double got, double want) {
    return std::fabs(got - want) / std::max(1.0, std::fabs(want));
  };

  for (int t = 0; t < num_points; ++t) {
    Vector x(ps.n);
    for (int i = 0; i < ps.n; ++i) x[i] = rng.next_normal();
    const double h = 1e-6;

    const Vector gf = ps.grad_f(x);
    const Matrix Hf = ps.hess_f(x);
    for (int i = 0; i < ps.n; ++i) {
      Vector xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      worst = std::max(worst, rel(gf[i], (ps.f(xp) - ps.f(xm)) / (2 * h)));
      const Vector dg = (ps.grad_f(xp) - ps.grad_f(xm)) / (2 * h);
      for (int j = 0; j < ps.n; ++j) worst = std::max(worst, rel(Hf(j, i), dg[j]));
    }

    if (ps.p > 0) {
      const Matrix J = ps.g_jac(x);
      for (int i = 0; i < ps.n; ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const Vector dg = (ps.g(xp) - ps.g(xm)) / (2 * h);
        for (int r = 0; r < ps.p; ++r) worst = std::max(worst, rel(J(r, i), dg[r]));
      }
    }

    for (int sc = 0; sc < S.N(); ++sc) {
      const Vector xi = S.data.row(sc).transpose();
      const Matrix J = ps.c_jac(x, xi);
      for (int i = 0; i < ps.n; ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const Vector dc = (ps.c(xp, xi) - ps.c(xm, xi)) / (2 * h);
        for (int r = 0; r < ps.m; ++r) worst = std::max(worst, rel(J(r, i), dc[r]));
        for (int r = 0; r < ps.m; ++r) {
          const Matrix Hc = ps.c_hess(x, xi, r);
          const Vector dJ =
              (ps.c_jac(xp, xi).row(r) - ps.c_jac(xm, xi).row(r)).transpose() / (2 * h);
          for (int j = 0; j < ps.n; ++j) worst = std::max(worst, rel(Hc(j, i), dJ[j]));
        }
      }
    }
  }
  return worst;
}

}  // namespace ccq
