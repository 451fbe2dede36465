#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ccq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Problem data: objective f, p deterministic inequality rows g(x) <= 0
// (variable bounds are encoded as rows of g), and m stochastic constraint
// rows c(x, xi).  All evaluators are deterministic functions of their
// arguments and must be safe for concurrent invocation.
struct ProblemSpec {
  int n = 0;  // decision dimension
  int p = 0;  // deterministic inequality rows
  int m = 0;  // stochastic constraint rows
  int s = 0;  // random-vector dimension

  std::function<double(const Vector&)> f;
  std::function<Vector(const Vector&)> grad_f;
  std::function<Matrix(const Vector&)> hess_f;

  std::function<Vector(const Vector&)> g;          // size p
  std::function<Matrix(const Vector&)> g_jac;      // p x n
  std::function<Matrix(const Vector&, int)> g_hess;  // row j -> n x n

  std::function<Vector(const Vector&, const Vector&)> c;         // size m
  std::function<Matrix(const Vector&, const Vector&)> c_jac;     // m x n
  std::function<Matrix(const Vector&, const Vector&, int)> c_hess;  // row j
};

struct ScenarioSet {
  Matrix data;  // N x s
  std::uint64_t seed = 0;
  std::string generator_id;

  int N() const { return static_cast<int>(data.rows()); }
  int s() const { return static_cast<int>(data.cols()); }
};

// C(x, xi_i) = max_j c_j(x, xi_i) per scenario; ties break to the lowest
// row index so downstream multiplier fallbacks are deterministic.
struct MaxReduction {
  Vector values;                 // size N
  std::vector<int> argmax_rows;  // size N
};

struct GenParams {
  std::map<std::string, double> scalar;
  std::map<std::string, Matrix> mat;

  double get(const std::string& key, double fallback) const {
    auto it = scalar.find(key);
    return it == scalar.end() ? fallback : it->second;
  }
};

ScenarioSet sample(const std::string& generator_id, const GenParams& params,
                   int N, std::uint64_t seed);

MaxReduction eval_scenario_values(const ProblemSpec& ps, const Vector& x,
                                  const ScenarioSet& S);

// A built-in instance: problem data plus its scenario generator and the
// default risk level / starting point used in experiments.
struct Instance {
  std::string name;
  ProblemSpec ps;
  std::string generator_id;
  GenParams gen_params;
  double alpha = 0.05;
  Vector x0;
};

Instance builtin_nonconvex1d();
Instance builtin_reinsurance(int n = 25, std::uint64_t instance_seed = 1234);
Instance builtin_knapsack(int n = 20, int m = 10, double availability_q = 0.9,
                          std::uint64_t instance_seed = 4321);

Instance builtin_instance(const std::string& name);

ScenarioSet load_scenarios(const std::string& path);
void save_scenarios(const ScenarioSet& S, const std::string& path);

// Max relative error of the analytic first derivatives (and row Hessians)
// against central finite differences at `num_points` random probe points.
double check_derivatives(const Instance& inst, int num_points,
                         std::uint64_t seed);

}  // namespace ccq
