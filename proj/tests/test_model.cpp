#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <vector>

#include "ccq/config.hpp"
#include "ccq/model.hpp"
#include "ccq/quantile.hpp"
#include "ccq/rng.hpp"

using namespace ccq;

TEST_CASE("constant generator") {
  GenParams p;
  p.scalar["value"] = 3.0;
  p.scalar["s"] = 1.0;
  const ScenarioSet S = sample("constant", p, 2, 9);
  CHECK(S.N() == 2);
  CHECK(S.s() == 1);
  CHECK(S.data(0, 0) == 3.0);
  CHECK(S.data(1, 0) == 3.0);
}

TEST_CASE("normal generator moments") {
  GenParams p;
  p.scalar["s"] = 1.0;
  const int N = 100000;
  const ScenarioSet S = sample("normal", p, N, 2024);
  const double mean = S.data.col(0).mean();
  const double var = (S.data.col(0).array() - mean).square().sum() / (N - 1);
  CHECK(std::fabs(mean) <= 4.0 / std::sqrt(static_cast<double>(N)));
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("sampling determinism and row independence from N") {
  GenParams p;
  p.scalar["s"] = 3.0;
  const ScenarioSet a = sample("normal", p, 50, 7);
  const ScenarioSet b = sample("normal", p, 50, 7);
  const ScenarioSet big = sample("normal", p, 100, 7);
  CHECK((a.data - b.data).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.data - big.data.topRows(50)).lpNorm<Eigen::Infinity>() == 0.0);
  const ScenarioSet c = sample("normal", p, 50, 8);
  CHECK((a.data - c.data).lpNorm<Eigen::Infinity>() != 0.0);
  CHECK_THROWS_AS(sample("no_such_generator", p, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample("normal", p, 0, 1), std::invalid_argument);
}

TEST_CASE("max reduction: SCCP degenerate case and brute-force oracle") {
  const Instance inst = builtin_nonconvex1d();
  const ScenarioSet S = sample(inst.generator_id, inst.gen_params, 40, 3);
  const Vector x = (Vector(2) << 0.7, -1.0).finished();
  const MaxReduction mr = eval_scenario_values(inst.ps, x, S);
  for (int i = 0; i < 40; ++i) {
    CHECK(mr.values[i] ==
          inst.ps.c(x, S.data.row(i).transpose())[0]);
    CHECK(mr.argmax_rows[i] == 0);
  }

  const Instance kp = builtin_knapsack();
  const ScenarioSet Sk = sample(kp.generator_id, kp.gen_params, 25, 5);
  Vector xk(kp.ps.n);
  Xoshiro256 rng(12, 0);
  for (int j = 0; j < kp.ps.n; ++j) xk[j] = rng.next_uniform();
  const MaxReduction mk = eval_scenario_values(kp.ps, xk, Sk);
  for (int i = 0; i < 25; ++i) {
    const Vector ci = kp.ps.c(xk, Sk.data.row(i).transpose());
    double best = ci[0];
    int arg = 0;
    for (int j = 1; j < kp.ps.m; ++j)
      if (ci[j] > best) {
        best = ci[j];
        arg = j;
      }
    CHECK(mk.values[i] == best);
    CHECK(mk.argmax_rows[i] == arg);
  }
}

TEST_CASE("nonconvex1d constraint value and derivative check") {
  const Instance inst = builtin_nonconvex1d();
  const Vector x = Vector::Zero(2);
  const Vector xi = Vector::Zero(2);
  CHECK(inst.ps.c(x, xi)[0] == doctest::Approx(-19.5).epsilon(1e-15));
  CHECK(check_derivatives(inst, 20, 99) <= 1e-5);
}

TEST_CASE("builtin derivative self-checks") {
  CHECK(check_derivatives(builtin_reinsurance(), 20, 11) <= 1e-5);
  CHECK(check_derivatives(builtin_knapsack(), 20, 12) <= 1e-5);
}

TEST_CASE("knapsack instance semantics") {
  const Instance kp = builtin_knapsack();
  const ScenarioSet S = sample(kp.generator_id, kp.gen_params, 200, 31);
  const Vector zero = Vector::Zero(kp.ps.n);
  const MaxReduction mr = eval_scenario_values(kp.ps, zero, S);
  // x = 0 leaves every row at -capacity, so all values are negative
  for (int i = 0; i < S.N(); ++i) CHECK(mr.values[i] < 0.0);

  // shared availability draws couple the rows: cov(W_1j, W_2j) > 0
  const int n = kp.ps.n;
  const ScenarioSet big = sample(kp.generator_id, kp.gen_params, 100000, 13);
  const auto w1 = big.data.col(0);        // row 1, item 1
  const auto w2 = big.data.col(n);        // row 2, item 1
  const double cov = ((w1.array() - w1.mean()) * (w2.array() - w2.mean())).mean();
  CHECK(cov > 0.0);

  // a scenario with item j unavailable zeroes its weight in every row
  bool saw_zero_item = false;
  for (int i = 0; i < 200 && !saw_zero_item; ++i)
    for (int j = 0; j < n; ++j)
      if (S.data(i, j) == 0.0) {
        for (int r = 1; r < kp.ps.m; ++r) CHECK(S.data(i, r * n + j) == 0.0);
        saw_zero_item = true;
        break;
      }
  CHECK(saw_zero_item);
}

TEST_CASE("reinsurance instance semantics") {
  const Instance re = builtin_reinsurance();
  const int n = re.ps.n - 1;
  const Vector zero = Vector::Zero(re.ps.n);
  // empty portfolio violates the premium floor
  CHECK(re.ps.g(zero)[0] > 0.0);
  Vector full = Vector::Zero(re.ps.n);
  full.head(n).setConstant(1.0);
  CHECK(re.ps.g(full)[0] < 0.0);

  // empirical portfolio-loss quantile vs a sort oracle
  const ScenarioSet S = sample(re.generator_id, re.gen_params, 500, 77);
  Vector x = Vector::Zero(re.ps.n);
  Xoshiro256 rng(8, 8);
  for (int j = 0; j < n; ++j) x[j] = rng.next_uniform();
  const MaxReduction mr = eval_scenario_values(re.ps, x, S);
  std::vector<double> v(mr.values.data(), mr.values.data() + 500);
  std::sort(v.begin(), v.end());
  CHECK(empirical_quantile(mr.values, 0.05) == v[474]);  // M = ceil(475)
}

TEST_CASE("scenario csv round trip and error reporting") {
  GenParams p;
  p.scalar["s"] = 4.0;
  const ScenarioSet S = sample("normal", p, 30, 55);
  const std::string path = "test_scenarios_tmp.csv";
  save_scenarios(S, path);
  const ScenarioSet L = load_scenarios(path);
  CHECK(L.N() == 30);
  CHECK(L.s() == 4);
  CHECK((L.data - S.data).lpNorm<Eigen::Infinity>() == 0.0);

  auto write = [](const std::string& file, const std::string& text) {
    std::FILE* f = std::fopen(file.c_str(), "w");
    std::fputs(text.c_str(), f);
    std::fclose(f);
  };
  write(path, "xi_1,xi_2\n");
  CHECK_THROWS_WITH_AS(load_scenarios(path),
                       doctest::Contains("empty scenario set"), std::runtime_error);
  write(path, "xi_1,bogus\n1,2\n");
  CHECK_THROWS_WITH_AS(load_scenarios(path), doctest::Contains("expected 'xi_2'"),
                       std::runtime_error);
  write(path, "xi_1,xi_2\n1,2\n3\n");
  CHECK_THROWS_WITH_AS(load_scenarios(path), doctest::Contains("line 3"),
                       std::runtime_error);
  write(path, "xi_1\n1\nfoo\n");
  CHECK_THROWS_WITH_AS(load_scenarios(path), doctest::Contains("non-numeric"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("config grammar") {
  const Config cfg = Config::parse_string(
      "# header comment\n"
      "[problem]\n"
      "name = knapsack  # trailing comment\n"
      "alpha = 0.1\n"
      "[solver]\n"
      "max_outer_iters = 50\n");
  CHECK(cfg.get("problem", "name", "") == "knapsack");
  CHECK(cfg.get_double("problem", "alpha", 0.0) == 0.1);
  CHECK(cfg.get_int("solver", "max_outer_iters", 0) == 50);
  CHECK(cfg.get_double("solver", "missing", 2.5) == 2.5);
  CHECK(!cfg.has("tuner", "prob_tol"));
  CHECK_THROWS_AS(Config::parse_string("key = 1\n"), std::runtime_error);
  CHECK_THROWS_AS(Config::parse_string("[s]\nBadKey = 1\n"), std::runtime_error);
  CHECK_THROWS_AS(Config::parse_string("[unterminated\n"), std::runtime_error);
}
