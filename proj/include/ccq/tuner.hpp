#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccq/model.hpp"
#include "ccq/sl1qp.hpp"

namespace ccq {

struct TunerConfig {
  double prob_tol = 1e-4;
  int max_bisections = 10;
  int oos_sample_size = 100000;  // N'
  double epsilon0_multiplier = 2.0;

  void validate() const;
};

struct TunerProbe {
  int probe = 0;
  double epsilon = 0.0;
  double p_oos = 0.0;
  double objective = 0.0;
  int iters = 0;
  double wall_ms = 0.0;
};

struct TuneResult {
  double epsilon = 0.0;
  SolveReport report;
  std::vector<TunerProbe> trace;
  std::string status;  // converged | loop_limit | infeasible_warning
};

// Fraction of scenarios in S_prime with C(x, xi) <= 0.
double oos_probability(const ProblemSpec& ps, const Vector& x,
                       const ScenarioSet& S_prime);

// Fresh scenarios for out-of-sample estimates.  The seed is remapped into a
// namespace disjoint from training seeds so validation draws never collide
// with training draws for any N.
ScenarioSet validation_scenarios(const Instance& inst, int N_prime,
                                 std::uint64_t train_seed);

// epsilon_0 = mult * sample standard deviation (denominator N-1) of the
// scenario max values at x; guarded fallback when they are constant.
double initial_epsilon(const ProblemSpec& ps, const ScenarioSet& S,
                       const Vector& x, double mult);

// Binary search over epsilon per the tuning loop: robust solve for the
// starting point, probe, bracket on the out-of-sample probability, warm
// start each solve from the previous probe.
TuneResult tune(const Instance& inst, const ScenarioSet& S,
                const TunerConfig& cfg, const TrParams& tr,
                const QuantileConfig& qcfg);

void write_tuner_csv(const TuneResult& res, const std::string& path);

}  // namespace ccq
