#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccq/model.hpp"
#include "ccq/tuner.hpp"

namespace ccq {

// One row of the replication table: out-of-sample probability, objective,
// wall time and tuned epsilon statistics over `reps` independent runs.
struct ReplicationRow {
  int N = 0;
  int reps = 0;
  double p_min = 0, p_avg = 0, p_max = 0;
  double obj_min = 0, obj_avg = 0, obj_max = 0;
  double time_avg_ms = 0, time_max_ms = 0;
  double eps_avg = 0;
};

std::vector<ReplicationRow> replication_stats(const Instance& inst,
                                              const std::vector<int>& Ns,
                                              int reps, std::uint64_t seed0,
                                              const TunerConfig& tcfg,
                                              const TrParams& tr,
                                              int threads = 1);

// Feasibility-decay experiment: fraction of fresh N-scenario samples whose
// smoothed empirical CDF at zero clears 1 - alpha for a fixed infeasible x.
struct DecayRow {
  int N = 0;
  double fraction = 0.0;
  double log_fraction = 0.0;  // NaN when fraction is zero
};

struct DecayResult {
  std::vector<DecayRow> rows;
  double slope = 0.0;  // least-squares slope of log-fraction vs N
};

DecayResult feasibility_decay(const Instance& inst, const Vector& x,
                              double alpha, const SmoothingKernel& k,
                              const std::vector<int>& Ns, int reps,
                              std::uint64_t seed0);

// Smoothed empirical CDF at zero, (1/N) sum_i Gamma_eps(C(x, xi_i)).
double smoothed_cdf_at_zero(const ProblemSpec& ps, const Vector& x,
                            const ScenarioSet& S, const SmoothingKernel& k);

// Profile of the smoothed quantile and the probability gap along a 1-D
// slice of the decision space; `embed` maps a grid value to a full x.
struct FlatnessRow {
  double x = 0.0;
  double quantile = 0.0;
  double prob_gap = 0.0;  // (1 - alpha) - smoothed CDF at zero
};

std::vector<FlatnessRow> flatness_profile(
    const ProblemSpec& ps, const ScenarioSet& S, const QuantileConfig& qcfg,
    const SmoothingKernel& k, const std::vector<double>& grid,
    const std::function<Vector(double)>& embed);

void write_replication_csv(const std::vector<ReplicationRow>& rows,
                           const std::string& path);
void write_replication_json(const std::vector<ReplicationRow>& rows,
                            const std::string& path);
void write_decay_csv(const DecayResult& res, const std::string& path);
void write_decay_json(const DecayResult& res, const std::string& path);
void write_flatness_csv(const std::vector<FlatnessRow>& rows,
                        const std::string& path);

}  // namespace ccq
