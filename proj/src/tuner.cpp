#include "ccq/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ccq/rng.hpp"

namespace ccq {

void TunerConfig::validate() const {
  if (!(prob_tol > 0)) throw std::invalid_argument("prob_tol must be positive");
  if (max_bisections < 1)
    throw std::invalid_argument("max_bisections must be at least 1");
  if (oos_sample_size < 1000)
    throw std::invalid_argument("oos_sample_size must be at least 1000");
  if (!(epsilon0_multiplier > 0))
    throw std::invalid_argument("epsilon0_multiplier must be positive");
}

double oos_probability(const ProblemSpec& ps, const Vector& x,
                       const ScenarioSet& S_prime) {
  if (S_prime.N() == 0) throw std::invalid_argument("empty validation set");
  const MaxReduction mr = eval_scenario_values(ps, x, S_prime);
  int ok = 0;
  for (int i = 0; i < S_prime.N(); ++i)
    if (mr.values[i] <= 0.0) ++ok;
  return static_cast<double>(ok) / S_prime.N();
}

ScenarioSet validation_scenarios(const Instance& inst, int N_prime,
                                 std::uint64_t train_seed) {
  // xor with a fixed tag keeps validation streams off every training stream
  std::uint64_t st = train_seed ^ 0xA11DA7E5EEDULL;
  const std::uint64_t vseed = splitmix64(st);
  return sample(inst.generator_id, inst.gen_params, N_prime, vseed);
}

double initial_epsilon(const ProblemSpec& ps, const ScenarioSet& S,
                       const Vector& x, double mult) {
  const MaxReduction mr = eval_scenario_values(ps, x, S);
  const int N = S.N();
  if (N < 2) return std::max(1e-6, mult);
  const double mean = mr.values.mean();
  const double var = (mr.values.array() - mean).square().sum() / (N - 1);
  const double sd = std::sqrt(std::max(0.0, var));
  if (sd <= 0.0) {
    const double range = mr.values.maxCoeff() - mr.values.minCoeff();
    return std::max(1e-6, 1e-3 * range);
  }
  return mult * sd;
}

TuneResult tune(const Instance& inst, const ScenarioSet& S,
                const TunerConfig& cfg, const TrParams& tr,
                const QuantileConfig& qcfg) {
  cfg.validate();
  const ProblemSpec& ps = inst.ps;
  const double target = 1.0 - qcfg.alpha;

  Vector x_start = inst.x0;
  try {
    const SolveReport rob = solve_robust(ps, S, inst.x0, tr);
    if (rob.converged) x_start = rob.x;
  } catch (const std::exception&) {
    // fall back to x0 for the epsilon seed and the first solve
  }

  const double eps0 =
      initial_epsilon(ps, S, x_start, cfg.epsilon0_multiplier);
  const ScenarioSet S_val =
      validation_scenarios(inst, cfg.oos_sample_size, S.seed);

  TuneResult res;
  std::vector<SolveReport> reports;
  double eps_lb = 0.0;
  double eps_ub = std::numeric_limits<double>::infinity();
  double eps = eps0;
  std::optional<WarmStart> warm;
  Vector x0 = x_start;
  res.status = "loop_limit";

  for (int probe = 0; probe <= cfg.max_bisections; ++probe) {
    const SmoothingKernel k(eps);
    SolveReport rep = solve(ps, S, x0, qcfg, k, tr, warm);
    rep.epsilon = eps;
    rep.oos_probability = oos_probability(ps, rep.x, S_val);

    TunerProbe pr;
    pr.probe = probe;
    pr.epsilon = eps;
    pr.p_oos = rep.oos_probability;
    pr.objective = rep.objective;
    pr.iters = rep.iterations;
    pr.wall_ms = rep.wall_ms;
    res.trace.push_back(pr);
    reports.push_back(rep);

    if (std::fabs(rep.oos_probability - target) <= cfg.prob_tol) {
      res.status = "converged";
      break;
    }
    if (rep.oos_probability > target) {
      eps_ub = eps;
      eps = 0.5 * (eps + eps_lb);
    } else {
      eps_lb = eps;
      eps = std::isinf(eps_ub) ? 2.0 * eps : 0.5 * (eps_ub + eps);
    }
    x0 = rep.x;
    warm = WarmStart{rep.nu, rep.lambda, rep.mu_bar};
  }

  // feasibility first: among probes meeting the probability floor, take the
  // one closest to the target (ties to the lower objective)
  int best = -1;
  for (int i = 0; i < static_cast<int>(res.trace.size()); ++i) {
    const TunerProbe& pr = res.trace[i];
    if (pr.p_oos < target - cfg.prob_tol) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const double di = std::fabs(pr.p_oos - target);
    const double db = std::fabs(res.trace[best].p_oos - target);
    if (di < db || (di == db && pr.objective < res.trace[best].objective))
      best = i;
  }
  if (best < 0) {
    // everything came back infeasible out of sample: return the largest eps
    best = 0;
    for (int i = 1; i < static_cast<int>(res.trace.size()); ++i)
      if (res.trace[i].epsilon > res.trace[best].epsilon) best = i;
    res.status = "infeasible_warning";
  }
  res.epsilon = res.trace[best].epsilon;
  res.report = reports[best];
  return res;
}

void write_tuner_csv(const TuneResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "probe,epsilon,p_oos,objective,iters,wall_ms\n";
  char buf[256];
  for (const TunerProbe& p : res.trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%d,%.3f\n", p.probe,
                  p.epsilon, p.p_oos, p.objective, p.iters, p.wall_ms);
    out << buf;
  }
}

}  // namespace ccq
