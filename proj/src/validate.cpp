#include "ccq/validate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ccq/rng.hpp"

namespace ccq {

namespace {

std::uint64_t job_seed(std::uint64_t seed0, std::uint64_t a, std::uint64_t b) {
  std::uint64_t st = seed0 ^ (a * 0x9e3779b97f4a7c15ULL + b);
  return splitmix64(st);
}

void parallel_for(int jobs, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || jobs <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mtx;
  const int workers = std::min(threads, jobs);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      try {
        for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mtx);
        if (!err) err = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

std::vector<ReplicationRow> replication_stats(const Instance& inst,
                                              const std::vector<int>& Ns,
                                              int reps, std::uint64_t seed0,
                                              const TunerConfig& tcfg,
                                              const TrParams& tr, int threads) {
  if (reps < 1) throw std::invalid_argument("reps must be at least 1");
  std::vector<ReplicationRow> table;
  QuantileConfig qcfg;
  qcfg.alpha = inst.alpha;
  for (int N : Ns) {
    std::vector<double> p(reps), obj(reps), ms(reps), eps(reps);
    parallel_for(reps, threads, [&](int r) {
      const std::uint64_t seed = job_seed(seed0, static_cast<std::uint64_t>(N), r);
      const ScenarioSet S = sample(inst.generator_id, inst.gen_params, N, seed);
      const TuneResult res = tune(inst, S, tcfg, tr, qcfg);
      p[r] = res.report.oos_probability;
      obj[r] = res.report.objective;
      eps[r] = res.epsilon;
      double total = 0.0;
      for (const TunerProbe& pr : res.trace) total += pr.wall_ms;
      ms[r] = total;
    });
    ReplicationRow row;
    row.N = N;
    row.reps = reps;
    row.p_min = *std::min_element(p.begin(), p.end());
    row.p_max = *std::max_element(p.begin(), p.end());
    row.obj_min = *std::min_element(obj.begin(), obj.end());
    row.obj_max = *std::max_element(obj.begin(), obj.end());
    row.time_max_ms = *std::max_element(ms.begin(), ms.end());
    for (int r = 0; r < reps; ++r) {
      row.p_avg += p[r] / reps;
      row.obj_avg += obj[r] / reps;
      row.time_avg_ms += ms[r] / reps;
      row.eps_avg += eps[r] / reps;
    }
    table.push_back(row);
  }
  return table;
}

double smoothed_cdf_at_zero(const ProblemSpec& ps, const Vector& x,
                            const ScenarioSet& S, const SmoothingKernel& k) {
  const MaxReduction mr = eval_scenario_values(ps, x, S);
  double sum = 0.0;
  for (int i = 0; i < S.N(); ++i) sum += k.gamma(mr.values[i]);
  return sum / S.N();
}

DecayResult feasibility_decay(const Instance& inst, const Vector& x,
                              double alpha, const SmoothingKernel& k,
                              const std::vector<int>& Ns, int reps,
                              std::uint64_t seed0) {
  DecayResult res;
  for (int N : Ns) {
    int hits = 0;
    for (int r = 0; r < reps; ++r) {
      const std::uint64_t seed =
          job_seed(seed0, 0x0DECA0ULL + static_cast<std::uint64_t>(N), r);
      const ScenarioSet S = sample(inst.generator_id, inst.gen_params, N, seed);
      if (smoothed_cdf_at_zero(inst.ps, x, S, k) >= 1.0 - alpha) ++hits;
    }
    DecayRow row;
    row.N = N;
    row.fraction = static_cast<double>(hits) / reps;
    row.log_fraction = hits > 0 ? std::log(row.fraction)
                                : std::numeric_limits<double>::quiet_NaN();
    res.rows.push_back(row);
  }
  // slope of log-fraction against N over rows with a defined logarithm
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const DecayRow& row : res.rows) {
    if (!std::isfinite(row.log_fraction)) continue;
    sx += row.N;
    sy += row.log_fraction;
    sxx += static_cast<double>(row.N) * row.N;
    sxy += row.N * row.log_fraction;
    ++cnt;
  }
  if (cnt >= 2 && sxx * cnt - sx * sx > 0)
    res.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return res;
}

std::vector<FlatnessRow> flatness_profile(
    const ProblemSpec& ps, const ScenarioSet& S, const QuantileConfig& qcfg,
    const SmoothingKernel& k, const std::vector<double>& grid,
    const std::function<Vector(double)>& embed) {
  std::vector<FlatnessRow> rows;
  rows.reserve(grid.size());
  for (double gx : grid) {
    const Vector x = embed(gx);
    const MaxReduction mr = eval_scenario_values(ps, x, S);
    FlatnessRow row;
    row.x = gx;
    row.quantile = solve_quantile(mr.values, qcfg, k).value;
    double cdf = 0.0;
    for (int i = 0; i < S.N(); ++i) cdf += k.gamma(mr.values[i]);
    row.prob_gap = (1.0 - qcfg.alpha) - cdf / S.N();
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  return out;
}

}  // namespace

void write_replication_csv(const std::vector<ReplicationRow>& rows,
                           const std::string& path) {
  auto out = open_out(path);
  out << "N,reps,p_min,p_avg,p_max,obj_min,obj_avg,obj_max,"
         "time_avg_ms,time_max_ms,eps_avg\n";
  char buf[512];
  for (const ReplicationRow& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f,%.3f,%.17g\n",
                  r.N, r.reps, r.p_min, r.p_avg, r.p_max, r.obj_min, r.obj_avg,
                  r.obj_max, r.time_avg_ms, r.time_max_ms, r.eps_avg);
    out << buf;
  }
}

void write_replication_json(const std::vector<ReplicationRow>& rows,
                            const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const ReplicationRow& r : rows)
    j.push_back({{"N", r.N},
                 {"reps", r.reps},
                 {"p_min", r.p_min},
                 {"p_avg", r.p_avg},
                 {"p_max", r.p_max},
                 {"obj_min", r.obj_min},
                 {"obj_avg", r.obj_avg},
                 {"obj_max", r.obj_max},
                 {"time_avg_ms", r.time_avg_ms},
                 {"time_max_ms", r.time_max_ms},
                 {"eps_avg", r.eps_avg}});
  open_out(path) << j.dump(2) << "\n";
}

void write_decay_csv(const DecayResult& res, const std::string& path) {
  auto out = open_out(path);
  out << "N,fraction,log_fraction\n";
  char buf[160];
  for (const DecayRow& r : res.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.N, r.fraction,
                  r.log_fraction);
    out << buf;
  }
}

void write_decay_json(const DecayResult& res, const std::string& path) {
  nlohmann::json j;
  j["slope"] = res.slope;
  j["rows"] = nlohmann::json::array();
  for (const DecayRow& r : res.rows) {
    nlohmann::json row = {{"N", r.N}, {"fraction", r.fraction}};
    if (std::isfinite(r.log_fraction)) row["log_fraction"] = r.log_fraction;
    j["rows"].push_back(row);
  }
  open_out(path) << j.dump(2) << "\n";
}

void write_flatness_csv(const std::vector<FlatnessRow>& rows,
                        const std::string& path) {
  auto out = open_out(path);
  out << "x,quantile,prob_gap\n";
  char buf[160];
  for (const FlatnessRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", r.x, r.quantile,
                  r.prob_gap);
    out << buf;
  }
}

}  // namespace ccq
