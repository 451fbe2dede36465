// Batch front door: solve / tune / validate / bench / gen subcommands over
// the built-in instances or a config-described one.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccq/config.hpp"
#include "ccq/model.hpp"
#include "ccq/sl1qp.hpp"
#include "ccq/tuner.hpp"
#include "ccq/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Options {
  std::string config_path;
  std::uint64_t seed = 1;
  double epsilon = -1.0;  // <0 means "not given"
  double alpha = -1.0;
  std::vector<int> sample_sizes{1000};
  int oos_size = 100000;
  std::string problem = "nonconvex1d";
  std::string out_dir = ".";
  int replications = 10;
  int threads = 1;
  std::string experiment = "replication";
};

ccq::Instance make_instance(const Options& opt, const ccq::Config& cfg) {
  std::string name = opt.problem;
  if (name == "file") {
    name = cfg.get("problem", "name", "");
    if (name.empty())
      throw std::invalid_argument("--problem file needs [problem] name in --config");
  }
  ccq::Instance inst;
  if (name == "nonconvex1d") {
    inst = ccq::builtin_nonconvex1d();
  } else if (name == "reinsurance") {
    inst = ccq::builtin_reinsurance(
        static_cast<int>(cfg.get_int("problem", "n", 25)),
        static_cast<std::uint64_t>(cfg.get_int("problem", "instance_seed", 1234)));
  } else if (name == "knapsack") {
    inst = ccq::builtin_knapsack(
        static_cast<int>(cfg.get_int("problem", "n", 20)),
        static_cast<int>(cfg.get_int("problem", "m", 10)),
        cfg.get_double("problem", "availability_q", 0.9),
        static_cast<std::uint64_t>(cfg.get_int("problem", "instance_seed", 4321)));
  } else {
    throw std::invalid_argument("unknown problem: " + name);
  }
  if (cfg.has("problem", "alpha"))
    inst.alpha = cfg.get_double("problem", "alpha", inst.alpha);
  if (opt.alpha > 0) inst.alpha = opt.alpha;
  return inst;
}

ccq::TrParams make_tr(const ccq::Config& cfg) {
  ccq::TrParams tr;
  tr.penalty = cfg.get_double("solver", "penalty", tr.penalty);
  tr.delta_max = cfg.get_double("solver", "delta_max", tr.delta_max);
  tr.delta0 = cfg.get_double("solver", "delta0", tr.delta0);
  tr.eta = cfg.get_double("solver", "eta", tr.eta);
  tr.tol_kkt = cfg.get_double("solver", "tol_kkt", tr.tol_kkt);
  tr.tol_feas_g = cfg.get_double("solver", "tol_feas_g", tr.tol_feas_g);
  tr.tol_feas_q = cfg.get_double("solver", "tol_feas_q", tr.tol_feas_q);
  tr.max_outer_iters = static_cast<int>(
      cfg.get_int("solver", "max_outer_iters", tr.max_outer_iters));
  return tr;
}

ccq::TunerConfig make_tuner(const Options& opt, const ccq::Config& cfg) {
  ccq::TunerConfig tc;
  tc.prob_tol = cfg.get_double("tuner", "prob_tol", tc.prob_tol);
  tc.max_bisections = static_cast<int>(
      cfg.get_int("tuner", "max_bisections", tc.max_bisections));
  tc.oos_sample_size = static_cast<int>(
      cfg.get_int("tuner", "oos_sample_size", opt.oos_size));
  tc.epsilon0_multiplier =
      cfg.get_double("tuner", "epsilon0_multiplier", tc.epsilon0_multiplier);
  return tc;
}

void write_manifest(const Options& opt, const ccq::Instance& inst,
                    const std::string& subcommand) {
  std::ofstream out(fs::path(opt.out_dir) / "manifest.txt");
  out << "version = " << kVersion << "\n"
      << "subcommand = " << subcommand << "\n"
      << "problem = " << inst.name << "\n"
      << "alpha = " << inst.alpha << "\n"
      << "seed = " << opt.seed << "\n"
      << "epsilon = " << opt.epsilon << "\n"
      << "oos_size = " << opt.oos_size << "\n"
      << "replications = " << opt.replications << "\n"
      << "threads = " << opt.threads << "\n"
      << "config = " << (opt.config_path.empty() ? "-" : opt.config_path) << "\n"
      << "sample_sizes =";
  for (int N : opt.sample_sizes) out << " " << N;
  out << "\n";
}

json report_json(const ccq::SolveReport& rep) {
  json j;
  j["status"] = rep.status;
  j["converged"] = rep.converged;
  j["iterations"] = rep.iterations;
  j["objective"] = rep.objective;
  j["phi"] = rep.phi;
  j["epsilon"] = rep.epsilon;
  j["grad_norm"] = rep.kkt.grad_norm;
  j["g_viol"] = rep.kkt.g_viol;
  j["q_viol"] = rep.kkt.q_viol;
  j["wall_ms"] = rep.wall_ms;
  if (rep.oos_probability >= 0) j["oos_probability"] = rep.oos_probability;
  j["x"] = std::vector<double>(rep.x.data(), rep.x.data() + rep.x.size());
  return j;
}

int cmd_solve(const Options& opt, const ccq::Config& cfg) {
  if (opt.epsilon <= 0)
    throw std::invalid_argument("solve needs --epsilon > 0");
  ccq::Instance inst = make_instance(opt, cfg);
  write_manifest(opt, inst, "solve");
  const int N = opt.sample_sizes.front();
  const ccq::ScenarioSet S =
      ccq::sample(inst.generator_id, inst.gen_params, N, opt.seed);
  ccq::QuantileConfig qcfg;
  qcfg.alpha = inst.alpha;
  const ccq::SmoothingKernel k(opt.epsilon);
  ccq::SolveReport rep = ccq::solve(inst.ps, S, inst.x0, qcfg, k, make_tr(cfg));
  const ccq::ScenarioSet S_val =
      ccq::validation_scenarios(inst, opt.oos_size, opt.seed);
  rep.oos_probability = ccq::oos_probability(inst.ps, rep.x, S_val);
  ccq::write_trace_csv(rep, (fs::path(opt.out_dir) / "trace.csv").string());
  std::ofstream(fs::path(opt.out_dir) / "summary.json")
      << report_json(rep).dump(2) << "\n";
  std::cout << "status=" << rep.status << " objective=" << rep.objective
            << " oos=" << rep.oos_probability << "\n";
  return rep.converged ? 0 : 1;
}

int cmd_tune(const Options& opt, const ccq::Config& cfg) {
  ccq::Instance inst = make_instance(opt, cfg);
  write_manifest(opt, inst, "tune");
  const int N = opt.sample_sizes.front();
  const ccq::ScenarioSet S =
      ccq::sample(inst.generator_id, inst.gen_params, N, opt.seed);
  ccq::QuantileConfig qcfg;
  qcfg.alpha = inst.alpha;
  const ccq::TuneResult res = ccq::tune(inst, S, make_tuner(opt, cfg),
                                        make_tr(cfg), qcfg);
  ccq::write_tuner_csv(res, (fs::path(opt.out_dir) / "tuner.csv").string());
  ccq::write_trace_csv(res.report,
                       (fs::path(opt.out_dir) / "trace.csv").string());
  json j = report_json(res.report);
  j["tuner_status"] = res.status;
  j["tuned_epsilon"] = res.epsilon;
  std::ofstream(fs::path(opt.out_dir) / "summary.json") << j.dump(2) << "\n";
  std::cout << "tuner=" << res.status << " epsilon=" << res.epsilon
            << " oos=" << res.report.oos_probability << "\n";
  return res.status == "infeasible_warning" ? 1 : 0;
}

int cmd_validate(const Options& opt, const ccq::Config& cfg) {
  ccq::Instance inst = make_instance(opt, cfg);
  write_manifest(opt, inst, "validate");
  const fs::path out(opt.out_dir);
  if (opt.experiment == "replication") {
    const auto rows =
        ccq::replication_stats(inst, opt.sample_sizes, opt.replications,
                               opt.seed, make_tuner(opt, cfg), make_tr(cfg),
                               opt.threads);
    ccq::write_replication_csv(rows, (out / "replication.csv").string());
    ccq::write_replication_json(rows, (out / "summary.json").string());
    return 0;
  }
  if (opt.experiment == "decay") {
    // probe point: tuned solution pushed outward until marginally infeasible
    const int N = opt.sample_sizes.front();
    const ccq::ScenarioSet S =
        ccq::sample(inst.generator_id, inst.gen_params, N, opt.seed);
    ccq::QuantileConfig qcfg;
    qcfg.alpha = inst.alpha;
    const ccq::TuneResult res =
        ccq::tune(inst, S, make_tuner(opt, cfg), make_tr(cfg), qcfg);
    const ccq::ScenarioSet S_val =
        ccq::validation_scenarios(inst, opt.oos_size, opt.seed);
    ccq::Vector x = res.report.x;
    for (int i = 0; i < 60; ++i) {
      if (ccq::oos_probability(inst.ps, x, S_val) < 1.0 - inst.alpha - 0.005)
        break;
      x *= 1.01;
    }
    const ccq::SmoothingKernel k(res.epsilon);
    const auto decay = ccq::feasibility_decay(
        inst, x, inst.alpha, k, {50, 100, 200, 400}, opt.replications * 20,
        opt.seed + 1);
    ccq::write_decay_csv(decay, (out / "decay.csv").string());
    ccq::write_decay_json(decay, (out / "summary.json").string());
    return 0;
  }
  if (opt.experiment == "flatness") {
    const int N = opt.sample_sizes.front();
    const ccq::ScenarioSet S =
        ccq::sample(inst.generator_id, inst.gen_params, N, opt.seed);
    ccq::QuantileConfig qcfg;
    qcfg.alpha = inst.alpha;
    const double eps = opt.epsilon > 0 ? opt.epsilon : 1.0;
    const ccq::SmoothingKernel k(eps);
    std::vector<double> grid;
    for (int i = 0; i <= 100; ++i) grid.push_back(-2.5 + 5.0 * i / 100.0);
    ccq::Vector base = inst.x0;
    const auto rows = ccq::flatness_profile(
        inst.ps, S, qcfg, k, grid, [&](double gx) {
          ccq::Vector x = base;
          x[0] = gx;
          return x;
        });
    ccq::write_flatness_csv(rows, (out / "flatness.csv").string());
    return 0;
  }
  throw std::invalid_argument("unknown experiment: " + opt.experiment);
}

int cmd_bench(const Options& opt, const ccq::Config& cfg) {
  ccq::Instance inst = make_instance(opt, cfg);
  write_manifest(opt, inst, "bench");
  const double eps = opt.epsilon > 0 ? opt.epsilon : 1.0;
  std::vector<int> Ns = opt.sample_sizes;
  if (Ns.size() == 1) Ns = {200, 500, 2000, 5000};
  std::ofstream out(fs::path(opt.out_dir) / "bench.csv");
  out << "N,wall_ms,iterations,objective,converged\n";
  json rows = json::array();
  for (int N : Ns) {
    const ccq::ScenarioSet S =
        ccq::sample(inst.generator_id, inst.gen_params, N, opt.seed);
    ccq::QuantileConfig qcfg;
    qcfg.alpha = inst.alpha;
    const ccq::SmoothingKernel k(eps);
    const ccq::SolveReport rep =
        ccq::solve(inst.ps, S, inst.x0, qcfg, k, make_tr(cfg));
    out << N << "," << rep.wall_ms << "," << rep.iterations << ","
        << rep.objective << "," << (rep.converged ? 1 : 0) << "\n";
    rows.push_back({{"N", N},
                    {"wall_ms", rep.wall_ms},
                    {"iterations", rep.iterations},
                    {"objective", rep.objective},
                    {"converged", rep.converged}});
    std::cout << "N=" << N << " wall_ms=" << rep.wall_ms << "\n";
  }
  std::ofstream(fs::path(opt.out_dir) / "summary.json") << rows.dump(2) << "\n";
  return 0;
}

int cmd_gen(const Options& opt, const ccq::Config& cfg) {
  ccq::Instance inst = make_instance(opt, cfg);
  write_manifest(opt, inst, "gen");
  const int N = opt.sample_sizes.front();
  const ccq::ScenarioSet S =
      ccq::sample(inst.generator_id, inst.gen_params, N, opt.seed);
  ccq::save_scenarios(S, (fs::path(opt.out_dir) / "scenarios.csv").string());
  std::cout << "wrote " << N << " scenarios\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chance-constrained quantile-smoothing solver"};
  app.require_subcommand(1);

  Options opt;
  app.add_option("--config", opt.config_path, "instance description file");
  app.add_option("--seed", opt.seed, "master seed; all randomness derives from it");
  app.add_option("--epsilon", opt.epsilon, "smoothing parameter");
  app.add_option("--alpha", opt.alpha, "risk level override");
  app.add_option("--sample-size", opt.sample_sizes, "training sample size(s)");
  app.add_option("--oos-size", opt.oos_size, "out-of-sample size N'");
  app.add_option("--problem", opt.problem,
                 "nonconvex1d | reinsurance | knapsack | file");
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_option("--replications", opt.replications, "replications per setting");
  app.add_option("--threads", opt.threads, "worker threads for replications");
  app.add_option("--experiment", opt.experiment,
                 "validate mode: replication | decay | flatness");

  auto* solve = app.add_subcommand("solve", "one instance at fixed epsilon");
  auto* tune = app.add_subcommand("tune", "epsilon bisection");
  auto* validate = app.add_subcommand("validate", "replication/decay/flatness");
  auto* bench = app.add_subcommand("bench", "timing sweep over N");
  auto* gen = app.add_subcommand("gen", "emit a scenario CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    fs::create_directories(opt.out_dir);
    ccq::Config cfg = opt.config_path.empty()
                          ? ccq::Config::parse_string("")
                          : ccq::Config::parse_file(opt.config_path);
    if (solve->parsed()) return cmd_solve(opt, cfg);
    if (tune->parsed()) return cmd_tune(opt, cfg);
    if (validate->parsed()) return cmd_validate(opt, cfg);
    if (bench->parsed()) return cmd_bench(opt, cfg);
    if (gen->parsed()) return cmd_gen(opt, cfg);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
