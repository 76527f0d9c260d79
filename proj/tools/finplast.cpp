// finplast: run | check | linearize | report

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "finplast/config.hpp"
#include "finplast/diagnostics.hpp"
#include "finplast/io.hpp"
#include "finplast/solver.hpp"

namespace fs = std::filesystem;
using namespace finplast;

namespace {

void apply_thread_env() {
  const char* v = std::getenv("FINPLAST_NUM_THREADS");
  if (!v) return;
  const int n = std::atoi(v);
  if (n < 1) {
    std::cerr << "warning: ignoring FINPLAST_NUM_THREADS=" << v << '\n';
    return;
  }
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

struct RunFlags {
  std::string config;
  std::optional<double> tau;
  std::optional<std::size_t> nsteps;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool dump_fields = false;
  bool quiet = false;
};

int cmd_run(const RunFlags& f) {
  ScenarioSpec sc = load_scenario(f.config);
  if (f.tau && f.nsteps) {
    sc.tau = *f.tau;
    sc.t_end = *f.tau * static_cast<double>(*f.nsteps);
  } else if (f.tau) {
    sc.tau = *f.tau;
  } else if (f.nsteps) {
    if (*f.nsteps == 0) throw Error(ErrorKind::ConfigError, "--nsteps must be positive");
    sc.tau = sc.t_end / static_cast<double>(*f.nsteps);
  }
  if (f.out) sc.output_dir = *f.out;
  if (f.seed) sc.seed = *f.seed;
  if (f.dump_fields) sc.dump_fields = true;
  const Problem pr = build_problem(sc);

  fs::create_directories(sc.output_dir);
  const fs::path out(sc.output_dir);
  if (sc.dump_fields) fs::create_directories(out / "fields");

  std::size_t failed_step = 0;
  Trajectory traj;
  try {
    traj = run_evolution(pr, [&](const StepRecord& r) {
      failed_step = r.step + 1;
      if (!f.quiet)
        std::fprintf(stderr, "step %zu/%zu t=%.4f E=%.6e D=%.3e outer=%d%s\n", r.step, pr.nsteps, r.t, r.energy,
                     r.dissipation, r.outer_iterations, r.converged ? "" : " (not converged)");
    });
  } catch (const Error& e) {
    std::cerr << "error at step " << failed_step << ": " << e.what() << '\n';
    return 2;
  }

  write_trajectory_csv((out / "trajectory.csv").string(), traj);
  write_trajectory_json((out / "trajectory.json").string(), traj, sc);
  if (sc.dump_fields) {
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%04zu", i);
      write_vtk((out / "fields" / (std::string(name) + ".vtk")).string(), traj.states[i], traj.times[i]);
      write_fields_csv((out / "fields" / (std::string(name) + ".csv")).string(), traj.states[i]);
    }
  }

  const DiagnosticsReport rep = trajectory_report(traj, pr);
  {
    std::ofstream txt(out / "report.txt", std::ios::binary), csv(out / "report.csv", std::ios::binary);
    write_report_text(txt, rep);
    write_report_csv(csv, rep);
  }
  write_report_text(std::cout, rep);
  return rep.all_passed() ? 0 : 1;
}

int cmd_check(const std::string& config, std::uint64_t seed) {
  const ScenarioSpec sc = load_scenario(config);
  const Problem pr = build_problem(sc);
  const MaterialParams& p = pr.params;
  DiagnosticsReport rep;

  const ParamsReport pv = validate_params(p, seed);
  CheckResult params{"parameters"};
  params.passed = true;
  params.constants = {{"c1", pv.c1}, {"c2", pv.c2}, {"r1", pv.r1},
                      {"min_elastic_curvature", pv.min_elastic_curvature},
                      {"min_plastic_curvature", pv.min_plastic_curvature}};
  rep.add(params);

  const GradientCheck gc = constitutive_gradient_check(p, 400, seed);
  CheckResult grad{"constitutive_gradients"};
  grad.slack = std::max(gc.piola_rel, gc.force_rel);
  grad.passed = grad.slack <= 1e-5;
  grad.constants = {{"piola_rel", gc.piola_rel}, {"force_rel", gc.force_rel}};
  rep.add(grad);

  CheckResult frame{"frame_indifference"};
  frame.slack = frame_indifference_check(p, 100, seed);
  frame.passed = frame.slack <= 1e-12;
  rep.add(frame);

  CheckResult poly{"polyconvexity_segments"};
  poly.slack = polyconvexity_check(p, 100, seed);
  poly.passed = poly.slack <= 1e-10;
  rep.add(poly);

  const MetricSuite ms = metric_suite(p, pr.policy.path, 200, seed, 2.0);
  CheckResult metric{"metric_properties"};
  metric.slack = std::max({ms.symmetry, ms.triangle, ms.self_distance});
  metric.passed = ms.passed();
  metric.constants = {{"symmetry", ms.symmetry},       {"triangle", ms.triangle},
                      {"self_distance", ms.self_distance}, {"min_distinct", ms.min_distinct},
                      {"lower_ratio", ms.lower_ratio}, {"upper_ratio", ms.upper_ratio},
                      {"c3", ms.c3}};
  rep.add(metric);

  CheckResult causal{"mollifier_causality"};
  causal.slack = mollifier_causality_check(*pr.grid, pr.kernels, pr.tau, std::min<std::size_t>(pr.nsteps + 1, 8), seed);
  causal.passed = causal.slack == 0.0;
  rep.add(causal);

  const LinearizationStudy ls = linearization_study(p, {1e-1, 3e-2, 1e-2, 3e-3}, 20, seed);
  CheckResult lin{"linearization"};
  lin.slack = std::min({ls.slope_sigma, ls.slope_force, ls.slope_dissipation});
  lin.passed = lin.slack >= 0.9;
  lin.constants = {{"slope_sigma", ls.slope_sigma}, {"slope_force", ls.slope_force},
                   {"slope_dissipation", ls.slope_dissipation}};
  rep.add(lin);

  write_report_text(std::cout, rep);
  return rep.all_passed() ? 0 : 1;
}

int cmd_linearize(const std::string& config, const std::vector<double>& eps, const std::string& out_dir,
                  std::uint64_t seed) {
  const ScenarioSpec sc = load_scenario(config);
  for (double e : eps)
    if (!(e > 0.0)) throw Error(ErrorKind::InvalidArgument, "--eps values must be positive");
  const LinearizationStudy ls = linearization_study(sc.params, eps, 20, seed);
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / "linearization.csv";
  std::ofstream csv(path, std::ios::binary);
  csv << "eps,err_sigma,err_force,err_dissipation\n";
  for (const auto& r : ls.rows)
    csv << detail::fmt(r.eps) << ',' << detail::fmt(r.max_error.sigma) << ',' << detail::fmt(r.max_error.force) << ','
        << detail::fmt(r.max_error.dissipation) << '\n';
  std::printf("%-10s %-12s %-12s %-12s\n", "eps", "err_sigma", "err_force", "err_R");
  for (const auto& r : ls.rows)
    std::printf("%-10.3g %-12.4e %-12.4e %-12.4e\n", r.eps, r.max_error.sigma, r.max_error.force, r.max_error.dissipation);
  if (ls.rows.size() < 2) {
    std::printf("single eps: no slope\n");
    return 0;
  }
  std::printf("slopes: sigma %.3f  force %.3f  R %.3f\n", ls.slope_sigma, ls.slope_force, ls.slope_dissipation);
  const bool ok = ls.slope_sigma >= 0.9 && ls.slope_force >= 0.9 && ls.slope_dissipation >= 0.9;
  return ok ? 0 : 1;
}

int cmd_report(const std::string& traj_path, const std::optional<std::string>& csv_path) {
  const LoadedTrajectory lt = read_trajectory_json(traj_path);
  const DiagnosticsReport rep = trajectory_report(lt.traj, lt.problem);
  write_report_text(std::cout, rep);
  if (csv_path) {
    std::ofstream csv(*csv_path, std::ios::binary);
    write_report_csv(csv, rep);
  }
  return rep.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"Finite-strain nonassociative elastoplasticity by incremental minimization"};
  app.require_subcommand(1);

  RunFlags rf;
  double tau = 0.0;
  std::size_t nsteps = 0;
  std::string out;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "run the time-stepping scheme and write trajectory.csv/json and a report");
  run->add_option("config", rf.config, "scenario file")->required()->check(CLI::ExistingFile);
  auto* o_tau = run->add_option("--tau", tau, "time step, overrides time.tau_time");
  auto* o_n = run->add_option("--nsteps", nsteps, "number of steps over time.t_end_time");
  auto* o_out = run->add_option("--out", out, "output directory");
  auto* o_seed = run->add_option("--seed", seed, "seed for randomized components");
  run->add_flag("--dump-fields", rf.dump_fields, "write VTK and CSV field dumps per step");
  run->add_flag("-q,--quiet", rf.quiet, "no per-step progress");

  std::string check_cfg;
  std::uint64_t check_seed = 20240601;
  auto* check = app.add_subcommand("check", "property suites: gradients, frame indifference, metric, mollifier");
  check->add_option("config", check_cfg, "scenario file")->required()->check(CLI::ExistingFile);
  check->add_option("--seed", check_seed, "sampling seed");

  std::string lin_cfg, lin_out = "out";
  std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3};
  std::uint64_t lin_seed = 11;
  auto* lin = app.add_subcommand("linearize", "small-strain limit errors and log-log slopes");
  lin->add_option("config", lin_cfg, "scenario file")->required()->check(CLI::ExistingFile);
  lin->add_option("--eps", eps, "eps values")->delimiter(',');
  lin->add_option("--out", lin_out, "output directory for linearization.csv");
  lin->add_option("--seed", lin_seed, "sampling seed");

  std::string rep_traj;
  std::string rep_csv;
  auto* report = app.add_subcommand("report", "rerun the trajectory checks on a saved trajectory.json");
  report->add_option("trajectory", rep_traj, "trajectory.json written by run")->required()->check(CLI::ExistingFile);
  auto* o_csv = report->add_option("--csv", rep_csv, "also write the report as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (o_tau->count()) rf.tau = tau;
      if (o_n->count()) rf.nsteps = nsteps;
      if (o_out->count()) rf.out = out;
      if (o_seed->count()) rf.seed = seed;
      return cmd_run(rf);
    }
    if (*check) return cmd_check(check_cfg, check_seed);
    if (*lin) return cmd_linearize(lin_cfg, eps, lin_out, lin_seed);
    if (*report) return cmd_report(rep_traj, o_csv->count() ? std::optional<std::string>(rep_csv) : std::nullopt);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
