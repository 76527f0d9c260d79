#include "finplast/io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>

#include "finplast/mollify.hpp"

namespace finplast {

namespace detail {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

static std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  return out;
}

}  // namespace detail

const char* const kTrajectoryCsvHeader =
    "step,t,energy,stored,work,power,dissipation,cum_dissipation,balance_residual,y_residual,p_residual,"
    "outer_iterations,converged";

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << kTrajectoryCsvHeader << '\n';
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const auto& r = traj.records[i];
    const double balance = -energy_balance_residual(traj, i).upper_gap;
    out << r.step << ',' << detail::fmt(r.t) << ',' << detail::fmt(r.energy) << ',' << detail::fmt(r.stored) << ','
        << detail::fmt(r.work) << ',' << detail::fmt(r.power) << ',' << detail::fmt(r.dissipation) << ','
        << detail::fmt(r.cum_dissipation) << ',' << detail::fmt(balance) << ',' << detail::fmt(r.y_residual) << ','
        << detail::fmt(r.p_residual) << ',' << r.outer_iterations << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  auto out = detail::open_out(path);
  write_trajectory_csv(out, traj);
}

// ---- JSON ---------------------------------------------------------------------------

static nlohmann::json to_json(const StepRecord& r) {
  return {{"step", r.step},
          {"t", r.t},
          {"energy", r.energy},
          {"stored", r.stored},
          {"work", r.work},
          {"power", r.power},
          {"dissipation", r.dissipation},
          {"cum_dissipation", r.cum_dissipation},
          {"power_increment", r.power_increment},
          {"y_residual", r.y_residual},
          {"p_residual", r.p_residual},
          {"outer_iterations", r.outer_iterations},
          {"converged", r.converged}};
}

static StepRecord record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.t = j.at("t").get<double>();
  r.energy = j.at("energy").get<double>();
  r.stored = j.at("stored").get<double>();
  r.work = j.at("work").get<double>();
  r.power = j.at("power").get<double>();
  r.dissipation = j.at("dissipation").get<double>();
  r.cum_dissipation = j.at("cum_dissipation").get<double>();
  r.power_increment = j.at("power_increment").get<double>();
  r.y_residual = j.at("y_residual").get<double>();
  r.p_residual = j.at("p_residual").get<double>();
  r.outer_iterations = j.at("outer_iterations").get<int>();
  r.converged = j.at("converged").get<bool>();
  return r;
}

void write_trajectory_json(const std::string& path, const Trajectory& traj, const ScenarioSpec& sc) {
  nlohmann::json j;
  j["format"] = "finplast-trajectory-1";
  j["config"] = sc.source;
  j["seed"] = sc.seed;
  j["tau"] = traj.tau;
  j["times"] = traj.times;
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const auto& s = traj.states[i];
    std::vector<double> y, pm;
    for (const auto& v : s.y()) y.insert(y.end(), v.begin(), v.end());
    for (const auto& m : s.P()) pm.insert(pm.end(), m.m.begin(), m.m.end());
    steps.push_back({{"record", to_json(traj.records[i])}, {"y", y}, {"P", pm}});
  }
  j["steps"] = steps;
  auto out = detail::open_out(path);
  out << j.dump() << '\n';
}

LoadedTrajectory read_trajectory_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path + ": " + e.what());
  }
  if (j.value("format", "") != "finplast-trajectory-1")
    throw Error(ErrorKind::InvalidArgument, path + ": not a trajectory file");
  LoadedTrajectory lt;
  lt.spec = parse_scenario(j.at("config").get<std::string>());
  lt.spec.tau = j.at("tau").get<double>();
  const auto times = j.at("times").get<std::vector<double>>();
  lt.spec.t_end = times.back();
  lt.spec.seed = j.at("seed").get<std::uint64_t>();
  lt.problem = build_problem(lt.spec);
  const auto grid = lt.problem.grid;
  Trajectory& tr = lt.traj;
  tr.tau = lt.spec.tau;
  tr.times = times;
  for (const auto& st : j.at("steps")) {
    const auto y = st.at("y").get<std::vector<double>>();
    const auto pm = st.at("P").get<std::vector<double>>();
    if (y.size() != 3 * grid->num_nodes() || pm.size() != 9 * grid->num_cells())
      throw Error(ErrorKind::SizeMismatch, path + ": field sizes do not match the embedded grid");
    std::vector<Vec3> yv(grid->num_nodes());
    for (std::size_t v = 0; v < yv.size(); ++v) yv[v] = {y[3 * v], y[3 * v + 1], y[3 * v + 2]};
    std::vector<Mat3> pv(grid->num_cells());
    for (std::size_t c = 0; c < pv.size(); ++c)
      for (std::size_t k = 0; k < 9; ++k) pv[c].m[k] = pm[9 * c + k];
    StateField s(grid, std::move(yv), std::move(pv));
    s.refresh();
    tr.grad_y_history.push_back(s.grad_y());
    tr.states.push_back(std::move(s));
    tr.records.push_back(record_from_json(st.at("record")));
  }
  if (tr.states.size() != tr.times.size()) throw Error(ErrorKind::SizeMismatch, path + ": steps and times differ");
  for (std::size_t i = 0; i < tr.states.size(); ++i)
    tr.mollified.push_back(mollified_gradient(*grid, tr.grad_y_history, i, tr.tau, lt.problem.kernels));
  return lt;
}

// ---- field dumps --------------------------------------------------------------------------

void write_vtk(const std::string& path, const StateField& s, double t) {
  const Grid& g = s.grid();
  auto out = detail::open_out(path);
  const auto n = g.cells();
  out << "# vtk DataFile Version 3.0\n";
  out << "finplast state t=" << detail::fmt(t) << "\nASCII\nDATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << n[0] + 1 << ' ' << n[1] + 1 << ' ' << n[2] + 1 << '\n';
  out << "ORIGIN 0 0 0\nSPACING " << detail::fmt(g.h(0)) << ' ' << detail::fmt(g.h(1)) << ' ' << detail::fmt(g.h(2))
      << '\n';
  out << "POINT_DATA " << g.num_nodes() << "\nVECTORS displacement double\n";
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const Vec3 u = s.y()[v] - g.node_position(v);
    out << detail::fmt(u[0]) << ' ' << detail::fmt(u[1]) << ' ' << detail::fmt(u[2]) << '\n';
  }
  out << "CELL_DATA " << g.num_cells() << "\nTENSORS plastic_strain double\n";
  for (const auto& m : s.P()) {
    for (int i = 0; i < 3; ++i) out << detail::fmt(m(i, 0)) << ' ' << detail::fmt(m(i, 1)) << ' ' << detail::fmt(m(i, 2)) << '\n';
    out << '\n';
  }
  out << "SCALARS det_grad_y double 1\nLOOKUP_TABLE default\n";
  for (const auto& f : s.grad_y()) out << detail::fmt(det(f)) << '\n';
}

void write_fields_csv(const std::string& path, const StateField& s) {
  const Grid& g = s.grid();
  auto out = detail::open_out(path);
  out << "cell,P11,P12,P13,P21,P22,P23,P31,P32,P33,y1,y2,y3\n";
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    out << c;
    for (double v : s.P()[c].m) out << ',' << detail::fmt(v);
    Vec3 yc{0, 0, 0};
    for (auto v : g.cell_nodes(c)) yc += 0.125 * s.y()[v];
    out << ',' << detail::fmt(yc[0]) << ',' << detail::fmt(yc[1]) << ',' << detail::fmt(yc[2]) << '\n';
  }
}

// ---- reports ---------------------------------------------------------------------------------

void write_report_text(std::ostream& out, const DiagnosticsReport& rep) {
  for (const auto& c : rep.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " slack=" << detail::fmt(c.slack);
    for (const auto& [k, v] : c.constants) out << ' ' << k << '=' << detail::fmt(v);
    if (!c.detail.empty()) out << " (" << c.detail << ')';
    out << '\n';
  }
}

void write_report_csv(std::ostream& out, const DiagnosticsReport& rep) {
  out << "check,passed,slack,constants\n";
  for (const auto& c : rep.checks) {
    out << c.name << ',' << (c.passed ? 1 : 0) << ',' << detail::fmt(c.slack) << ',';
    bool first = true;
    for (const auto& [k, v] : c.constants) {
      out << (first ? "" : ";") << k << '=' << detail::fmt(v);
      first = false;
    }
    out << '\n';
  }
}

}  // namespace finplast
