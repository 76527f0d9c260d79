#include "finplast/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

namespace finplast {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

class ConfigReader {
 public:
  explicit ConfigReader(const boost::property_tree::ptree& pt) : pt_(pt) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    const auto v = pt_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& what) {
    throw Error(ErrorKind::ConfigError, key + ": " + what);
  }

  static double to_double(const std::string& key, const std::string& s) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + s + "'");
    }
    if (trim(s.substr(pos)) != "" || !std::isfinite(v)) fail(key, "expected a number, got '" + s + "'");
    return v;
  }

  void number(const std::string& key, double& out) {
    if (auto v = raw(key)) out = to_double(key, *v);
  }

  void integer(const std::string& key, int& out) {
    double d = out;
    number(key, d);
    if (d != std::floor(d) || std::abs(d) > 1e9) fail(key, "expected an integer");
    out = static_cast<int>(d);
  }

  void flag(const std::string& key, bool& out) {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") out = true;
      else if (*v == "false" || *v == "0" || *v == "no") out = false;
      else fail(key, "expected true or false");
    }
  }

  std::vector<double> numbers(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(to_double(key, tok));
    return out;
  }

  template <std::size_t N>
  void triple(const std::string& key, std::array<double, N>& out) {
    if (auto v = raw(key)) {
      const auto xs = numbers(key, *v);
      if (xs.size() != N) fail(key, "expected " + std::to_string(N) + " numbers");
      for (std::size_t k = 0; k < N; ++k) out[k] = xs[k];
    }
  }

  /// "x y z, x y z, ..." one vector per load knot
  void vectors(const std::string& key, std::vector<Vec3>& out) {
    if (auto v = raw(key)) {
      out.clear();
      for (const auto& part : split(*v, ',')) {
        const auto xs = numbers(key, part);
        if (xs.size() != 3) fail(key, "each vector needs 3 components");
        out.push_back({xs[0], xs[1], xs[2]});
      }
    }
  }

  static BoxFace face(const std::string& key, const std::string& s) {
    if (s.size() != 2 || (s[0] != 'x' && s[0] != 'y' && s[0] != 'z') || (s[1] != '-' && s[1] != '+'))
      fail(key, "expected a face like x- or z+, got '" + s + "'");
    return BoxFace{s[0] - 'x', s[1] == '-' ? 0 : 1};
  }

  /// Keys present in the file that nothing asked for.
  std::vector<std::string> unknown() const {
    std::vector<std::string> out;
    for (const auto& sec : pt_)
      for (const auto& kv : sec.second) {
        const std::string key = sec.first + "." + kv.first;
        if (!used_.count(key)) out.push_back(key);
      }
    return out;
  }

 private:
  const boost::property_tree::ptree& pt_;
  std::set<std::string> used_;
};

}  // namespace

ScenarioSpec parse_scenario(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigError, "line " + std::to_string(e.line()) + ": " + e.message());
  }
  ScenarioSpec sc;
  sc.source = text;
  ConfigReader rd(pt);

  rd.triple("grid.extent_length", sc.extent);
  {
    std::array<double, 3> c{static_cast<double>(sc.cells[0]), static_cast<double>(sc.cells[1]),
                            static_cast<double>(sc.cells[2])};
    rd.triple("grid.cells", c);
    for (int a = 0; a < 3; ++a) {
      if (c[a] < 1 || c[a] != std::floor(c[a])) ConfigReader::fail("grid.cells", "expected positive integers");
      sc.cells[a] = static_cast<int>(c[a]);
    }
  }
  if (auto v = rd.raw("grid.clamped_faces")) {
    sc.clamped.clear();
    std::istringstream fs(*v);
    std::string tok;
    while (fs >> tok) sc.clamped.push_back(ConfigReader::face("grid.clamped_faces", tok));
    if (sc.clamped.empty()) ConfigReader::fail("grid.clamped_faces", "at least one face must be clamped");
  }

  MaterialParams& p = sc.params;
  rd.number("material.alpha_elastic", p.alpha);
  rd.number("material.beta_cofactor", p.beta);
  rd.number("material.gamma_determinant", p.gamma_det);
  rd.number("material.delta_growth", p.delta);
  rd.number("material.h_p_plastic_hardening", p.h_p);
  rd.number("material.c_p_plastic_growth", p.c_p);
  rd.number("material.mu_gradient_weight", p.mu);
  rd.number("material.q_deformation_exponent", p.q);
  rd.number("material.q_e_elastic_exponent", p.q_e);
  rd.number("material.q_p_plastic_exponent", p.q_p);
  rd.number("material.q_r_gradient_exponent", p.q_r);
  rd.number("material.hourglass_stiffness", p.hourglass);
  rd.number("flow.r0_yield_radius", p.flow.r_0);
  rd.number("flow.g0_potential_scale", p.flow.g_0);
  rd.number("flow.r_max_gap_clamp", p.flow.r_max);

  if (auto v = rd.raw("kernels.time_kernel"); v && *v != "exponential")
    ConfigReader::fail("kernels.time_kernel", "only 'exponential' is available");
  if (auto v = rd.raw("kernels.space_kernel"); v && *v != "gaussian")
    ConfigReader::fail("kernels.space_kernel", "only 'gaussian' is available");
  rd.number("kernels.lambda_per_time", sc.lambda);
  rd.number("kernels.radius_cells", sc.radius_cells);

  if (auto v = rd.raw("loads.interpolation")) {
    if (*v == "linear") sc.interpolation = LoadInterpolation::Linear;
    else if (*v == "smooth") sc.interpolation = LoadInterpolation::Smooth;
    else ConfigReader::fail("loads.interpolation", "expected linear or smooth");
  }
  if (auto v = rd.raw("loads.knot_times")) sc.knot_times = rd.numbers("loads.knot_times", *v);
  rd.vectors("loads.body_force_per_volume", sc.body);
  if (auto v = rd.raw("loads.traction_face")) sc.traction_face = ConfigReader::face("loads.traction_face", *v);
  rd.vectors("loads.traction_force_per_area", sc.traction);
  if (sc.body.size() != sc.knot_times.size())
    ConfigReader::fail("loads.body_force_per_volume", "need one vector per knot time");
  if (sc.traction.size() != sc.knot_times.size())
    ConfigReader::fail("loads.traction_force_per_area", "need one vector per knot time");

  rd.number("time.tau_time", sc.tau);
  rd.number("time.t_end_time", sc.t_end);

  SolverPolicy& pol = sc.policy;
  rd.integer("solver.max_outer", pol.max_outer);
  rd.number("solver.inner_tol", pol.inner_tol);
  rd.integer("solver.y_max_iterations", pol.y_max_iterations);
  rd.number("solver.y_gtol", pol.y_gtol);
  rd.integer("solver.p_max_iterations", pol.p_max_iterations);
  rd.number("solver.p_tol", pol.p_tol);
  rd.integer("solver.stability_competitors", pol.stability_competitors);
  rd.integer("path.segments", pol.path.segments);
  rd.integer("path.refine_iterations", pol.path.refine_iterations);
  rd.integer("path.quadrature_points", pol.path.quadrature_points);

  {
    double seed = static_cast<double>(sc.seed);
    rd.number("run.seed", seed);
    if (seed < 0 || seed != std::floor(seed) || seed > 9.0e15) ConfigReader::fail("run.seed", "expected a nonnegative integer");
    sc.seed = static_cast<std::uint64_t>(seed);
  }
  if (auto v = rd.raw("run.output_dir")) sc.output_dir = *v;
  rd.flag("run.dump_fields", sc.dump_fields);

  const auto extra = rd.unknown();
  if (!extra.empty()) ConfigReader::fail(extra.front(), "unknown key");
  return sc;
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

Problem build_problem(const ScenarioSpec& sc) {
  Problem pr;
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      throw Error(ErrorKind::ConfigError, std::string(section) + ": " + e.what());
    }
  };
  const std::size_t n = sc.nsteps();
  wrap("flow", [&] { sc.params.flow.validate(); });
  wrap("material", [&] { validate_params(sc.params); });
  wrap("grid", [&] { pr.grid = std::make_shared<Grid>(sc.extent, sc.cells, sc.clamped); });
  wrap("loads", [&] {
    pr.loads = LoadProgram::uniform(*pr.grid, sc.knot_times, sc.body, sc.traction, sc.traction_face, sc.interpolation);
  });
  wrap("time", [&] {
    if (sc.tau * static_cast<double>(n) > pr.loads.t_end() + 1e-12 || pr.loads.t_begin() > 1e-12)
      throw Error(ErrorKind::TimeOutOfRange, "[0, t_end_time] must lie inside the load knots");
  });
  wrap("kernels", [&] { pr.kernels = Kernels::exponential_gaussian(*pr.grid, sc.lambda, sc.tau, n, sc.radius_cells); });
  wrap("solver", [&] { sc.policy.validate(); });
  pr.params = sc.params;
  pr.policy = sc.policy;
  pr.policy.path.seed = sc.seed * 2654435761ULL + 12345ULL;
  pr.tau = sc.tau;
  pr.nsteps = n;
  pr.seed = sc.seed;
  return pr;
}

}  // namespace finplast
