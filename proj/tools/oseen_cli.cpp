// Command-line front end: steady Oseen solves, refinement studies, and the
// structural audits (complex exactness, inf-sup, dof accounting).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "oseen/analysis.hpp"

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  double nu = 1e-6;
  int k = 2;
  int levels = -1;  // resolved per subcommand
  int n0 = -1;      // resolved per subcommand
  double perturb = 0.2;
  unsigned long seed = 42;
  std::string sigma = "auto";
  double delta0 = 1e-5;
  std::string convection = "upwind";
  bool vorticity = true;
  std::string problem = "benchmark";
  std::string out;
  std::string delta0_sweep;
};

struct OptionFlags {
  CLI::Option* nu = nullptr;
  CLI::Option* k = nullptr;
  CLI::Option* levels = nullptr;
  CLI::Option* n0 = nullptr;
  CLI::Option* perturb = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* sigma = nullptr;
  CLI::Option* delta0 = nullptr;
  CLI::Option* convection = nullptr;
  CLI::Option* no_vorticity = nullptr;
  CLI::Option* problem = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* sweep = nullptr;
};

struct Command {
  CLI::App* app = nullptr;
  Options cli;
  OptionFlags set;
  std::string config_path;
  bool no_vorticity_flag = false;
};

void add_common_options(Command& c) {
  CLI::App* s = c.app;
  s->add_option("--config", c.config_path, "JSON config file; explicit flags override it");
  c.set.nu = s->add_option("--nu", c.cli.nu, "viscosity");
  c.set.k = s->add_option("--k", c.cli.k, "velocity polynomial degree (>= 2)");
  c.set.levels = s->add_option("--levels", c.cli.levels, "number of refinement levels");
  c.set.n0 = s->add_option("--n0", c.cli.n0, "structured mesh subdivisions at level 1");
  c.set.perturb = s->add_option("--perturb", c.cli.perturb, "interior vertex jitter, 0..0.3");
  c.set.seed = s->add_option("--seed", c.cli.seed, "mesh perturbation seed");
  c.set.sigma = s->add_option("--sigma", c.cli.sigma, "interior penalty, number or 'auto'");
  c.set.delta0 = s->add_option("--delta0", c.cli.delta0, "vorticity stabilization weight");
  c.set.convection =
      s->add_option("--convection", c.cli.convection, "facet flux: upwind, central or none");
  c.set.no_vorticity =
      s->add_flag("--no-vorticity", c.no_vorticity_flag, "disable the vorticity stabilization");
  c.set.problem =
      s->add_option("--problem", c.cli.problem, "manufactured problem: benchmark or polynomial");
  c.set.out = s->add_option("--out", c.cli.out, "output file (default stdout)");
  c.set.sweep = s->add_option("--delta0-sweep", c.cli.delta0_sweep,
                              "comma-separated delta0 values; one study per value");
}

// Strict schema: every key must be known and carry the right type.
Options load_config(const std::string& path, const Options& defaults) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  Options o = defaults;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "nu") o.nu = val.get<double>();
      else if (key == "k") o.k = val.get<int>();
      else if (key == "levels") o.levels = val.get<int>();
      else if (key == "n0") o.n0 = val.get<int>();
      else if (key == "perturb") o.perturb = val.get<double>();
      else if (key == "seed") o.seed = val.get<unsigned long>();
      else if (key == "sigma") {
        if (val.is_string()) o.sigma = val.get<std::string>();
        else o.sigma = std::to_string(val.get<double>());
      }
      else if (key == "delta0") o.delta0 = val.get<double>();
      else if (key == "convection") o.convection = val.get<std::string>();
      else if (key == "vorticity") o.vorticity = val.get<bool>();
      else if (key == "problem") o.problem = val.get<std::string>();
      else if (key == "out") o.out = val.get<std::string>();
      else if (key == "delta0_sweep") o.delta0_sweep = val.get<std::string>();
      else throw ConfigError("unknown config key: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return o;
}

struct Resolved {
  Options opt;
  double sigma_value = 0.0;
  bool sigma_is_auto = false;
  oseen::ConvectionFlux flux = oseen::ConvectionFlux::upwind;
};

Resolved resolve(const Command& c, int default_levels, int default_n0) {
  Options base;
  if (!c.config_path.empty()) base = load_config(c.config_path, base);

  Options o = base;
  if (c.set.nu->count()) o.nu = c.cli.nu;
  if (c.set.k->count()) o.k = c.cli.k;
  if (c.set.levels->count()) o.levels = c.cli.levels;
  if (c.set.n0->count()) o.n0 = c.cli.n0;
  if (c.set.perturb->count()) o.perturb = c.cli.perturb;
  if (c.set.seed->count()) o.seed = c.cli.seed;
  if (c.set.sigma->count()) o.sigma = c.cli.sigma;
  if (c.set.delta0->count()) o.delta0 = c.cli.delta0;
  if (c.set.convection->count()) o.convection = c.cli.convection;
  if (c.set.no_vorticity->count()) o.vorticity = false;
  if (c.set.problem->count()) o.problem = c.cli.problem;
  if (c.set.out->count()) o.out = c.cli.out;
  if (c.set.sweep->count()) o.delta0_sweep = c.cli.delta0_sweep;
  if (o.levels < 0) o.levels = default_levels;
  if (o.n0 < 0) o.n0 = default_n0;

  if (o.k < 2 || o.k > 6) throw ConfigError("k must be between 2 and 6");
  if (o.levels < 1 || o.levels > 12) throw ConfigError("levels must be between 1 and 12");
  if (o.n0 < 1) throw ConfigError("n0 must be positive");
  if (o.perturb < 0.0 || o.perturb > 0.3) throw ConfigError("perturb must lie in [0, 0.3]");
  if (!(o.nu > 0.0)) throw ConfigError("nu must be positive");
  if (o.delta0 < 0.0) throw ConfigError("delta0 must be nonnegative");

  Resolved r;
  r.opt = o;
  if (o.sigma == "auto") {
    r.sigma_is_auto = true;
    r.sigma_value = oseen::sigma_auto(o.k);
  } else {
    try {
      size_t pos = 0;
      r.sigma_value = std::stod(o.sigma, &pos);
      if (pos != o.sigma.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("sigma must be a number or 'auto'");
    }
    if (!(r.sigma_value > 0.0)) throw ConfigError("sigma must be positive");
  }
  if (o.convection == "upwind") r.flux = oseen::ConvectionFlux::upwind;
  else if (o.convection == "central") r.flux = oseen::ConvectionFlux::central;
  else if (o.convection == "none") r.flux = oseen::ConvectionFlux::none;
  else throw ConfigError("convection must be upwind, central or none");
  if (o.problem != "benchmark" && o.problem != "polynomial")
    throw ConfigError("problem must be benchmark or polynomial");
  return r;
}

oseen::DiscretizationParams make_params(const Resolved& r) {
  oseen::DiscretizationParams par;
  par.sigma = r.sigma_value;
  par.delta0 = r.opt.delta0;
  par.vorticity = r.opt.vorticity;
  par.flux = r.flux;
  return par;
}

oseen::OseenProblem make_problem(const Resolved& r) {
  return r.opt.problem == "polynomial" ? oseen::make_polynomial_problem(r.opt.nu, r.opt.k)
                                       : oseen::make_benchmark_problem(r.opt.nu);
}

std::vector<std::string> config_header(const Resolved& r) {
  const Options& o = r.opt;
  char buf[128];
  std::vector<std::string> lines;
  auto add = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    lines.emplace_back(buf);
  };
  add("problem=%s", o.problem.c_str());
  add("nu=%g", o.nu);
  add("k=%d", o.k);
  add("levels=%d", o.levels);
  add("n0=%d", o.n0);
  add("perturb=%g", o.perturb);
  add("seed=%lu", o.seed);
  add("sigma=%g%s", r.sigma_value, r.sigma_is_auto ? " (auto)" : "");
  add("delta0=%g", o.delta0);
  add("convection=%s", o.convection.c_str());
  add("vorticity=%s", o.vorticity ? "on" : "off");
  return lines;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

oseen::Mesh mesh_at_level(const Options& o, int level) {
  oseen::Mesh mesh = oseen::build_structured_mesh(o.n0, o.perturb, o.seed);
  for (int l = 1; l < level; ++l) mesh = oseen::refine_uniform(mesh);
  return mesh;
}

int run_solve(const Resolved& r) {
  const Options& o = r.opt;
  oseen::OseenProblem prob = make_problem(r);
  oseen::DiscretizationParams par = make_params(r);
  oseen::Mesh mesh = mesh_at_level(o, o.levels);

  oseen::FeSpace V = oseen::build_velocity_space(mesh, o.k);
  oseen::FeSpace Q = oseen::build_pressure_space(mesh, o.k);
  oseen::set_velocity_dirichlet(V, prob.dirichlet);
  oseen::SchemeSystem sys = oseen::assemble_scheme(V, Q, prob, par);
  oseen::DiscreteSolution sol = oseen::solve_oseen(V, Q, sys);
  oseen::ErrorReport err = oseen::compute_errors(V, Q, prob, par, sys.stab, sol.u, sol.p);

  for (const std::string& line : config_header(r)) std::cout << "# " << line << "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "level=%d h=%.6e dofs: velocity=%d (free %d) pressure=%d system=%d nnz=%ld",
                o.levels, err.h, V.n_dofs, V.n_free, Q.n_dofs, sol.report.n_system,
                sol.report.nnz);
  std::cout << buf << "\n";
  std::snprintf(buf, sizeof buf, "residual=%.3e solve_seconds=%.2f %s", sol.report.residual,
                sol.report.solve_seconds, sol.report.dense ? "(dense)" : "(sparse)");
  std::cout << buf << "\n";
  std::snprintf(buf, sizeof buf,
                "errors: energy=%.6e l2u=%.6e divu=%.3e linfu=%.6e l2p=%.6e l2p_proj=%.6e",
                err.energy, err.l2_u, err.div_u, err.linf_u, err.l2_p, err.l2_p_proj);
  std::cout << buf << "\n";

  if (!o.out.empty()) {
    std::ofstream out = open_output(o.out);
    for (const std::string& line : config_header(r)) out << "# " << line << "\n";
    out << "velocity " << sol.u.size() << "\n";
    for (Eigen::Index i = 0; i < sol.u.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g\n", sol.u(i));
      out << buf;
    }
    out << "pressure " << sol.p.size() << "\n";
    for (Eigen::Index i = 0; i < sol.p.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g\n", sol.p(i));
      out << buf;
    }
    std::cout << "wrote " << o.out << "\n";
  }
  return 0;
}

int run_study(const Resolved& r) {
  const Options& o = r.opt;
  oseen::OseenProblem prob = make_problem(r);

  oseen::StudyConfig cfg;
  cfg.k = o.k;
  cfg.n0 = o.n0;
  cfg.perturb = o.perturb;
  cfg.seed = o.seed;
  cfg.levels = o.levels;
  cfg.disc = make_params(r);

  std::vector<double> sweep;
  if (!o.delta0_sweep.empty()) {
    std::stringstream ss(o.delta0_sweep);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        sweep.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("bad delta0-sweep entry: " + item);
      }
    }
    if (sweep.empty()) throw ConfigError("delta0-sweep is empty");
  } else {
    sweep.push_back(o.delta0);
  }

  for (size_t i = 0; i < sweep.size(); ++i) {
    cfg.disc.delta0 = sweep[i];
    Resolved ri = r;
    ri.opt.delta0 = sweep[i];
    std::vector<oseen::LevelResult> res = oseen::run_study(prob, cfg, &std::cerr);
    if (o.out.empty()) {
      oseen::write_study_csv(std::cout, res, config_header(ri));
    } else {
      std::string path = o.out;
      if (sweep.size() > 1) {
        std::string suffix = "-d" + std::to_string(i);
        size_t dot = path.rfind('.');
        size_t slash = path.rfind('/');
        if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
          path += suffix;
        else
          path.insert(dot, suffix);
      }
      std::ofstream out = open_output(path);
      oseen::write_study_csv(out, res, config_header(ri));
      std::cout << "wrote " << path << "\n";
    }
  }
  return 0;
}

int run_audit(const Resolved& r) {
  const Options& o = r.opt;
  for (const std::string& line : config_header(r)) std::cout << "# " << line << "\n";
  char buf[256];
  std::vector<double> betas;
  oseen::Mesh mesh = mesh_at_level(o, 1);
  for (int level = 1; level <= o.levels; ++level) {
    if (level > 1) mesh = oseen::refine_uniform(mesh);
    int n_vel = oseen::velocity_dof_count(mesh.n_vertices(), mesh.n_facets(), mesh.n_triangles(),
                                          o.k);
    if (n_vel > 20000) {
      std::cout << "level " << level << ": skipped, " << n_vel
                << " velocity dofs exceed the dense audit cap\n";
      continue;
    }
    oseen::ExactnessReport ex = oseen::check_exactness(mesh, o.k);
    std::snprintf(buf, sizeof buf,
                  "level %d: V_free=%d Z_free=%d Q=%d | rank(B)=%d expected=%d | dims %s",
                  level, ex.n_velocity_free, ex.n_potential_free, ex.n_pressure, ex.rank_B,
                  ex.expected_rank,
                  (ex.n_velocity_free == ex.n_potential_free + ex.expected_rank) ? "ok" : "MISMATCH");
    std::cout << buf << "\n";
    std::snprintf(buf, sizeof buf,
                  "         max|B curl|=%.3e constrained-curl=%.3e rank(B) w/o interior=%d",
                  ex.max_commutator, ex.max_constrained_curl, ex.rank_B_no_interior);
    std::cout << buf << "\n";

    oseen::FeSpace V = oseen::build_velocity_space(mesh, o.k);
    oseen::FeSpace Q = oseen::build_pressure_space(mesh, o.k);
    try {
      oseen::InfSupReport is = oseen::estimate_infsup(V, Q);
      betas.push_back(is.beta);
      std::snprintf(buf, sizeof buf, "         inf-sup beta=%.6f", is.beta);
      std::cout << buf << "\n";
    } catch (const std::runtime_error& e) {
      std::cout << "         inf-sup skipped: " << e.what() << "\n";
    }
  }
  if (betas.size() > 1) {
    double lo = *std::min_element(betas.begin(), betas.end());
    double hi = *std::max_element(betas.begin(), betas.end());
    std::snprintf(buf, sizeof buf, "beta range [%.6f, %.6f], ratio %.3f", lo, hi, hi / lo);
    std::cout << buf << "\n";
  }
  return 0;
}

int run_dofs(const Resolved& r) {
  const Options& o = r.opt;
  for (const std::string& line : config_header(r)) std::cout << "# " << line << "\n";
  std::cout << "level,nv,ne,nt,velocity,velocity_bdm,pressure,potential,system,system_bdm\n";
  oseen::Mesh mesh = mesh_at_level(o, 1);
  for (int level = 1; level <= o.levels; ++level) {
    if (level > 1) mesh = oseen::refine_uniform(mesh);
    oseen::DofComparison d = oseen::compare_dof_counts(mesh, o.k);
    std::cout << level << ',' << d.nv << ',' << d.ne << ',' << d.nt << ',' << d.velocity << ','
              << d.velocity_bdm << ',' << d.pressure << ',' << d.potential << ',' << d.system
              << ',' << d.system_bdm << "\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stabilized H(div) solver for the steady Oseen equations"};
  app.require_subcommand(1);

  Command solve_cmd, study_cmd, audit_cmd, dofs_cmd;
  solve_cmd.app = app.add_subcommand("solve", "solve once on a refined mesh");
  study_cmd.app = app.add_subcommand("study", "refinement study with a CSV error table");
  audit_cmd.app = app.add_subcommand("audit", "complex exactness and inf-sup audit");
  dofs_cmd.app = app.add_subcommand("dofs", "degree-of-freedom comparison table");
  for (Command* c : {&solve_cmd, &study_cmd, &audit_cmd, &dofs_cmd}) add_common_options(*c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (solve_cmd.app->parsed()) return run_solve(resolve(solve_cmd, 1, 12));
    if (study_cmd.app->parsed()) return run_study(resolve(study_cmd, 4, 12));
    if (audit_cmd.app->parsed()) return run_audit(resolve(audit_cmd, 3, 4));
    if (dofs_cmd.app->parsed()) return run_dofs(resolve(dofs_cmd, 4, 12));
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
