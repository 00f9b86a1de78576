// Command-line driver for the QVI extremal-solution library.
//
// Subcommands:
//   solve-vi         obstacle problem with the frozen obstacle Phi(0)
//   solve-pen        penalized equation at a fixed smoothing parameter
//   extremal         minimal/maximal branch by monotone iteration
//   rho-sweep        continuation over the smoothing schedule
//   diff-check       directional derivative vs finite differences
//   lipschitz-probe  source-perturbation Lipschitz diagnostic
//   control          box-constrained tracking / variation control problem
//   certify          control solve plus stationarity certificate
//   thermoform       the 1D mould-deformation instance with known branches
//   proptest         randomized order/penalty property suite
//
// Every command writes <out>/summary.json; exit code 0 means all checks
// of the command passed, 2 a configuration error, 3 a solver failure.

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <nlohmann/json.hpp>
#include <random>

#include "qvi/config.hpp"
#include "qvi/control.hpp"
#include "qvi/io.hpp"
#include "qvi/sensitivity.hpp"
#include "qvi/sources.hpp"

using namespace qvi;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct CommandContext {
  RunConfig cfg;
  std::string out_dir;

  std::string path(const std::string& name) const { return out_dir + "/" + name; }
};

void write_summary(const CommandContext& ctx, const std::string& command,
                   const std::string& property, bool pass, const json& data) {
  json j;
  j["schema"] = "qvi-extremal/1";
  j["command"] = command;
  j["property"] = property;
  j["seed"] = ctx.cfg.seed();
  j["status"] = pass ? "pass" : "fail";
  j["data"] = data;
  write_json(ctx.path("summary.json"), j);
}

json history_json(const ExtremalResult& r) {
  json h = json::array();
  for (const auto& [n, d] : r.history) h.push_back({{"n", n}, {"diff_v", d}});
  return h;
}

int cmd_solve_vi(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const DualField f = ctx.cfg.build_source(s);
  const auto rep = solve_vi(s, f, map->eval(Field(s.n_interior)), std::nullopt,
                            ctx.cfg.tolerances());
  write_field_csv(ctx.path("solution.csv"), s, rep.solution);
  json data = solve_report_to_json(rep, "solution.csv");
  data["solution_v_norm"] = v_norm(s, rep.solution);
  write_summary(ctx, "solve-vi", "obstacle_vi_complementarity", true, data);
  return 0;
}

int cmd_solve_pen(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const DualField f = ctx.cfg.build_source(s);
  const double rho = ctx.cfg.get_double("rho.rho0", 1.0);
  const auto rep = solve_penalized(s, rho, f, Field(s.n_interior), *map, std::nullopt,
                                   ctx.cfg.tolerances());
  write_field_csv(ctx.path("solution.csv"), s, rep.solution);
  json data = solve_report_to_json(rep, "solution.csv");
  data["rho"] = rho;
  write_summary(ctx, "solve-pen", "penalized_equation_residual", true, data);
  return 0;
}

int cmd_extremal(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const DualField f = ctx.cfg.build_source(s);
  const DualField F = ctx.cfg.build_bound(s);
  const auto tols = ctx.cfg.tolerances();
  const auto iv = make_interval_from_bound(s, *map, F, ctx.cfg.get_double("rho.rho0", 1.0), tols);
  const double rho = ctx.cfg.get_double("extremal.rho", 0.0);
  ExtremalOptions opts;
  if (ctx.cfg.get_int("extremal.snapshots", 0) != 0)
    opts.observer = [&](int k, const Field& u) {
      write_field_csv(ctx.path("iterate_" + std::to_string(k) + ".csv"), s, u);
    };
  const auto res = iterate_extremal(s, rho, f, iv, ctx.cfg.branch(), *map, opts, tols);
  write_field_csv(ctx.path("solution.csv"), s, res.solution);
  std::vector<std::vector<double>> rows;
  for (const auto& [n, d] : res.history)
    rows.push_back({static_cast<double>(n), d});
  write_csv(ctx.path("history.csv"), {"n", "diff_v"}, rows);
  const bool pass = res.monotone;
  json data{{"branch", branch_name(ctx.cfg.branch())},
            {"rho", rho},
            {"iterations", res.iterations},
            {"fixed_point_residual", res.fixed_point_residual},
            {"monotone", res.monotone},
            {"stalled", res.stalled},
            {"solution_v_norm", v_norm(s, res.solution)},
            {"history", history_json(res)}};
  write_summary(ctx, "extremal", "monotone_iteration_to_extremal_branch", pass, data);
  return pass ? 0 : 1;
}

int cmd_rho_sweep(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const DualField f = ctx.cfg.build_source(s);
  const DualField F = ctx.cfg.build_bound(s);
  const auto tols = ctx.cfg.tolerances();
  const auto schedule = ctx.cfg.rho_schedule();
  const auto iv = make_interval_from_bound(s, *map, F, schedule.front(), tols);
  const auto rep = rho_continuation(s, f, iv, ctx.cfg.branch(), *map, schedule, {}, tols);

  std::vector<std::vector<double>> rows;
  bool nonincreasing = true;
  for (size_t k = 0; k < schedule.size(); ++k) {
    rows.push_back({schedule[k], rep.errors_v[k],
                    static_cast<double>(rep.results[k].iterations)});
    if (k > 0 && rep.errors_v[k] > rep.errors_v[k - 1] * 1.1 + 1e-9) nonincreasing = false;
  }
  write_csv(ctx.path("sweep.csv"), {"rho", "error_v", "iterations"}, rows);
  write_field_csv(ctx.path("reference.csv"), s, rep.reference.solution);
  json data{{"branch", branch_name(ctx.cfg.branch())},
            {"errors_nonincreasing", nonincreasing},
            {"final_error_v", rep.errors_v.back()},
            {"levels", schedule.size()}};
  write_summary(ctx, "rho-sweep", "penalized_branch_converges_to_exact_branch", nonincreasing,
                data);
  return nonincreasing ? 0 : 1;
}

int cmd_diff_check(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const DualField F = ctx.cfg.build_bound(s);
  DualField f(Eigen::VectorXd(0.5 * F.values));
  const auto tols = ctx.cfg.tolerances();
  const auto iv = make_interval_from_bound(s, *map, F, 1.0, tols);
  const double rho = ctx.cfg.get_double("extremal.rho", 1e-3);
  DualField d(Eigen::VectorXd(0.1 * F.values));

  DerivativeResult res;
  if (rho > 0.0) {
    const auto state = iterate_extremal(s, rho, f, iv, ctx.cfg.branch(), *map, {}, tols);
    res = penalized_derivative(s, rho, state.solution, d, *map);
  } else {
    const auto state = iterate_extremal(s, 0.0, f, iv, ctx.cfg.branch(), *map, {}, tols);
    const DualField xi(
        Eigen::VectorXd(f.values - s.stiffness.apply(state.solution.values)));
    res = qvi_derivative(s, state.solution, xi, d, *map, {}, tols);
  }
  fd_check(res, s, rho, f, iv, ctx.cfg.branch(), *map, {1e-2, 1e-3, 1e-4, 1e-5}, tols);

  std::vector<std::vector<double>> rows;
  bool halving = true, floor_reached = false;
  for (size_t i = 0; i < res.fd_errors.size(); ++i) {
    rows.push_back({res.fd_errors[i].first, res.fd_errors[i].second});
    if (res.fd_errors[i].second <= 1e-7) floor_reached = true; // noise regime from here on
    if (i > 0 && !floor_reached &&
        res.fd_errors[i].second > 0.6 * res.fd_errors[i - 1].second)
      halving = false;
  }
  write_csv(ctx.path("fd_errors.csv"), {"step", "error_v"}, rows);
  json data{{"rho", rho},
            {"equation_residual", res.residual},
            {"fixed_point_iters", res.fixed_point_iters},
            {"biactive_ties", res.biactive_ties},
            {"errors_halve", halving}};
  write_summary(ctx, "diff-check", "extremal_map_directional_derivative", halving, data);
  return halving ? 0 : 1;
}

int cmd_lipschitz_probe(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const DualField F = ctx.cfg.build_bound(s);
  DualField f(Eigen::VectorXd(0.5 * F.values));
  const auto tols = ctx.cfg.tolerances();
  const auto iv = make_interval_from_bound(s, *map, F, 1.0, tols);
  const double rho = ctx.cfg.get_double("extremal.rho", 0.0);
  const int count = ctx.cfg.get_int("probe.count", 20);

  std::mt19937_64 rng(ctx.cfg.seed());
  std::uniform_real_distribution<double> uni(-0.4, 0.4);
  std::vector<DualField> deltas;
  for (int t = 0; t < count; ++t) {
    DualField delta(s.n_interior);
    for (int i = 0; i < s.n_interior; ++i) delta[i] = uni(rng) * f[i];
    deltas.push_back(delta);
  }
  const auto rep =
      lipschitz_probe(s, f, deltas, F, rho, iv, ctx.cfg.branch(), *map, {}, tols);
  json data{{"max_ratio", rep.max_ratio},
            {"lipschitz_constant", rep.lipschitz_constant},
            {"bound", rep.constants.valid ? json(rep.bound) : json("infinite")},
            {"violated", rep.violated},
            {"probes", rep.ratios.size()},
            {"skipped", rep.skipped}};
  write_summary(ctx, "lipschitz-probe", "extremal_map_lipschitz_bound", !rep.violated, data);
  return rep.violated ? 1 : 0;
}

ControlProblem build_control_problem(const CommandContext& ctx, const DiscreteSpace& s,
                                     const ObstacleMap& map) {
  const double a = ctx.cfg.get_double("control.a", 1.0);
  const double b = ctx.cfg.get_double("control.b", 0.0);
  const double nu = ctx.cfg.get_double("control.nu", 1e-2);
  const double lower = ctx.cfg.get_double("control.lower", 0.0);
  const double upper = ctx.cfg.get_double("control.upper", 10.0);
  const std::string target = ctx.cfg.get("control.target", "sin");
  const double target_amp = ctx.cfg.get_double("control.target_amplitude", 1.0);
  Field lo(s.n_interior), hi(s.n_interior), yd(s.n_interior);
  lo.values.setConstant(lower);
  hi.values.setConstant(upper);
  yd = interpolate(s, named_source(target, target_amp));
  return make_box_problem(s, map, a, b, yd, nu, lo, hi,
                          ctx.cfg.get_double("rho.rho0", 1.0), ctx.cfg.tolerances());
}

int cmd_control(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const auto prob = build_control_problem(ctx, s, *map);
  Field f0(s.n_interior);
  f0.values.setConstant(ctx.cfg.get_double("control.f0", 1.0));
  f0 = prob.clamp(f0);
  OptimizeOptions oo;
  oo.tol_kkt = ctx.cfg.get_double("control.tol_kkt", 1e-7);
  oo.proximal = ctx.cfg.get_int("control.proximal", 0) != 0;
  oo.seed = ctx.cfg.seed();
  const auto out = optimize(prob, ctx.cfg.rho_schedule(), f0, oo, ctx.cfg.tolerances());
  std::vector<std::vector<double>> rows;
  for (const auto& pt : out.trajectory)
    rows.push_back({static_cast<double>(pt.iteration), pt.rho, pt.value, pt.kkt_residual});
  write_csv(ctx.path("trajectory.csv"), {"iter", "rho", "value", "kkt_residual"}, rows);
  write_field_csv(ctx.path("control.csv"), s, out.control);
  const bool pass = out.final_kkt <= oo.tol_kkt;
  json data{{"final_value", out.final_value},
            {"final_kkt", out.final_kkt},
            {"iterations", out.trajectory.size()}};
  write_summary(ctx, "control", "reduced_objective_first_order_stationarity", pass, data);
  return pass ? 0 : 1;
}

int cmd_certify(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const auto map = ctx.cfg.build_obstacle(s);
  const auto prob = build_control_problem(ctx, s, *map);
  Field f0(s.n_interior);
  f0.values.setConstant(ctx.cfg.get_double("control.f0", 1.0));
  f0 = prob.clamp(f0);
  OptimizeOptions oo;
  oo.tol_kkt = ctx.cfg.get_double("control.tol_kkt", 5e-9);
  oo.seed = ctx.cfg.seed();
  const auto schedule = ctx.cfg.rho_schedule();
  const auto out = optimize(prob, schedule, f0, oo, ctx.cfg.tolerances());
  const double rho_cert = ctx.cfg.get_double("control.rho_cert", schedule.back());
  const auto cert = certify_stationarity(prob, out.control, rho_cert, ctx.cfg.tolerances());

  json conditions, diagnostics;
  for (const auto& [name, value] : cert.residuals)
    conditions[name] = {{"residual", value}, {"passed", cert.passed.at(name)}};
  for (const auto& [name, value] : cert.diagnostics) diagnostics[name] = value;
  write_field_csv(ctx.path("control.csv"), s, out.control);
  write_field_csv(ctx.path("state_max.csv"), s, cert.y);
  write_field_csv(ctx.path("state_min.csv"), s, cert.z);
  json data{{"rho_certificate", rho_cert},
            {"final_kkt", out.final_kkt},
            {"conditions", conditions},
            {"sign_diagnostics", diagnostics},
            {"all_passed", cert.all_passed()}};
  write_summary(ctx, "certify", "first_order_stationarity_system", cert.all_passed(), data);
  return cert.all_passed() ? 0 : 1;
}

int cmd_thermoform(const CommandContext& ctx) {
  const auto s = ctx.cfg.build_space();
  const ThermoformingObstacle map(s);
  const DualField f = load_vector(s, named_source("sin_pi"));
  const auto tols = ctx.cfg.tolerances();
  const auto iv = make_interval_from_bound(s, map, f, 1.0, tols);

  const auto lo = iterate_extremal(s, 0.0, f, iv, Branch::Min, map, {}, tols);
  const auto hi = iterate_extremal(s, 0.0, f, iv, Branch::Max, map, {}, tols);
  const Field exact = interpolate(s, [](double x) { return std::sin(kPi * x); });
  const double min_norm = v_norm(s, lo.solution);
  const double max_err =
      h_norm(s, Field(Eigen::VectorXd(hi.solution.values - exact.values)));
  const bool pass = min_norm <= 1e-8 && max_err <= 1e-3;
  write_field_csv(ctx.path("branch_min.csv"), s, lo.solution);
  write_field_csv(ctx.path("branch_max.csv"), s, hi.solution);
  json data{{"n", s.n_interior},
            {"min_branch_v_norm", min_norm},
            {"max_branch_l2_error", max_err},
            {"max_branch_stalled", hi.stalled},
            {"min_iterations", lo.iterations},
            {"max_iterations", hi.iterations}};
  write_summary(ctx, "thermoform", "mould_deformation_extremal_branches", pass, data);
  return pass ? 0 : 1;
}

int cmd_proptest(const CommandContext& ctx) {
  std::mt19937_64 rng(ctx.cfg.seed());
  int checks = 0, failures = 0;
  const auto expect = [&](bool ok) {
    ++checks;
    if (!ok) ++failures;
  };

  // Scalar smoothing properties.
  {
    std::uniform_real_distribution<double> uni(-10.0, 10.0);
    for (const double rho : {1.0, 1e-2, 1e-4}) {
      for (int t = 0; t < 2000; ++t) {
        const double r = uni(rng), r2 = uni(rng);
        const double sp = smoothed_plus(rho, r);
        expect(sp >= 0.0 && sp <= std::max(0.0, r) && sp >= std::max(0.0, r) - rho / 2.0);
        expect((sp - smoothed_plus(rho, r2)) * (r - r2) >= 0.0);
        const double pr = smoothed_plus_prime(rho, r);
        expect(pr >= 0.0 && pr <= 1.0);
        expect(smoothed_plus(rho / 7.0, r) >= sp);
      }
    }
  }

  // Order properties of the solution maps on randomized instances.
  const int n = ctx.cfg.get_int("space.n", 64);
  const int instances = ctx.cfg.get_int("proptest.instances", 50);
  const auto s = assemble_space(n);
  const InverseLaplacianObstacle map(s);
  const auto tols = ctx.cfg.tolerances();
  std::uniform_real_distribution<double> amp(0.0, 0.02);
  for (int t = 0; t < instances; ++t) {
    DualField f(n), g(n);
    Field phi(n), chi(n);
    for (int i = 0; i < n; ++i) {
      const double x1 = amp(rng), x2 = amp(rng);
      f[i] = std::min(x1, x2);
      g[i] = std::max(x1, x2);
      const double y1 = 20.0 * amp(rng), y2 = 20.0 * amp(rng);
      phi[i] = std::min(y1, y2);
      chi[i] = std::max(y1, y2);
    }
    const double rho = 0.05, kappa = 0.5;
    // increasing in source and obstacle argument
    expect(order_leq(solve_penalized(s, rho, f, phi, map).solution,
                     solve_penalized(s, rho, g, chi, map).solution, tols.ord));
    expect(order_leq(solve_vi(s, f, map.eval(phi)).solution,
                     solve_vi(s, g, map.eval(chi)).solution, tols.ord));
    // increasing in the smoothing parameter
    expect(order_leq(solve_penalized(s, rho, f, phi, map).solution,
                     solve_penalized(s, kappa, f, phi, map).solution, tols.ord));
    // penalized dominates constrained
    expect(order_leq(solve_vi(s, f, map.eval(phi)).solution,
                     solve_penalized(s, rho, f, phi, map).solution, tols.ord));
    // branch ordering and smoothing monotonicity of the extremal maps
    const auto iv = make_interval_from_bound(s, map, g, 1.0, tols);
    const auto mn = iterate_extremal(s, rho, f, iv, Branch::Min, map, {}, tols);
    const auto mx = iterate_extremal(s, rho, f, iv, Branch::Max, map, {}, tols);
    const auto mxk = iterate_extremal(s, kappa, f, iv, Branch::Max, map, {}, tols);
    expect(order_leq(mn.solution, mx.solution, tols.ord));
    expect(order_leq(mx.solution, mxk.solution, tols.ord));
    // penalized iterates dominate the constrained iterates stepwise
    Field pen = iv.sup, vi = iv.sup;
    for (int k = 0; k < 4; ++k) {
      pen = solve_penalized(s, rho, f, pen, map, pen).solution;
      vi = solve_vi(s, f, map.eval(vi), vi).solution;
      expect(order_leq(vi, pen, tols.ord));
    }
  }

  const bool pass = failures == 0;
  json data{{"checks", checks}, {"failures", failures}, {"instances", instances}};
  write_summary(ctx, "proptest", "order_and_penalty_property_suite", pass, data);
  return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extremal-branch solver for obstacle-type quasi-variational inequalities"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", branch, source, obstacle;
  int n = -1, rho_steps = -1, seed = -1;
  double rho0 = -1.0, rho = -1.0;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--n", n, "interior mesh nodes");
  app.add_option("--rho0", rho0, "initial smoothing parameter");
  app.add_option("--rho", rho, "single smoothing parameter (solve-pen, extremal, diff-check)");
  app.add_option("--rho-steps", rho_steps, "number of continuation levels");
  app.add_option("--branch", branch, "extremal branch: min or max");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "random seed for property suites");
  app.add_option("--obstacle", obstacle, "obstacle kind: constant|inverse_laplacian|thermoforming");
  app.add_option("--source", source, "named source: sin_pi|sin|const|bump|zero");

  const std::map<std::string, int (*)(const CommandContext&)> commands = {
      {"solve-vi", cmd_solve_vi},         {"solve-pen", cmd_solve_pen},
      {"extremal", cmd_extremal},         {"rho-sweep", cmd_rho_sweep},
      {"diff-check", cmd_diff_check},     {"lipschitz-probe", cmd_lipschitz_probe},
      {"control", cmd_control},           {"certify", cmd_certify},
      {"thermoform", cmd_thermoform},     {"proptest", cmd_proptest}};
  for (const auto& [name, fn] : commands) {
    (void)fn;
    app.add_subcommand(name)->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  CommandContext ctx;
  try {
    if (!config_path.empty()) ctx.cfg = RunConfig::from_file(config_path);
    if (n > 0) ctx.cfg.set("space.n", std::to_string(n));
    if (rho0 > 0.0) ctx.cfg.set("rho.rho0", std::to_string(rho0));
    if (rho >= 0.0) ctx.cfg.set("extremal.rho", std::to_string(rho));
    if (rho_steps > 0) ctx.cfg.set("rho.steps", std::to_string(rho_steps));
    if (seed >= 0) ctx.cfg.set("run.seed", std::to_string(seed));
    if (!branch.empty()) ctx.cfg.set("run.branch", branch);
    if (!obstacle.empty()) ctx.cfg.set("obstacle.kind", obstacle);
    if (!source.empty()) ctx.cfg.set("source.name", source);
    ctx.cfg.set("run.out", out_dir);
    ctx.out_dir = out_dir;
    std::filesystem::create_directories(out_dir);

    const std::string sub = app.get_subcommands().front()->get_name();
    return commands.at(sub)(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    try {
      json j{{"schema", "qvi-extremal/1"}, {"status", "error"}, {"message", e.what()}};
      write_json(ctx.out_dir.empty() ? "summary.json" : ctx.out_dir + "/summary.json", j);
    } catch (...) {
    }
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    try {
      json j{{"schema", "qvi-extremal/1"}, {"status", "error"}, {"message", e.what()}};
      write_json(ctx.out_dir.empty() ? "summary.json" : ctx.out_dir + "/summary.json", j);
    } catch (...) {
    }
    return 3;
  }
}
