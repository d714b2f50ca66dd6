// Command-line surface for the torus cscK toolkit: Ricci iteration runs,
// pseudo-Calabi flow runs, functional evaluation, tau sweeps and the
// Rothe comparison.  Exit codes: 0 success, 2 validation, 3 solver
// failure, 4 IO.

#include "csck/flow.hpp"
#include "csck/io.hpp"
#include "csck/iteration.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace csck;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::string checkpoint_dir;
  bool quiet = false;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_config = true) {
  auto* copt = cmd->add_option("--config", o.config_path, "configuration file (JSON)");
  if (needs_config) copt->required();
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--checkpoint-dir", o.checkpoint_dir, "directory for per-step Field checkpoints");
  cmd->add_flag("--quiet", o.quiet, "suppress progress output");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&o](std::uint64_t s) { o.seed = s; },
      "override the seed of a random initial potential");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_checkpoints(const CommonOpts& opts, const std::vector<Field<double>>& potentials,
                       const std::vector<int>& steps, std::vector<std::string>& outputs) {
  if (opts.checkpoint_dir.empty()) return;
  fs::create_directories(opts.checkpoint_dir);
  for (std::size_t i = 0; i < potentials.size(); ++i) {
    fs::path p = fs::path(opts.checkpoint_dir) / checkpoint_name(steps[i]);
    // iterates are stored mean-zero; re-express on the E = 0 slice for output
    save_field(normalize_E0(potentials[i]), p);
    outputs.push_back(p.string());
  }
}

int run_iterate(const CommonOpts& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = parse_config(opts.config_path);
  fs::create_directories(opts.out_dir);

  IterationConfig<double> cfg;
  cfg.settings = app.iteration;
  cfg.solver = app.solver;
  cfg.chi0 = make_twist(app);
  cfg.initial = make_initial(app, opts.seed);
  auto bg = BackgroundGeometry<double>::flat_torus(app.grid);

  auto outcome = run(cfg, bg);
  const auto& trace = outcome.trace;

  RunManifest man;
  man.command = "iterate";
  man.config = config_echo(app);
  man.grid = app.grid;
  man.warnings = trace.warnings;

  fs::path trace_path = fs::path(opts.out_dir) / "trace.csv";
  emit_trace(trace, trace_path);
  man.output_files.push_back(trace_path.string());

  std::vector<int> steps;
  for (const auto& r : trace.rows) steps.push_back(r.step);
  write_checkpoints(opts, trace.potentials, steps, man.output_files);

  man.outcome = outcome.ok() ? "success"
                             : "solver-failure at step " + std::to_string(outcome.failure->step) +
                                   ": " + outcome.failure->message;
  man.wall_seconds = seconds_since(t0);
  fs::path man_path = fs::path(opts.out_dir) / "manifest.json";
  write_manifest(man, man_path);

  if (!opts.quiet) {
    std::cerr << "iterate: " << trace.total_steps << " steps, "
              << (trace.converged ? "converged" : "not converged");
    if (!trace.rows.empty()) std::cerr << ", final supR = " << trace.rows.back().supR;
    std::cerr << " (" << man.wall_seconds << " s)\n";
    if (!outcome.ok()) std::cerr << "iterate: " << man.outcome << "\n";
  }
  return outcome.ok() ? 0 : 3;
}

int run_flow(const CommonOpts& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = parse_config(opts.config_path);
  fs::create_directories(opts.out_dir);

  FlowConfig<double> cfg;
  cfg.settings = app.flow;
  cfg.initial = make_initial(app, opts.seed);
  auto bg = BackgroundGeometry<double>::flat_torus(app.grid);

  auto trace = integrate(cfg, bg);

  RunManifest man;
  man.command = "flow";
  man.config = config_echo(app);
  man.grid = app.grid;
  man.warnings = trace.warnings;

  fs::path trace_path = fs::path(opts.out_dir) / "trace.csv";
  emit_trace(trace, trace_path);
  man.output_files.push_back(trace_path.string());

  std::vector<int> steps;
  for (const auto& r : trace.rows) steps.push_back(r.step);
  write_checkpoints(opts, trace.potentials, steps, man.output_files);

  man.outcome = "success";
  man.wall_seconds = seconds_since(t0);
  write_manifest(man, fs::path(opts.out_dir) / "manifest.json");

  if (!opts.quiet)
    std::cerr << "flow: " << trace.total_steps << " steps to t = " << cfg.settings.t_end << " ("
              << man.wall_seconds << " s)\n";
  return 0;
}

int run_functionals(const std::string& u_path, const std::string& v_path,
                    std::optional<double> twist_a, const std::string& twist_psi) {
  Field<double> u = load_field(u_path);
  Field<double> v = load_field(v_path, u.grid);
  std::optional<TwistForm<double>> chi;
  if (twist_a || !twist_psi.empty()) {
    Field<double> psi =
        twist_psi.empty() ? Field<double>::zero(u.grid) : load_field(twist_psi, u.grid);
    chi = TwistForm<double>(twist_a.value_or(0.0), std::move(psi));
  }
  auto bg = BackgroundGeometry<double>::flat_torus(u.grid);
  auto report = functional_report(u, v, chi, bg);
  std::cout << report_to_json(report).dump() << "\n";
  return 0;
}

int run_sweep(const CommonOpts& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = parse_config(opts.config_path);
  if (app.tau_list.empty())
    throw ValidationError("sweep-tau requires a non-empty 'tau_list' in the config");
  fs::create_directories(opts.out_dir);

  auto bg = BackgroundGeometry<double>::flat_torus(app.grid);
  Field<double> initial = make_initial(app, opts.seed);
  auto chi0 = make_twist(app);

  RunManifest man;
  man.command = "sweep-tau";
  man.config = config_echo(app);
  man.grid = app.grid;

  bool all_ok = true;
  for (double tau : app.tau_list) {
    IterationConfig<double> cfg;
    cfg.settings = app.iteration;
    cfg.settings.tau = tau;
    cfg.solver = app.solver;
    cfg.chi0 = chi0;
    cfg.initial = initial;
    auto outcome = run(cfg, bg);

    char name[48];
    std::snprintf(name, sizeof name, "tau_%g", tau);
    fs::path dir = fs::path(opts.out_dir) / name;
    fs::create_directories(dir);
    fs::path trace_path = dir / "trace.csv";
    emit_trace(outcome.trace, trace_path);
    man.output_files.push_back(trace_path.string());
    if (!outcome.ok()) {
      all_ok = false;
      man.warnings.push_back(std::string(name) + ": " + outcome.failure->message);
    }
    if (!opts.quiet)
      std::cerr << "sweep-tau " << name << ": " << outcome.trace.total_steps << " steps, "
                << (outcome.trace.converged ? "converged" : "not converged") << "\n";
  }

  man.outcome = all_ok ? "success" : "solver-failure in at least one sweep member";
  man.wall_seconds = seconds_since(t0);
  write_manifest(man, fs::path(opts.out_dir) / "manifest.json");
  return all_ok ? 0 : 3;
}

int run_compare_rothe(const CommonOpts& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = parse_config(opts.config_path);
  if (app.tau_list.empty())
    throw ValidationError("compare-rothe requires a non-empty 'tau_list' in the config");
  fs::create_directories(opts.out_dir);

  auto bg = BackgroundGeometry<double>::flat_torus(app.grid);
  Field<double> initial = make_initial(app, opts.seed);
  std::vector<double> taus(app.tau_list.begin(), app.tau_list.end());

  auto report = compare_rothe(initial, taus, app.flow.t_end, app.flow.dt, bg, app.solver);
  nlohmann::json rj = rothe_report_to_json(report);
  std::cout << rj.dump() << "\n";

  RunManifest man;
  man.command = "compare-rothe";
  man.config = config_echo(app);
  man.grid = app.grid;
  fs::path report_path = fs::path(opts.out_dir) / "rothe.json";
  io_detail::write_text_file(report_path, rj.dump(2) + "\n");
  man.output_files.push_back(report_path.string());
  man.outcome = "success";
  man.wall_seconds = seconds_since(t0);
  write_manifest(man, fs::path(opts.out_dir) / "manifest.json");
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Ricci iteration toolkit for cscK metrics on flat Kahler tori"};
  cli.require_subcommand(1);

  CommonOpts iter_opts, flow_opts, sweep_opts, rothe_opts;
  auto* iterate_cmd = cli.add_subcommand("iterate", "run the Ricci iteration");
  add_common(iterate_cmd, iter_opts);
  auto* flow_cmd = cli.add_subcommand("flow", "integrate the pseudo-Calabi flow");
  add_common(flow_cmd, flow_opts);
  auto* sweep_cmd = cli.add_subcommand("sweep-tau", "run the iteration for each tau in tau_list");
  add_common(sweep_cmd, sweep_opts);
  auto* rothe_cmd =
      cli.add_subcommand("compare-rothe", "compare the iteration against the flow as tau -> 0");
  add_common(rothe_cmd, rothe_opts);

  std::string u_path, v_path, twist_psi;
  std::optional<double> twist_a;
  auto* func_cmd =
      cli.add_subcommand("functionals", "evaluate the functional suite on a pair of potentials");
  func_cmd->add_option("u", u_path, "first potential (Field JSON)")->required();
  func_cmd->add_option("v", v_path, "second potential (Field JSON)")->required();
  func_cmd->add_option_function<double>(
      "--twist-a", [&twist_a](double a) { twist_a = a; }, "class coefficient of the twist");
  func_cmd->add_option("--twist-psi", twist_psi, "potential part of the twist (Field JSON)");

  CLI11_PARSE(cli, argc, argv);

  try {
    if (*iterate_cmd) return run_iterate(iter_opts);
    if (*flow_cmd) return run_flow(flow_opts);
    if (*sweep_cmd) return run_sweep(sweep_opts);
    if (*rothe_cmd) return run_compare_rothe(rothe_opts);
    if (*func_cmd) return run_functionals(u_path, v_path, twist_a, twist_psi);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NotKahlerError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const UnstableError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
