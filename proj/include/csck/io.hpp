#pragma once

#include "csck/flow.hpp"
#include "csck/functionals.hpp"
#include "csck/grid.hpp"
#include "csck/iteration.hpp"
#include "csck/random_fields.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace csck {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io_detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

inline void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> known,
                                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ParseError(where + ": unknown key '" + it.key() + "'");
  }
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string();
}

} // namespace io_detail

// ---------------------------------------------------------------------------
// Field persistence: {"n": int, "N": int, "values": flat row-major float64}
// ---------------------------------------------------------------------------

inline nlohmann::json field_to_json(const Field<double>& f) {
  nlohmann::json j;
  j["n"] = f.grid.n;
  j["N"] = f.grid.N;
  j["values"] = std::vector<double>(f.values.data(), f.values.data() + f.values.size());
  return j;
}

inline Field<double> field_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": Field document must be a JSON object");
  io_detail::reject_unknown_keys(j, {"n", "N", "values"}, where);
  if (!j.contains("n") || !j.contains("N") || !j.contains("values"))
    throw ParseError(where + ": Field document needs keys n, N, values");
  GridSpec g;
  try {
    g = GridSpec(j.at("n").get<int>(), j.at("N").get<int>());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(where + ": " + e.what());
  }
  auto vals = j.at("values").get<std::vector<double>>();
  if (Eigen::Index(vals.size()) != g.num_nodes())
    throw ValidationError(where + ": expected " + std::to_string(g.num_nodes()) +
                          " values, got " + std::to_string(vals.size()));
  Field<double> f(g, Eigen::Map<const ArrayX<double>>(vals.data(), vals.size()));
  if (!f.all_finite()) throw ValidationError(where + ": field contains non-finite values");
  return f;
}

inline void save_field(const Field<double>& f, const std::filesystem::path& path) {
  io_detail::write_text_file(path, field_to_json(f).dump());
}

inline Field<double> load_field(const std::filesystem::path& path) {
  return field_from_json(io_detail::read_json_file(path), path.string());
}

/// Load and check against the grid the caller expects.
inline Field<double> load_field(const std::filesystem::path& path, const GridSpec& expected) {
  Field<double> f = load_field(path);
  if (!(f.grid == expected))
    throw ValidationError(path.string() + ": grid (n=" + std::to_string(f.grid.n) + ",N=" +
                          std::to_string(f.grid.N) + ") does not match configured grid (n=" +
                          std::to_string(expected.n) + ",N=" + std::to_string(expected.N) + ")");
  return f;
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceHeader =
    "step,K,Kchi,Ent,J_step,I_step,K_drop,supR,quasi_d1_limit,sup_u,sup_F,min_eig_g,newton_iters";

inline std::string trace_csv(const IterationTrace<double>& trace) {
  using io_detail::fmt_double;
  using io_detail::fmt_opt;
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : trace.rows) {
    out += std::to_string(r.step);
    out += ',';
    out += fmt_double(r.K);
    out += ',';
    out += fmt_opt(r.Kchi);
    out += ',';
    out += fmt_double(r.Ent);
    out += ',';
    out += fmt_opt(r.J_step);
    out += ',';
    out += fmt_opt(r.I_step);
    out += ',';
    out += fmt_opt(r.K_drop);
    out += ',';
    out += fmt_double(r.supR);
    out += ',';
    out += fmt_opt(r.quasi_d1_limit);
    out += ',';
    out += fmt_double(r.sup_u);
    out += ',';
    out += fmt_double(r.sup_F);
    out += ',';
    out += fmt_double(r.min_eig_g);
    out += ',';
    out += std::to_string(r.newton_iters);
    out += '\n';
  }
  return out;
}

inline std::string trace_csv(const FlowTrace<double>& trace) {
  using io_detail::fmt_double;
  using io_detail::fmt_opt;
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : trace.rows) {
    out += std::to_string(r.step);
    out += ',';
    out += fmt_double(r.K);
    out += ",,"; // Kchi not tracked along the flow
    out += fmt_double(r.Ent);
    out += ",,,"; // J_step, I_step are step-pair quantities
    out += fmt_opt(r.K_drop);
    out += ',';
    out += fmt_double(r.supR);
    out += ',';
    out += fmt_opt(r.quasi_d1_limit);
    out += ',';
    out += fmt_double(r.sup_u);
    out += ',';
    out += fmt_double(r.sup_F);
    out += ',';
    out += fmt_double(r.min_eig_g);
    out += ",0\n";
  }
  return out;
}

template <typename Trace>
void emit_trace(const Trace& trace, const std::filesystem::path& path) {
  io_detail::write_text_file(path, trace_csv(trace));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const FunctionalReport<double>& r) {
  nlohmann::json j;
  j["E"] = r.E;
  j["I"] = r.I;
  j["J"] = r.J;
  j["Ent"] = r.Ent;
  if (r.Jchi) j["Jchi"] = *r.Jchi;
  j["K"] = r.K;
  if (r.Kchi) j["Kchi"] = *r.Kchi;
  j["quasi_d1"] = r.quasi_d1;
  return j;
}

/// Comparison report: a JSON array of {tau, err, order} entries.
inline nlohmann::json rothe_report_to_json(const RotheReport<double>& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : r.entries) {
    nlohmann::json j;
    j["tau"] = e.tau;
    j["err"] = e.err;
    j["order"] = e.order ? nlohmann::json(*e.order) : nlohmann::json(nullptr);
    arr.push_back(j);
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RandomInitialSpec {
  std::uint64_t seed = 1;
  double hess_amplitude = 0.3;
  int max_mode = 3;
};

/// Initial potential: a Field JSON path, a seeded random potential, or zero.
using InitialSpec = std::variant<std::monostate, std::string, RandomInitialSpec>;

struct TwistSpec {
  double a = 0.0;
  std::optional<std::string> psi_path;
};

struct AppConfig {
  GridSpec grid;
  InitialSpec initial;
  IterationSettings iteration;
  FlowSettings flow;
  std::vector<double> tau_list;
  SolverConfig solver;
  std::optional<TwistSpec> chi0;
  std::filesystem::path base_dir; ///< directory of the config file
};

namespace io_detail {

template <typename T>
T get_checked(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("key '") + key + "': " + e.what());
  }
}

inline void require_positive(double v, const char* name) {
  if (!(v > 0)) throw ValidationError(std::string("'") + name + "' must be > 0, got " +
                                      fmt_double(v));
}

} // namespace io_detail

inline AppConfig parse_config(const std::filesystem::path& path) {
  using io_detail::get_checked;
  nlohmann::json j = io_detail::read_json_file(path);
  if (!j.is_object()) throw ParseError(path.string() + ": config must be a JSON object");
  io_detail::reject_unknown_keys(
      j,
      {"n", "N", "initial", "tau", "max_steps", "stop_R_sup", "record_every", "t_end", "dt",
       "scheme", "flow_record_every", "tau_list", "solver", "chi0"},
      path.string());

  AppConfig cfg;
  cfg.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  try {
    cfg.grid = GridSpec(get_checked<int>(j, "n", 1), get_checked<int>(j, "N", 64));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }

  if (j.contains("initial")) {
    const auto& ini = j.at("initial");
    if (ini.is_string()) {
      cfg.initial = ini.get<std::string>();
    } else if (ini.is_object()) {
      io_detail::reject_unknown_keys(ini, {"seed", "hess_amplitude", "max_mode"},
                                     "initial");
      RandomInitialSpec rs;
      rs.seed = get_checked<std::uint64_t>(ini, "seed", 1);
      rs.hess_amplitude = get_checked<double>(ini, "hess_amplitude", 0.3);
      rs.max_mode = get_checked<int>(ini, "max_mode", 3);
      cfg.initial = rs;
    } else {
      throw ParseError("'initial' must be a path or a {seed,...} object");
    }
  }

  cfg.iteration.tau = get_checked<double>(j, "tau", 1.0);
  io_detail::require_positive(cfg.iteration.tau, "tau");
  cfg.iteration.max_steps = get_checked<int>(j, "max_steps", 500);
  cfg.iteration.stop_R_sup = get_checked<double>(j, "stop_R_sup", 1e-8);
  cfg.iteration.record_every = get_checked<int>(j, "record_every", 1);

  cfg.flow.t_end = get_checked<double>(j, "t_end", 0.1);
  cfg.flow.dt = get_checked<double>(j, "dt", 1e-4);
  cfg.flow.scheme = parse_flow_scheme(get_checked<std::string>(j, "scheme", "imex"));
  cfg.flow.record_every = get_checked<int>(j, "flow_record_every", 100);

  cfg.tau_list = get_checked<std::vector<double>>(j, "tau_list", {});
  for (double tau : cfg.tau_list) io_detail::require_positive(tau, "tau_list");

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    io_detail::reject_unknown_keys(s,
                                   {"tol_residual", "max_newton", "max_krylov", "krylov_tol",
                                    "damping_min", "continuation_steps", "eps_pd"},
                                   "solver");
    cfg.solver.tol_residual = get_checked<double>(s, "tol_residual", cfg.solver.tol_residual);
    cfg.solver.max_newton = get_checked<int>(s, "max_newton", cfg.solver.max_newton);
    cfg.solver.max_krylov = get_checked<int>(s, "max_krylov", cfg.solver.max_krylov);
    cfg.solver.krylov_tol = get_checked<double>(s, "krylov_tol", cfg.solver.krylov_tol);
    cfg.solver.damping_min = get_checked<double>(s, "damping_min", cfg.solver.damping_min);
    cfg.solver.continuation_steps =
        get_checked<int>(s, "continuation_steps", cfg.solver.continuation_steps);
    cfg.solver.eps_pd = get_checked<double>(s, "eps_pd", cfg.solver.eps_pd);
    try {
      cfg.solver.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
  }

  if (j.contains("chi0")) {
    const auto& c = j.at("chi0");
    io_detail::reject_unknown_keys(c, {"a", "psi"}, "chi0");
    TwistSpec ts;
    ts.a = get_checked<double>(c, "a", 0.0);
    if (c.contains("psi")) ts.psi_path = c.at("psi").get<std::string>();
    cfg.chi0 = ts;
  }

  try {
    cfg.iteration.validate();
    cfg.flow.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return cfg;
}

/// Materialize the configured initial potential.  A seed override (the
/// --seed flag) replaces the seed of a random initial.
inline Field<double> make_initial(const AppConfig& cfg,
                                  std::optional<std::uint64_t> seed_override = {}) {
  if (std::holds_alternative<std::string>(cfg.initial))
    return load_field(cfg.base_dir / std::get<std::string>(cfg.initial), cfg.grid);
  if (std::holds_alternative<RandomInitialSpec>(cfg.initial)) {
    auto rs = std::get<RandomInitialSpec>(cfg.initial);
    if (seed_override) rs.seed = *seed_override;
    return random_kahler_potential<double>(cfg.grid, rs.seed, rs.hess_amplitude, rs.max_mode);
  }
  return Field<double>::zero(cfg.grid);
}

/// Materialize the optional twist form; validates semipositivity.
inline std::optional<TwistForm<double>> make_twist(const AppConfig& cfg) {
  if (!cfg.chi0) return std::nullopt;
  Field<double> psi = cfg.chi0->psi_path
                          ? load_field(cfg.base_dir / *cfg.chi0->psi_path, cfg.grid)
                          : Field<double>::zero(cfg.grid);
  TwistForm<double> chi(cfg.chi0->a, std::move(psi));
  if (!chi.is_semipositive())
    throw ValidationError(
        "chi0 is not semipositive (the twisted iteration assumes chi >= 0): min eigenvalue "
        "of a*I + Hess(psi) is " +
        io_detail::fmt_double(chi.min_eigenvalue()));
  return chi;
}

/// Effective-configuration echo for the manifest.
inline nlohmann::json config_echo(const AppConfig& cfg) {
  nlohmann::json j;
  j["n"] = cfg.grid.n;
  j["N"] = cfg.grid.N;
  j["tau"] = cfg.iteration.tau;
  j["max_steps"] = cfg.iteration.max_steps;
  j["stop_R_sup"] = cfg.iteration.stop_R_sup;
  j["record_every"] = cfg.iteration.record_every;
  j["t_end"] = cfg.flow.t_end;
  j["dt"] = cfg.flow.dt;
  j["scheme"] = cfg.flow.scheme == FlowScheme::imex ? "imex" : "explicit-euler";
  j["flow_record_every"] = cfg.flow.record_every;
  if (!cfg.tau_list.empty()) j["tau_list"] = cfg.tau_list;
  nlohmann::json s;
  s["tol_residual"] = cfg.solver.tol_residual;
  s["max_newton"] = cfg.solver.max_newton;
  s["max_krylov"] = cfg.solver.max_krylov;
  s["krylov_tol"] = cfg.solver.krylov_tol;
  s["damping_min"] = cfg.solver.damping_min;
  s["continuation_steps"] = cfg.solver.continuation_steps;
  s["eps_pd"] = cfg.solver.eps_pd;
  j["solver"] = s;
  if (cfg.chi0) {
    nlohmann::json c;
    c["a"] = cfg.chi0->a;
    if (cfg.chi0->psi_path) c["psi"] = *cfg.chi0->psi_path;
    j["chi0"] = c;
  }
  if (std::holds_alternative<std::string>(cfg.initial))
    j["initial"] = std::get<std::string>(cfg.initial);
  else if (std::holds_alternative<RandomInitialSpec>(cfg.initial)) {
    const auto& rs = std::get<RandomInitialSpec>(cfg.initial);
    j["initial"] = {{"seed", rs.seed},
                    {"hess_amplitude", rs.hess_amplitude},
                    {"max_mode", rs.max_mode}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  nlohmann::json config;
  GridSpec grid;
  double wall_seconds = 0;
  std::string outcome; ///< "success" or a failure description
  std::vector<std::string> output_files;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = "csck";
#ifdef CSCK_VERSION
    j["version"] = CSCK_VERSION;
#else
    j["version"] = "dev";
#endif
    j["command"] = command;
    j["grid"] = {{"n", grid.n}, {"N", grid.N}};
    j["config"] = config;
    j["timings"] = {{"wall_seconds", wall_seconds}};
    j["outcome"] = outcome;
    j["outputs"] = output_files;
    j["warnings"] = warnings;
    return j;
  }
};

inline void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  io_detail::write_text_file(path, m.to_json().dump(2) + "\n");
}

/// Checkpoint file name, `u_{step:06}.json`.
inline std::string checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u_%06d.json", step);
  return buf;
}

} // namespace csck
