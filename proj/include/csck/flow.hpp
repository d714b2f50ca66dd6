#pragma once

#include "csck/functionals.hpp"
#include "csck/iteration.hpp"
#include "csck/metric.hpp"
#include "csck/spectral.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <vector>

namespace csck {

class UnstableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FlowScheme { explicit_euler, imex };

inline FlowScheme parse_flow_scheme(const std::string& s) {
  if (s == "explicit-euler") return FlowScheme::explicit_euler;
  if (s == "imex") return FlowScheme::imex;
  throw std::invalid_argument("unknown flow scheme '" + s + "' (expected explicit-euler|imex)");
}

struct FlowSettings {
  double t_end = 0.1;
  double dt = 1e-4;
  FlowScheme scheme = FlowScheme::imex;
  int record_every = 100;

  void validate() const {
    if (!(dt > 0)) throw std::invalid_argument("FlowConfig: dt must be > 0");
    if (!(t_end >= dt)) throw std::invalid_argument("FlowConfig: t_end must be >= dt");
    if (record_every < 1) throw std::invalid_argument("FlowConfig: record_every must be >= 1");
  }
};

template <typename Scalar = double>
struct FlowConfig {
  FlowSettings settings;
  Field<Scalar> initial;
};

template <typename Scalar = double>
struct FlowRow {
  int step = 0;
  Scalar t = Scalar(0);
  Scalar K = Scalar(0);
  Scalar Ent = Scalar(0);
  std::optional<Scalar> K_drop; ///< to the next recorded row
  Scalar supR = Scalar(0);
  std::optional<Scalar> quasi_d1_limit;
  Scalar sup_u = Scalar(0);
  Scalar sup_F = Scalar(0);
  Scalar min_eig_g = Scalar(0);
  Scalar mass = Scalar(0); ///< integral of det g, conserved along the flow
};

template <typename Scalar = double>
struct FlowTrace {
  std::vector<FlowRow<Scalar>> rows;
  std::vector<Field<Scalar>> potentials;
  Field<Scalar> final_potential;
  int total_steps = 0;
  std::vector<std::string> warnings;
};

/// Right-hand side of the potential-level pseudo-Calabi flow on the flat
/// torus: with HRic = 0 the flow is du/dt = log det g_u up to the
/// mean-zero gauge constant.
template <typename Scalar>
Field<Scalar> flow_rhs(const Field<Scalar>& u, const BackgroundGeometry<Scalar>& bg) {
  require_same_grid(u.grid, bg.grid, "flow_rhs");
  auto m = hessian_metric(u);
  Field<Scalar> f = log_density(m);
  f.values -= integrate(f) / bg.V;
  return f;
}

namespace detail {

/// One flow step from u; throws NotKahlerError when the update leaves the
/// Kahler cone (callers halve dt).
template <typename Scalar>
Field<Scalar> flow_step(const Field<Scalar>& u, Scalar dt, FlowScheme scheme,
                        const BackgroundGeometry<Scalar>& bg) {
  const GridSpec& g = u.grid;
  auto m = hessian_metric(u);
  Field<Scalar> F = log_density(m);
  F.values -= integrate(F) / bg.V;

  Field<Scalar> u_new(g, ArrayX<Scalar>(u.values));
  if (scheme == FlowScheme::explicit_euler) {
    u_new.values += dt * F.values;
  } else {
    // IMEX: flat Laplacian treated implicitly mode-wise, the nonlinear
    // remainder explicitly:  u+ = (u + dt*(rhs - Lap0 u))/(1 + dt*kappa).
    auto Mu = dft_grid(g, u.values);
    auto Mr = dft_grid(g, F.values);
    constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    const int N = g.N;
    auto kap1 = [&](int k) {
      Scalar w = two_pi * signed_freq(k, N);
      return w * w;
    };
    const int rows = g.n == 1 ? 1 : N;
    for (int k0 = 0; k0 < rows; ++k0)
      for (int k1 = 0; k1 < N; ++k1) {
        const Scalar kap = (g.n == 1 ? kap1(k1) : kap1(k0) + kap1(k1));
        auto nl = Mr(k0, k1) + kap * Mu(k0, k1); // rhs - Lap0 u in modes
        Mu(k0, k1) = (Mu(k0, k1) + dt * nl) / (Scalar(1) + dt * kap);
      }
    u_new.values = idft_grid_real(g, std::move(Mu));
  }
  hessian_metric(u_new); // cone check; throws NotKahlerError
  return u_new;
}

/// Advance by dt, bisecting the step on cone exits up to `depth` times.
template <typename Scalar>
Field<Scalar> flow_advance(const Field<Scalar>& u, Scalar dt, FlowScheme scheme,
                           const BackgroundGeometry<Scalar>& bg, int depth) {
  try {
    return flow_step(u, dt, scheme, bg);
  } catch (const NotKahlerError&) {
    if (depth <= 0) throw;
    Field<Scalar> half = flow_advance(u, dt / Scalar(2), scheme, bg, depth - 1);
    return flow_advance(half, dt / Scalar(2), scheme, bg, depth - 1);
  }
}

template <typename Scalar>
FlowRow<Scalar> flow_row(int step, Scalar t, const Field<Scalar>& u,
                         const BackgroundGeometry<Scalar>& bg,
                         const HessianMetric<Scalar>& m_base) {
  auto m = hessian_metric(u);
  FlowRow<Scalar> row;
  row.step = step;
  row.t = t;
  row.K = k_energy(m_base, m, bg);
  row.Ent = row.K;
  row.supR = scalar_curvature(m, bg).sup_norm();
  row.sup_u = u.sup_norm();
  row.sup_F = log_density(m).sup_norm();
  row.min_eig_g = m.min_eig;
  row.mass = Scalar(m.det_g.sum() * Scalar(u.grid.node_weight()));
  return row;
}

} // namespace detail

/// Integrate the flow to t_end.  Records K-energy and residual monitors;
/// raises UnstableError when the K-energy rises by more than 1e-6*dt in a
/// single step or the state stops being finite.
template <typename Scalar>
FlowTrace<Scalar> integrate(const FlowConfig<Scalar>& cfg, const BackgroundGeometry<Scalar>& bg,
                            const std::map<int, Field<Scalar>*>* snapshots = nullptr) {
  cfg.settings.validate();
  FlowTrace<Scalar> trace;

  Field<Scalar> u = cfg.initial;
  if (std::abs(mean(u)) > Scalar(1e-13)) {
    trace.warnings.push_back("initial potential not mean-zero; normalizing");
    u = mean_zero(std::move(u));
  }
  auto m_base = hessian_metric(Field<Scalar>::zero(u.grid));

  const Scalar dt = Scalar(cfg.settings.dt);
  const int steps = int(std::llround(cfg.settings.t_end / cfg.settings.dt));
  if (steps < 1) throw std::invalid_argument("FlowConfig: t_end shorter than one step");

  auto maybe_snapshot = [&](int step) {
    if (!snapshots) return;
    auto it = snapshots->find(step);
    if (it != snapshots->end()) *it->second = u;
  };

  Scalar K_prev = std::numeric_limits<Scalar>::infinity();
  for (int s = 0; s <= steps; ++s) {
    const Scalar t = Scalar(s) * dt;
    maybe_snapshot(s);
    const bool record = (s % cfg.settings.record_every == 0) || s == steps;
    Scalar K_here;
    if (record) {
      auto row = detail::flow_row(s, t, u, bg, m_base);
      K_here = row.K;
      if (!trace.rows.empty()) trace.rows.back().K_drop = trace.rows.back().K - row.K;
      trace.rows.push_back(row);
      trace.potentials.push_back(u);
    } else {
      K_here = entropy(m_base, hessian_metric(u));
    }
    if (!std::isfinite(double(K_here))) throw UnstableError("flow produced non-finite K-energy");
    if (K_here > K_prev + Scalar(1e-6) * dt) {
      std::ostringstream os;
      os << "K-energy rose by " << (K_here - K_prev) << " in one step of dt = " << double(dt);
      throw UnstableError(os.str());
    }
    K_prev = K_here;
    if (s == steps) break;
    u = detail::flow_advance(u, dt, cfg.settings.scheme, bg, 10);
  }

  trace.total_steps = steps;
  trace.final_potential = u;
  auto m_final = hessian_metric(u);
  for (std::size_t r = 0; r < trace.rows.size(); ++r)
    trace.rows[r].quasi_d1_limit = quasi_d1(hessian_metric(trace.potentials[r]), m_final);
  return trace;
}

template <typename Scalar = double>
struct RotheEntry {
  Scalar tau;
  Scalar err; ///< max over steps of sup|u_i - u_flow(i*tau)|
  std::optional<Scalar> order; ///< log2(err(2 tau)/err(tau)) when 2 tau is in the sweep
};

template <typename Scalar = double>
struct RotheReport {
  std::vector<RotheEntry<Scalar>> entries;
  Scalar t_end;
  Scalar dt;
};

/// Rothe comparison: for each tau, run the Ricci iteration to
/// floor(t_end/tau) steps and compare against the flow at the matching
/// times.  The flow is integrated once with the given dt (imex).
template <typename Scalar>
RotheReport<Scalar> compare_rothe(const Field<Scalar>& initial, const std::vector<Scalar>& tau_list,
                                  Scalar t_end, Scalar dt, const BackgroundGeometry<Scalar>& bg,
                                  const SolverConfig& solver = {}) {
  if (tau_list.empty()) throw std::invalid_argument("compare_rothe: empty tau list");
  Scalar tau_min = tau_list.front();
  for (Scalar tau : tau_list) {
    if (!(tau > 0)) throw std::invalid_argument("compare_rothe: tau must be > 0");
    const Scalar ratio = t_end / tau;
    if (std::abs(ratio - std::round(ratio)) > Scalar(1e-9) * std::max(Scalar(1), ratio))
      throw std::invalid_argument("compare_rothe: tau does not divide t_end");
    const Scalar sratio = tau / dt;
    if (std::abs(sratio - std::round(sratio)) > Scalar(1e-9) * sratio || !(dt < tau))
      throw std::invalid_argument("compare_rothe: dt must divide every tau");
    tau_min = std::min(tau_min, tau);
  }

  // One flow run, snapshotting every multiple of each tau.
  std::map<int, Field<Scalar>> snaps;
  std::map<int, Field<Scalar>*> snap_ptrs;
  for (Scalar tau : tau_list) {
    const int nsteps = int(std::llround(t_end / tau));
    for (int i = 0; i <= nsteps; ++i) {
      const int s = int(std::llround(Scalar(i) * tau / dt));
      snaps.emplace(s, Field<Scalar>());
    }
  }
  for (auto& [s, f] : snaps) snap_ptrs[s] = &f;

  FlowConfig<Scalar> fcfg;
  fcfg.initial = initial;
  fcfg.settings.t_end = double(t_end);
  fcfg.settings.dt = double(dt);
  fcfg.settings.scheme = FlowScheme::imex;
  fcfg.settings.record_every = std::max(1, int(std::llround(t_end / dt)) / 16);
  integrate(fcfg, bg, &snap_ptrs);

  RotheReport<Scalar> report;
  report.t_end = t_end;
  report.dt = dt;
  for (Scalar tau : tau_list) {
    IterationConfig<Scalar> icfg;
    icfg.initial = initial;
    icfg.settings.tau = double(tau);
    icfg.settings.max_steps = int(std::llround(t_end / tau));
    icfg.settings.stop_R_sup = 0.0; // run all steps
    icfg.settings.record_every = 1;
    icfg.solver = solver;
    auto outcome = run(icfg, bg);
    if (!outcome.ok())
      throw SolverError("compare_rothe: iteration failed at step " +
                        std::to_string(outcome.failure->step) + ": " + outcome.failure->message);

    Scalar err = Scalar(0);
    for (std::size_t i = 0; i < outcome.trace.potentials.size(); ++i) {
      const int s = int(std::llround(Scalar(i) * tau / dt));
      const Field<Scalar>& uf = snaps.at(s);
      err = std::max(err, (outcome.trace.potentials[i] - uf).sup_norm());
    }
    report.entries.push_back({tau, err, std::nullopt});
  }

  for (std::size_t j = 0; j < report.entries.size(); ++j) {
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
      if (i == j) continue;
      const Scalar ratio = report.entries[i].tau / report.entries[j].tau;
      if (std::abs(ratio - Scalar(2)) < Scalar(1e-9)) {
        report.entries[j].order = std::log2(report.entries[i].err / report.entries[j].err);
      }
    }
  }
  return report;
}

} // namespace csck
