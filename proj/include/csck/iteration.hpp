#pragma once

#include "csck/functionals.hpp"
#include "csck/solver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace csck {

struct IterationSettings {
  double tau = 1.0;
  int max_steps = 500;
  double stop_R_sup = 1e-8; ///< stop once sup of the target residual is below
  int record_every = 1;

  void validate() const {
    if (!(tau > 0)) throw std::invalid_argument("IterationConfig: tau must be > 0");
    if (max_steps < 1) throw std::invalid_argument("IterationConfig: max_steps must be >= 1");
    if (!(stop_R_sup >= 0)) throw std::invalid_argument("IterationConfig: stop_R_sup must be >= 0");
    if (record_every < 1) throw std::invalid_argument("IterationConfig: record_every must be >= 1");
  }
};

template <typename Scalar = double>
struct IterationConfig {
  IterationSettings settings;
  std::optional<TwistForm<Scalar>> chi0;
  Field<Scalar> initial;
  SolverConfig solver;
};

/// Per-step record of functionals, residuals and monitors.  Step-pair
/// quantities (J_step, I_step, K_drop, du_sup) refer to the pair
/// (u_i, u_{i+1}) and are absent on the final row.
template <typename Scalar = double>
struct TraceRow {
  int step = 0;
  Scalar K = Scalar(0); ///< k_energy(0, u_i); equals Ent on the flat torus
  std::optional<Scalar> Kchi;
  Scalar Ent = Scalar(0);
  std::optional<Scalar> J_step; ///< J(u_{i+1}, u_i)
  std::optional<Scalar> I_step; ///< I(u_{i+1}, u_i)
  std::optional<Scalar> K_drop; ///< K_i - K_{i+1}
  Scalar supR = Scalar(0);      ///< sup of the target twisted cscK residual
  std::optional<Scalar> quasi_d1_limit; ///< quasi_d1(u_i, u_final), post hoc
  Scalar sup_u = Scalar(0);
  Scalar sup_F = Scalar(0);
  Scalar min_eig_g = Scalar(0);
  int newton_iters = 0;                ///< of the step that produced u_i
  std::optional<Scalar> du_sup;        ///< sup|u_{i+1} - u_i|, in-memory monitor
  std::optional<Scalar> step_residual; ///< solver residual of the producing step
};

template <typename Scalar = double>
struct StepFailure {
  int step = 0;
  std::string message;
};

template <typename Scalar = double>
struct IterationTrace {
  std::vector<TraceRow<Scalar>> rows;
  std::vector<Field<Scalar>> potentials; ///< recorded iterates, parallel to rows
  Field<Scalar> final_potential;
  int total_steps = 0; ///< index of the last computed iterate
  bool converged = false;
  std::vector<std::string> warnings;
};

template <typename Scalar = double>
struct RunOutcome {
  IterationTrace<Scalar> trace;
  std::optional<StepFailure<Scalar>> failure;
  bool ok() const { return !failure.has_value(); }
};

class MonotonicityViolation : public std::runtime_error {
 public:
  MonotonicityViolation(int step, const std::string& what_happened)
      : std::runtime_error("monotonicity violated at step " + std::to_string(step) + ": " +
                           what_happened),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

namespace detail {

template <typename Scalar>
TraceRow<Scalar> make_row(int step, const HessianMetric<Scalar>& m,
                          const std::optional<TwistForm<Scalar>>& chi0,
                          const BackgroundGeometry<Scalar>& bg,
                          const HessianMetric<Scalar>& m_base) {
  TraceRow<Scalar> row;
  row.step = step;
  row.K = k_energy(m_base, m, bg);
  row.Ent = entropy(m_base, m);
  if (chi0) row.Kchi = row.K + j_chi(m_base, m, *chi0);
  row.supR = target_residual(m, chi0, bg).sup_norm();
  row.sup_u = m.potential.sup_norm();
  row.sup_F = log_density(m).sup_norm();
  row.min_eig_g = m.min_eig;
  return row;
}

} // namespace detail

/// Drive the Ricci iteration u_{i+1} = solve_step(u_i, tau, chi0) until
/// the target residual drops below stop_R_sup or max_steps is reached.
/// Solver failures do not discard the trace: the outcome carries the
/// trace up to the failing step.
template <typename Scalar>
RunOutcome<Scalar> run(const IterationConfig<Scalar>& cfg, const BackgroundGeometry<Scalar>& bg) {
  cfg.settings.validate();
  cfg.solver.validate();
  if (cfg.chi0 && !cfg.chi0->is_semipositive())
    throw std::invalid_argument("IterationConfig: chi0 must be semipositive");

  RunOutcome<Scalar> out;
  IterationTrace<Scalar>& trace = out.trace;

  Field<Scalar> u = cfg.initial;
  if (std::abs(mean(u)) > Scalar(1e-13)) {
    trace.warnings.push_back("initial potential not mean-zero; normalizing");
    u = mean_zero(std::move(u));
  }

  auto m_base = hessian_metric(Field<Scalar>::zero(u.grid), Scalar(cfg.solver.eps_pd));
  auto m = hessian_metric(u, Scalar(cfg.solver.eps_pd));

  TraceRow<Scalar> row = detail::make_row(0, m, cfg.chi0, bg, m_base);
  int last_recorded = -1;
  auto record = [&](const TraceRow<Scalar>& r, const Field<Scalar>& pot) {
    trace.rows.push_back(r);
    trace.potentials.push_back(pot);
    last_recorded = r.step;
  };

  for (int i = 0;; ++i) {
    trace.total_steps = i;
    const bool stop_residual = row.supR < Scalar(cfg.settings.stop_R_sup);
    const bool stop_budget = i >= cfg.settings.max_steps;
    if (stop_residual || stop_budget || i % cfg.settings.record_every == 0) {
      if (row.step != last_recorded) record(row, u);
      if (stop_residual) trace.converged = true;
      if (stop_residual || stop_budget) break;
    }

    StepResult<Scalar> sr;
    try {
      sr = solve_step(u, Scalar(cfg.settings.tau), cfg.chi0, cfg.solver, bg);
    } catch (const SolverError& e) {
      if (row.step != last_recorded) record(row, u);
      out.failure = StepFailure<Scalar>{i, e.what()};
      break;
    } catch (const NotKahlerError& e) {
      if (row.step != last_recorded) record(row, u);
      out.failure = StepFailure<Scalar>{i, e.what()};
      break;
    }

    auto m_next = hessian_metric(sr.v, Scalar(cfg.solver.eps_pd));
    TraceRow<Scalar> next_row = detail::make_row(i + 1, m_next, cfg.chi0, bg, m_base);
    next_row.newton_iters = sr.newton_iters;
    next_row.step_residual = sr.residual_sup;
    if (!std::isfinite(double(next_row.K))) {
      if (row.step != last_recorded) record(row, u);
      out.failure = StepFailure<Scalar>{i, "non-finite K-energy after the step"};
      break;
    }

    row.J_step = func_J(m_next, m);
    row.I_step = func_I(m_next, m);
    row.K_drop = row.K - next_row.K;
    row.du_sup = (sr.v - u).sup_norm();
    if (row.step == last_recorded) {
      trace.rows.back() = row; // refresh the recorded row with pair data
    }

    u = std::move(sr.v);
    m = std::move(m_next);
    row = std::move(next_row);
  }

  trace.final_potential = u;
  auto m_final = hessian_metric(trace.final_potential, Scalar(cfg.solver.eps_pd));
  for (std::size_t r = 0; r < trace.rows.size(); ++r) {
    trace.rows[r].quasi_d1_limit =
        quasi_d1(hessian_metric(trace.potentials[r], Scalar(cfg.solver.eps_pd)), m_final);
  }
  return out;
}

template <typename Scalar = double>
struct MonotonicityReport {
  Scalar worst_K_slack = Scalar(0);     ///< max over steps of K_{i+1} - K_i
  Scalar worst_step_slack = Scalar(0);  ///< max over steps of J_step - K_drop
};

/// Check the monotonicity monitors on a trace: the K-energy never increases by
/// more than 1e-9 per step, and J(u_{i+1}, u_i) <= K_i - K_{i+1} + 1e-9.
template <typename Scalar>
MonotonicityReport<Scalar> verify_monotonicity(const IterationTrace<Scalar>& trace) {
  MonotonicityReport<Scalar> rep;
  constexpr Scalar slack = Scalar(1e-9);
  for (std::size_t r = 0; r + 1 < trace.rows.size(); ++r) {
    const Scalar k_rise = trace.rows[r + 1].K - trace.rows[r].K;
    rep.worst_K_slack = std::max(rep.worst_K_slack, k_rise);
    if (k_rise > slack)
      throw MonotonicityViolation(trace.rows[r + 1].step, "K-energy rose by " +
                                                              std::to_string(double(k_rise)));
  }
  for (const auto& row : trace.rows) {
    if (!row.J_step || !row.K_drop) continue;
    const Scalar gap = *row.J_step - *row.K_drop;
    rep.worst_step_slack = std::max(rep.worst_step_slack, gap);
    if (gap > slack)
      throw MonotonicityViolation(row.step,
                                  "J(u_{i+1},u_i) exceeds the K-energy drop by " +
                                      std::to_string(double(gap)));
  }
  return rep;
}

/// Stall-implies-cscK detector: true iff some step shows a vanishing
/// K-drop together with a small target residual and a stationary
/// potential.  A run that stopped by the residual rule certifies its
/// final row directly.
template <typename Scalar>
bool equality_case_check(const IterationTrace<Scalar>& trace, Scalar stop_R_sup = Scalar(1e-8)) {
  for (const auto& row : trace.rows) {
    if (row.K_drop && row.du_sup) {
      if (*row.K_drop < Scalar(1e-12) && row.supR < Scalar(10) * stop_R_sup &&
          *row.du_sup < Scalar(1e-8))
        return true;
    }
  }
  if (trace.converged && !trace.rows.empty() &&
      trace.rows.back().supR < Scalar(10) * stop_R_sup)
    return true;
  return false;
}

} // namespace csck
