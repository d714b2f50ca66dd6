#pragma once

#include "csck/functionals.hpp"
#include "csck/grid.hpp"
#include "csck/metric.hpp"
#include "csck/spectral.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

namespace csck {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Newton stalled (line search could not decrease the residual, or the
/// iteration budget ran out).  The caller may retry with continuation.
class MaxIterationsError : public SolverError {
 public:
  using SolverError::SolverError;
};

class KrylovBreakdownError : public SolverError {
 public:
  using SolverError::SolverError;
};

struct SolverConfig {
  double tol_residual = 1e-10; ///< sup-norm of the step residual
  int max_newton = 50;
  int max_krylov = 200;
  double krylov_tol = 1e-3; ///< relative linear residual (inexact Newton)
  double damping_min = 1e-4;
  int continuation_steps = 0; ///< tau-splitting doublings on stall, 0 = off
  double eps_pd = kDefaultEpsPd;

  void validate() const {
    if (!(tol_residual > 0)) throw std::invalid_argument("SolverConfig: tol_residual must be > 0");
    if (!(krylov_tol > 0)) throw std::invalid_argument("SolverConfig: krylov_tol must be > 0");
    if (!(damping_min > 0)) throw std::invalid_argument("SolverConfig: damping_min must be > 0");
    if (!(eps_pd > 0)) throw std::invalid_argument("SolverConfig: eps_pd must be > 0");
    if (max_newton < 1) throw std::invalid_argument("SolverConfig: max_newton must be >= 1");
    if (max_krylov < 1) throw std::invalid_argument("SolverConfig: max_krylov must be >= 1");
    if (continuation_steps < 0)
      throw std::invalid_argument("SolverConfig: continuation_steps must be >= 0");
  }
};

template <typename Scalar = double>
struct StepMonitors {
  Scalar sup_F;          ///< sup |log det g_v|
  Scalar sup_v;          ///< sup |v|
  Scalar sup_trace_prev; ///< sup of tr_{g_v} g_prev
  Scalar min_eig_g;      ///< min eigenvalue of g_v over all nodes
};

template <typename Scalar = double>
struct StepResult {
  Field<Scalar> v; ///< mean-zero solution of the step equation
  Field<Scalar> F; ///< log det g_v
  Scalar residual_sup;
  int newton_iters = 0;
  int krylov_iters = 0; ///< total preconditioned Krylov iterations
  StepMonitors<Scalar> monitors;
};

/// One implicit step of the Ricci iteration as a nonlinear residual:
///   N(v) = R(omega_v) - R_bar + chi_bar - tr_{omega_v} chi,
/// with chi = omega_{u_prev}/tau + chi0.  Fixed points of the iteration
/// satisfy N = 0 with u_prev = v.
template <typename Scalar = double>
class StepEquation {
 public:
  StepEquation(const Field<Scalar>& u_prev, Scalar tau, const std::optional<TwistForm<Scalar>>& chi0,
               const BackgroundGeometry<Scalar>& bg, Scalar eps_pd = Scalar(kDefaultEpsPd))
      : grid_(u_prev.grid), bg_(bg), tau_(tau), eps_pd_(eps_pd), u_prev_(u_prev) {
    if (!(tau > 0)) throw std::invalid_argument("StepEquation: tau must be > 0");
    require_same_grid(grid_, bg.grid, "StepEquation");
    m_prev_ = hessian_metric(u_prev, eps_pd);
    X_ = m_prev_.g;
    X_ *= Scalar(1) / tau;
    Scalar a0 = Scalar(0);
    if (chi0) {
      require_same_grid(grid_, chi0->grid(), "StepEquation twist");
      X_ += chi0->matrix_field();
      a0 = chi0->a;
    }
    a_total_ = Scalar(1) / tau + a0;
    chi_bar_ = Scalar(grid_.n) * a_total_;
  }

  const GridSpec& grid() const { return grid_; }
  Scalar tau() const { return tau_; }
  Scalar eps_pd() const { return eps_pd_; }
  const Field<Scalar>& u_prev() const { return u_prev_; }
  const HessianMetric<Scalar>& prev_metric() const { return m_prev_; }

  Field<Scalar> residual(const Field<Scalar>& v) const {
    return residual(hessian_metric(v, eps_pd_));
  }

  Field<Scalar> residual(const HessianMetric<Scalar>& m_v) const {
    Field<Scalar> r = scalar_curvature(m_v, bg_);
    r.values += chi_bar_ - bg_.R_bar - m_v.inv_g.contract(X_);
    return r;
  }

  /// Inverse symbol of the flat-background linearization,
  /// -(|2 pi k|^4 + (1/tau + a0)|2 pi k|^2), applied mode-wise; the zero
  /// mode (the constant gauge direction) is annihilated.
  Field<Scalar> apply_preconditioner(const Field<Scalar>& r) const {
    auto M = detail::dft_grid(grid_, r.values);
    constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    const int N = grid_.N;
    auto kappa = [&](int k) {
      Scalar w = two_pi * detail::signed_freq(k, N);
      return w * w;
    };
    if (grid_.n == 1) {
      for (int k = 0; k < N; ++k) {
        Scalar kap = kappa(k);
        M(0, k) = k == 0 ? std::complex<Scalar>(0) : M(0, k) / (-(kap * kap + a_total_ * kap));
      }
    } else {
      for (int k0 = 0; k0 < N; ++k0)
        for (int k1 = 0; k1 < N; ++k1) {
          Scalar kap = kappa(k0) + kappa(k1);
          M(k0, k1) = (k0 == 0 && k1 == 0)
                          ? std::complex<Scalar>(0)
                          : M(k0, k1) / (-(kap * kap + a_total_ * kap));
        }
    }
    return Field<Scalar>(grid_, detail::idft_grid_real(grid_, std::move(M)));
  }

 private:
  GridSpec grid_;
  BackgroundGeometry<Scalar> bg_;
  Scalar tau_;
  Scalar eps_pd_;
  Scalar a_total_;
  Scalar chi_bar_;
  Field<Scalar> u_prev_;
  HessianMetric<Scalar> m_prev_;
  SymmetricMatrixField<Scalar> X_; ///< matrix of omega_prev/tau + chi0
};

/// Residual of the step equation (free-function form).
template <typename Scalar>
Field<Scalar> residual(const Field<Scalar>& v, const Field<Scalar>& u_prev, Scalar tau,
                       const std::optional<TwistForm<Scalar>>& chi0,
                       const BackgroundGeometry<Scalar>& bg) {
  return StepEquation<Scalar>(u_prev, tau, chi0, bg).residual(v);
}

template <typename Scalar>
Field<Scalar> residual(const Field<Scalar>& v, const Field<Scalar>& u_prev, Scalar tau,
                       const BackgroundGeometry<Scalar>& bg) {
  return residual(v, u_prev, tau, std::optional<TwistForm<Scalar>>{}, bg);
}

/// Residual of the target twisted cscK equation R = R_bar - chi_bar +
/// tr_{omega_v} chi0 (no step term); with chi0 absent this is just
/// R(omega_v) - R_bar.
template <typename Scalar>
Field<Scalar> target_residual(const HessianMetric<Scalar>& m_v,
                              const std::optional<TwistForm<Scalar>>& chi0,
                              const BackgroundGeometry<Scalar>& bg) {
  Field<Scalar> r = scalar_curvature(m_v, bg);
  r.values -= bg.R_bar;
  if (chi0) {
    r.values += chi0->chi_bar() - m_v.inv_g.contract(chi0->matrix_field());
  }
  return r;
}

template <typename Scalar = double>
struct KrylovStats {
  int iters = 0;
  Scalar rel_residual = Scalar(0);
};

namespace detail {

template <typename Scalar>
Scalar l2(const Field<Scalar>& f) {
  return std::sqrt((f.values * f.values).sum() * Scalar(f.grid.node_weight()));
}

/// Gershgorin-style sup of the Hessian of f (bounds how much adding f
/// perturbs the metric's eigenvalues).
template <typename Scalar>
Scalar hessian_sup(const Field<Scalar>& f) {
  auto h = hessian_arrays(f);
  if (f.grid.n == 1) return h[0].abs().maxCoeff();
  ArrayX<Scalar> row = (h[0].abs() + h[1].abs()).max(h[2].abs() + h[1].abs());
  return row.maxCoeff();
}

/// Matrix-free directional derivative of the step residual via central
/// differences.  The probe size is scaled against the direction's Hessian
/// (the operator is quasilinear in second derivatives) and kept well
/// inside the Kahler cone of v.
template <typename Scalar>
Field<Scalar> fd_jacobian_apply(const StepEquation<Scalar>& eq, const Field<Scalar>& v,
                                const Field<Scalar>& dir, Scalar v_hess_scale,
                                Scalar v_min_eig) {
  const Scalar dn = hessian_sup(dir);
  if (!(dn > Scalar(0))) return Field<Scalar>::zero(v.grid);
  const Scalar fd_eps = std::cbrt(std::numeric_limits<Scalar>::epsilon());
  Scalar sigma = std::min(fd_eps * v_hess_scale, v_min_eig / Scalar(4)) / dn;
  for (int attempt = 0;; ++attempt) {
    try {
      Field<Scalar> plus = v;
      plus.values += sigma * dir.values;
      Field<Scalar> minus = v;
      minus.values -= sigma * dir.values;
      Field<Scalar> rp = eq.residual(plus);
      Field<Scalar> rm = eq.residual(minus);
      rp.values = (rp.values - rm.values) / (Scalar(2) * sigma);
      return rp;
    } catch (const NotKahlerError&) {
      if (attempt >= 3)
        throw KrylovBreakdownError("Jacobian probe keeps leaving the Kahler cone");
      sigma /= Scalar(16);
    }
  }
}

/// Left-preconditioned GMRES on the mean-zero subspace for
/// L_v[delta] = rhs.  Returns the best iterate when the tolerance is not
/// met within max_krylov (inexact Newton tolerates that).
template <typename Scalar>
Field<Scalar> gmres_solve(const StepEquation<Scalar>& eq, const Field<Scalar>& v,
                          const Field<Scalar>& rhs, const SolverConfig& cfg,
                          KrylovStats<Scalar>* stats) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index M = rhs.grid.num_nodes();
  const int maxit = cfg.max_krylov;

  // Probe scales of the linearization point, fixed for the whole solve.
  const Scalar v_hess = hessian_sup(v);
  const Scalar v_min_eig = Scalar(1) + [&] {
    auto eigs = SymmetricMatrixField<Scalar>::shifted_hessian(v, Scalar(0)).min_eigenvalue();
    return eigs.minCoeff();
  }();
  const Scalar v_scale = Scalar(1) + v_hess;

  auto project = [](Field<Scalar> f) { return mean_zero(std::move(f)); };
  Field<Scalar> b = project(eq.apply_preconditioner(rhs));
  const Scalar beta = std::sqrt((b.values * b.values).sum());
  if (stats) *stats = {0, Scalar(0)};
  if (!(beta > Scalar(0))) return Field<Scalar>::zero(rhs.grid);

  std::vector<ArrayX<Scalar>> basis;
  basis.reserve(maxit + 1);
  basis.push_back(b.values / beta);

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> H =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(maxit + 1, maxit);
  Vec cs = Vec::Zero(maxit), sn = Vec::Zero(maxit), g = Vec::Zero(maxit + 1);
  g(0) = beta;

  int j = 0;
  Scalar rel = Scalar(1);
  for (; j < maxit; ++j) {
    Field<Scalar> w = project(eq.apply_preconditioner(
        fd_jacobian_apply(eq, v, Field<Scalar>(rhs.grid, basis[j]), v_scale, v_min_eig)));
    if (!w.all_finite()) throw KrylovBreakdownError("non-finite Krylov vector");
    for (int i = 0; i <= j; ++i) {
      H(i, j) = (w.values * basis[i]).sum();
      w.values -= H(i, j) * basis[i];
    }
    const Scalar h_next = std::sqrt((w.values * w.values).sum());

    // Givens rotations keep the least-squares problem triangular.
    for (int i = 0; i < j; ++i) {
      Scalar t = cs(i) * H(i, j) + sn(i) * H(i + 1, j);
      H(i + 1, j) = -sn(i) * H(i, j) + cs(i) * H(i + 1, j);
      H(i, j) = t;
    }
    const Scalar denom = std::hypot(H(j, j), h_next);
    if (!(denom > Scalar(0))) throw KrylovBreakdownError("GMRES breakdown: zero column");
    cs(j) = H(j, j) / denom;
    sn(j) = h_next / denom;
    H(j, j) = denom;
    g(j + 1) = -sn(j) * g(j);
    g(j) = cs(j) * g(j);

    rel = std::abs(g(j + 1)) / beta;
    const bool happy = !(h_next > beta * std::numeric_limits<Scalar>::epsilon());
    if (rel <= Scalar(cfg.krylov_tol) || happy || j + 1 >= maxit) {
      ++j;
      break;
    }
    basis.push_back(w.values / h_next);
  }
  const int m = std::min<int>(j, maxit);
  if (stats) *stats = {m, rel};

  Vec y = H.topLeftCorner(m, m).template triangularView<Eigen::Upper>().solve(g.head(m));
  ArrayX<Scalar> x = ArrayX<Scalar>::Zero(M);
  for (int i = 0; i < m; ++i) x += y(i) * basis[i];
  Field<Scalar> delta(rhs.grid, std::move(x));
  return mean_zero(std::move(delta));
}

template <typename Scalar>
struct NewtonOutcome {
  Field<Scalar> v;
  Field<Scalar> residual_field;
  Scalar residual_sup;
  int newton_iters = 0;
  int krylov_iters = 0;
};

template <typename Scalar>
NewtonOutcome<Scalar> newton_solve(const StepEquation<Scalar>& eq, const Field<Scalar>& v0,
                                   const SolverConfig& cfg) {
  Field<Scalar> v = mean_zero(v0);
  Field<Scalar> r = eq.residual(v);
  Scalar rsup = r.sup_norm();
  int krylov_total = 0;
  Scalar ktol = Scalar(cfg.krylov_tol); // tightened on stalls, sticky afterwards

  for (int iter = 0;; ++iter) {
    if (rsup <= Scalar(cfg.tol_residual))
      return {std::move(v), std::move(r), rsup, iter, krylov_total};
    if (iter >= cfg.max_newton) {
      std::ostringstream os;
      os << "Newton did not converge in " << cfg.max_newton << " iterations (residual " << rsup
         << ")";
      throw MaxIterationsError(os.str());
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 3 && !stepped; ++attempt) {
      Field<Scalar> neg_r = r;
      neg_r.values = -neg_r.values;
      SolverConfig local = cfg;
      local.krylov_tol = double(ktol);
      KrylovStats<Scalar> ks;
      Field<Scalar> delta = gmres_solve(eq, v, neg_r, local, &ks);
      krylov_total += ks.iters;

      const Scalar merit0 = l2(r);
      Scalar s = Scalar(1);
      bool any_feasible = false;
      std::optional<NotKahlerError> last_cone;
      while (s >= Scalar(cfg.damping_min)) {
        Field<Scalar> trial = v;
        trial.values += s * delta.values;
        trial = mean_zero(std::move(trial));
        Field<Scalar> r_trial;
        try {
          r_trial = eq.residual(trial);
        } catch (const NotKahlerError& e) {
          last_cone = e;
          s /= Scalar(2);
          continue;
        }
        any_feasible = true;
        const Scalar merit = l2(r_trial);
        if (merit <= (Scalar(1) - Scalar(1e-4) * s) * merit0 ||
            r_trial.sup_norm() <= Scalar(cfg.tol_residual)) {
          v = std::move(trial);
          r = std::move(r_trial);
          rsup = r.sup_norm();
          stepped = true;
          break;
        }
        s /= Scalar(2);
      }
      if (stepped) break;
      if (!any_feasible) {
        if (last_cone) throw *last_cone;
        throw MaxIterationsError("Newton step infeasible");
      }
      // An inexact direction failed to give descent: retry it with a
      // sharper linear solve before declaring a stall.
      if (ktol <= Scalar(1.1e-8)) break;
      ktol = std::max(ktol * Scalar(1e-2), Scalar(1e-8));
    }
    if (!stepped) {
      std::ostringstream os;
      os << "Newton line search stalled at residual " << rsup;
      throw MaxIterationsError(os.str());
    }
  }
}

} // namespace detail

/// Approximate solve of the linearized step operator, L_v[delta] = rhs,
/// by preconditioned matrix-free GMRES.  delta is mean-zero.
template <typename Scalar>
Field<Scalar> newton_direction(const Field<Scalar>& v, const Field<Scalar>& rhs,
                               const Field<Scalar>& u_prev, Scalar tau,
                               const std::optional<TwistForm<Scalar>>& chi0,
                               const SolverConfig& cfg, KrylovStats<Scalar>* stats = nullptr) {
  cfg.validate();
  auto bg = BackgroundGeometry<Scalar>::flat_torus(v.grid);
  StepEquation<Scalar> eq(u_prev, tau, chi0, bg, Scalar(cfg.eps_pd));
  return detail::gmres_solve(eq, v, rhs, cfg, stats);
}

/// Solve one implicit step: find the mean-zero v with
///   R(omega_v) = R_bar - chi_bar + tr_{omega_v}(omega_{u_prev}/tau + chi0)
/// by damped Newton-Krylov from the initial guess v = u_prev.  On a
/// Newton stall, retries with tau-splitting continuation: m = 2, 4, ...
/// sub-steps of tau/m are composed into a warm start for the full-tau
/// equation, so the returned residual always refers to the full step.
template <typename Scalar>
StepResult<Scalar> solve_step(const Field<Scalar>& u_prev, Scalar tau,
                              const std::optional<TwistForm<Scalar>>& chi0,
                              const SolverConfig& cfg, const BackgroundGeometry<Scalar>& bg) {
  cfg.validate();
  if (chi0 && !chi0->is_semipositive())
    throw std::invalid_argument(
        "solve_step: chi0 must be semipositive (min eigenvalue of a*I + Hess(psi) is " +
        std::to_string(double(chi0->min_eigenvalue())) + ")");

  StepEquation<Scalar> eq(u_prev, tau, chi0, bg, Scalar(cfg.eps_pd));
  detail::NewtonOutcome<Scalar> out;
  bool solved = false;
  int extra_newton = 0, extra_krylov = 0;
  try {
    out = detail::newton_solve(eq, u_prev, cfg);
    solved = true;
  } catch (const MaxIterationsError&) {
    int m = 1;
    for (int doubling = 0; doubling < cfg.continuation_steps && !solved; ++doubling) {
      m *= 2;
      try {
        Field<Scalar> w = u_prev;
        int sub_newton = 0, sub_krylov = 0;
        for (int j = 0; j < m; ++j) {
          StepEquation<Scalar> sub(w, tau / Scalar(m), chi0, bg, Scalar(cfg.eps_pd));
          auto sub_out = detail::newton_solve(sub, w, cfg);
          w = std::move(sub_out.v);
          sub_newton += sub_out.newton_iters;
          sub_krylov += sub_out.krylov_iters;
        }
        out = detail::newton_solve(eq, w, cfg);
        extra_newton = sub_newton;
        extra_krylov = sub_krylov;
        solved = true;
      } catch (const SolverError&) {
        // try the next doubling
      } catch (const NotKahlerError&) {
      }
    }
    if (!solved) throw;
  }

  StepResult<Scalar> sr;
  sr.v = std::move(out.v);
  sr.newton_iters = out.newton_iters + extra_newton;
  sr.krylov_iters = out.krylov_iters + extra_krylov;
  sr.residual_sup = out.residual_sup;
  auto m_v = hessian_metric(sr.v, Scalar(cfg.eps_pd));
  sr.F = log_density(m_v);
  sr.monitors.sup_F = sr.F.sup_norm();
  sr.monitors.sup_v = sr.v.sup_norm();
  sr.monitors.sup_trace_prev = trace(m_v, eq.prev_metric()).sup_norm();
  sr.monitors.min_eig_g = m_v.min_eig;
  return sr;
}

template <typename Scalar>
StepResult<Scalar> solve_step(const Field<Scalar>& u_prev, Scalar tau, const SolverConfig& cfg,
                              const BackgroundGeometry<Scalar>& bg) {
  return solve_step(u_prev, tau, std::optional<TwistForm<Scalar>>{}, cfg, bg);
}

} // namespace csck
