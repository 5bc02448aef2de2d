#pragma once

// Leapfrog (Stormer-Verlet) integration of dq/dt = p, dp/dt = -grad U(q).

#include "hmc_lab/core.hpp"
#include "hmc_lab/potential.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace hmc_lab {

struct PhaseState {
  Vector q;
  Vector p;

  Eigen::Index dim() const { return q.size(); }

  /// (q, -p)
  PhaseState flipped() const { return {q, -p}; }

  /// Stacked (q, p) as a 2d-vector.
  Vector stacked() const {
    Vector x(2 * q.size());
    x << q, p;
    return x;
  }

  static PhaseState unstack(const Vector& x) {
    const Eigen::Index d = x.size() / 2;
    return {x.head(d), x.tail(d)};
  }
};

struct LeapfrogConfig {
  double h = 0.1;
  int T = 1;

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("leapfrog.h must be > 0");
    if (T < 1) throw ConfigError("leapfrog.T must be >= 1");
  }
};

struct Trajectory {
  std::vector<PhaseState> states;  // k = 0..T
  std::vector<double> energy;      // H(states[k])
  std::vector<double> dh;          // H_{k+1} - H_k, length T

  const PhaseState& back() const { return states.back(); }
  std::size_t steps() const { return dh.size(); }
};

/// U(q) + |p|^2 / 2 with no finiteness check.
inline double energy(const PotentialModel& model, const PhaseState& s) {
  return model.u(s.q) + 0.5 * s.p.squaredNorm();
}

inline double hamiltonian(const PotentialModel& model, const PhaseState& s) {
  if (s.q.size() != s.p.size()) throw ConfigError("hamiltonian: q and p dimensions differ");
  const double h = energy(model, s);
  if (!std::isfinite(h)) throw NumericError("hamiltonian: non-finite energy");
  return h;
}

namespace detail {

inline std::string describe(const Vector& q, const Vector& p) {
  std::ostringstream os;
  os.precision(17);
  os << "q=[" << q.transpose() << "] p=[" << p.transpose() << "]";
  return os.str();
}

inline Vector checked_grad(const PotentialModel& model, const Vector& q, const Vector& p, long step) {
  Vector g = model.grad(q);
  if (!g.allFinite())
    throw NumericError("leapfrog: non-finite gradient at step " + std::to_string(step) + " (" +
                           describe(q, p) + ")",
                       step);
  return g;
}

// One kick-drift-kick step with the start gradient supplied. On return
// `grad` holds grad U at the new position.
inline void kick_drift_kick(const PotentialModel& model, Vector& q, Vector& p, Vector& grad,
                            double h, long step) {
  p -= (0.5 * h) * grad;
  q += h * p;
  grad = checked_grad(model, q, p, step);
  p -= (0.5 * h) * grad;
}

}  // namespace detail

/// One leapfrog step: half kick, full drift, half kick.
inline PhaseState leapfrog_step(const PotentialModel& model, const PhaseState& s, double h) {
  if (!(h > 0.0)) throw ConfigError("leapfrog.h must be > 0");
  if (s.q.size() != s.p.size()) throw ConfigError("leapfrog: q and p dimensions differ");
  PhaseState out = s;
  Vector grad = detail::checked_grad(model, out.q, out.p, 0);
  detail::kick_drift_kick(model, out.q, out.p, grad, h, 0);
  return out;
}

/// T leapfrog steps, recording every state. grad U is evaluated T+1 times:
/// the end-of-step gradient is reused as the next start-of-step gradient.
inline Trajectory leapfrog_run(const PotentialModel& model, const PhaseState& s0,
                               const LeapfrogConfig& cfg) {
  cfg.validate();
  if (s0.q.size() != s0.p.size()) throw ConfigError("leapfrog: q and p dimensions differ");
  Trajectory traj;
  traj.states.reserve(cfg.T + 1);
  traj.energy.reserve(cfg.T + 1);
  traj.dh.reserve(cfg.T);
  traj.states.push_back(s0);
  traj.energy.push_back(energy(model, s0));

  Vector q = s0.q, p = s0.p;
  Vector grad = detail::checked_grad(model, q, p, 0);
  for (int k = 0; k < cfg.T; ++k) {
    detail::kick_drift_kick(model, q, p, grad, cfg.h, k);
    traj.states.push_back({q, p});
    traj.energy.push_back(energy(model, traj.states.back()));
    traj.dh.push_back(traj.energy[k + 1] - traj.energy[k]);
  }
  return traj;
}

/// Final state of T leapfrog steps without recording (same arithmetic as
/// leapfrog_run).
inline PhaseState leapfrog_final(const PotentialModel& model, const PhaseState& s0,
                                 const LeapfrogConfig& cfg) {
  cfg.validate();
  if (s0.q.size() != s0.p.size()) throw ConfigError("leapfrog: q and p dimensions differ");
  PhaseState s = s0;
  Vector grad = detail::checked_grad(model, s.q, s.p, 0);
  for (int k = 0; k < cfg.T; ++k) detail::kick_drift_kick(model, s.q, s.p, grad, cfg.h, k);
  return s;
}

/// q_k = q0 + k h p0 - (k h^2 / 2) grad U(q0) - h^2 g_k(q0, p0), with
/// g_k = sum_{i=1}^{k-1} (k - i) grad U(q_i) over recorded leapfrog positions.
inline Vector closed_form_position(const PotentialModel& model, const PhaseState& s0, double h,
                                   int k) {
  if (k < 1) throw ConfigError("closed_form_position: k must be >= 1");
  Vector g_k = Vector::Zero(s0.q.size());
  if (k > 1) {
    const Trajectory traj = leapfrog_run(model, s0, {h, k - 1});
    for (int i = 1; i <= k - 1; ++i) g_k += static_cast<double>(k - i) * model.grad(traj.states[i].q);
  }
  const double kd = static_cast<double>(k);
  return s0.q + (kd * h) * s0.p - (kd * h * h / 2.0) * model.grad(s0.q) - (h * h) * g_k;
}

/// p_k = p0 - (h/2)(grad U(q0) + grad U(q_k)) - h sum_{i=1}^{k-1} grad U(q_i).
inline Vector closed_form_momentum(const PotentialModel& model, const PhaseState& s0, double h,
                                   int k) {
  if (k < 1) throw ConfigError("closed_form_momentum: k must be >= 1");
  const Trajectory traj = leapfrog_run(model, s0, {h, k});
  Vector inner = Vector::Zero(s0.q.size());
  for (int i = 1; i <= k - 1; ++i) inner += model.grad(traj.states[i].q);
  return s0.p - (h / 2.0) * (model.grad(s0.q) + model.grad(traj.states[k].q)) - h * inner;
}

/// |flip(run(flip(run(s0)))) - s0| in the stacked 2d norm.
inline double reversibility_residual(const PotentialModel& model, const PhaseState& s0,
                                     const LeapfrogConfig& cfg) {
  cfg.validate();
  const PhaseState forward = leapfrog_final(model, s0, cfg);
  const PhaseState back = leapfrog_final(model, forward.flipped(), cfg).flipped();
  return (back.stacked() - s0.stacked()).norm();
}

/// Central-difference Jacobian of the T-step map at s0.
inline Matrix leapfrog_jacobian(const PotentialModel& model, const PhaseState& s0,
                                const LeapfrogConfig& cfg, double fd_step) {
  if (!(fd_step > 0.0)) throw ConfigError("fd_step must be > 0");
  const Vector x0 = s0.stacked();
  const Eigen::Index n = x0.size();
  Matrix jac(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector xp = x0, xm = x0;
    xp[j] += fd_step;
    xm[j] -= fd_step;
    const Vector fp = leapfrog_final(model, PhaseState::unstack(xp), cfg).stacked();
    const Vector fm = leapfrog_final(model, PhaseState::unstack(xm), cfg).stacked();
    jac.col(j) = (fp - fm) / (2.0 * fd_step);
  }
  if (!jac.allFinite()) throw NumericError("leapfrog_jacobian: non-finite entries");
  return jac;
}

inline Matrix symplectic_structure(Eigen::Index d) {
  Matrix J = Matrix::Zero(2 * d, 2 * d);
  J.topRightCorner(d, d) = Matrix::Identity(d, d);
  J.bottomLeftCorner(d, d) = -Matrix::Identity(d, d);
  return J;
}

inline double default_jacobian_step(const PhaseState& s0) {
  return 1e-6 * (1.0 + s0.stacked().norm());
}

/// (| |det B| - 1 |, max |B^T J B - J|) for the finite-difference Jacobian B.
inline std::pair<double, double> volume_symplectic_residual(const PotentialModel& model,
                                                            const PhaseState& s0,
                                                            const LeapfrogConfig& cfg,
                                                            double fd_step) {
  cfg.validate();
  const Matrix B = leapfrog_jacobian(model, s0, cfg, fd_step);
  const double det = B.determinant();
  if (!std::isfinite(det) || det == 0.0) throw NumericError("leapfrog_jacobian: singular");
  const Matrix J = symplectic_structure(s0.dim());
  const double sym = (B.transpose() * J * B - J).cwiseAbs().maxCoeff();
  return {std::abs(std::abs(det) - 1.0), sym};
}

// ---------------------------------------------------------------------------
// Reference flow

struct ReferenceFlowStats {
  long accepted_steps = 0;
  long rejected_steps = 0;
};

/// Exact Hamiltonian flow to time t by adaptive Dormand-Prince 5(4).
/// Local errors are controlled per unit step (mixed absolute/relative, at
/// tol * step / t) so the accumulated error over [0, t] stays near tol.
/// Oracle only.
inline PhaseState reference_flow(const PotentialModel& model, const PhaseState& s0, double t,
                                 double tol, ReferenceFlowStats* stats = nullptr) {
  if (!(t >= 0.0)) throw ConfigError("reference_flow: t must be >= 0");
  if (!(tol > 0.0)) throw ConfigError("reference_flow: tol must be > 0");
  const Eigen::Index d = s0.dim();
  auto rhs = [&](const Vector& y) {
    Vector f(2 * d);
    f.head(d) = y.tail(d);
    f.tail(d) = -model.grad(y.head(d));
    return f;
  };

  // Dormand-Prince tableau (autonomous system, so the c_i nodes are unused).
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  Vector y = s0.stacked();
  if (t == 0.0) return s0;
  Vector k1 = rhs(y);
  double time = 0.0;
  double step = std::min(t, 0.01 * std::max(1.0, y.norm()) /
                                std::max(1.0, k1.norm()));
  const double min_step = 1e-14 * std::max(1.0, t);
  ReferenceFlowStats local;
  while (time < t) {
    if (t - time < step) step = t - time;
    const Vector k2 = rhs(y + step * (a21 * k1));
    const Vector k3 = rhs(y + step * (a31 * k1 + a32 * k2));
    const Vector k4 = rhs(y + step * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = rhs(y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 = rhs(y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vector y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vector k7 = rhs(y_new);
    const Vector err_vec =
        step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double scale =
          (tol + tol * std::max(std::abs(y[i]), std::abs(y_new[i]))) * (step / t);
      err = std::max(err, std::abs(err_vec[i]) / scale);
    }
    if (!std::isfinite(err)) throw OracleError("reference_flow: non-finite error estimate");
    if (err <= 1.0) {
      time = (t - time <= step) ? t : time + step;
      y = y_new;
      k1 = k7;
      ++local.accepted_steps;
    } else {
      ++local.rejected_steps;
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    step *= factor;
    if (time < t && step < min_step)
      throw OracleError("reference_flow: step size underflow at t=" + format_double(time));
    if (local.accepted_steps + local.rejected_steps > 50'000'000)
      throw OracleError("reference_flow: step budget exhausted");
  }
  if (stats) *stats = local;
  return PhaseState::unstack(y);
}

}  // namespace hmc_lab
