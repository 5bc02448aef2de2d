#pragma once

// Potential models U(q) = -log pi(q) + const, and the built-in families.

#include "hmc_lab/core.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hmc_lab {

enum class Family { gaussian, power, homogeneous_perturbed, double_well, custom };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::power: return "power";
    case Family::homogeneous_perturbed: return "homogeneous_perturbed";
    case Family::double_well: return "double_well";
    case Family::custom: return "custom";
  }
  return "custom";
}

/// Evaluator bundle for a potential. Evaluators are immutable after
/// construction and safe to call concurrently.
struct PotentialModel {
  using Scalar = std::function<double(const Vector&)>;
  using Gradient = std::function<Vector(const Vector&)>;
  using HessianDir = std::function<Vector(const Vector&, const Vector&)>;
  using ThirdDir = std::function<Vector(const Vector&, const Vector&, const Vector&)>;

  int dim = 1;
  Scalar u;
  Gradient grad;
  HessianDir hess_dir;   // D^2 U(q) v, optional
  ThirdDir third_dir;    // D^3 U(q)[v, w], optional
  Family family = Family::custom;
  /// Growth exponent m when the family is m-homogeneous at infinity.
  std::optional<double> homogeneity;

  bool has_hessian() const { return static_cast<bool>(hess_dir); }
  bool has_third() const { return static_cast<bool>(third_dir); }

  /// Unnormalized log target density, -U(q).
  double log_density(const Vector& q) const { return -u(q); }
};

// ---------------------------------------------------------------------------
// Family configuration

struct GaussianFamily {
  std::vector<double> precision;  // diagonal; empty means identity
};

struct PowerFamily {
  double delta = 1.0;
  double kappa = 0.75;
};

struct HomogeneousPerturbedFamily {
  double m = 1.5;
  double perturbation = 0.5;
  double blend_radius = 5.0;
};

struct DoubleWellFamily {
  double scale = 1.0;
};

struct FamilyConfig {
  std::variant<GaussianFamily, PowerFamily, HomogeneousPerturbedFamily, DoubleWellFamily> variant;
  int dim = 1;
};

inline Family family_of(const FamilyConfig& cfg) {
  return static_cast<Family>(cfg.variant.index());
}

/// All range violations in `cfg`, each naming the offending field.
inline std::vector<std::string> validate(const FamilyConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.dim < 1) errors.push_back("potential.dim must be >= 1");
  if (const auto* g = std::get_if<GaussianFamily>(&cfg.variant)) {
    if (!g->precision.empty() && static_cast<int>(g->precision.size()) != cfg.dim)
      errors.push_back("gaussian.precision must have dim entries");
    for (double p : g->precision)
      if (!(p > 0.0) || !std::isfinite(p)) {
        errors.push_back("gaussian.precision entries must be > 0");
        break;
      }
  } else if (const auto* p = std::get_if<PowerFamily>(&cfg.variant)) {
    if (!(p->delta > 0.0)) errors.push_back("power.delta must be > 0");
    if (!(p->kappa > 0.5 && p->kappa <= 1.0)) errors.push_back("power.kappa must lie in (0.5, 1]");
  } else if (const auto* h = std::get_if<HomogeneousPerturbedFamily>(&cfg.variant)) {
    if (!(h->m > 1.0 && h->m <= 2.0))
      errors.push_back("homogeneous_perturbed.m must lie in (1, 2]");
    if (!std::isfinite(h->perturbation))
      errors.push_back("homogeneous_perturbed.perturbation must be finite");
    if (!(h->blend_radius > 1.0))
      errors.push_back("homogeneous_perturbed.blend_radius must be > 1");
  } else if (const auto* w = std::get_if<DoubleWellFamily>(&cfg.variant)) {
    if (!(w->scale > 0.0)) errors.push_back("double_well.scale must be > 0");
  }
  return errors;
}

// ---------------------------------------------------------------------------
// Radial potentials U(q) = F(|q|^2)

namespace detail {

/// F(s), F'(s), F''(s), F'''(s).
using RadialProfile = std::function<std::array<double, 4>(double)>;

inline PotentialModel radial_model(int dim, RadialProfile profile) {
  auto f = std::make_shared<const RadialProfile>(std::move(profile));
  PotentialModel m;
  m.dim = dim;
  m.u = [f](const Vector& q) { return (*f)(q.squaredNorm())[0]; };
  m.grad = [f](const Vector& q) -> Vector { return 2.0 * (*f)(q.squaredNorm())[1] * q; };
  m.hess_dir = [f](const Vector& q, const Vector& v) -> Vector {
    const auto d = (*f)(q.squaredNorm());
    return 2.0 * d[1] * v + 4.0 * d[2] * q.dot(v) * q;
  };
  m.third_dir = [f](const Vector& q, const Vector& v, const Vector& w) -> Vector {
    const auto d = (*f)(q.squaredNorm());
    const double qv = q.dot(v), qw = q.dot(w);
    return 4.0 * d[2] * (qw * v + qv * w + v.dot(w) * q) + 8.0 * d[3] * qv * qw * q;
  };
  return m;
}

// (s + c)^a and derivatives.
inline std::array<double, 4> shifted_power(double s, double c, double a) {
  const double b = s + c;
  const double p = std::pow(b, a - 3.0);
  return {p * b * b * b, a * p * b * b, a * (a - 1.0) * p * b, a * (a - 1.0) * (a - 2.0) * p};
}

inline std::array<double, 4> product(const std::array<double, 4>& f, const std::array<double, 4>& g) {
  return {f[0] * g[0], f[1] * g[0] + f[0] * g[1], f[2] * g[0] + 2.0 * f[1] * g[1] + f[0] * g[2],
          f[3] * g[0] + 3.0 * f[2] * g[1] + 3.0 * f[1] * g[2] + f[0] * g[3]};
}

// Order-3 jets (value and three derivatives) composed with an outer function
// whose jet is g, by Faa di Bruno.
inline std::array<double, 4> compose(const std::array<double, 4>& g, const std::array<double, 4>& u) {
  const double u1 = u[1], u2 = u[2], u3 = u[3];
  return {g[0], g[1] * u1, g[2] * u1 * u1 + g[1] * u2,
          g[3] * u1 * u1 * u1 + 3.0 * g[2] * u1 * u2 + g[1] * u3};
}

// exp(-1/x) for x > 0, as a jet in x.
inline std::array<double, 4> flat_exp(double x) {
  if (x < 1.0 / 700.0) return {0.0, 0.0, 0.0, 0.0};
  const double ix = 1.0 / x;
  const double e = std::exp(-ix);
  return compose({e, e, e, e}, {-ix, ix * ix, -2.0 * ix * ix * ix, 6.0 * ix * ix * ix * ix});
}

// C-infinity step from 0 to 1 on [0, 1]: f(x) / (f(x) + f(1 - x)) with
// f(x) = exp(-1/x). Returns the value and first three derivatives.
inline std::array<double, 4> smooth_step(double x) {
  if (x <= 0.0) return {0.0, 0.0, 0.0, 0.0};
  if (x >= 1.0) return {1.0, 0.0, 0.0, 0.0};
  const auto a = flat_exp(x);
  auto b = flat_exp(1.0 - x);
  b[1] = -b[1];
  b[3] = -b[3];
  const std::array<double, 4> sum{a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
  const double is = 1.0 / sum[0];
  return product(a, compose({is, -is * is, 2.0 * is * is * is, -6.0 * is * is * is * is}, sum));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Family constructors

inline PotentialModel make_gaussian(const GaussianFamily& g, int dim) {
  Vector lambda = Vector::Ones(dim);
  if (!g.precision.empty()) lambda = Eigen::Map<const Vector>(g.precision.data(), dim);
  PotentialModel m;
  m.dim = dim;
  m.u = [lambda](const Vector& q) { return 0.5 * q.dot(lambda.cwiseProduct(q)); };
  m.grad = [lambda](const Vector& q) -> Vector { return lambda.cwiseProduct(q); };
  m.hess_dir = [lambda](const Vector&, const Vector& v) -> Vector { return lambda.cwiseProduct(v); };
  m.third_dir = [dim](const Vector&, const Vector&, const Vector&) -> Vector {
    return Vector::Zero(dim);
  };
  m.family = Family::gaussian;
  m.homogeneity = 2.0;
  return m;
}

/// U(q) = (|q|^2 + delta)^kappa, growing like |q|^(2 kappa).
inline PotentialModel make_power(const PowerFamily& p, int dim) {
  const double delta = p.delta, kappa = p.kappa;
  PotentialModel m = detail::radial_model(
      dim, [delta, kappa](double s) { return detail::shifted_power(s, delta, kappa); });
  m.family = Family::power;
  m.homogeneity = 2.0 * kappa;
  return m;
}

/// U = U0 + G where U0 = (|q|^2+1)^(m/2) inside radius 1, exactly |q|^m
/// outside blend_radius, smoothly (C-infinity) blended in between; G = c sin(log(1+|q|^2)) is
/// bounded with D^k G = O(|q|^-k).
inline PotentialModel make_homogeneous_perturbed(const HomogeneousPerturbedFamily& h, int dim) {
  const double m_exp = h.m, c = h.perturbation;
  const double s_lo = 1.0, s_hi = h.blend_radius * h.blend_radius;
  auto profile = [=](double s) {
    const auto inner = detail::shifted_power(s, 1.0, 0.5 * m_exp);
    std::array<double, 4> u0 = inner;
    if (s > s_lo) {
      const double width = s_hi - s_lo;
      auto chi = detail::smooth_step((s - s_lo) / width);
      chi[1] /= width;
      chi[2] /= width * width;
      chi[3] /= width * width * width;
      const auto outer = detail::shifted_power(s, 0.0, 0.5 * m_exp);
      const std::array<double, 4> one_minus{1.0 - chi[0], -chi[1], -chi[2], -chi[3]};
      const auto a = detail::product(one_minus, inner);
      const auto b = detail::product(chi, outer);
      for (int k = 0; k < 4; ++k) u0[k] = a[k] + b[k];
    }
    const double l = std::log1p(s), b = 1.0 + s;
    const double sl = std::sin(l), cl = std::cos(l);
    const std::array<double, 4> g{c * sl, c * cl / b, c * (-sl - cl) / (b * b),
                                  c * (3.0 * sl + cl) / (b * b * b)};
    return std::array<double, 4>{u0[0] + g[0], u0[1] + g[1], u0[2] + g[2], u0[3] + g[3]};
  };
  PotentialModel m = detail::radial_model(dim, profile);
  m.family = Family::homogeneous_perturbed;
  m.homogeneity = m_exp;
  return m;
}

/// U(q) = scale (|q|^2 - 1)^2. Quartic growth: violates the sublinear and
/// linear gradient-growth assumptions (negative control).
inline PotentialModel make_double_well(const DoubleWellFamily& w, int dim) {
  const double a = w.scale;
  PotentialModel m = detail::radial_model(dim, [a](double s) {
    const double t = s - 1.0;
    return std::array<double, 4>{a * t * t, 2.0 * a * t, 2.0 * a, 0.0};
  });
  m.family = Family::double_well;
  return m;
}

/// Zero potential (free particle); proposals are pure drifts.
inline PotentialModel make_flat(int dim) {
  PotentialModel m;
  m.dim = dim;
  m.u = [](const Vector&) { return 0.0; };
  m.grad = [dim](const Vector&) -> Vector { return Vector::Zero(dim); };
  m.hess_dir = [dim](const Vector&, const Vector&) -> Vector { return Vector::Zero(dim); };
  m.third_dir = [dim](const Vector&, const Vector&, const Vector&) -> Vector {
    return Vector::Zero(dim);
  };
  return m;
}

inline PotentialModel build_family(const FamilyConfig& cfg) {
  if (const auto errors = validate(cfg); !errors.empty()) {
    std::string msg = errors.front();
    for (std::size_t i = 1; i < errors.size(); ++i) msg += "; " + errors[i];
    throw ConfigError(msg);
  }
  return std::visit(
      [&](const auto& v) -> PotentialModel {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GaussianFamily>) return make_gaussian(v, cfg.dim);
        else if constexpr (std::is_same_v<T, PowerFamily>) return make_power(v, cfg.dim);
        else if constexpr (std::is_same_v<T, HomogeneousPerturbedFamily>)
          return make_homogeneous_perturbed(v, cfg.dim);
        else return make_double_well(v, cfg.dim);
      },
      cfg.variant);
}

// ---------------------------------------------------------------------------
// Finite-difference oracles

inline double default_grad_step(const Vector& q) { return 1e-5 * (1.0 + q.norm()); }
inline double default_hess_step(const Vector& q) { return 1e-4 * (1.0 + q.norm()); }

/// Central-difference gradient of model.u.
inline Vector finite_diff_grad(const PotentialModel& model, const Vector& q, double step) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_grad: step must be > 0");
  Vector g(q.size());
  Vector x = q;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    x[i] = q[i] + step;
    const double up = model.u(x);
    x[i] = q[i] - step;
    const double down = model.u(x);
    x[i] = q[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: non-finite potential at stencil point");
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Central difference of grad along v: approximates D^2 U(q) v.
inline Vector finite_diff_hess_dir(const PotentialModel& model, const Vector& q, const Vector& v,
                                   double step) {
  const double vn = v.norm();
  if (vn == 0.0) return Vector::Zero(q.size());
  const double eps = step / vn;
  return (model.grad(q + eps * v) - model.grad(q - eps * v)) / (2.0 * eps);
}

/// D^2 U(q) v, analytic when available.
inline Vector hess_dir_or_fd(const PotentialModel& model, const Vector& q, const Vector& v) {
  if (model.has_hessian()) return model.hess_dir(q, v);
  return finite_diff_hess_dir(model, q, v, default_hess_step(q));
}

/// D^3 U(q)[v, w], analytic when available, else a central difference of
/// the (analytic or finite-difference) directional Hessian along w.
inline Vector third_dir_or_fd(const PotentialModel& model, const Vector& q, const Vector& v,
                              const Vector& w) {
  if (model.has_third()) return model.third_dir(q, v, w);
  const double wn = w.norm();
  if (wn == 0.0) return Vector::Zero(q.size());
  const double eps = default_hess_step(q) / wn;
  return (hess_dir_or_fd(model, q + eps * w, v) - hess_dir_or_fd(model, q - eps * w, v)) /
         (2.0 * eps);
}

}  // namespace hmc_lab
