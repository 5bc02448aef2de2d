#pragma once

// Six-term expansion of the one-step energy error H(Phi(q0, p0)) - H(q0, p0)
// along the segment q_t = q0 + t (q1 - q0), with g0 = grad U(q0):
//
//   h^2  int <D2U p0, p0> (1/2 - t)          h^4/8  |int D2U p0|^2
//   h^3  int <D2U g0, p0> (t - 1/4)         -h^5/8  <int D2U g0, int D2U p0>
//  -h^4/4 int <D2U g0, g0> t                 h^6/32 |int D2U g0|^2

#include "hmc_lab/core.hpp"
#include "hmc_lab/integrator.hpp"
#include "hmc_lab/potential.hpp"
#include "hmc_lab/quadrature.hpp"

#include <array>
#include <cmath>
#include <numeric>

namespace hmc_lab {

struct EnergyDecomposition {
  std::array<double, 6> terms{};
  double total = 0.0;
  double direct = 0.0;
  double residual = 0.0;
  double tolerance = 1e-9;
  int quad_nodes = 32;

  bool within_tolerance() const { return residual <= tolerance; }
};

inline EnergyDecomposition energy_decomposition(const PotentialModel& model, const PhaseState& s0,
                                                double h, int quad_nodes = 32,
                                                double tolerance = 1e-9) {
  if (!model.has_hessian())
    throw CapabilityError("energy_decomposition: model has no analytic hess_dir");
  if (quad_nodes < 8) throw ConfigError("energy_decomposition: quad_nodes must be >= 8");
  if (!(h > 0.0)) throw ConfigError("energy_decomposition: h must be > 0");

  const PhaseState s1 = leapfrog_step(model, s0, h);
  const Vector& p0 = s0.p;
  const Vector g0 = model.grad(s0.q);
  const Vector dq = s1.q - s0.q;
  const QuadratureRule rule = gauss_legendre(quad_nodes, 0.0, 1.0);

  double i1 = 0.0, i2 = 0.0, i3 = 0.0;
  Vector hp = Vector::Zero(p0.size()), hg = Vector::Zero(p0.size());
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double t = rule.nodes[k], w = rule.weights[k];
    const Vector qt = s0.q + t * dq;
    const Vector a = model.hess_dir(qt, p0);
    const Vector b = model.hess_dir(qt, g0);
    i1 += w * a.dot(p0) * (0.5 - t);
    i2 += w * b.dot(p0) * (t - 0.25);
    i3 += w * b.dot(g0) * t;
    hp += w * a;
    hg += w * b;
  }

  EnergyDecomposition out;
  out.quad_nodes = quad_nodes;
  out.tolerance = tolerance;
  const double h2 = h * h, h3 = h2 * h, h4 = h3 * h, h5 = h4 * h, h6 = h5 * h;
  out.terms = {h2 * i1,
               h3 * i2,
               -h4 / 4.0 * i3,
               h4 / 8.0 * hp.squaredNorm(),
               -h5 / 8.0 * hg.dot(hp),
               h6 / 32.0 * hg.squaredNorm()};
  out.total = std::accumulate(out.terms.begin(), out.terms.end(), 0.0);
  out.direct = hamiltonian(model, s1) - hamiltonian(model, s0);
  out.residual = std::abs(out.total - out.direct);
  return out;
}

}  // namespace hmc_lab
