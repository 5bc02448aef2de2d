#include "hmc_lab/integrator.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

using namespace hmc_lab;
using hmc_lab::testing::all_families;
using hmc_lab::testing::CountingModel;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

PotentialModel quadratic() { return build_family({GaussianFamily{}, 1}); }

bool bit_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

// Moderate-radius random states per family, with a step size each family
// integrates stably.
struct Setup {
  PotentialModel model;
  double radius;
  LeapfrogConfig cfg;
};

std::vector<Setup> family_setups(int dim) {
  const auto fams = all_families(dim);
  return {{fams[0], 10.0, {0.5, 10}},
          {fams[1], 100.0, {0.9, 10}},
          {fams[2], 100.0, {0.9, 10}},
          {fams[3], 2.0, {0.02, 10}}};
}

}  // namespace

TEST(LeapfrogStep, FreeParticleDrifts) {
  const auto m = make_flat(2);
  Vector q(2), p(2);
  q << 1.0, -2.0;
  p << 0.5, 3.0;
  const auto out = leapfrog_step(m, {q, p}, 0.25);
  EXPECT_TRUE(bit_equal(out.q, q + 0.25 * p));
  EXPECT_TRUE(bit_equal(out.p, p));
}

TEST(LeapfrogStep, QuadraticHandComputed) {
  const auto out = leapfrog_step(quadratic(), {v1(1.0), v1(0.0)}, 0.5);
  EXPECT_EQ(out.q[0], 0.875);
  EXPECT_EQ(out.p[0], -0.46875);
}

TEST(LeapfrogStep, ReversedStartRecoversInitialState) {
  const auto out = leapfrog_step(quadratic(), {v1(0.875), v1(0.46875)}, 0.5);
  EXPECT_EQ(out.q[0], 1.0);
  EXPECT_EQ(out.p[0], 0.0);
}

TEST(LeapfrogStep, RejectsBadInput) {
  EXPECT_THROW(leapfrog_step(quadratic(), {v1(1.0), v1(0.0)}, 0.0), ConfigError);
  EXPECT_THROW(leapfrog_step(quadratic(), {v1(1.0), Vector::Zero(2)}, 0.1), ConfigError);
}

TEST(LeapfrogStep, NonFiniteGradientCarriesState) {
  PotentialModel m = quadratic();
  m.grad = [](const Vector& q) -> Vector {
    return q[0] < 0.9 ? Vector::Constant(1, std::nan("")) : q;
  };
  try {
    leapfrog_run(m, {v1(1.0), v1(0.0)}, {0.5, 3});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.step(), 0);
    EXPECT_NE(std::string(e.what()).find("q=[0.875]"), std::string::npos) << e.what();
  }
}

TEST(LeapfrogRun, TwoQuadraticSteps) {
  const auto traj = leapfrog_run(quadratic(), {v1(1.0), v1(0.0)}, {0.5, 2});
  ASSERT_EQ(traj.states.size(), 3u);
  EXPECT_EQ(traj.back().q[0], 0.53125);
  EXPECT_EQ(traj.back().p[0], -0.8203125);
  EXPECT_EQ(traj.dh.size(), 2u);
}

TEST(LeapfrogRun, GradientEvaluatedTPlusOneTimes) {
  CountingModel cm(build_family({PowerFamily{}, 2}));
  leapfrog_run(cm.model, {Vector::Ones(2), Vector::Ones(2)}, {0.3, 17});
  EXPECT_EQ(cm.grad_calls->load(), 18);
  cm.grad_calls->store(0);
  leapfrog_final(cm.model, {Vector::Ones(2), Vector::Ones(2)}, {0.3, 17});
  EXPECT_EQ(cm.grad_calls->load(), 18);
}

TEST(LeapfrogRun, RecordingMatchesSingleSteps) {
  hmc_lab::Stream rng(21, 0);
  for (const auto& s : family_setups(2)) {
    const PhaseState s0{rng.in_ball(2, s.radius), rng.normal_vector(2)};
    const auto traj = leapfrog_run(s.model, s0, s.cfg);
    for (int k = 0; k < s.cfg.T; ++k) {
      const auto next = leapfrog_step(s.model, traj.states[k], s.cfg.h);
      ASSERT_TRUE(bit_equal(next.q, traj.states[k + 1].q));
      ASSERT_TRUE(bit_equal(next.p, traj.states[k + 1].p));
    }
    double sum = 0.0;
    for (double d : traj.dh) sum += d;
    EXPECT_LE(std::abs(sum - (traj.energy.back() - traj.energy.front())),
              1e-12 * (1.0 + std::abs(traj.energy.front())));
  }
}

TEST(LeapfrogRun, CompositionIsExact) {
  hmc_lab::Stream rng(22, 0);
  for (const auto& s : family_setups(2)) {
    const PhaseState s0{rng.in_ball(2, s.radius), rng.normal_vector(2)};
    for (auto [a, b] : {std::pair{1, 1}, std::pair{3, 4}, std::pair{7, 2}}) {
      const auto whole = leapfrog_final(s.model, s0, {s.cfg.h, a + b});
      const auto mid = leapfrog_final(s.model, s0, {s.cfg.h, a});
      const auto parts = leapfrog_final(s.model, mid, {s.cfg.h, b});
      EXPECT_TRUE(bit_equal(whole.q, parts.q));
      EXPECT_TRUE(bit_equal(whole.p, parts.p));
    }
  }
}

TEST(LeapfrogRun, DeterministicReplay) {
  const auto m = build_family({HomogeneousPerturbedFamily{}, 3});
  PhaseState s0{Vector::LinSpaced(3, -4, 7), Vector::LinSpaced(3, 1, 2)};
  const auto a = leapfrog_run(m, s0, {0.4, 25});
  const auto b = leapfrog_run(m, s0, {0.4, 25});
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    ASSERT_TRUE(bit_equal(a.states[k].q, b.states[k].q));
    ASSERT_TRUE(bit_equal(a.states[k].p, b.states[k].p));
  }
}

TEST(LeapfrogRun, SecondOrderConvergence) {
  const auto m = quadratic();
  const PhaseState s0{v1(1.0), v1(0.0)};
  const auto exact = reference_flow(m, s0, 1.0, 1e-13);
  const auto coarse = leapfrog_final(m, s0, {0.1, 10});
  const auto fine = leapfrog_final(m, s0, {0.05, 20});
  const double ratio = (coarse.stacked() - exact.stacked()).norm() /
                       (fine.stacked() - exact.stacked()).norm();
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(LeapfrogRun, SecondOrderConvergencePower) {
  const auto m = build_family({PowerFamily{}, 2});
  PhaseState s0{Vector::Constant(2, 3.0), Vector::Constant(2, -0.5)};
  const auto exact = reference_flow(m, s0, 2.0, 1e-13);
  const auto coarse = leapfrog_final(m, s0, {0.02, 100});
  const auto fine = leapfrog_final(m, s0, {0.01, 200});
  const double ratio = (coarse.stacked() - exact.stacked()).norm() /
                       (fine.stacked() - exact.stacked()).norm();
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(ClosedForm, FirstStepHasEmptyCorrection) {
  const auto m = build_family({PowerFamily{}, 2});
  PhaseState s0{Vector::Constant(2, 2.0), Vector::Constant(2, 1.0)};
  const double h = 0.3;
  const Vector expected = s0.q + h * s0.p - (h * h / 2) * m.grad(s0.q);
  EXPECT_LE((closed_form_position(m, s0, h, 1) - expected).norm(), 1e-15);
}

TEST(ClosedForm, QuadraticTwoSteps) {
  EXPECT_EQ(closed_form_position(quadratic(), {v1(1.0), v1(0.0)}, 0.5, 2)[0], 0.53125);
}

namespace {

// Scale of the summands in the closed form; the relative error is taken
// against it so that cancellation between terms does not inflate it.
double closed_form_scale(const PotentialModel& m, const PhaseState& s0, double h, int k) {
  const auto traj = leapfrog_run(m, s0, {h, k});
  double g = 0.0;
  for (int i = 1; i < k; ++i) g += (k - i) * m.grad(traj.states[i].q).norm();
  return s0.q.norm() + k * h * s0.p.norm() + k * h * h / 2 * m.grad(s0.q).norm() + h * h * g;
}

}  // namespace

TEST(ClosedForm, MatchesComposedStepsAllFamilies) {
  hmc_lab::Stream rng(23, 0);
  for (const auto& s : family_setups(2)) {
    for (int i = 0; i < 50; ++i) {
      const PhaseState s0{rng.in_ball(2, s.radius), rng.normal_vector(2)};
      for (int k : {1, 2, 5, 13, 20}) {
        const Vector composed = leapfrog_final(s.model, s0, {s.cfg.h, k}).q;
        const Vector closed = closed_form_position(s.model, s0, s.cfg.h, k);
        EXPECT_LE((closed - composed).norm(), 1e-12 * closed_form_scale(s.model, s0, s.cfg.h, k))
            << family_name(s.model.family) << " k=" << k;
      }
    }
  }
}

TEST(ClosedForm, MomentumFromRecordedPositions) {
  hmc_lab::Stream rng(24, 0);
  for (const auto& s : family_setups(2)) {
    for (int i = 0; i < 20; ++i) {
      const PhaseState s0{rng.in_ball(2, s.radius), rng.normal_vector(2)};
      for (int k : {1, 4, 10}) {
        const auto traj = leapfrog_run(s.model, s0, {s.cfg.h, k});
        const Vector pk = closed_form_momentum(s.model, s0, s.cfg.h, k);
        double scale = s0.p.norm();
        for (const auto& st : traj.states) scale += s.cfg.h * s.model.grad(st.q).norm();
        EXPECT_LE((pk - traj.back().p).norm(), 1e-12 * scale) << family_name(s.model.family);
      }
    }
  }
}

TEST(Hamiltonian, Values) {
  const auto m = quadratic();
  EXPECT_EQ(hamiltonian(m, {v1(0.0), v1(0.0)}), 0.0);
  EXPECT_EQ(hamiltonian(m, {v1(1.0), v1(0.0)}), 0.5);
  PotentialModel bad = m;
  bad.u = [](const Vector&) { return INFINITY; };
  EXPECT_THROW(hamiltonian(bad, {v1(0.0), v1(0.0)}), NumericError);
}

TEST(Hamiltonian, EquipartitionUnderExtendedTarget) {
  const int d = 4, n = 40000;
  const auto m = build_family({GaussianFamily{}, d});
  hmc_lab::Stream rng(25, 0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += hamiltonian(m, {rng.normal_vector(d), rng.normal_vector(d)});
  // H = chi^2_{2d} / 2 has mean d and variance d.
  EXPECT_NEAR(sum / n, d, 3.0 * std::sqrt(double(d) / n));
}

TEST(Reversibility, FreeParticleExact) {
  EXPECT_EQ(reversibility_residual(make_flat(2), {Vector::Constant(2, 0.5), Vector::Constant(2, 0.25)},
                                   {0.5, 8}),
            0.0);
}

TEST(Reversibility, QuadraticAndPowerTail) {
  EXPECT_LE(reversibility_residual(quadratic(), {v1(1.0), v1(0.0)}, {0.5, 3}), 1e-12);
  const auto m = build_family({PowerFamily{}, 2});
  Vector q(2);
  q << 60.0, 80.0;
  EXPECT_LE(reversibility_residual(m, {q, Vector::Constant(2, 0.7)}, {0.9, 10}), 1e-9);
}

TEST(Reversibility, AllFamiliesWithinContract) {
  hmc_lab::Stream rng(26, 0);
  for (const auto& s : family_setups(2)) {
    for (int i = 0; i < 50; ++i) {
      const PhaseState s0{rng.in_ball(2, s.radius), rng.normal_vector(2)};
      EXPECT_LE(reversibility_residual(s.model, s0, s.cfg), 1e-10 * (1.0 + s0.stacked().norm()))
          << family_name(s.model.family);
    }
  }
}

TEST(VolumeSymplectic, FreeParticleShear) {
  const auto [vol, sym] = volume_symplectic_residual(
      make_flat(2), {Vector::Constant(2, 1.0), Vector::Constant(2, -1.0)}, {0.5, 4}, 1e-3);
  EXPECT_LE(vol, 1e-10);
  EXPECT_LE(sym, 1e-10);
}

TEST(VolumeSymplectic, Gaussian1D) {
  const PhaseState s0{v1(1.0), v1(0.3)};
  const auto [vol, sym] =
      volume_symplectic_residual(quadratic(), s0, {0.5, 5}, default_jacobian_step(s0));
  EXPECT_LE(vol, 1e-6);
  EXPECT_LE(sym, 1e-6);
}

TEST(VolumeSymplectic, PowerAtRadiusTen) {
  const auto m = build_family({PowerFamily{}, 2});
  Vector q(2);
  q << 6.0, 8.0;
  const PhaseState s0{q, Vector::Constant(2, 0.5)};
  const auto [vol, sym] = volume_symplectic_residual(m, s0, {0.9, 10}, default_jacobian_step(s0));
  EXPECT_LE(vol, 1e-5);
  EXPECT_LE(sym, 1e-5);
}

TEST(ReferenceFlow, HarmonicQuarterTurn) {
  const auto out = reference_flow(quadratic(), {v1(1.0), v1(0.0)}, std::numbers::pi / 2, 1e-10);
  EXPECT_NEAR(out.q[0], 0.0, 1e-9);
  EXPECT_NEAR(out.p[0], -1.0, 1e-9);
}

TEST(ReferenceFlow, ConservesEnergy) {
  hmc_lab::Stream rng(27, 0);
  const double tol = 1e-10;
  for (const auto& s : family_setups(2)) {
    const PhaseState s0{rng.in_ball(2, std::min(s.radius, 10.0)), rng.normal_vector(2)};
    const auto out = reference_flow(s.model, s0, 3.0, tol);
    EXPECT_LE(std::abs(energy(s.model, out) - energy(s.model, s0)), 10 * tol)
        << family_name(s.model.family);
  }
}

TEST(ReferenceFlow, ZeroTimeIsIdentity) {
  const PhaseState s0{v1(2.0), v1(1.0)};
  EXPECT_EQ(reference_flow(quadratic(), s0, 0.0, 1e-8).q[0], 2.0);
}

TEST(ReferenceFlow, BlowUpIsReportedNotDegraded) {
  // U = -q^4 / 4 escapes to infinity in finite time from (1, 1).
  PotentialModel m;
  m.dim = 1;
  m.u = [](const Vector& q) { return -std::pow(q[0], 4) / 4; };
  m.grad = [](const Vector& q) -> Vector { return Vector::Constant(1, -std::pow(q[0], 3)); };
  EXPECT_THROW(reference_flow(m, {v1(1.0), v1(1.0)}, 10.0, 1e-10), OracleError);
}
