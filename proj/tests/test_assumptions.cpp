#include "hmc_lab/assumptions.hpp"

#include <gtest/gtest.h>

using namespace hmc_lab;

TEST(CheckA1, GaussianPasses) {
  const auto rep = check_a1(build_family({GaussianFamily{}, 2}), 1.0, default_radii(), 64, 1);
  EXPECT_TRUE(rep.passed());
  EXPECT_NEAR(rep.condition("i").constant, 1.0, 1e-6);
  EXPECT_LE(rep.condition("ii").constant, 1.0);
}

TEST(CheckA2, GaussianConstants) {
  const auto rep = check_a2(build_family({GaussianFamily{}, 2}), 2.0, default_radii(), 64, 2);
  EXPECT_TRUE(rep.passed());
  EXPECT_NEAR(rep.condition("ii").constant, 1.0, 1e-9);
  EXPECT_NEAR(rep.condition("iii").constant, 1.0, 1e-12);
  EXPECT_NEAR(rep.condition("iii.A4").constant, 0.0, 1e-6);
  EXPECT_EQ(rep.condition("iii").holds_from_radius, 1.0);
}

TEST(CheckA1, PowerPasses) {
  const auto rep = check_a1(build_family({PowerFamily{1.0, 0.75}, 2}), 0.5, default_radii(), 64, 3);
  EXPECT_TRUE(rep.passed());
}

TEST(CheckA2, PowerPasses) {
  const auto m = build_family({PowerFamily{1.0, 0.75}, 2});
  const auto rep = check_a2(m, 1.5, default_radii(), 64, 4);
  EXPECT_TRUE(rep.passed());
  for (const auto& c : rep.conditions) EXPECT_GE(c.constant, 0.0);
  EXPECT_GT(rep.condition("ii").constant, 0.0);
}

TEST(CheckA2, PerturbedHomogeneousPasses) {
  const auto m = build_family({HomogeneousPerturbedFamily{1.5, 0.5, 5.0}, 2});
  EXPECT_TRUE(check_a2(m, 1.5, default_radii(), 64, 5).passed());
}

TEST(CheckA1, DoubleWellFailsGrowth) {
  const auto rep = check_a1(build_family({DoubleWellFamily{1.0}, 2}), 1.0, default_radii(), 64, 6);
  EXPECT_FALSE(rep.passed());
  const auto& growth = rep.condition("ii");
  EXPECT_FALSE(growth.pass);
  ASSERT_EQ(growth.witness.size(), 2);
  EXPECT_GE(growth.witness.norm(), 10.0 * (1 - 1e-12));
}

TEST(CheckA1, WrongExponentFails) {
  // Gaussian gradients grow linearly, so beta = 0.5 is too small.
  EXPECT_FALSE(check_a1(build_family({GaussianFamily{}, 2}), 0.5, default_radii(), 32, 7).passed());
}

TEST(CheckA2, FlatPotentialFailsLowerBounds) {
  const auto rep = check_a2(make_flat(2), 1.5, default_radii(), 16, 8);
  EXPECT_FALSE(rep.condition("iii").pass);
  EXPECT_FALSE(rep.condition("ii").pass);
}

TEST(CheckA2, Validation) {
  const auto g = build_family({GaussianFamily{}, 2});
  EXPECT_THROW(check_a2(g, 2.5, default_radii(), 16, 1), ConfigError);
  EXPECT_THROW(check_a1(g, 1.0, {10, 1}, 16, 1), ConfigError);
  auto bare = g;
  bare.third_dir = nullptr;
  EXPECT_THROW(check_a2(bare, 2.0, default_radii(), 16, 1, false), CapabilityError);
  EXPECT_NO_THROW(check_a2(bare, 2.0, default_radii(), 16, 1, true));
}
