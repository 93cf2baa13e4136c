#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "flemvi/simulator.hpp"

using namespace flemvi;

namespace {

const double pi = std::numbers::pi;

BasisPtr<1> interval_basis() {
  static const auto basis = make_basis(make_interval(0.0, pi));
  return basis;
}

std::shared_ptr<const InitialLaw<1>> ground_law() {
  return std::make_shared<const InitialLaw<1>>(InitialLaw<1>::single(make_admissible<1>(interval_basis(), {})));
}

std::shared_ptr<const InitialLaw<1>> mixed_law() {
  const std::vector<double> a{0.1};
  return std::make_shared<const InitialLaw<1>>(std::vector<InitialLaw<1>::Component>{
      {0.5, make_admissible<1>(interval_basis(), {})}, {0.5, make_admissible<1>(interval_basis(), a)}});
}

std::vector<Point<1>> spread(std::size_t n) {
  std::vector<Point<1>> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = {pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n)};
  return x;
}

/// Method-of-images survival probability on (0, L).
double images_survival(double x, double t, double L) {
  const double s = std::sqrt(t);
  double p = 0.0;
  for (int k = -20; k <= 20; ++k) {
    const double shift = 2.0 * k * L;
    p += normal_cdf((L - x + shift) / s) - normal_cdf((-x + shift) / s);
    p -= normal_cdf((L + x + shift) / s) - normal_cdf((x + shift) / s);
  }
  return p;
}

}  // namespace

TEST(Bridge, CrossingProbabilityMatchesEmpiricalRate) {
  EXPECT_NEAR(bridge_crossing_probability(0.1, 0.1, 0.01), 0.1353352832, 1e-10);
  const auto I = make_interval(0.0, pi);
  auto rng = make_stream(1, 0);
  const int N = 100000;
  int hits = 0;
  for (int i = 0; i < N; ++i) {
    const auto c = detect_exit(I, {0.1}, {0.1}, 0.01, rng);
    if (c.hit) {
      ++hits;
      EXPECT_EQ(c.point[0], 0.0);
      EXPECT_DOUBLE_EQ(c.fraction, 0.5);
    }
  }
  const double p = std::exp(-2.0);
  EXPECT_NEAR(hits / double(N), p, 4.0 * std::sqrt(p * (1 - p) / N));
}

TEST(Bridge, FarPathsAreNeverTested) {
  const auto I = make_interval(0.0, pi);
  auto rng = make_stream(2, 0);
  const auto before = rng;
  EXPECT_FALSE(detect_exit(I, {1.0}, {1.1}, 1e-3, rng).hit);
  EXPECT_EQ(rng, before);
  const auto seg = detect_exit(I, {0.01}, {-0.03}, 1e-3, rng);
  EXPECT_TRUE(seg.hit);
  EXPECT_NEAR(seg.fraction, 0.25, 1e-15);
}

TEST(StepCount, Grid) {
  EXPECT_EQ(step_count(1.0, 1e-4), 10000u);
  EXPECT_EQ(step_count(0.25, 1e-4), 2500u);
  EXPECT_EQ(step_count(0.0, 1e-4), 0u);
  EXPECT_EQ(step_count(1e-6, 1e-4), 1u);
  EXPECT_THROW(step_count(1.0, 0.0), std::invalid_argument);
}

TEST(ParticleConfig, RejectsExteriorStart) {
  EXPECT_THROW(ParticleConfig<1>(make_interval(0.0, pi), {{0.0}}, make_stream(1, 0)), std::domain_error);
}

TEST(FirstExit, SurvivalMatchesMethodOfImages) {
  const auto I = make_interval(0.0, pi);
  auto rng = make_stream(3, 0);
  const int N = 20000;
  int alive02 = 0, alive05 = 0;
  for (int i = 0; i < N; ++i) {
    const auto e = first_exit<1>(I, {{pi / 2}}, 1e-3, rng);
    alive02 += e.tau > 0.2;
    alive05 += e.tau > 0.5;
  }
  for (auto [alive, t] : {std::pair{alive02, 0.2}, std::pair{alive05, 0.5}}) {
    const double p = images_survival(pi / 2, t, pi);
    EXPECT_NEAR(alive / double(N), p, 4.0 * std::sqrt(p * (1 - p) / N) + 2e-3) << t;
  }
}

TEST(FirstExit, ExitSideIsLinearInStart) {
  const auto I = make_interval(0.0, pi);
  auto rng = make_stream(4, 0);
  const int N = 20000;
  for (double x : {0.5, 2.5}) {
    int upper = 0;
    for (int i = 0; i < N; ++i) upper += first_exit<1>(I, {{x}}, 4e-3, rng).y[0][0] == pi;
    const double p = x / pi;
    EXPECT_NEAR(upper / double(N), p, 4.0 * std::sqrt(p * (1 - p) / N) + 5e-3) << x;
  }
}

TEST(FirstExit, OthersStayInside) {
  const auto R = make_rectangle(0.0, 1.0, 0.0, 2.0);
  auto rng = make_stream(5, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const auto e = first_exit<2>(R, {{0.5, 1.0}, {0.2, 0.3}, {0.8, 1.7}}, 1e-3, rng);
    EXPECT_GT(e.tau, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == e.index) EXPECT_TRUE(R.on_boundary(e.y[j]));
      else EXPECT_TRUE(R.contains(e.y[j]));
    }
  }
}

TEST(Step, JumpLogIsOrderedAndConsistent) {
  const auto kernel = RelocationKernel<1>::paper_lll(mixed_law());
  ParticleConfig<1> cfg(make_interval(0.0, pi), spread(50), make_stream(6, 0));
  advance(cfg, 1.0, 1e-3, kernel);
  EXPECT_NEAR(cfg.time, 1.0, 1e-12);
  ASSERT_GT(cfg.jump_log.size(), 0u);
  EXPECT_EQ(cfg.jump_log.size(), cfg.jump_count);
  for (std::size_t j = 0; j < cfg.jump_log.size(); ++j) {
    const auto& ev = cfg.jump_log[j];
    if (j > 0) EXPECT_LE(cfg.jump_log[j - 1].time, ev.time);
    EXPECT_TRUE(cfg.domain.on_boundary(ev.jump_off));
    EXPECT_TRUE(cfg.domain.contains(ev.target));
    EXPECT_DOUBLE_EQ(ev.distance, distance(ev.jump_off, ev.target));
    EXPECT_LT(ev.particle, 50u);
  }
  for (const auto& p : cfg.positions) EXPECT_TRUE(cfg.domain.contains(p));
}

TEST(Step, DeterministicForSeed) {
  const auto kernel = RelocationKernel<1>::uniform_survivor();
  ParticleConfig<1> a(make_interval(0.0, pi), spread(20), make_stream(7, 0));
  ParticleConfig<1> b(make_interval(0.0, pi), spread(20), make_stream(7, 0));
  advance(a, 0.5, 1e-3, kernel);
  advance(b, 0.5, 1e-3, kernel);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.jump_count, b.jump_count);
}

TEST(Step, UniformSurvivorNeedsCompanion) {
  const auto kernel = RelocationKernel<1>::uniform_survivor();
  ParticleConfig<1> cfg(make_interval(0.0, pi), {{1e-3}}, make_stream(8, 0));
  EXPECT_THROW(
      {
        for (int i = 0; i < 1000; ++i) step(cfg, 1e-2, kernel);
      },
      std::domain_error);
  ParticleConfig<1> two(make_interval(0.0, pi), {{1e-3}, {2.0}}, make_stream(8, 0));
  for (int i = 0; i < 50; ++i) step(two, 1e-2, kernel);
  EXPECT_GT(two.jump_count, 0u);
}

TEST(Step, JumpRateMatchesGroundStateDecay) {
  // From the quasi-stationary law with h_1 relocation each particle jumps at rate -λ_1 = 1/2.
  const auto law = ground_law();
  const auto kernel = RelocationKernel<1>::fixed_h1(interval_basis());
  const std::size_t n = 100;
  const double T = 2.0;
  const auto counts = simulate_replicas(*law, n, T, 10, 1e-3, kernel, {9, 1},
                                        [](const auto&, const ParticleConfig<1>& cfg) { return double(cfg.jump_count); });
  const double rate = summarize(counts).mean / (n * T);
  EXPECT_NEAR(rate, 0.5, 4.0 * std::sqrt(0.5 / (10 * n * T)));
}

TEST(Run, RecordsOnStride) {
  const auto kernel = RelocationKernel<1>::fixed_h1(interval_basis());
  ParticleConfig<1> cfg(make_interval(0.0, pi), spread(10), make_stream(10, 0));
  const std::vector<CylinderFunction> obs{CylinderFunction::linear(0), CylinderFunction::linear(1)};
  const auto traj = run(cfg, 0.1, 1e-3, kernel, *interval_basis(), std::span<const CylinderFunction>(obs), 20);
  ASSERT_EQ(traj.times.size(), 6u);
  EXPECT_EQ(traj.times.front(), 0.0);
  EXPECT_NEAR(traj.times.back(), 0.1, 1e-12);
  EXPECT_EQ(traj.values[0].size(), 2u);
  for (std::size_t i = 1; i < traj.jump_counts.size(); ++i) EXPECT_GE(traj.jump_counts[i], traj.jump_counts[i - 1]);
}

TEST(Estimators, GroundStateIsStationary) {
  const auto law = ground_law();
  const auto kernel = RelocationKernel<1>::fixed_h1(interval_basis());
  const auto e = semigroup_estimate(*law, CylinderFunction::linear(0), CylinderFunction::constant(1.0), 0.25, 20, 200,
                                    1e-3, kernel, {11, 1});
  EXPECT_EQ(e.count, 200u);
  EXPECT_NEAR(e.mean, 0.6266570687, 4.0 * e.std_error);
}

TEST(Estimators, ResolventOfConstant) {
  const auto law = ground_law();
  const auto kernel = RelocationKernel<1>::fixed_h1(interval_basis());
  const auto r = resolvent_estimate(*law, CylinderFunction::constant(1.0), 2.0, 5, 3, 1e-2, kernel, {12, 1});
  EXPECT_DOUBLE_EQ(r.horizon, 6.0);
  EXPECT_NEAR(r.estimate.mean, (1.0 - std::exp(-12.0)) / 2.0, 1e-12);
  EXPECT_NEAR(r.estimate.mean + r.tail_bound, 0.5, 1e-12);
}

TEST(Estimators, JobsDoNotChangeResults) {
  const auto law = mixed_law();
  const auto kernel = RelocationKernel<1>::paper_lll(law);
  const auto a = semigroup_estimate(*law, CylinderFunction::linear(1), CylinderFunction::linear(0), 0.05, 10, 20, 1e-3,
                                    kernel, {13, 1});
  const auto b = semigroup_estimate(*law, CylinderFunction::linear(1), CylinderFunction::linear(0), 0.05, 10, 20, 1e-3,
                                    kernel, {13, 4});
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Helpers, BoundaryAtomAndSupBound) {
  const std::vector<Point<1>> x{{0.5}, {1.0}};
  const auto mu = with_boundary_atom<1>(x, 1);
  EXPECT_FALSE(mu[0].boundary);
  EXPECT_TRUE(mu[1].boundary);
  EXPECT_NEAR(sup_bound(*interval_basis(), CylinderFunction::square(0)), 2.0 / pi, 1e-15);
  EXPECT_EQ(sup_bound(*interval_basis(), CylinderFunction::constant(-3.0)), 3.0);
}
