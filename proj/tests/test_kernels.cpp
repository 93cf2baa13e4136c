#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "flemvi/kernels.hpp"
#include "flemvi/parallel.hpp"
#include "flemvi/random.hpp"

using namespace flemvi;

namespace {

const double pi = std::numbers::pi;

BasisPtr<1> interval_basis() {
  static const auto basis = make_basis(make_interval(0.0, pi));
  return basis;
}

// Kolmogorov-Smirnov statistic sqrt(N) sup|F_N - F|; exceeds 1.628 with probability 0.01.
double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return std::sqrt(n) * d;
}

constexpr double ks_critical = 1.628;

// d = (sin x + 0.1 sin 2x)/2 and its normalized -½Δd = sin(x)/2 + 0.2 sin 2x on (0, π).
double cdf_perturbed(double x) { return 0.5 * ((1.0 - std::cos(x)) + 0.05 * (1.0 - std::cos(2.0 * x))); }
double cdf_perturbed_laplacian(double x) { return 0.5 * (1.0 - std::cos(x)) + 0.1 * (1.0 - std::cos(2.0 * x)); }

std::shared_ptr<const InitialLaw<1>> two_component_law(double w0, double w1) {
  const std::vector<double> a{0.1};
  return std::make_shared<const InitialLaw<1>>(std::vector<InitialLaw<1>::Component>{
      {w0, make_admissible<1>(interval_basis(), {})}, {w1, make_admissible<1>(interval_basis(), a)}});
}

}  // namespace

TEST(Random, StreamsAreReproducibleAndDistinct) {
  auto a = make_stream(7, 0), b = make_stream(7, 0), c = make_stream(7, 1), d = make_stream(8, 0);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(Parallel, ResultsIndependentOfJobs) {
  auto fn = [](std::size_t r) {
    auto rng = make_stream(11, r);
    return uniform01(rng);
  };
  EXPECT_EQ(run_replicas(50, 1, fn), run_replicas(50, 4, fn));
  EXPECT_THROW(run_replicas(10, 3,
                            [](std::size_t r) -> int {
                              if (r == 7) throw std::runtime_error("boom");
                              return 0;
                            }),
               std::runtime_error);
}

TEST(Parallel, Summarize) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto e = summarize(v);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_NEAR(e.std_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(e.count, 4u);
}

TEST(Admissibility, GroundState) {
  const auto d = make_admissible<1>(interval_basis(), {}, 1.7);
  EXPECT_DOUBLE_EQ(d.c(), 1.7);
  EXPECT_NEAR(d.total_rate(), 0.5, 1e-14);
  EXPECT_NEAR(smallest_admissibility_constant(d.density()), 1.5957691216, 1e-9);
  EXPECT_THROW(make_admissible<1>(interval_basis(), {}, 1.5), AdmissibilityError);
  EXPECT_THROW(make_admissible<1>(interval_basis(), {}, 1.0), std::invalid_argument);
}

TEST(Admissibility, PerturbedConstant) {
  const std::vector<double> a{0.05};
  const auto d = DensityMeasure<1>::perturbed_ground_state(interval_basis(), a);
  EXPECT_NEAR(smallest_admissibility_constant(d), 2.6596, 1e-4);
  EXPECT_THROW(make_admissible<1>(interval_basis(), a, 2.0), AdmissibilityError);
  EXPECT_NO_THROW(make_admissible<1>(interval_basis(), a, 2.7));
  const std::vector<double> a2{0.1};
  EXPECT_NEAR(make_admissible<1>(interval_basis(), a2).c(), 7.9787, 1e-4);
}

TEST(Admissibility, RejectsSignChangeAndBadMass) {
  const std::vector<double> a{0.6};
  EXPECT_THROW(make_admissible<1>(interval_basis(), a), AdmissibilityError);
  try {
    make_admissible<1>(interval_basis(), a, 5.0);
    FAIL();
  } catch (const AdmissibilityError& e) {
    EXPECT_FALSE(e.violations().empty());
    EXPECT_LE(e.violations().size(), 10u);
  }
  std::vector<double> c(64, 0.0);
  c[0] = 1.0;
  const auto unnormalized = DensityMeasure<1>::from_coefficients(interval_basis(), c);
  EXPECT_THROW(validate_admissible(unnormalized, 3.0), AdmissibilityError);
}

TEST(Admissibility, RectangleGroundState) {
  const auto basis = make_basis(make_rectangle(0.0, 1.0, 0.0, 2.0));
  // d/h_1 is the constant 1/(h_1,1) with (h_1,1) = 8√2/π²
  const auto d = make_admissible<2>(basis, {});
  EXPECT_NEAR(d.c(), 8.0 * std::sqrt(2.0) / (pi * pi), 1e-6);
  EXPECT_NEAR(d.total_rate(), -basis->lambda(0), 1e-10);
}

TEST(Samplers, GroundStateKS) {
  auto rng = make_stream(1, 0);
  std::vector<double> xs(20000);
  for (auto& x : xs) x = sample_ground_state(make_interval(0.0, pi), rng)[0];
  EXPECT_LT(ks_statistic(xs, [](double x) { return 0.5 * (1.0 - std::cos(x)); }), ks_critical);
}

TEST(Samplers, PerturbedDensityKS) {
  const std::vector<double> a{0.1};
  const auto d = make_admissible<1>(interval_basis(), a);
  auto rng = make_stream(2, 0);
  std::vector<double> xs(20000), ls(20000);
  for (auto& x : xs) x = d.sample(rng)[0];
  for (auto& x : ls) x = d.sample_neg_half_laplacian(rng)[0];
  EXPECT_LT(ks_statistic(xs, cdf_perturbed), ks_critical);
  EXPECT_LT(ks_statistic(ls, cdf_perturbed_laplacian), ks_critical);
}

TEST(InitialLaw, Validation) {
  const auto d = make_admissible<1>(interval_basis(), {});
  EXPECT_THROW(InitialLaw<1>(std::vector<InitialLaw<1>::Component>{}), std::invalid_argument);
  EXPECT_THROW(InitialLaw<1>({{-1.0, d}, {2.0, d}}), std::invalid_argument);
  EXPECT_THROW(InitialLaw<1>({{0.0, d}}), std::invalid_argument);
  const auto other = make_admissible<1>(make_basis(make_interval(0.0, pi)), {});
  EXPECT_THROW(InitialLaw<1>({{1.0, d}, {1.0, other}}), std::invalid_argument);
  const InitialLaw<1> law({{2.0, d}, {0.0, d}});
  EXPECT_DOUBLE_EQ(law[0].weight, 1.0);
  EXPECT_EQ(law.degenerate_component(), 0u);
  EXPECT_NEAR(law.mean_rate(), 0.5, 1e-14);
}

TEST(MixtureRelocation, PosteriorMatchesDirectFormula) {
  const auto law = two_component_law(0.3, 0.7);
  const std::vector<Point<1>> others{{0.4}, {1.1}, {2.0}, {2.7}};
  const MixtureRelocation<1> eta(*law, others);
  const double n = 5.0;
  std::vector<double> num(2), den(2);
  for (std::size_t m = 0; m < 2; ++m) {
    const auto& dm = (*law)[m].density;
    double prod = 1.0, ell = 0.0;
    for (const auto& z : others) {
      prod *= dm(z);
      ell += dm.neg_half_laplacian(z) / dm(z);
    }
    num[m] = (*law)[m].weight * (ell / n) * prod;
    den[m] = (*law)[m].weight * dm.total_rate() * prod;
  }
  EXPECT_NEAR(eta.posterior()[0], num[0] / (num[0] + num[1]), 1e-13);
  EXPECT_NEAR(eta.posterior()[1], num[1] / (num[0] + num[1]), 1e-13);
  EXPECT_NEAR(eta.prenormalized_mass(), (num[0] + num[1]) / (den[0] + den[1]), 1e-13);
  const auto dens = eta.as_density();
  EXPECT_NEAR(dens.signed_mass(), 1.0, 1e-13);
  EXPECT_NEAR(dens.density({1.3}), eta({1.3}), 1e-13);
}

TEST(MixtureRelocation, PosteriorConcentratesAndMassTendsToOne) {
  // h_1 ± 0.1 h_2 differ by about 0.027 nats per observation
  const std::vector<double> minus{-0.1}, plus{0.1};
  const InitialLaw<1> law({{0.5, make_admissible<1>(interval_basis(), minus)},
                           {0.5, make_admissible<1>(interval_basis(), plus)}});
  auto rng = make_stream(3, 0);
  std::vector<Point<1>> others(799);
  for (auto& z : others) z = law[1].density.sample(rng);
  const MixtureRelocation<1> eta(law, others);
  EXPECT_GT(eta.posterior()[1], 0.999);
  EXPECT_NEAR(eta.prenormalized_mass(), 1.0, 0.2);
}

TEST(RelocationKernel, BoundConstantAndDensityBounds) {
  const auto law = two_component_law(0.4, 0.6);
  const auto kernel = RelocationKernel<1>::paper_lll(law);
  const double c1 = kernel.bound_constant();
  EXPECT_NEAR(c1, std::pow((*law)[1].density.c(), 3), 1e-12);
  const std::vector<Point<1>> others{{0.5}, {1.5}};
  const auto eta = kernel.density(others);
  const auto& h1 = interval_basis()->eigenpair(0);
  for (double x = 0.01; x < pi; x += 0.01) {
    EXPECT_LE(eta.density({x}), c1 * h1({x}));
    EXPECT_GE(eta.density({x}), h1({x}) / c1);
  }
  const auto fixed = RelocationKernel<1>::fixed_h1(interval_basis());
  EXPECT_NEAR(fixed.bound_constant(), 1.5957691216, 1e-10);
  EXPECT_EQ(RelocationKernel<1>::uniform_survivor().bound_constant(), 0.0);
}

TEST(RelocationKernel, UniformSurvivor) {
  const auto k = RelocationKernel<1>::uniform_survivor();
  auto rng = make_stream(4, 0);
  const std::vector<Point<1>> one{{1.25}};
  EXPECT_EQ(k.sample(one, rng)[0], 1.25);
  EXPECT_THROW(k.sample(std::vector<Point<1>>{}, rng), std::domain_error);
  EXPECT_THROW(k.density(one), std::domain_error);
}

TEST(RelocationKernel, KindNames) {
  for (auto kind : {KernelKind::UniformSurvivor, KernelKind::FixedH1, KernelKind::PaperLLL}) {
    EXPECT_EQ(parse_kernel_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_kernel_kind("lll"), std::invalid_argument);
}

TEST(RelocationKernel, DegenerateLawSamplesItsComponent) {
  const auto law = two_component_law(0.0, 1.0);
  const auto kernel = RelocationKernel<1>::paper_lll(law);
  auto rng = make_stream(5, 0);
  const std::vector<Point<1>> others{{0.3}, {2.9}};
  std::vector<double> xs(20000);
  for (auto& x : xs) x = kernel.sample(others, rng)[0];
  EXPECT_LT(ks_statistic(xs, cdf_perturbed), ks_critical);
}

TEST(MBoldN, MassAndSpecialCoordinate) {
  const std::vector<double> a{0.1};
  const auto law = InitialLaw<1>::single(make_admissible<1>(interval_basis(), a));
  auto rng = make_stream(6, 0);
  std::vector<double> special, plain;
  for (int i = 0; i < 8000; ++i) {
    const auto s = sample_m_bold_n(law, 5, rng);
    EXPECT_NEAR(s.total_mass, 2.5, 1e-12);
    ASSERT_LT(s.special, 5u);
    special.push_back(s.points[s.special][0]);
    plain.push_back(s.points[(s.special + 1) % 5][0]);
  }
  EXPECT_LT(ks_statistic(special, cdf_perturbed_laplacian), ks_critical);
  EXPECT_LT(ks_statistic(plain, cdf_perturbed), ks_critical);
  EXPECT_THROW(sample_m_bold_n(law, 0, rng), std::invalid_argument);
}

TEST(NuN, ComponentFrequencies) {
  const auto law = two_component_law(0.25, 0.75);
  auto rng = make_stream(7, 0);
  int ones = 0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) ones += sample_configuration(*law, 3, rng).component == 1;
  // binomial sd = sqrt(N·0.1875) ≈ 61
  EXPECT_NEAR(ones, 15000, 4 * 61.3);
  EXPECT_EQ(sample_nu_n(*law, 7, rng).size(), 7u);
}
