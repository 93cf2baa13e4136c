#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "flemvi/cylinder.hpp"
#include "flemvi/generator.hpp"
#include "flemvi/spectral.hpp"

using namespace flemvi;

namespace {

BasisPtr<1> interval_basis() { return make_basis(make_interval(0.0, std::numbers::pi)); }

// f(U+(t, mu)) differentiated at t = 0 by a centered difference.
double flow_derivative(const CylinderFunction& f, const DensityMeasure<1>& mu, double h = 1e-4) {
  return (evaluate(f, flow(mu, h)) - evaluate(f, flow(mu, -h))) / (2.0 * h);
}

CylinderFunction product01() { return {{0, 1}, Polynomial(2, {{1.0, {1, 1}}})}; }

}  // namespace

TEST(Polynomial, DerivativesOfKnownPolynomial) {
  // φ(x, y) = 3x²y - y³ + 2
  const Polynomial p(2, {{3.0, {2, 1}}, {-1.0, {0, 3}}, {2.0, {0, 0}}});
  const std::vector<double> x{1.5, -0.5};
  EXPECT_DOUBLE_EQ(p(x), 3.0 * 2.25 * -0.5 + 0.125 + 2.0);
  EXPECT_DOUBLE_EQ(p.partial(x, 0), 6.0 * 1.5 * -0.5);
  EXPECT_DOUBLE_EQ(p.partial(x, 1), 3.0 * 2.25 - 3.0 * 0.25);
  EXPECT_DOUBLE_EQ(p.second_partial(x, 0, 0), 6.0 * -0.5);
  EXPECT_DOUBLE_EQ(p.second_partial(x, 0, 1), 6.0 * 1.5);
  EXPECT_DOUBLE_EQ(p.second_partial(x, 1, 1), 6.0 * 0.5);
  const std::vector<double> r{2.0, 1.0};
  EXPECT_DOUBLE_EQ(p.gradient_bound(r, 1), 3.0 * 4.0 + 3.0);
  EXPECT_DOUBLE_EQ(p.hessian_bound(r, 0, 1), 12.0);
  EXPECT_THROW(p(std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(Polynomial(2, {{1.0, {1}}}), std::invalid_argument);
  EXPECT_THROW(CylinderFunction({0}, Polynomial::constant(1.0)), std::invalid_argument);
}

TEST(Generator, GroundStateValues) {
  const auto mu0 = ground_state(interval_basis());
  const auto f = CylinderFunction::linear(0);
  EXPECT_NEAR(operator_B(f, mu0), -0.3133285343, 1e-10);
  EXPECT_NEAR(operator_C(f, mu0), 0.3133285343, 1e-10);
  EXPECT_NEAR(generator_A(f, mu0), 0.0, 1e-15);
  EXPECT_EQ(generator_A(CylinderFunction::constant(3.0), mu0), 0.0);
}

TEST(Generator, SplitsIntoDriftAndRenormalization) {
  const auto basis = interval_basis();
  const std::vector<double> a{0.1, 0.05, -0.02};
  const auto mu = DensityMeasure<1>::perturbed_ground_state(basis, a);
  for (const auto& f : {CylinderFunction::linear(1), CylinderFunction::square(2), product01()}) {
    EXPECT_NEAR(generator_A(f, mu), operator_B(f, mu) + operator_C(f, mu), 1e-14);
  }
}

TEST(Generator, MatchesTimeDerivativeOfFlow) {
  const auto basis = interval_basis();
  for (const std::vector<double>& a : {std::vector<double>{0.1}, {0.05, 0.02}, {-0.05, 0.03, 0.01}}) {
    const auto mu = DensityMeasure<1>::perturbed_ground_state(basis, a);
    for (const auto& f : {CylinderFunction::linear(0), CylinderFunction::linear(1), CylinderFunction::square(2), product01()}) {
      EXPECT_NEAR(generator_A(f, mu), flow_derivative(f, mu), 1e-6);
    }
  }
}

TEST(Generator, LaplacianMassIdentity) {
  const auto basis = interval_basis();
  const std::vector<double> a{0.1, 0.05};
  const auto mu = DensityMeasure<1>::perturbed_ground_state(basis, a);
  const auto [spectral, quadrature] = delta_Af_identity(mu);
  EXPECT_NEAR(spectral, quadrature, 1e-12);
  EXPECT_NEAR(spectral, z_prime_zero(mu), 1e-14);
}

TEST(Generator, RectangleGroundStateIsFixed) {
  const auto basis = make_basis(make_rectangle(0.0, 1.0, 0.0, 2.0));
  const auto mu0 = ground_state(basis);
  EXPECT_NEAR(z_prime_zero(mu0), basis->lambda(0), 1e-12);
  EXPECT_NEAR(generator_A(CylinderFunction::square(0), mu0), 0.0, 1e-12);
}
