#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "flemvi/cylinder.hpp"
#include "flemvi/numerics.hpp"
#include "flemvi/spectral.hpp"

namespace flemvi {

/// ((h_{m_1}, mu), ..., (h_{m_r}, mu)) for a density measure.
template <std::size_t Dim>
std::vector<double> pairings(const CylinderFunction& f, const DensityMeasure<Dim>& mu) {
  std::vector<double> x(f.arity());
  for (std::size_t i = 0; i < f.arity(); ++i) x[i] = mu.coefficient(f.modes()[i]);
  return x;
}

template <std::size_t Dim>
double evaluate(const CylinderFunction& f, const DensityMeasure<Dim>& mu) {
  return f.value(pairings(f, mu));
}

/// Bf(mu) = Σ ∂_iφ λ_{m_i} (h_{m_i}, mu)
template <std::size_t Dim>
double operator_B(const CylinderFunction& f, const DensityMeasure<Dim>& mu) {
  const auto x = pairings(f, mu);
  CompensatedSum s;
  for (std::size_t i = 0; i < f.arity(); ++i) s += f.partial(x, i) * mu.basis().lambda(f.modes()[i]) * x[i];
  return s.value();
}

/// Cf(mu) = -z'(mu, 0) Σ ∂_iφ (h_{m_i}, mu)
template <std::size_t Dim>
double operator_C(const CylinderFunction& f, const DensityMeasure<Dim>& mu) {
  const auto x = pairings(f, mu);
  CompensatedSum s;
  for (std::size_t i = 0; i < f.arity(); ++i) s += f.partial(x, i) * x[i];
  return -z_prime_zero(mu) * s.value();
}

/// Generator of T_t f = f(U+(t, .)):  Af = Σ ∂_iφ (h_{m_i}, mu)(λ_{m_i} - z'(mu, 0)).
template <std::size_t Dim>
double generator_A(const CylinderFunction& f, const DensityMeasure<Dim>& mu) {
  const auto x = pairings(f, mu);
  const double zp = z_prime_zero(mu);
  CompensatedSum s;
  for (std::size_t i = 0; i < f.arity(); ++i) {
    s += f.partial(x, i) * x[i] * (mu.basis().lambda(f.modes()[i]) - zp);
  }
  return s.value();
}

/// Two routes to (½Δd, 1) for mu = d dx: the spectral sum Σ λ_k (h_k,d)(h_k,1)
/// and a quadrature of ½Δd evaluated pointwise.
template <std::size_t Dim>
std::pair<double, double> delta_Af_identity(const DensityMeasure<Dim>& mu) {
  const auto& basis = mu.basis();
  CompensatedSum spectral;
  for (std::size_t k : mu.support()) spectral += basis[k].lambda * mu.coefficient(k) * basis[k].integral;
  const double quadrature = basis.quadrature().integrate([&](const Point<Dim>& x) { return mu.half_laplacian(x); });
  return {spectral.value(), quadrature};
}

}  // namespace flemvi
