#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "flemvi/geometry.hpp"
#include "flemvi/numerics.hpp"

namespace flemvi {

/// One Dirichlet eigenfunction of ½Δ on a box:
///   h(x) = amplitude * prod_a sin(omega_a (x_a - lower_a)),  ½Δh = lambda h.
template <std::size_t Dim>
struct Mode {
  std::array<int, Dim> index{};
  std::array<double, Dim> omega{};
  Point<Dim> lower{};
  double amplitude = 0.0;
  double lambda = 0.0;
  double integral = 0.0;  // (h, 1)

  double operator()(const Point<Dim>& x) const {
    double v = amplitude;
    for (std::size_t a = 0; a < Dim; ++a) v *= std::sin(omega[a] * (x[a] - lower[a]));
    return v;
  }

  Point<Dim> gradient(const Point<Dim>& x) const {
    Point<Dim> g;
    for (std::size_t a = 0; a < Dim; ++a) {
      double v = amplitude * omega[a] * std::cos(omega[a] * (x[a] - lower[a]));
      for (std::size_t b = 0; b < Dim; ++b) {
        if (b != a) v *= std::sin(omega[b] * (x[b] - lower[b]));
      }
      g[a] = v;
    }
    return g;
  }

  double sup_norm() const { return amplitude; }
  double lipschitz() const { return amplitude * *std::max_element(omega.begin(), omega.end()); }
};

/// Truncated Dirichlet eigenbasis of ½Δ on a box, sorted by descending
/// eigenvalue (ties by multi-index). Immutable after construction.
template <std::size_t Dim>
class SpectralBasis {
 public:
  static constexpr std::size_t default_truncation = 64;

  explicit SpectralBasis(const Box<Dim>& domain, std::size_t truncation = default_truncation)
      : domain_(domain), quadrature_(domain) {
    if (truncation == 0) throw std::invalid_argument("SpectralBasis: truncation must be positive");
    std::vector<std::array<int, Dim>> candidates;
    const int kmax = static_cast<int>(truncation);
    if constexpr (Dim == 1) {
      for (int k = 1; k <= kmax; ++k) candidates.push_back({k});
    } else {
      for (int j = 1; j <= kmax; ++j) {
        for (int k = 1; k <= kmax; ++k) candidates.push_back({j, k});
      }
    }
    std::vector<Mode<Dim>> all;
    all.reserve(candidates.size());
    for (const auto& idx : candidates) all.push_back(make_mode(idx));
    std::stable_sort(all.begin(), all.end(), [](const Mode<Dim>& a, const Mode<Dim>& b) {
      if (a.lambda != b.lambda) return a.lambda > b.lambda;
      return a.index < b.index;
    });
    all.resize(truncation);
    modes_ = std::move(all);
    axis_max_.fill(0);
    for (const auto& m : modes_) {
      for (std::size_t a = 0; a < Dim; ++a) axis_max_[a] = std::max(axis_max_[a], m.index[a]);
    }
  }

  std::size_t size() const { return modes_.size(); }
  const Box<Dim>& domain() const { return domain_; }
  const BoxQuadrature<Dim>& quadrature() const { return quadrature_; }
  const std::vector<Mode<Dim>>& modes() const { return modes_; }

  /// Mode k (0-based; k = 0 is the positive ground state h_1).
  const Mode<Dim>& eigenpair(std::size_t k) const {
    if (k >= modes_.size()) {
      throw std::out_of_range("eigenpair: mode index " + std::to_string(k) + " beyond truncation " +
                              std::to_string(modes_.size()));
    }
    return modes_[k];
  }
  const Mode<Dim>& operator[](std::size_t k) const { return modes_[k]; }

  double lambda(std::size_t k) const { return eigenpair(k).lambda; }
  double eval(std::size_t k, const Point<Dim>& x) const { return eigenpair(k)(x); }

  /// All retained modes at x, via the Chebyshev recurrence for sin(k theta).
  void eval_all(const Point<Dim>& x, std::span<double> out) const {
    std::array<std::vector<double>, Dim> sines;
    for (std::size_t a = 0; a < Dim; ++a) {
      const int m = axis_max_[a];
      auto& s = sines[a];
      s.assign(static_cast<std::size_t>(m) + 1, 0.0);
      const double theta = std::numbers::pi * (x[a] - domain_.lower(a)) / domain_.width(a);
      if (m >= 1) s[1] = std::sin(theta);
      const double two_cos = 2.0 * std::cos(theta);
      for (int k = 2; k <= m; ++k) s[k] = two_cos * s[k - 1] - s[k - 2];
    }
    for (std::size_t k = 0; k < modes_.size(); ++k) {
      double v = modes_[k].amplitude;
      for (std::size_t a = 0; a < Dim; ++a) v *= sines[a][static_cast<std::size_t>(modes_[k].index[a])];
      out[k] = v;
    }
  }

  /// Σ coeffs_k h_k(x) (coefficients beyond the truncation are not allowed).
  double series(std::span<const double> coeffs, const Point<Dim>& x) const {
    if (coeffs.size() > modes_.size()) throw std::invalid_argument("series: too many coefficients");
    std::vector<double> values(modes_.size());
    eval_all(x, values);
    CompensatedSum s;
    for (std::size_t k = 0; k < coeffs.size(); ++k) s += coeffs[k] * values[k];
    return s.value();
  }

 private:
  Mode<Dim> make_mode(const std::array<int, Dim>& idx) const {
    Mode<Dim> m;
    m.index = idx;
    m.lower = domain_.lower();
    m.amplitude = std::sqrt(std::pow(2.0, static_cast<double>(Dim)) / domain_.volume());
    double lam = 0.0;
    double integral = m.amplitude;
    for (std::size_t a = 0; a < Dim; ++a) {
      const double w = std::numbers::pi * idx[a] / domain_.width(a);
      m.omega[a] = w;
      lam -= 0.5 * w * w;
      // ∫ sin(k pi s / L) ds over [0, L] = L (1 - (-1)^k) / (k pi)
      integral *= (idx[a] % 2 == 1) ? 2.0 / w : 0.0;
    }
    m.lambda = lam;
    m.integral = integral;
    return m;
  }

  Box<Dim> domain_;
  BoxQuadrature<Dim> quadrature_;
  std::vector<Mode<Dim>> modes_;
  std::array<int, Dim> axis_max_{};
};

template <std::size_t Dim>
using BasisPtr = std::shared_ptr<const SpectralBasis<Dim>>;

template <std::size_t Dim>
BasisPtr<Dim> make_basis(const Box<Dim>& domain, std::size_t truncation = SpectralBasis<Dim>::default_truncation) {
  return std::make_shared<const SpectralBasis<Dim>>(domain, truncation);
}

/// Absolutely continuous measure h dx with h = Σ c_k h_k, stored by its
/// spectral coefficients c_k = (h_k, h).
template <std::size_t Dim>
class DensityMeasure {
 public:
  DensityMeasure(BasisPtr<Dim> basis, std::vector<double> coeffs, double l1_mass)
      : basis_(std::move(basis)), coeffs_(std::move(coeffs)), l1_mass_(l1_mass) {
    if (!basis_) throw std::invalid_argument("DensityMeasure: null basis");
    if (coeffs_.size() > basis_->size()) throw std::invalid_argument("DensityMeasure: more coefficients than modes");
    coeffs_.resize(basis_->size(), 0.0);
    for (std::size_t k = 0; k < coeffs_.size(); ++k) {
      if (coeffs_[k] != 0.0) support_.push_back(k);
    }
  }

  /// Computes |mu|(D) by quadrature.
  static DensityMeasure from_coefficients(BasisPtr<Dim> basis, std::vector<double> coeffs) {
    DensityMeasure tmp(basis, std::move(coeffs), 0.0);
    tmp.l1_mass_ = basis->quadrature().integrate([&](const Point<Dim>& x) { return std::abs(tmp.density(x)); });
    return tmp;
  }

  /// Probability density proportional to h_1 + Σ_{k>=2} a_k h_k.
  static DensityMeasure perturbed_ground_state(BasisPtr<Dim> basis, std::span<const double> perturbation) {
    std::vector<double> c(basis->size(), 0.0);
    c[0] = 1.0;
    for (std::size_t k = 0; k < perturbation.size(); ++k) {
      if (k + 1 >= c.size()) throw std::invalid_argument("perturbed_ground_state: perturbation exceeds truncation");
      c[k + 1] = perturbation[k];
    }
    DensityMeasure raw(basis, c, 0.0);
    const double mass = raw.signed_mass();
    for (double& v : c) v /= mass;
    return from_coefficients(std::move(basis), std::move(c));
  }

  const SpectralBasis<Dim>& basis() const { return *basis_; }
  const BasisPtr<Dim>& basis_ptr() const { return basis_; }
  const std::vector<double>& coefficients() const { return coeffs_; }
  double coefficient(std::size_t k) const { return coeffs_.at(k); }
  const std::vector<std::size_t>& support() const { return support_; }
  double l1_mass() const { return l1_mass_; }
  bool is_zero() const { return support_.empty(); }

  double density(const Point<Dim>& x) const { return weighted_sum(x, [](std::size_t) { return 1.0; }); }

  /// (½Δh)(x) = Σ λ_k c_k h_k(x)
  double half_laplacian(const Point<Dim>& x) const {
    return weighted_sum(x, [this](std::size_t k) { return basis_->modes()[k].lambda; });
  }

  /// ∫ h dx = Σ c_k (h_k, 1)
  double signed_mass() const {
    CompensatedSum s;
    for (std::size_t k : support_) s += coeffs_[k] * basis_->modes()[k].integral;
    return s.value();
  }

  /// ||h dx||_{H(t)} over the retained modes.
  double h_norm(double t = 0.0) const {
    CompensatedSum s;
    for (std::size_t k : support_) {
      const double lam = basis_->modes()[k].lambda;
      s += lam * lam * std::exp(-2.0 * t * lam) * coeffs_[k] * coeffs_[k];
    }
    return std::sqrt(s.value());
  }

 private:
  template <class Weight>
  double weighted_sum(const Point<Dim>& x, Weight&& weight) const {
    CompensatedSum s;
    if (support_.size() * 4 < coeffs_.size()) {
      for (std::size_t k : support_) s += weight(k) * coeffs_[k] * basis_->modes()[k](x);
    } else {
      std::vector<double> values(coeffs_.size());
      basis_->eval_all(x, values);
      for (std::size_t k : support_) s += weight(k) * coeffs_[k] * values[k];
    }
    return s.value();
  }

  BasisPtr<Dim> basis_;
  std::vector<double> coeffs_;
  std::vector<std::size_t> support_;
  double l1_mass_;
};

/// Killed-Brownian-motion transition density p(t,x,y) = Σ e^{λ_k t} h_k(x) h_k(y).
template <std::size_t Dim>
double heat_kernel(const SpectralBasis<Dim>& basis, double t, const Point<Dim>& x, const Point<Dim>& y) {
  if (!(t > 0.0)) throw std::domain_error("heat_kernel: t must be positive");
  std::vector<double> hx(basis.size()), hy(basis.size());
  basis.eval_all(x, hx);
  basis.eval_all(y, hy);
  CompensatedSum s;
  for (std::size_t k = 0; k < basis.size(); ++k) s += std::exp(basis[k].lambda * t) * hx[k] * hy[k];
  return s.value();
}

/// Upper bound on |p(t,x,y) - truncated series| from the omitted modes.
template <std::size_t Dim>
double heat_kernel_tail_bound(const SpectralBasis<Dim>& basis, double t) {
  if (!(t > 0.0)) throw std::domain_error("heat_kernel_tail_bound: t must be positive");
  double all = 1.0;
  for (std::size_t a = 0; a < Dim; ++a) {
    const double w = std::numbers::pi / basis.domain().width(a);
    CompensatedSum axis;
    for (int k = 1;; ++k) {
      const double term = std::exp(-0.5 * w * w * k * k * t);
      axis += term;
      if (term < 1e-300 || k > 1000000) break;
    }
    all *= axis.value();
  }
  CompensatedSum kept;
  for (const auto& m : basis.modes()) kept += std::exp(m.lambda * t);
  const double amp = basis[0].amplitude;
  return amp * amp * std::max(0.0, all - kept.value());
}

/// P_x(tau > t) = Σ e^{λ_k t} h_k(x) (h_k, 1).
template <std::size_t Dim>
double survival_probability(const SpectralBasis<Dim>& basis, double t, const Point<Dim>& x) {
  if (t < 0.0) throw std::domain_error("survival_probability: t must be nonnegative");
  std::vector<double> hx(basis.size());
  basis.eval_all(x, hx);
  CompensatedSum s;
  for (std::size_t k = 0; k < basis.size(); ++k) s += std::exp(basis[k].lambda * t) * hx[k] * basis[k].integral;
  return s.value();
}

/// |mu|(D) == ∫h dx up to rounding, i.e. h >= 0 almost everywhere.
template <std::size_t Dim>
bool is_nonnegative(const DensityMeasure<Dim>& mu) {
  return std::abs(mu.l1_mass() - mu.signed_mass()) <= 1e-10 * mu.l1_mass();
}

template <std::size_t Dim>
struct HeatTransform {
  std::vector<double> u;  // coefficients of u(t, .)
  double z;
  DensityMeasure<Dim> v;
};

/// u(t,.) = ∫p(t,x,.)mu(dx), z = ∫u dy / |mu|(D), v = u / z.
template <std::size_t Dim>
HeatTransform<Dim> u_z_v(const DensityMeasure<Dim>& mu, double t) {
  if (t < 0.0) throw std::domain_error("u_z_v: t must be nonnegative");
  const auto& basis = mu.basis();
  if (mu.is_zero()) {
    std::vector<double> zeros(basis.size(), 0.0);
    return {zeros, 1.0, DensityMeasure<Dim>(mu.basis_ptr(), zeros, 0.0)};
  }
  std::vector<double> u(basis.size(), 0.0);
  CompensatedSum mass;
  for (std::size_t k : mu.support()) {
    u[k] = std::exp(basis[k].lambda * t) * mu.coefficient(k);
    mass += u[k] * basis[k].integral;
  }
  const double z = mass.value() / mu.l1_mass();
  std::vector<double> v(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) v[k] = u[k] / z;
  // the heat semigroup preserves positivity, so v of a nonnegative mu has |v|(D) = ∫v = |mu|(D)
  if (is_nonnegative(mu)) return {std::move(u), z, DensityMeasure<Dim>(mu.basis_ptr(), std::move(v), mu.l1_mass())};
  return {std::move(u), z, DensityMeasure<Dim>::from_coefficients(mu.basis_ptr(), std::move(v))};
}

/// Right derivative z'(mu, 0) = ∫½Δh dy / |mu|(D) = Σ λ_k c_k (h_k, 1) / |mu|(D).
template <std::size_t Dim>
double z_prime_zero(const DensityMeasure<Dim>& mu) {
  if (mu.is_zero()) return 0.0;
  const auto& basis = mu.basis();
  CompensatedSum s;
  for (std::size_t k : mu.support()) s += basis[k].lambda * mu.coefficient(k) * basis[k].integral;
  return s.value() / mu.l1_mass();
}

class FlowError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double backward_flow_guard = 1e12;

/// Limit flow U+(t, mu) for t >= -1: coefficients e^{λ_k t} c_k normalized to
/// unit mass. Backward times reject coefficient growth beyond 1e12.
template <std::size_t Dim>
DensityMeasure<Dim> flow(const DensityMeasure<Dim>& mu, double t) {
  if (t < -1.0) throw FlowError("flow: defined only for t >= -1");
  if (t == 0.0) return mu;
  const auto& basis = mu.basis();
  if (mu.is_zero()) return mu;
  std::vector<double> c(basis.size(), 0.0);
  CompensatedSum mass;
  for (std::size_t k : mu.support()) {
    c[k] = std::exp(basis[k].lambda * t) * mu.coefficient(k);
    if (!std::isfinite(c[k]) || std::abs(c[k]) > backward_flow_guard) {
      throw FlowError("flow: backward evolution blew up at mode " + std::to_string(k + 1));
    }
    mass += c[k] * basis[k].integral;
  }
  const double m = mass.value();
  if (!(m > 0.0)) throw FlowError("flow: evolved density has nonpositive mass");
  for (double& v : c) v /= m;
  if (t > 0.0 && is_nonnegative(mu)) return DensityMeasure<Dim>(mu.basis_ptr(), std::move(c), 1.0);
  return DensityMeasure<Dim>::from_coefficients(mu.basis_ptr(), std::move(c));
}

/// Shorthand for the normalized ground state h_1 / ||h_1||_{L1}, the fixed
/// point of the flow.
template <std::size_t Dim>
DensityMeasure<Dim> ground_state(const BasisPtr<Dim>& basis) {
  std::vector<double> c(basis->size(), 0.0);
  c[0] = 1.0 / (*basis)[0].integral;
  return DensityMeasure<Dim>(basis, std::move(c), 1.0);
}

}  // namespace flemvi
