#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace flemvi {

/// Multivariate polynomial Σ_t coef_t Π_i x_i^{p_ti}, with exact gradient,
/// Hessian, and box bounds for them.
class Polynomial {
 public:
  struct Term {
    double coef = 0.0;
    std::vector<int> powers;
  };

  Polynomial() = default;
  Polynomial(std::size_t arity, std::vector<Term> terms) : arity_(arity), terms_(std::move(terms)) {
    for (const auto& t : terms_) {
      if (t.powers.size() != arity_) throw std::invalid_argument("Polynomial: term arity mismatch");
      for (int p : t.powers) {
        if (p < 0) throw std::invalid_argument("Polynomial: negative power");
      }
    }
  }

  static Polynomial constant(double c) { return Polynomial(0, {{c, {}}}); }
  /// x_i
  static Polynomial coordinate(std::size_t arity, std::size_t i) {
    std::vector<int> p(arity, 0);
    p.at(i) = 1;
    return Polynomial(arity, {{1.0, p}});
  }

  std::size_t arity() const { return arity_; }
  const std::vector<Term>& terms() const { return terms_; }

  double operator()(std::span<const double> x) const {
    check(x);
    double s = 0.0;
    for (const auto& t : terms_) s += t.coef * monomial(t.powers, x, -1, -1);
    return s;
  }

  double partial(std::span<const double> x, std::size_t i) const {
    check(x);
    double s = 0.0;
    for (const auto& t : terms_) {
      const int p = t.powers[i];
      if (p == 0) continue;
      s += t.coef * p * monomial(t.powers, x, static_cast<int>(i), -1);
    }
    return s;
  }

  double second_partial(std::span<const double> x, std::size_t i, std::size_t j) const {
    check(x);
    double s = 0.0;
    for (const auto& t : terms_) {
      if (i == j) {
        const int p = t.powers[i];
        if (p < 2) continue;
        s += t.coef * p * (p - 1) * monomial(t.powers, x, static_cast<int>(i), static_cast<int>(i));
      } else {
        const int p = t.powers[i];
        const int q = t.powers[j];
        if (p == 0 || q == 0) continue;
        s += t.coef * p * q * monomial(t.powers, x, static_cast<int>(i), static_cast<int>(j));
      }
    }
    return s;
  }

  /// sup over |x_i| <= radius_i of |∂φ/∂x_i|, bounded by absolute coefficients.
  double gradient_bound(std::span<const double> radius, std::size_t i) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      const int p = t.powers[i];
      if (p == 0) continue;
      s += std::abs(t.coef) * p * monomial(t.powers, radius, static_cast<int>(i), -1);
    }
    return s;
  }

  double hessian_bound(std::span<const double> radius, std::size_t i, std::size_t j) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      const int p = t.powers[i];
      if (i == j) {
        if (p < 2) continue;
        s += std::abs(t.coef) * p * (p - 1) * monomial(t.powers, radius, static_cast<int>(i), static_cast<int>(i));
      } else {
        const int q = t.powers[j];
        if (p == 0 || q == 0) continue;
        s += std::abs(t.coef) * p * q * monomial(t.powers, radius, static_cast<int>(i), static_cast<int>(j));
      }
    }
    return s;
  }

 private:
  void check(std::span<const double> x) const {
    if (x.size() != arity_) throw std::invalid_argument("Polynomial: argument arity mismatch");
  }

  // Π x_k^{p_k}, with the powers of `d1` and `d2` each lowered by one.
  static double monomial(const std::vector<int>& powers, std::span<const double> x, int d1, int d2) {
    double v = 1.0;
    for (std::size_t k = 0; k < powers.size(); ++k) {
      int p = powers[k];
      if (static_cast<int>(k) == d1) --p;
      if (static_cast<int>(k) == d2) --p;
      for (int e = 0; e < p; ++e) v *= x[k];
    }
    return v;
  }

  std::size_t arity_ = 0;
  std::vector<Term> terms_;
};

/// f(mu) = φ((h_{m_1}, mu), ..., (h_{m_r}, mu)) with polynomial φ. Mode
/// indices are 0-based (0 is the ground state).
class CylinderFunction {
 public:
  CylinderFunction(std::vector<std::size_t> modes, Polynomial phi) : modes_(std::move(modes)), phi_(std::move(phi)) {
    if (modes_.size() != phi_.arity()) throw std::invalid_argument("CylinderFunction: arity does not match modes");
  }

  static CylinderFunction constant(double c) { return {{}, Polynomial::constant(c)}; }
  /// (h_k, .)
  static CylinderFunction linear(std::size_t mode) { return {{mode}, Polynomial::coordinate(1, 0)}; }
  /// (h_k, .)^2
  static CylinderFunction square(std::size_t mode) { return {{mode}, Polynomial(1, {{1.0, {2}}})}; }

  std::size_t arity() const { return modes_.size(); }
  const std::vector<std::size_t>& modes() const { return modes_; }
  const Polynomial& phi() const { return phi_; }

  double value(std::span<const double> pairings) const { return phi_(pairings); }
  double partial(std::span<const double> pairings, std::size_t i) const { return phi_.partial(pairings, i); }
  double second_partial(std::span<const double> pairings, std::size_t i, std::size_t j) const {
    return phi_.second_partial(pairings, i, j);
  }

 private:
  std::vector<std::size_t> modes_;
  Polynomial phi_;
};

}  // namespace flemvi
