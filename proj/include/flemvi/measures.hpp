#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "flemvi/cylinder.hpp"
#include "flemvi/geometry.hpp"
#include "flemvi/io.hpp"
#include "flemvi/numerics.hpp"
#include "flemvi/spectral.hpp"

namespace flemvi {

/// A point of D-bar with the boundary collapsed to one point. The location of
/// a boundary atom is kept for logging only; every function constant on the
/// boundary ignores it.
template <std::size_t Dim>
struct Atom {
  Point<Dim> x{};
  bool boundary = false;

  static Atom interior(const Point<Dim>& p) { return {p, false}; }
  static Atom on_boundary(const Point<Dim>& p = {}) { return {p, true}; }
};

/// (1/n) Σ δ_{z_j}
template <std::size_t Dim>
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(std::vector<Atom<Dim>> atoms) : atoms_(std::move(atoms)) {}

  static EmpiricalMeasure from_points(std::span<const Point<Dim>> points) {
    std::vector<Atom<Dim>> atoms;
    atoms.reserve(points.size());
    for (const auto& p : points) atoms.push_back(Atom<Dim>::interior(p));
    return EmpiricalMeasure(std::move(atoms));
  }

  std::size_t size() const { return atoms_.size(); }
  double weight() const { return 1.0 / static_cast<double>(atoms_.size()); }
  const std::vector<Atom<Dim>>& atoms() const { return atoms_; }
  const Atom<Dim>& operator[](std::size_t i) const { return atoms_[i]; }

  bool has_boundary_atom() const {
    return std::any_of(atoms_.begin(), atoms_.end(), [](const Atom<Dim>& a) { return a.boundary; });
  }

  /// ∫ f dmu for a function of atoms.
  template <class F>
  double integrate(F&& f) const {
    CompensatedSum s;
    for (const auto& a : atoms_) s += f(a);
    return s.value() / static_cast<double>(atoms_.size());
  }

 private:
  std::vector<Atom<Dim>> atoms_;
};

/// r(x,y) = |x-y| ∧ (dist(x,∂D) + dist(y,∂D)), r(∂D,∂D) = 0.
template <std::size_t Dim>
double metric_r(const Box<Dim>& domain, const Atom<Dim>& x, const Atom<Dim>& y) {
  const double dx = x.boundary ? 0.0 : domain.face_gap(x.x);
  const double dy = y.boundary ? 0.0 : domain.face_gap(y.x);
  if (x.boundary && y.boundary) return 0.0;
  if (x.boundary) return dy;
  if (y.boundary) return dx;
  return std::min(distance(x.x, y.x), dx + dy);
}

/// (h_k, mu); boundary atoms contribute 0.
template <std::size_t Dim>
double pair(const SpectralBasis<Dim>& basis, std::size_t k, const EmpiricalMeasure<Dim>& mu) {
  const auto& mode = basis.eigenpair(k);
  return mu.integrate([&](const Atom<Dim>& a) { return a.boundary ? 0.0 : mode(a.x); });
}

template <std::size_t Dim>
double pair(const SpectralBasis<Dim>&, std::size_t k, const DensityMeasure<Dim>& mu) {
  return mu.coefficient(k);
}

/// (h_k, (1/n) Σ δ_{p_j}) for interior points.
template <std::size_t Dim>
double pair_points(const Mode<Dim>& mode, std::span<const Point<Dim>> points) {
  CompensatedSum s;
  for (const auto& p : points) s += mode(p);
  return s.value() / static_cast<double>(points.size());
}

template <std::size_t Dim>
std::vector<double> pairings(const SpectralBasis<Dim>& basis, const CylinderFunction& f, const EmpiricalMeasure<Dim>& mu) {
  std::vector<double> x(f.arity());
  for (std::size_t i = 0; i < f.arity(); ++i) x[i] = pair(basis, f.modes()[i], mu);
  return x;
}

template <std::size_t Dim>
double evaluate(const SpectralBasis<Dim>& basis, const CylinderFunction& f, const EmpiricalMeasure<Dim>& mu) {
  return f.value(pairings(basis, f, mu));
}

/// Discrete generator on E_n:
///   ½𝔏f(mu) = Σ λ_i ∂_iφ (h_i,mu) + (1/2n) ΣΣ ∂_ijφ (∇h_i·∇h_j, mu).
/// Equals ½Δ of z -> φ((1/n)Σh(z_k)) on D^n.
template <std::size_t Dim>
double discrete_generator(const SpectralBasis<Dim>& basis, const CylinderFunction& f, const EmpiricalMeasure<Dim>& mu) {
  if (mu.size() == 0) throw std::invalid_argument("discrete_generator: empty measure");
  if (mu.has_boundary_atom()) throw std::domain_error("discrete_generator: boundary atom present");
  const std::size_t r = f.arity();
  const auto x = pairings(basis, f, mu);
  CompensatedSum drift;
  for (std::size_t i = 0; i < r; ++i) drift += basis.lambda(f.modes()[i]) * f.partial(x, i) * x[i];
  // (∇h_i · ∇h_j, mu)
  std::vector<double> grad_products(r * r, 0.0);
  for (const auto& atom : mu.atoms()) {
    std::vector<Point<Dim>> grads(r);
    for (std::size_t i = 0; i < r; ++i) grads[i] = basis[f.modes()[i]].gradient(atom.x);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < r; ++j) {
        double dot = 0.0;
        for (std::size_t a = 0; a < Dim; ++a) dot += grads[i][a] * grads[j][a];
        grad_products[i * r + j] += dot;
      }
    }
  }
  const double n = static_cast<double>(mu.size());
  CompensatedSum diffusion;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) diffusion += f.second_partial(x, i, j) * grad_products[i * r + j] / n;
  }
  return drift.value() + diffusion.value() / (2.0 * n);
}

/// Bounded, r-Lipschitz test functions used for the bounded-Lipschitz
/// distance surrogate. Every entry vanishes on the boundary.
template <std::size_t Dim>
class BLDictionary {
 public:
  struct Eigen {
    std::size_t mode;
    double scale;
  };
  struct Tent {
    Point<Dim> center;
    double radius;
  };
  using Entry = std::variant<Eigen, Tent>;

  explicit BLDictionary(BasisPtr<Dim> basis) : basis_(std::move(basis)) {}

  /// First `eigen_count` eigenfunctions scaled by 1/max(Lip, sup) plus
  /// `tent_count` tents min(dist(x,∂D), (ρ - |x-c|)^+).
  static BLDictionary standard(BasisPtr<Dim> basis, std::size_t eigen_count = 8, std::size_t tent_count = 8) {
    BLDictionary dict(basis);
    for (std::size_t k = 0; k < std::min(eigen_count, basis->size()); ++k) dict.add_eigen(k);
    const auto& box = basis->domain();
    if constexpr (Dim == 1) {
      const double rho = std::min(1.0, box.width(0) / 4.0);
      for (std::size_t i = 0; i < tent_count; ++i) {
        dict.add_tent({box.lower(0) + (i + 0.5) * box.width(0) / static_cast<double>(tent_count)}, rho);
      }
    } else {
      const std::size_t cols = (tent_count + 1) / 2;
      const double rho = std::min({1.0, box.width(0) / 4.0, box.width(1) / 4.0});
      for (std::size_t i = 0; i < tent_count; ++i) {
        const std::size_t c = i % cols, row = i / cols;
        dict.add_tent({box.lower(0) + (c + 0.5) * box.width(0) / static_cast<double>(cols),
                       box.lower(1) + (row + 0.5) * box.width(1) / 2.0},
                      rho);
      }
    }
    return dict;
  }

  void add_eigen(std::size_t k) {
    const auto& m = basis_->eigenpair(k);
    entries_.push_back(Eigen{k, 1.0 / std::max(m.lipschitz(), m.sup_norm())});
  }
  void add_tent(const Point<Dim>& center, double radius) {
    if (!(radius > 0.0 && radius <= 1.0)) throw std::invalid_argument("BLDictionary: tent radius must be in (0,1]");
    entries_.push_back(Tent{center, radius});
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  const SpectralBasis<Dim>& basis() const { return *basis_; }

  double evaluate(std::size_t e, const Atom<Dim>& a) const {
    if (a.boundary) return 0.0;
    return std::visit(
        [&](const auto& entry) -> double {
          using T = std::decay_t<decltype(entry)>;
          if constexpr (std::is_same_v<T, Eigen>) {
            return entry.scale * (*basis_)[entry.mode](a.x);
          } else {
            const double gap = basis_->domain().face_gap(a.x);
            return std::min(gap, std::max(0.0, entry.radius - distance(a.x, entry.center)));
          }
        },
        entries_[e]);
  }

  double integrate(std::size_t e, const EmpiricalMeasure<Dim>& mu) const {
    return mu.integrate([&](const Atom<Dim>& a) { return evaluate(e, a); });
  }

  double integrate(std::size_t e, const DensityMeasure<Dim>& mu) const {
    if (const auto* eig = std::get_if<Eigen>(&entries_[e])) return eig->scale * mu.coefficient(eig->mode);
    return basis_->quadrature().integrate(
        [&](const Point<Dim>& x) { return evaluate(e, Atom<Dim>::interior(x)) * mu.density(x); });
  }

 private:
  BasisPtr<Dim> basis_;
  std::vector<Entry> entries_;
};

/// max over the dictionary of |∫f dmu1 - ∫f dmu2|; a lower bound for the
/// bounded-Lipschitz distance.
template <std::size_t Dim, class M1, class M2>
double bl_distance(const M1& mu1, const M2& mu2, const BLDictionary<Dim>& dict) {
  if (dict.empty()) throw std::invalid_argument("bl_distance: empty dictionary");
  double d = 0.0;
  for (std::size_t e = 0; e < dict.size(); ++e) {
    d = std::max(d, std::abs(dict.integrate(e, mu1) - dict.integrate(e, mu2)));
  }
  return d;
}

/// One row per atom: x1[,x2],boundary
template <std::size_t Dim>
void write_empirical_csv(std::ostream& os, const EmpiricalMeasure<Dim>& mu) {
  os << "x1";
  if constexpr (Dim == 2) os << ",x2";
  os << ",boundary\n";
  for (const auto& a : mu.atoms()) {
    for (std::size_t k = 0; k < Dim; ++k) os << format_double(a.x[k]) << ',';
    os << (a.boundary ? 1 : 0) << '\n';
  }
}

template <std::size_t Dim>
EmpiricalMeasure<Dim> read_empirical_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("read_empirical_csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected = Dim == 1 ? "x1,boundary" : "x1,x2,boundary";
  if (line != expected) throw std::invalid_argument("read_empirical_csv: expected header '" + expected + "'");
  std::vector<Atom<Dim>> atoms;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    if (fields.size() != Dim + 1) throw std::invalid_argument("read_empirical_csv: wrong column count");
    Atom<Dim> a;
    for (std::size_t k = 0; k < Dim; ++k) a.x[k] = parse_double(fields[k]);
    const double flag = parse_double(fields[Dim]);
    if (flag != 0.0 && flag != 1.0) throw std::invalid_argument("read_empirical_csv: boundary flag must be 0 or 1");
    a.boundary = flag == 1.0;
    atoms.push_back(a);
  }
  if (atoms.empty()) throw std::invalid_argument("read_empirical_csv: no atoms");
  return EmpiricalMeasure<Dim>(std::move(atoms));
}

}  // namespace flemvi
