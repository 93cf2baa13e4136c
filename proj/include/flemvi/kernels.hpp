#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flemvi/geometry.hpp"
#include "flemvi/io.hpp"
#include "flemvi/measures.hpp"
#include "flemvi/numerics.hpp"
#include "flemvi/random.hpp"
#include "flemvi/spectral.hpp"

namespace flemvi {

inline constexpr std::size_t admissibility_grid = 512;
inline constexpr double max_admissibility_constant = 10.0;
inline constexpr std::size_t max_rejection_proposals = 1000000;

class AdmissibilityError : public std::domain_error {
 public:
  AdmissibilityError(const std::string& what, std::vector<std::string> violations)
      : std::domain_error(what), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draw from h_1 / ||h_1||_{L1}: on each axis the density is ∝ sin, whose CDF
/// (1 - cos θ)/2 inverts in closed form.
template <std::size_t Dim>
Point<Dim> sample_ground_state(const Box<Dim>& box, Rng& rng) {
  Point<Dim> x;
  for (std::size_t a = 0; a < Dim; ++a) {
    const double theta = std::acos(1.0 - 2.0 * uniform_open(rng));
    x[a] = box.lower(a) + box.width(a) * theta / std::numbers::pi;
  }
  return x;
}

/// Rejection sampler for a density proportional to g with 0 <= g <= bound * h_1.
template <std::size_t Dim, class G>
Point<Dim> sample_dominated(const SpectralBasis<Dim>& basis, G&& g, double bound, Rng& rng) {
  const auto& h1 = basis[0];
  for (std::size_t i = 0; i < max_rejection_proposals; ++i) {
    const Point<Dim> x = sample_ground_state(basis.domain(), rng);
    if (!basis.domain().contains(x)) continue;
    if (uniform01(rng) * bound * h1(x) <= g(x)) return x;
  }
  throw SamplerError("rejection sampler: no acceptance after 1e6 proposals");
}

/// A member d of the admissible class: h_1/c <= d <= c h_1 and
/// (-λ_1) h_1/c <= -½Δd <= (-λ_1) c h_1, ∫d = 1.
template <std::size_t Dim>
class AdmissibleDensity {
 public:
  const DensityMeasure<Dim>& density() const { return density_; }
  const DensityMeasure<Dim>& neg_half_laplacian() const { return neg_half_laplacian_; }
  double c() const { return c_; }
  /// K = ∫(-½Δd) dx = -z'(d dx, 0)
  double total_rate() const { return total_rate_; }

  double operator()(const Point<Dim>& x) const { return density_.density(x); }
  double neg_half_laplacian(const Point<Dim>& x) const { return neg_half_laplacian_.density(x); }

  Point<Dim> sample(Rng& rng) const {
    return sample_dominated(density_.basis(), [this](const Point<Dim>& x) { return density_.density(x); }, c_, rng);
  }

  /// Draw from (-½Δd)/K.
  Point<Dim> sample_neg_half_laplacian(Rng& rng) const {
    const double bound = -density_.basis()[0].lambda * c_;
    return sample_dominated(
        density_.basis(), [this](const Point<Dim>& x) { return neg_half_laplacian_.density(x); }, bound, rng);
  }

 private:
  template <std::size_t D>
  friend AdmissibleDensity<D> validate_admissible(const DensityMeasure<D>&, double);

  AdmissibleDensity(DensityMeasure<Dim> d, DensityMeasure<Dim> lap, double c, double rate)
      : density_(std::move(d)), neg_half_laplacian_(std::move(lap)), c_(c), total_rate_(rate) {}

  DensityMeasure<Dim> density_;
  DensityMeasure<Dim> neg_half_laplacian_;
  double c_;
  double total_rate_;
};

template <std::size_t Dim>
DensityMeasure<Dim> neg_half_laplacian_of(const DensityMeasure<Dim>& d) {
  std::vector<double> c(d.basis().size(), 0.0);
  for (std::size_t k : d.support()) c[k] = -d.basis()[k].lambda * d.coefficient(k);
  return DensityMeasure<Dim>(d.basis_ptr(), std::move(c), 0.0);
}

/// Smallest c for which the two-sided bounds hold on the validation grid;
/// +inf if some ratio is nonpositive.
template <std::size_t Dim>
double smallest_admissibility_constant(const DensityMeasure<Dim>& d) {
  const auto lap = neg_half_laplacian_of(d);
  const auto& h1 = d.basis()[0];
  const double rate1 = -h1.lambda;
  double c = 1.0;
  bool ok = true;
  for_each_grid_point(d.basis().domain(), admissibility_grid, [&](const Point<Dim>& x) {
    const double g = h1(x);
    const double r1 = d.density(x) / g;
    const double r2 = lap.density(x) / (rate1 * g);
    if (!(r1 > 0.0) || !(r2 > 0.0)) {
      ok = false;
      return;
    }
    c = std::max({c, r1, 1.0 / r1, r2, 1.0 / r2});
  });
  return ok ? c : std::numeric_limits<double>::infinity();
}

template <std::size_t Dim>
AdmissibleDensity<Dim> validate_admissible(const DensityMeasure<Dim>& d, double c) {
  if (!(c > 1.0)) throw std::invalid_argument("validate_admissible: c must exceed 1");
  std::vector<std::string> violations;
  std::size_t count = 0;
  auto record = [&](const std::string& what, const Point<Dim>& x, double value, double lo, double hi) {
    ++count;
    if (violations.size() < 10) {
      std::ostringstream os;
      os << what << " at x=(" << x[0];
      if constexpr (Dim == 2) os << ", " << x[1];
      os << "): " << value << " not in [" << lo << ", " << hi << "]";
      violations.push_back(os.str());
    }
  };
  const double mass = d.signed_mass();
  if (std::abs(mass - 1.0) > 1e-8) {
    throw AdmissibilityError("validate_admissible: density does not integrate to 1 (mass " + format_double(mass) + ")",
                             {});
  }
  auto lap = neg_half_laplacian_of(d);
  const auto& h1 = d.basis()[0];
  const double rate1 = -h1.lambda;
  for_each_grid_point(d.basis().domain(), admissibility_grid, [&](const Point<Dim>& x) {
    const double g = h1(x);
    const double v = d.density(x);
    if (!(v >= g / c && v <= c * g)) record("d", x, v, g / c, c * g);
    const double l = lap.density(x);
    if (!(l >= rate1 * g / c && l <= rate1 * c * g)) record("-½Δd", x, l, rate1 * g / c, rate1 * c * g);
  });
  if (count > 0) {
    throw AdmissibilityError("validate_admissible: " + std::to_string(count) + " grid violations for c=" +
                                 format_double(c),
                             std::move(violations));
  }
  const double rate = -z_prime_zero(d);
  if (!(rate > 0.0)) throw AdmissibilityError("validate_admissible: -z'(d,0) must be positive", {});
  lap = DensityMeasure<Dim>(lap.basis_ptr(), lap.coefficients(), rate);
  return AdmissibleDensity<Dim>(d, std::move(lap), c, rate);
}

/// d ∝ h_1 + Σ a_k h_k (a = (a_2, a_3, ...)). Without an explicit c, uses the
/// smallest valid constant and rejects if it exceeds 10.
template <std::size_t Dim>
AdmissibleDensity<Dim> make_admissible(const BasisPtr<Dim>& basis, std::span<const double> perturbation,
                                       std::optional<double> c = std::nullopt) {
  auto d = DensityMeasure<Dim>::perturbed_ground_state(basis, perturbation);
  if (c) return validate_admissible(d, *c);
  const double c_min = smallest_admissibility_constant(d);
  if (!(c_min * (1.0 + 1e-9) <= max_admissibility_constant)) {
    throw AdmissibilityError("make_admissible: no admissibility constant c <= 10 (smallest " + format_double(c_min) + ")",
                             {});
  }
  return validate_admissible(d, std::max(c_min * (1.0 + 1e-9), 1.0 + 1e-9));
}

/// Finite mixture ν = Σ w_m δ_{d_m} over admissible densities.
template <std::size_t Dim>
class InitialLaw {
 public:
  struct Component {
    double weight;
    AdmissibleDensity<Dim> density;
  };

  explicit InitialLaw(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("InitialLaw: no components");
    double total = 0.0;
    for (const auto& comp : components_) {
      if (!(comp.weight >= 0.0) || !std::isfinite(comp.weight)) throw std::invalid_argument("InitialLaw: negative weight");
      total += comp.weight;
    }
    if (!(total > 0.0)) throw std::invalid_argument("InitialLaw: weights sum to zero");
    for (auto& comp : components_) comp.weight /= total;
    for (std::size_t m = 1; m < components_.size(); ++m) {
      if (components_[m].density.density().basis_ptr() != components_[0].density.density().basis_ptr()) {
        throw std::invalid_argument("InitialLaw: components must share one basis");
      }
    }
  }

  static InitialLaw single(AdmissibleDensity<Dim> d) { return InitialLaw({{1.0, std::move(d)}}); }

  std::size_t size() const { return components_.size(); }
  const Component& operator[](std::size_t m) const { return components_[m]; }
  const std::vector<Component>& components() const { return components_; }
  const SpectralBasis<Dim>& basis() const { return components_[0].density.density().basis(); }
  const BasisPtr<Dim>& basis_ptr() const { return components_[0].density.density().basis_ptr(); }

  /// Index of the only component with positive weight, if there is one.
  std::optional<std::size_t> degenerate_component() const {
    std::optional<std::size_t> found;
    for (std::size_t m = 0; m < components_.size(); ++m) {
      if (components_[m].weight > 0.0) {
        if (found) return std::nullopt;
        found = m;
      }
    }
    return found;
  }

  std::size_t sample_component(Rng& rng) const {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t m = 0; m < components_.size(); ++m) {
      acc += components_[m].weight;
      if (u < acc && components_[m].weight > 0.0) return m;
    }
    for (std::size_t m = components_.size(); m-- > 0;) {
      if (components_[m].weight > 0.0) return m;
    }
    return 0;
  }

  /// Σ_m w_m K_m
  double mean_rate() const {
    double s = 0.0;
    for (const auto& comp : components_) s += comp.weight * comp.density.total_rate();
    return s;
  }

 private:
  std::vector<Component> components_;
};

template <std::size_t Dim>
struct ConfigurationSample {
  std::size_t component = 0;
  std::vector<Point<Dim>> points;
};

/// z ~ ν̃_n: one component drawn from the weights, then n i.i.d. draws from it.
template <std::size_t Dim>
ConfigurationSample<Dim> sample_configuration(const InitialLaw<Dim>& law, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_nu_n: n must be at least 1");
  ConfigurationSample<Dim> s;
  s.component = law.sample_component(rng);
  s.points.reserve(n);
  const auto& d = law[s.component].density;
  for (std::size_t i = 0; i < n; ++i) s.points.push_back(d.sample(rng));
  return s;
}

template <std::size_t Dim>
EmpiricalMeasure<Dim> sample_nu_n(const InitialLaw<Dim>& law, std::size_t n, Rng& rng) {
  const auto s = sample_configuration(law, n, rng);
  return EmpiricalMeasure<Dim>::from_points(s.points);
}

/// The relocation density of the mixture construction for a particle whose
/// n-1 companions sit at `others`:
///   η(x) ∝ Σ_m w_m ℒ_m d_m(x) Π_{j≠i} d_m(z_j),
///   ℒ_m = (1/n) Σ_{j≠i} (-½Δd_m)(z_j) / d_m(z_j),
/// normalized by Σ_m w_m K_m Π_{j≠i} d_m(z_j). After renormalization η is the
/// mixture Σ_m π_m d_m with posterior weights π_m ∝ w_m ℒ_m Π_{j≠i} d_m(z_j).
template <std::size_t Dim>
class MixtureRelocation {
 public:
  MixtureRelocation(const InitialLaw<Dim>& law, std::span<const Point<Dim>> others) : law_(&law) {
    const double n = static_cast<double>(others.size() + 1);
    const std::size_t M = law.size();
    std::vector<double> log_num(M), log_den(M);
    for (std::size_t m = 0; m < M; ++m) {
      const auto& comp = law[m];
      if (comp.weight <= 0.0) {
        log_num[m] = log_den[m] = -std::numeric_limits<double>::infinity();
        continue;
      }
      CompensatedSum log_prod, ratio;
      for (const auto& z : others) {
        const double dz = comp.density(z);
        log_prod += std::log(dz);
        ratio += comp.density.neg_half_laplacian(z) / dz;
      }
      const double ell = ratio.value() / n;
      log_num[m] = std::log(comp.weight) + std::log(ell) + log_prod.value();
      log_den[m] = std::log(comp.weight) + std::log(comp.density.total_rate()) + log_prod.value();
    }
    const double lse_num = log_sum_exp(log_num);
    posterior_.resize(M);
    for (std::size_t m = 0; m < M; ++m) posterior_[m] = std::exp(log_num[m] - lse_num);
    prenormalized_mass_ = std::exp(lse_num - log_sum_exp(log_den));
  }

  const std::vector<double>& posterior() const { return posterior_; }
  /// ∫η dx before renormalization; tends to 1 as n grows.
  double prenormalized_mass() const { return prenormalized_mass_; }

  double operator()(const Point<Dim>& x) const {
    CompensatedSum s;
    for (std::size_t m = 0; m < posterior_.size(); ++m) {
      if (posterior_[m] > 0.0) s += posterior_[m] * (*law_)[m].density(x);
    }
    return s.value();
  }

  DensityMeasure<Dim> as_density() const {
    std::vector<double> c(law_->basis().size(), 0.0);
    for (std::size_t m = 0; m < posterior_.size(); ++m) {
      const auto& coeffs = (*law_)[m].density.density().coefficients();
      for (std::size_t k = 0; k < c.size(); ++k) c[k] += posterior_[m] * coeffs[k];
    }
    return DensityMeasure<Dim>(law_->basis_ptr(), std::move(c), 1.0);
  }

  Point<Dim> sample(Rng& rng) const {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = posterior_.size() - 1;
    for (std::size_t m = 0; m < posterior_.size(); ++m) {
      acc += posterior_[m];
      if (u < acc && posterior_[m] > 0.0) {
        pick = m;
        break;
      }
    }
    while (posterior_[pick] <= 0.0 && pick > 0) --pick;
    return (*law_)[pick].density.sample(rng);
  }

 private:
  const InitialLaw<Dim>* law_;
  std::vector<double> posterior_;
  double prenormalized_mass_ = 1.0;
};

/// η(x) for the mixture construction (renormalized).
template <std::size_t Dim>
double eta_lll(const InitialLaw<Dim>& law, std::span<const Point<Dim>> others, const Point<Dim>& x) {
  return MixtureRelocation<Dim>(law, others)(x);
}

enum class KernelKind { UniformSurvivor, FixedH1, PaperLLL };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::UniformSurvivor: return "uniform_survivor";
    case KernelKind::FixedH1: return "fixed_h1";
    case KernelKind::PaperLLL: return "paper_lll";
  }
  return "?";
}

inline KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "uniform_survivor") return KernelKind::UniformSurvivor;
  if (s == "fixed_h1") return KernelKind::FixedH1;
  if (s == "paper_lll") return KernelKind::PaperLLL;
  throw std::invalid_argument("unknown kernel kind '" + s + "'");
}

/// Law of the relocation target of a particle that hits the boundary, given
/// the positions of the other n-1 particles.
template <std::size_t Dim>
class RelocationKernel {
 public:
  static RelocationKernel uniform_survivor() { return RelocationKernel(KernelKind::UniformSurvivor, nullptr); }
  static RelocationKernel fixed_h1(BasisPtr<Dim> basis) {
    RelocationKernel k(KernelKind::FixedH1, nullptr);
    k.basis_ = std::move(basis);
    return k;
  }
  static RelocationKernel paper_lll(std::shared_ptr<const InitialLaw<Dim>> law) {
    if (!law) throw std::invalid_argument("paper_lll: null law");
    RelocationKernel k(KernelKind::PaperLLL, law);
    k.basis_ = law->basis_ptr();
    return k;
  }

  KernelKind kind() const { return kind_; }
  const InitialLaw<Dim>* law() const { return law_.get(); }

  /// Bound constant c_1 of c_1^{-1} h_1 <= η <= c_1 h_1 (0 when η has no density).
  double bound_constant() const {
    switch (kind_) {
      case KernelKind::UniformSurvivor: return 0.0;
      case KernelKind::FixedH1: {
        const double l1 = (*basis_)[0].integral;
        return std::max(l1, 1.0 / l1);
      }
      case KernelKind::PaperLLL: {
        double c = 1.0;
        for (const auto& comp : law_->components()) c = std::max(c, comp.density.c());
        return c * c * c;
      }
    }
    return 0.0;
  }

  Point<Dim> sample(std::span<const Point<Dim>> others, Rng& rng) const {
    switch (kind_) {
      case KernelKind::UniformSurvivor: {
        if (others.empty()) throw std::domain_error("uniform_survivor: no surviving particle to copy (n = 1)");
        const auto j = std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng);
        return others[j];
      }
      case KernelKind::FixedH1:
        return sample_ground_state(basis_->domain(), rng);
      case KernelKind::PaperLLL: {
        if (const auto m = law_->degenerate_component()) return (*law_)[*m].density.sample(rng);
        return MixtureRelocation<Dim>(*law_, others).sample(rng);
      }
    }
    throw std::logic_error("unreachable");
  }

  /// η dx as a density measure (not defined for UniformSurvivor).
  DensityMeasure<Dim> density(std::span<const Point<Dim>> others) const {
    switch (kind_) {
      case KernelKind::UniformSurvivor:
        throw std::domain_error("uniform_survivor: relocation law has no density");
      case KernelKind::FixedH1:
        return ground_state(basis_);
      case KernelKind::PaperLLL:
        return MixtureRelocation<Dim>(*law_, others).as_density();
    }
    throw std::logic_error("unreachable");
  }

 private:
  RelocationKernel(KernelKind kind, std::shared_ptr<const InitialLaw<Dim>> law) : kind_(kind), law_(std::move(law)) {}

  KernelKind kind_;
  std::shared_ptr<const InitialLaw<Dim>> law_;
  BasisPtr<Dim> basis_;
};

template <std::size_t Dim>
Point<Dim> sample_relocation(const RelocationKernel<Dim>& kernel, std::span<const Point<Dim>> others, Rng& rng) {
  return kernel.sample(others, rng);
}

template <std::size_t Dim>
struct WeightedConfiguration {
  std::vector<Point<Dim>> points;
  double total_mass = 0.0;
  std::size_t component = 0;
  std::size_t special = 0;  // the coordinate drawn from -½Δd_m / K_m
};

/// Draw x ~ 𝐦̃_n / |𝐦̃_n| where 𝐦̃_n = -½Δm̃_n dx and
///   -½Δm̃_n(z) = Σ_m w_m Σ_i (-½Δd_m)(z_i) Π_{j≠i} d_m(z_j),
/// with total mass n Σ_m w_m K_m.
template <std::size_t Dim>
WeightedConfiguration<Dim> sample_m_bold_n(const InitialLaw<Dim>& law, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_m_bold_n: n must be at least 1");
  WeightedConfiguration<Dim> s;
  const double mean_rate = law.mean_rate();
  s.total_mass = static_cast<double>(n) * mean_rate;
  const double u = uniform01(rng) * mean_rate;
  double acc = 0.0;
  s.component = law.size() - 1;
  for (std::size_t m = 0; m < law.size(); ++m) {
    acc += law[m].weight * law[m].density.total_rate();
    if (u < acc && law[m].weight > 0.0) {
      s.component = m;
      break;
    }
  }
  while (law[s.component].weight <= 0.0 && s.component > 0) --s.component;
  s.special = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  const auto& d = law[s.component].density;
  s.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.points[i] = (i == s.special) ? d.sample_neg_half_laplacian(rng) : d.sample(rng);
  return s;
}

}  // namespace flemvi
