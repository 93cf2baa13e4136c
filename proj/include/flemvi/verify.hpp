#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flemvi/cylinder.hpp"
#include "flemvi/generator.hpp"
#include "flemvi/io.hpp"
#include "flemvi/kernels.hpp"
#include "flemvi/measures.hpp"
#include "flemvi/numerics.hpp"
#include "flemvi/parallel.hpp"
#include "flemvi/simulator.hpp"
#include "flemvi/spectral.hpp"

namespace flemvi {

enum class Status { Pass, Fail, Underpowered, Diagnostic };

inline std::string to_string(Status s) {
  switch (s) {
    case Status::Pass: return "PASS";
    case Status::Fail: return "FAIL";
    case Status::Underpowered: return "UNDERPOWERED";
    case Status::Diagnostic: return "DIAGNOSTIC";
  }
  return "?";
}

struct TestReport {
  std::string name;
  double lhs = 0.0;
  double std_error = 0.0;
  double rhs = 0.0;
  double tolerance = 0.0;
  std::string rule;  // "absolute" or "k_sigma"
  double k = 0.0;
  Status status = Status::Diagnostic;
  std::size_t samples = 0;
  double runtime_seconds = 0.0;
  std::map<std::string, double> diagnostics;
  std::string note;

  bool passed() const { return status == Status::Pass; }
  bool failed() const { return status == Status::Fail || status == Status::Underpowered; }
  double deviation() const { return std::abs(lhs - rhs); }
};

inline constexpr std::size_t min_replicas = 100;
inline constexpr double tolerance_floor = 1e-12;

/// k for two-sided 3σ-equivalent coverage shared over m comparisons.
inline double bonferroni_k(std::size_t m) {
  const double alpha = 2.0 * (1.0 - normal_cdf(3.0));
  return normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(std::max<std::size_t>(m, 1))));
}

inline TestReport absolute_report(std::string name, double lhs, double rhs, double tol) {
  TestReport r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.tolerance = tol;
  r.rule = "absolute";
  r.samples = 1;
  r.status = std::abs(lhs - rhs) <= tol ? Status::Pass : Status::Fail;
  return r;
}

/// |lhs - rhs| <= k σ + extra + 1e-12. Fewer than 100 replicas, or a
/// standard error above 10% of a nonzero target, is reported as underpowered.
inline TestReport statistical_report(std::string name, const Estimate& lhs, double rhs, double k, double extra = 0.0) {
  TestReport r;
  r.name = std::move(name);
  r.lhs = lhs.mean;
  r.std_error = lhs.std_error;
  r.rhs = rhs;
  r.k = k;
  r.rule = "k_sigma";
  r.samples = lhs.count;
  r.tolerance = k * lhs.std_error + extra + tolerance_floor;
  if (lhs.count < min_replicas || (std::abs(rhs) > tolerance_floor && lhs.std_error > 0.1 * std::abs(rhs))) {
    r.status = Status::Underpowered;
  } else {
    r.status = std::abs(lhs.mean - rhs) <= r.tolerance ? Status::Pass : Status::Fail;
  }
  return r;
}

inline TestReport diagnostic_report(std::string name, double value, std::string note = {}) {
  TestReport r;
  r.name = std::move(name);
  r.lhs = value;
  r.rule = "none";
  r.status = Status::Diagnostic;
  r.note = std::move(note);
  return r;
}

/// Deviations must not increase along the list, except for at most one
/// increase no larger than the combined one-sigma band of the pair.
inline bool trend_ok(std::span<const double> deviation, std::span<const double> sigma) {
  int inversions = 0;
  for (std::size_t j = 0; j + 1 < deviation.size(); ++j) {
    const double rise = deviation[j + 1] - deviation[j];
    if (rise <= 0.0) continue;
    if (++inversions > 1) return false;
    if (rise > std::hypot(sigma[j], sigma[j + 1])) return false;
  }
  return true;
}

inline TestReport trend_report(std::string name, std::span<const double> deviation, std::span<const double> sigma) {
  TestReport r;
  r.name = std::move(name);
  r.rule = "trend";
  r.samples = deviation.size();
  r.status = trend_ok(deviation, sigma) ? Status::Pass : Status::Fail;
  for (std::size_t j = 0; j < deviation.size(); ++j) {
    r.diagnostics["deviation_" + std::to_string(j)] = deviation[j];
    r.diagnostics["sigma_" + std::to_string(j)] = sigma[j];
  }
  r.lhs = deviation.empty() ? 0.0 : deviation.back();
  return r;
}

/// Intermediate points of an n-sweep only feed the trend check.
inline void demote(TestReport& r) {
  if (r.status == Status::Underpowered) r.note = "underpowered";
  r.status = Status::Diagnostic;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------
// Jump-off functionals

template <std::size_t Dim>
double limit_jump_off(const InitialLaw<Dim>& law, const CylinderFunction& f) {
  CompensatedSum s;
  for (const auto& comp : law.components()) {
    s += comp.weight * evaluate(f, comp.density.density()) * comp.density.total_rate();
  }
  return s.value();
}

/// (1/n) ∫∫ f̃(y) μ^n_x(dy) 𝐦̃_n(dx): x ~ 𝐦̃_n / |𝐦̃_n|, y the first-exit
/// configuration, each sample weighted by |𝐦̃_n| / n.
template <std::size_t Dim>
Estimate jump_off_estimate(const InitialLaw<Dim>& law, const CylinderFunction& f, std::size_t n, std::size_t M,
                           double dt, MonteCarloRun mc) {
  const auto& basis = law.basis();
  const auto values = run_replicas(M, mc.jobs, [&](std::size_t r) {
    Rng rng = make_stream(mc.seed, r);
    const auto x = sample_m_bold_n(law, n, rng);
    const auto exit = first_exit(basis.domain(), x.points, dt, rng);
    const auto y = with_boundary_atom<Dim>(exit.y, exit.index);
    return evaluate(basis, f, y) * x.total_mass / static_cast<double>(n);
  });
  return summarize(values);
}

template <std::size_t Dim>
TestReport prop45a(const InitialLaw<Dim>& law, const CylinderFunction& f, std::size_t n, std::size_t M, double dt,
                   MonteCarloRun mc, double k = 3.0) {
  Stopwatch clock;
  auto r = statistical_report("jump_off_limit", jump_off_estimate(law, f, n, M, dt, mc), limit_jump_off(law, f), k);
  r.runtime_seconds = clock.seconds();
  return r;
}

/// Functional f̃(x) = Π_i min(1, dist(x_i, ∂D)/eps), which vanishes whenever
/// an atom sits on the boundary. Its jump-off average is identically zero;
/// the reported diagnostic is its mean under ν_n, which decays with n.
template <std::size_t Dim>
std::vector<TestReport> cutoff_diagnostic(const InitialLaw<Dim>& law, std::span<const std::size_t> n_list,
                                          std::size_t M, double dt, MonteCarloRun mc, double eps = 0.05) {
  const auto& box = law.basis().domain();
  auto cutoff = [&](std::span<const Point<Dim>> x, std::size_t boundary) {
    double v = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) v *= i == boundary ? 0.0 : std::min(1.0, box.face_gap(x[i]) / eps);
    return v;
  };
  std::vector<TestReport> out;
  for (std::size_t n : n_list) {
    const auto values = run_replicas(M, mc.jobs, [&](std::size_t r) {
      Rng rng = make_stream(mc.seed, r);
      const auto x = sample_m_bold_n(law, n, rng);
      const auto exit = first_exit(box, x.points, dt, rng);
      return std::pair{cutoff(exit.y, exit.index) * x.total_mass / static_cast<double>(n),
                       cutoff(x.points, x.points.size())};
    });
    std::vector<double> lhs(M), prior(M);
    for (std::size_t i = 0; i < M; ++i) std::tie(lhs[i], prior[i]) = values[i];
    auto rep = diagnostic_report("cutoff_jump_off_n" + std::to_string(n), summarize(lhs).mean);
    const auto p = summarize(prior);
    rep.diagnostics["cutoff_mean"] = p.mean;
    rep.diagnostics["cutoff_std_error"] = p.std_error;
    rep.samples = M;
    out.push_back(std::move(rep));
  }
  return out;
}

struct CoupledSample {
  double jump = 0.0;   // mass (f̃(z) - f̃(y))
  double drift = 0.0;  // mass (f̃(y) - f̃(x))
  double bound_ratio = 0.0;
};

/// n |f̃(z) - f̃(y)| <= Σ_i sup|∂_iφ| Lip(h_{m_i}) r(y_i, z_i) for a jump
/// from the boundary point y_i to z_i.
template <std::size_t Dim>
double per_jump_bound(const SpectralBasis<Dim>& basis, const CylinderFunction& f, double r) {
  std::vector<double> radius(f.arity());
  for (std::size_t i = 0; i < f.arity(); ++i) radius[i] = basis.eigenpair(f.modes()[i]).sup_norm();
  double s = 0.0;
  for (std::size_t i = 0; i < f.arity(); ++i) {
    s += f.phi().gradient_bound(radius, i) * basis.eigenpair(f.modes()[i]).lipschitz();
  }
  return s * r;
}

struct CoupledReports {
  TestReport jump;
  TestReport drift;
  TestReport sum;
  TestReport per_jump;
};

/// Coupled estimators of the jump and drift parts: x ~ 𝐦̃_n/|𝐦̃_n|, y its
/// first-exit configuration, z = y with the exiting particle relocated.
template <std::size_t Dim>
CoupledReports prop45bc(const InitialLaw<Dim>& law, const CylinderFunction& f, std::size_t n, std::size_t M,
                        double dt, const RelocationKernel<Dim>& kernel, MonteCarloRun mc, double k = 3.0) {
  Stopwatch clock;
  const auto& basis = law.basis();
  const auto samples = run_replicas(M, mc.jobs, [&](std::size_t r) {
    Rng rng = make_stream(mc.seed, r);
    const auto x = sample_m_bold_n(law, n, rng);
    const auto exit = first_exit(basis.domain(), x.points, dt, rng);
    std::vector<Point<Dim>> others;
    others.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != exit.index) others.push_back(exit.y[j]);
    }
    auto z = exit.y;
    z[exit.index] = kernel.sample(others, rng);
    std::size_t differing = 0;
    for (std::size_t j = 0; j < n; ++j) differing += z[j] != exit.y[j] ? 1 : 0;
    if (differing != 1) throw std::logic_error("prop45bc: relocated configuration must differ in exactly one particle");
    const double fx = evaluate(basis, f, EmpiricalMeasure<Dim>::from_points(x.points));
    const double fy = evaluate(basis, f, with_boundary_atom<Dim>(exit.y, exit.index));
    const double fz = evaluate(basis, f, EmpiricalMeasure<Dim>::from_points(z));
    const double r_yz = metric_r(basis.domain(), Atom<Dim>::on_boundary(exit.y[exit.index]),
                                 Atom<Dim>::interior(z[exit.index]));
    const double bound = per_jump_bound(basis, f, r_yz);
    const double ratio = bound > 0.0 ? static_cast<double>(n) * std::abs(fz - fy) / bound : 0.0;
    return CoupledSample{x.total_mass * (fz - fy), x.total_mass * (fy - fx), ratio};
  });
  std::vector<double> jump(M), drift(M), sum(M);
  double worst = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    jump[i] = samples[i].jump;
    drift[i] = samples[i].drift;
    sum[i] = samples[i].jump + samples[i].drift;
    worst = std::max(worst, samples[i].bound_ratio);
  }
  CompensatedSum rhs_c, rhs_b;
  for (const auto& comp : law.components()) {
    rhs_c += comp.weight * operator_C(f, comp.density.density());
    rhs_b += comp.weight * operator_B(f, comp.density.density());
  }
  CoupledReports out{statistical_report("jump_part", summarize(jump), rhs_c.value(), k),
                     statistical_report("drift_part", summarize(drift), rhs_b.value(), k),
                     statistical_report("jump_plus_drift", summarize(sum), rhs_c.value() + rhs_b.value(), k),
                     absolute_report("per_jump_bound", worst, 0.0, 1.0 + 1e-9)};
  out.per_jump.rule = "max_ratio";
  out.per_jump.samples = M;
  out.per_jump.status = worst <= 1.0 + 1e-9 ? Status::Pass : Status::Fail;
  const double secs = clock.seconds();
  for (auto* rep : {&out.jump, &out.drift, &out.sum, &out.per_jump}) rep->runtime_seconds = secs;
  return out;
}

// ---------------------------------------------------------------------------
// Convergence to the limit flow

/// Σ_m w_m (h_k, U+(t, d_m dx)): each component follows its own flow.
template <std::size_t Dim>
std::vector<double> flow_target(const InitialLaw<Dim>& law, double t, std::size_t modes) {
  std::vector<double> target(modes, 0.0);
  for (const auto& comp : law.components()) {
    const auto v = flow(comp.density.density(), t);
    for (std::size_t k = 0; k < modes; ++k) target[k] += comp.weight * v.coefficient(k);
  }
  return target;
}

template <std::size_t Dim>
std::vector<TestReport> convergence_experiment(const InitialLaw<Dim>& law, double t, std::span<const std::size_t> n_list,
                                               std::size_t M, double dt, const RelocationKernel<Dim>& kernel,
                                               MonteCarloRun mc, std::size_t modes = 4, double k = 3.0) {
  if (n_list.empty()) throw std::invalid_argument("convergence_experiment: empty n_list");
  for (std::size_t j = 0; j + 1 < n_list.size(); ++j) {
    if (n_list[j] >= n_list[j + 1]) throw std::invalid_argument("convergence_experiment: n_list must increase");
  }
  const auto& basis = law.basis();
  modes = std::min(modes, basis.size());
  const auto target = flow_target(law, t, modes);
  std::vector<std::vector<double>> dev(modes), sig(modes);
  std::vector<TestReport> out;
  for (std::size_t idx = 0; idx < n_list.size(); ++idx) {
    const std::size_t n = n_list[idx];
    Stopwatch clock;
    const auto rows = simulate_replicas(law, n, t, M, dt, kernel, mc,
                                        [&](const std::vector<Point<Dim>>&, const ParticleConfig<Dim>& cfg) {
                                          std::vector<double> v(modes);
                                          for (std::size_t q = 0; q < modes; ++q) {
                                            v[q] = pair_points(basis[q], std::span<const Point<Dim>>(cfg.positions));
                                          }
                                          return v;
                                        });
    const double secs = clock.seconds();
    for (std::size_t q = 0; q < modes; ++q) {
      std::vector<double> col(M);
      for (std::size_t i = 0; i < M; ++i) col[i] = rows[i][q];
      const auto est = summarize(col);
      auto rep = statistical_report("mode" + std::to_string(q + 1) + "_n" + std::to_string(n), est, target[q], k);
      rep.runtime_seconds = secs;
      if (idx + 1 < n_list.size()) demote(rep);
      dev[q].push_back(rep.deviation());
      sig[q].push_back(est.std_error);
      out.push_back(std::move(rep));
    }
  }
  for (std::size_t q = 0; q < modes; ++q) out.push_back(trend_report("mode" + std::to_string(q + 1) + "_trend", dev[q], sig[q]));
  return out;
}

/// β ∫_0^{12/β} e^{-βt} g(U+(t, ·)) dt averaged over ν, by Gauss-Legendre.
template <std::size_t Dim>
double limit_resolvent(const InitialLaw<Dim>& law, const CylinderFunction& g, double beta) {
  const CompositeRule rule(0.0, 12.0 / beta, 16, 16);
  CompensatedSum s;
  for (const auto& comp : law.components()) {
    s += comp.weight * rule.integrate([&](double t) {
      return beta * std::exp(-beta * t) * evaluate(g, flow(comp.density.density(), t));
    });
  }
  return s.value();
}

template <std::size_t Dim>
double limit_semigroup(const InitialLaw<Dim>& law, const CylinderFunction& g, const CylinderFunction& psi, double t) {
  CompensatedSum s;
  for (const auto& comp : law.components()) {
    const auto& d = comp.density.density();
    s += comp.weight * evaluate(g, flow(d, t)) * evaluate(psi, d);
  }
  return s.value();
}

struct MoscoSettings {
  double t = 0.5;
  double beta = 2.0;
  std::size_t resolvent_stride = 10;
};

/// Semigroup ⟨T_{n,t}g, ψ⟩ and resolvent βG_{n,β}g against their limits over
/// n_list; the largest n must agree within kσ and deviations must shrink.
template <std::size_t Dim>
std::vector<TestReport> mosco_operational_check(const InitialLaw<Dim>& law, const CylinderFunction& g,
                                                const CylinderFunction& psi, MoscoSettings settings,
                                                std::span<const std::size_t> n_list, std::size_t M, double dt,
                                                const RelocationKernel<Dim>& kernel, MonteCarloRun mc,
                                                double k = 3.0) {
  if (n_list.empty()) throw std::invalid_argument("mosco_operational_check: empty n_list");
  const double semi_target = limit_semigroup(law, g, psi, settings.t);
  const double res_target = limit_resolvent(law, g, settings.beta);
  std::vector<double> semi_dev, semi_sig, res_dev, res_sig;
  std::vector<TestReport> out;
  for (std::size_t idx = 0; idx < n_list.size(); ++idx) {
    const std::size_t n = n_list[idx];
    const bool last = idx + 1 == n_list.size();
    Stopwatch clock;
    auto semi = statistical_report("semigroup_n" + std::to_string(n),
                                   semigroup_estimate(law, g, psi, settings.t, n, M, dt, kernel, mc), semi_target, k);
    semi.runtime_seconds = clock.seconds();
    Stopwatch clock2;
    const auto res = resolvent_estimate(law, g, settings.beta, n, M, dt, kernel, mc, settings.resolvent_stride);
    Estimate scaled = res.estimate;
    scaled.mean *= settings.beta;
    scaled.std_error *= settings.beta;
    auto rrep = statistical_report("resolvent_n" + std::to_string(n), scaled, res_target, k,
                                   settings.beta * res.tail_bound);
    rrep.runtime_seconds = clock2.seconds();
    rrep.diagnostics["horizon"] = res.horizon;
    rrep.diagnostics["tail_bound"] = res.tail_bound;
    if (!last) {
      demote(semi);
      demote(rrep);
    }
    semi_dev.push_back(semi.deviation());
    semi_sig.push_back(semi.std_error);
    res_dev.push_back(rrep.deviation());
    res_sig.push_back(rrep.std_error);
    out.push_back(std::move(semi));
    out.push_back(std::move(rrep));
  }
  out.push_back(trend_report("semigroup_trend", semi_dev, semi_sig));
  out.push_back(trend_report("resolvent_trend", res_dev, res_sig));
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic identities

/// s(θ) = sin θ e^{a cos θ} and s''(θ); a smooth density vanishing at 0 and π
/// that is not a finite eigenfunction sum.
struct AnalyticProfile {
  double a = 0.5;
  double value(double th) const { return std::sin(th) * std::exp(a * std::cos(th)); }
  double second(double th) const {
    const double s = std::sin(th), c = std::cos(th);
    return std::exp(a * c) * s * (-1.0 - 3.0 * a * c + a * a * s * s);
  }
};

/// sup over a grid of |Σ_k λ_k c_k h_k - ½Δg| for g(x) = Π_a s(θ_a), with c_k
/// obtained by quadrature projection.
template <std::size_t Dim>
double spectral_laplacian_error(const BasisPtr<Dim>& basis, AnalyticProfile prof = {}) {
  const auto& box = basis->domain();
  auto theta = [&](const Point<Dim>& x, std::size_t a) { return std::numbers::pi * (x[a] - box.lower(a)) / box.width(a); };
  auto g = [&](const Point<Dim>& x) {
    double v = 1.0;
    for (std::size_t a = 0; a < Dim; ++a) v *= prof.value(theta(x, a));
    return v;
  };
  auto half_lap = [&](const Point<Dim>& x) {
    double s = 0.0;
    for (std::size_t a = 0; a < Dim; ++a) {
      const double w = std::numbers::pi / box.width(a);
      double term = 0.5 * w * w * prof.second(theta(x, a));
      for (std::size_t b = 0; b < Dim; ++b) {
        if (b != a) term *= prof.value(theta(x, b));
      }
      s += term;
    }
    return s;
  };
  std::vector<double> c(basis->size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    c[k] = basis->quadrature().integrate([&](const Point<Dim>& x) { return (*basis)[k](x) * g(x); });
  }
  const auto mu = DensityMeasure<Dim>(basis, c, 0.0);
  double err = 0.0;
  for_each_grid_point(box, Dim == 1 ? 2000 : 100,
                      [&](const Point<Dim>& x) { err = std::max(err, std::abs(mu.half_laplacian(x) - half_lap(x))); });
  return err;
}

/// sup over a grid of |spectral ½Δd - fourth-order finite-difference ½Δd|.
template <std::size_t Dim>
double finite_difference_laplacian_error(const DensityMeasure<Dim>& d, double h = 1e-3) {
  double err = 0.0;
  const auto& box = d.basis().domain();
  for_each_grid_point(box, Dim == 1 ? 1000 : 60, [&](const Point<Dim>& x) {
    if (box.face_gap(x) <= 2.0 * h) return;
    double lap = 0.0;
    for (std::size_t a = 0; a < Dim; ++a) {
      auto at = [&](double off) {
        Point<Dim> y = x;
        y[a] += off;
        return d.density(y);
      };
      lap += (-at(2 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2 * h)) / (12.0 * h * h);
    }
    err = std::max(err, std::abs(d.half_laplacian(x) - 0.5 * lap));
  });
  return err;
}

/// Largest coefficient difference between U+(t, U+(s, mu)) and U+(s+t, mu).
template <std::size_t Dim>
double flow_property_residual(const DensityMeasure<Dim>& mu, double s, double t) {
  const auto a = flow(flow(mu, s), t);
  const auto b = flow(mu, s + t);
  double r = 0.0;
  for (std::size_t k = 0; k < a.coefficients().size(); ++k) r = std::max(r, std::abs(a.coefficient(k) - b.coefficient(k)));
  return r;
}

/// |Af(mu) - central difference of t -> f(U+(t, mu)) at 0| for step h.
template <std::size_t Dim>
double generator_fd_error(const CylinderFunction& f, const DensityMeasure<Dim>& mu, double h) {
  const double fd = (evaluate(f, flow(mu, h)) - evaluate(f, flow(mu, -h))) / (2.0 * h);
  return std::abs(generator_A(f, mu) - fd);
}

/// Brute-force ½ Σ_{j,a} ∂²/∂z_{j,a}² of z -> f(empirical(z)) with a
/// fourth-order stencil.
template <std::size_t Dim>
double brute_force_discrete_generator(const SpectralBasis<Dim>& basis, const CylinderFunction& f,
                                      std::vector<Point<Dim>> z, double h = 1e-3) {
  auto F = [&](const std::vector<Point<Dim>>& p) { return evaluate(basis, f, EmpiricalMeasure<Dim>::from_points(p)); };
  CompensatedSum s;
  for (std::size_t j = 0; j < z.size(); ++j) {
    for (std::size_t a = 0; a < Dim; ++a) {
      const double x0 = z[j][a];
      auto at = [&](double off) {
        z[j][a] = x0 + off;
        const double v = F(z);
        z[j][a] = x0;
        return v;
      };
      s += (-at(2 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2 * h)) / (12.0 * h * h);
    }
  }
  return 0.5 * s.value();
}

/// Densities used by the deterministic checks: the law's components plus a
/// fixed set of spectral perturbations of the ground state.
template <std::size_t Dim>
std::vector<AdmissibleDensity<Dim>> identity_densities(const BasisPtr<Dim>& basis, const InitialLaw<Dim>* law) {
  std::vector<AdmissibleDensity<Dim>> out;
  if (law) {
    for (const auto& comp : law->components()) out.push_back(comp.density);
  }
  const std::vector<std::vector<double>> perturbations = {
      {}, {0.05}, {0.1}, {0.0, 0.05}, {0.02, 0.02, 0.01}, {-0.05, 0.03}};
  for (const auto& p : perturbations) {
    if (p.size() + 1 < basis->size()) out.push_back(make_admissible<Dim>(basis, p));
  }
  return out;
}

inline std::vector<CylinderFunction> identity_functions() {
  return {CylinderFunction::linear(0), CylinderFunction::square(1),
          CylinderFunction({0, 1}, Polynomial(2, {{1.0, {1, 1}}, {0.5, {0, 2}}})),
          CylinderFunction({0, 2}, Polynomial(2, {{1.0, {3, 0}}, {-2.0, {1, 1}}}))};
}

struct IdentityReport {
  std::vector<TestReport> reports;
  std::vector<double> fd_ratios;  // error(h=1e-3) / error(h=1e-4) per generator pair
};

template <std::size_t Dim>
IdentityReport identity_details(const BasisPtr<Dim>& basis, const InitialLaw<Dim>* law, std::uint64_t seed = 1) {
  IdentityReport out;
  const auto densities = identity_densities(basis, law);

  out.reports.push_back(absolute_report("laplacian_series_vs_analytic",
                                        spectral_laplacian_error(basis, AnalyticProfile{Dim == 1 ? 0.5 : 0.1}), 0.0, 1e-6));
  double fd = 0.0;
  for (const auto& d : densities) fd = std::max(fd, finite_difference_laplacian_error(d.density()));
  out.reports.push_back(absolute_report("laplacian_series_vs_finite_difference", fd, 0.0, 1e-6));

  out.reports.push_back(
      absolute_report("ground_state_decay_rate", z_prime_zero(ground_state(basis)), (*basis)[0].lambda, 1e-12));

  double delta = 0.0;
  for (const auto& d : densities) {
    const auto [spectral, quad] = delta_Af_identity(d.density());
    delta = std::max(delta, std::abs(spectral - quad));
  }
  auto rep = absolute_report("laplacian_mass_identity", delta, 0.0, 1e-8);
  rep.samples = densities.size();
  out.reports.push_back(std::move(rep));

  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double resid = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto& d = densities[static_cast<std::size_t>(i) % densities.size()].density();
    const double s = u(rng), t = u(rng);
    resid = std::max(resid, flow_property_residual(d, s, t));
  }
  rep = absolute_report("flow_semigroup_property", resid, 0.0, 1e-10);
  rep.samples = 100;
  out.reports.push_back(std::move(rep));

  std::size_t pairs = 0, good = 0;
  double worst_ratio_gap = 0.0;
  const auto functions = identity_functions();
  const std::vector<std::vector<double>> moving = {
      {0.05, 0.02}, {0.1, 0.01}, {-0.05, 0.03}, {0.02, 0.02, 0.01}, {0.03, 0.04}};
  for (const auto& f : functions) {
    bool fits = true;
    for (std::size_t m : f.modes()) fits = fits && m < basis->size();
    if (!fits) continue;
    for (const auto& p : moving) {
      if (p.size() + 1 >= basis->size()) continue;
      const auto d = DensityMeasure<Dim>::perturbed_ground_state(basis, p);
      const double e3 = generator_fd_error(f, d, 1e-3);
      const double e4 = generator_fd_error(f, d, 1e-4);
      const double ratio = e4 > 0.0 ? e3 / e4 : std::numeric_limits<double>::infinity();
      out.fd_ratios.push_back(ratio);
      ++pairs;
      if (std::abs(ratio - 100.0) <= 20.0) ++good;
      worst_ratio_gap = std::max(worst_ratio_gap, std::abs(ratio - 100.0));
    }
  }
  rep = absolute_report("generator_second_order", worst_ratio_gap, 0.0, 20.0);
  rep.samples = pairs;
  rep.diagnostics["pairs_in_band"] = static_cast<double>(good);
  out.reports.push_back(std::move(rep));

  double rel = 0.0;
  Rng zr(seed + 1);
  for (std::size_t n = 1; n <= 3; ++n) {
    for (const auto& f : functions) {
      bool fits = true;
      for (std::size_t m : f.modes()) fits = fits && m < basis->size();
      if (!fits) continue;
      std::vector<Point<Dim>> z(n);
      for (auto& p : z) p = densities.front().sample(zr);
      const double exact = discrete_generator(*basis, f, EmpiricalMeasure<Dim>::from_points(z));
      const double brute = brute_force_discrete_generator(*basis, f, z);
      rel = std::max(rel, std::abs(exact - brute) / std::max(std::abs(exact), 1e-300));
    }
  }
  out.reports.push_back(absolute_report("discrete_generator_vs_finite_difference", rel, 0.0, 1e-6));
  return out;
}

template <std::size_t Dim>
std::vector<TestReport> identity_suite(const BasisPtr<Dim>& basis, const InitialLaw<Dim>* law = nullptr) {
  return identity_details(basis, law).reports;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const TestReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["lhs"] = r.lhs;
  j["std_error"] = r.std_error;
  j["rhs"] = r.rhs;
  j["tolerance"] = r.tolerance;
  j["rule"] = r.rule;
  j["k"] = r.k;
  j["status"] = to_string(r.status);
  j["samples"] = r.samples;
  j["diagnostics"] = r.diagnostics;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline nlohmann::json to_json(std::span<const TestReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr;
}

inline void write_table(std::ostream& os, std::span<const TestReport> reports) {
  std::size_t width = 4;
  for (const auto& r : reports) width = std::max(width, r.name.size());
  auto num = [](double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
  };
  os << std::left << std::setw(static_cast<int>(width)) << "test" << "  " << std::setw(13) << "status" << std::setw(14)
     << "lhs" << std::setw(12) << "stderr" << std::setw(14) << "rhs" << std::setw(12) << "tolerance" << "time[s]\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::setw(13) << to_string(r.status)
       << std::setw(14) << num(r.lhs) << std::setw(12) << num(r.std_error) << std::setw(14) << num(r.rhs)
       << std::setw(12) << num(r.tolerance) << num(r.runtime_seconds) << '\n';
  }
}

inline bool any_failed(std::span<const TestReport> reports) {
  return std::any_of(reports.begin(), reports.end(), [](const TestReport& r) { return r.failed(); });
}

}  // namespace flemvi
