#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "flemvi/cylinder.hpp"
#include "flemvi/geometry.hpp"
#include "flemvi/kernels.hpp"
#include "flemvi/measures.hpp"
#include "flemvi/numerics.hpp"
#include "flemvi/parallel.hpp"
#include "flemvi/random.hpp"

namespace flemvi {

inline constexpr double default_time_step = 1e-4;

template <std::size_t Dim>
struct JumpEvent {
  double time = 0.0;
  std::size_t particle = 0;
  Point<Dim> jump_off{};
  Point<Dim> target{};
  double distance = 0.0;
};

template <std::size_t Dim>
struct ParticleConfig {
  Box<Dim> domain;
  std::vector<Point<Dim>> positions;
  double time = 0.0;
  std::vector<JumpEvent<Dim>> jump_log;
  std::size_t jump_count = 0;
  bool log_jumps = true;
  Rng rng;
  std::normal_distribution<double> normal{0.0, 1.0};

  ParticleConfig(const Box<Dim>& d, std::vector<Point<Dim>> x, Rng r)
      : domain(d), positions(std::move(x)), rng(std::move(r)) {
    for (const auto& p : positions) {
      if (!domain.contains(p)) throw std::domain_error("ParticleConfig: initial position outside the domain");
    }
  }

  std::size_t size() const { return positions.size(); }
  EmpiricalMeasure<Dim> empirical() const { return EmpiricalMeasure<Dim>::from_points(positions); }
};

template <std::size_t Dim>
struct ExitCheck {
  bool hit = false;
  double fraction = 1.0;
  Point<Dim> point{};
};

inline double bridge_crossing_probability(double a, double b, double dt) { return std::exp(-2.0 * a * b / dt); }

/// Did the path from `from` to `to` over a step of length dt touch the
/// boundary? Exits of the straight segment are hits; otherwise each face is
/// tested with the Brownian-bridge crossing probability.
template <std::size_t Dim>
ExitCheck<Dim> detect_exit(const Box<Dim>& box, const Point<Dim>& from, const Point<Dim>& to, double dt, Rng& rng) {
  if (!box.contains(to)) {
    const auto seg = box.segment_exit(from, to);
    return {true, seg.fraction, seg.point};
  }
  const double cutoff = 20.0 * dt;
  for (std::size_t a = 0; a < Dim; ++a) {
    for (int side = 0; side < 2; ++side) {
      const double face = side == 0 ? box.lower(a) : box.upper(a);
      const double ga = std::abs(from[a] - face);
      const double gb = std::abs(to[a] - face);
      if (ga * gb > cutoff) continue;
      if (uniform01(rng) < bridge_crossing_probability(ga, gb, dt)) {
        ExitCheck<Dim> c;
        c.hit = true;
        c.fraction = ga / (ga + gb);
        for (std::size_t b = 0; b < Dim; ++b) {
          c.point[b] = std::clamp(from[b] + c.fraction * (to[b] - from[b]), box.lower(b), box.upper(b));
        }
        c.point[a] = face;
        return c;
      }
    }
  }
  return {};
}

namespace detail {

template <std::size_t Dim>
std::vector<Point<Dim>> others_of(const std::vector<Point<Dim>>& x, std::size_t i) {
  std::vector<Point<Dim>> out;
  out.reserve(x.size() - 1);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j != i) out.push_back(x[j]);
  }
  return out;
}

template <std::size_t Dim>
bool kernel_uses_others(const RelocationKernel<Dim>& kernel) {
  switch (kernel.kind()) {
    case KernelKind::UniformSurvivor: return true;
    case KernelKind::FixedH1: return false;
    case KernelKind::PaperLLL: return !kernel.law()->degenerate_component().has_value();
  }
  return true;
}

}  // namespace detail

/// Advance every particle by one Brownian step of length dt. Particles that
/// touch the boundary are relocated afterwards, in ascending index order,
/// using the current positions of the other particles.
template <std::size_t Dim>
void step(ParticleConfig<Dim>& cfg, double dt, const RelocationKernel<Dim>& kernel) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  const double sd = std::sqrt(dt);
  struct Hit {
    std::size_t index;
    double fraction;
    Point<Dim> point;
  };
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < cfg.positions.size(); ++i) {
    Point<Dim> next = cfg.positions[i];
    for (std::size_t a = 0; a < Dim; ++a) next[a] += sd * cfg.normal(cfg.rng);
    const auto check = detect_exit(cfg.domain, cfg.positions[i], next, dt, cfg.rng);
    if (check.hit) {
      hits.push_back({i, check.fraction, check.point});
    } else {
      cfg.positions[i] = next;
    }
  }
  const bool uses_others = detail::kernel_uses_others(kernel);
  const std::size_t first_new = cfg.jump_log.size();
  for (const auto& h : hits) {
    Point<Dim> z;
    if (uses_others) {
      const auto others = detail::others_of(cfg.positions, h.index);
      z = kernel.sample(others, cfg.rng);
    } else {
      z = kernel.sample({}, cfg.rng);
    }
    cfg.positions[h.index] = z;
    ++cfg.jump_count;
    if (cfg.log_jumps) cfg.jump_log.push_back({cfg.time + h.fraction * dt, h.index, h.point, z, distance(h.point, z)});
  }
  if (cfg.log_jumps && hits.size() > 1) {
    std::stable_sort(cfg.jump_log.begin() + static_cast<std::ptrdiff_t>(first_new), cfg.jump_log.end(),
                     [](const JumpEvent<Dim>& a, const JumpEvent<Dim>& b) { return a.time < b.time; });
  }
  cfg.time += dt;
}

/// Number of steps for a horizon, with dt shrunk so the grid ends exactly at t.
inline std::size_t step_count(double t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (t < 0.0) throw std::invalid_argument("horizon must be nonnegative");
  if (t == 0.0) return 0;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(t / dt - 1e-9)));
}

template <std::size_t Dim>
void advance(ParticleConfig<Dim>& cfg, double t, double dt, const RelocationKernel<Dim>& kernel) {
  const std::size_t steps = step_count(t, dt);
  if (steps == 0) return;
  const double h = t / static_cast<double>(steps);
  const double t0 = cfg.time;
  for (std::size_t s = 0; s < steps; ++s) {
    step(cfg, h, kernel);
    cfg.time = t0 + static_cast<double>(s + 1) * h;
  }
}

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  std::vector<std::size_t> jump_counts;
};

/// Simulate to horizon T, evaluating the observables on the empirical measure
/// every `record_every` steps (and at T).
template <std::size_t Dim>
Trajectory run(ParticleConfig<Dim>& cfg, double T, double dt, const RelocationKernel<Dim>& kernel,
               const SpectralBasis<Dim>& basis, std::span<const CylinderFunction> observables,
               std::size_t record_every = 100) {
  if (!(T > 0.0)) throw std::invalid_argument("run: horizon must be positive");
  if (record_every == 0) throw std::invalid_argument("run: record_every must be positive");
  const std::size_t steps = step_count(T, dt);
  const double h = T / static_cast<double>(steps);
  const double t0 = cfg.time;
  Trajectory traj;
  auto record = [&] {
    const auto emp = cfg.empirical();
    std::vector<double> row;
    row.reserve(observables.size());
    for (const auto& f : observables) row.push_back(evaluate(basis, f, emp));
    traj.times.push_back(cfg.time);
    traj.values.push_back(std::move(row));
    traj.jump_counts.push_back(cfg.jump_count);
  };
  record();
  for (std::size_t s = 0; s < steps; ++s) {
    step(cfg, h, kernel);
    cfg.time = t0 + static_cast<double>(s + 1) * h;
    if ((s + 1) % record_every == 0 || s + 1 == steps) record();
  }
  return traj;
}

template <std::size_t Dim>
struct FirstExit {
  std::vector<Point<Dim>> y;  // y[index] lies on the boundary
  double tau = 0.0;
  std::size_t index = 0;
};

/// Run the particles without relocation until the first one touches the
/// boundary. The others are reported at their positions at the end of the
/// step in which the exit happened.
template <std::size_t Dim>
FirstExit<Dim> first_exit(const Box<Dim>& box, std::vector<Point<Dim>> x, double dt, Rng& rng,
                          std::normal_distribution<double>& normal) {
  if (!(dt > 0.0)) throw std::invalid_argument("first_exit: dt must be positive");
  if (x.empty()) throw std::invalid_argument("first_exit: empty configuration");
  for (const auto& p : x) {
    if (!box.contains(p)) throw std::domain_error("first_exit: start outside the domain");
  }
  const double sd = std::sqrt(dt);
  std::vector<Point<Dim>> next(x.size());
  for (std::uint64_t k = 0;; ++k) {
    bool any = false;
    double best = 2.0;
    std::size_t who = 0;
    Point<Dim> where{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      Point<Dim> p = x[i];
      for (std::size_t a = 0; a < Dim; ++a) p[a] += sd * normal(rng);
      const auto check = detect_exit(box, x[i], p, dt, rng);
      if (check.hit) {
        if (!any || check.fraction < best) {
          if (any) next[who] = x[who];
          best = check.fraction;
          who = i;
          where = check.point;
        } else {
          p = x[i];
        }
        any = true;
      }
      next[i] = p;
    }
    if (any) {
      next[who] = where;
      return {std::move(next), (static_cast<double>(k) + best) * dt, who};
    }
    std::swap(x, next);
  }
}

template <std::size_t Dim>
FirstExit<Dim> first_exit(const Box<Dim>& box, std::vector<Point<Dim>> x, double dt, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return first_exit(box, std::move(x), dt, rng, normal);
}

/// Empirical measure with atom `boundary` placed on ∂D.
template <std::size_t Dim>
EmpiricalMeasure<Dim> with_boundary_atom(std::span<const Point<Dim>> x, std::size_t boundary) {
  std::vector<Atom<Dim>> atoms;
  atoms.reserve(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    atoms.push_back(j == boundary ? Atom<Dim>::on_boundary(x[j]) : Atom<Dim>::interior(x[j]));
  }
  return EmpiricalMeasure<Dim>(std::move(atoms));
}

/// sup |f| over measures with |(h_k, mu)| <= ||h_k||_∞.
template <std::size_t Dim>
double sup_bound(const SpectralBasis<Dim>& basis, const CylinderFunction& f) {
  double s = 0.0;
  for (const auto& term : f.phi().terms()) {
    double v = std::abs(term.coef);
    for (std::size_t i = 0; i < term.powers.size(); ++i) {
      v *= std::pow(basis.eigenpair(f.modes()[i]).sup_norm(), term.powers[i]);
    }
    s += v;
  }
  return s;
}

struct MonteCarloRun {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Per replica r: draw X_0 ~ ν_n from stream (seed, r), simulate to t and
/// return fn(X_0, X_t).
template <std::size_t Dim, class Fn>
auto simulate_replicas(const InitialLaw<Dim>& law, std::size_t n, double t, std::size_t M, double dt,
                       const RelocationKernel<Dim>& kernel, MonteCarloRun mc, Fn&& fn) {
  return run_replicas(M, mc.jobs, [&](std::size_t r) {
    Rng rng = make_stream(mc.seed, r);
    auto start = sample_configuration(law, n, rng);
    ParticleConfig<Dim> cfg(law.basis().domain(), start.points, std::move(rng));
    cfg.log_jumps = false;
    advance(cfg, t, dt, kernel);
    return fn(start.points, cfg);
  });
}

/// ⟨T_{n,t} g, ψ⟩_n: mean of g(X^n_t) ψ(X^n_0) with X^n_0 ~ ν_n.
template <std::size_t Dim>
Estimate semigroup_estimate(const InitialLaw<Dim>& law, const CylinderFunction& g, const CylinderFunction& psi,
                            double t, std::size_t n, std::size_t M, double dt, const RelocationKernel<Dim>& kernel,
                            MonteCarloRun mc) {
  if (M < 2) throw std::invalid_argument("semigroup_estimate: need at least 2 replicas");
  const auto& basis = law.basis();
  const auto values = simulate_replicas(law, n, t, M, dt, kernel, mc,
                                        [&](const std::vector<Point<Dim>>& x0, const ParticleConfig<Dim>& cfg) {
                                          const double p = evaluate(basis, psi, EmpiricalMeasure<Dim>::from_points(x0));
                                          return evaluate(basis, g, cfg.empirical()) * p;
                                        });
  return summarize(values);
}

struct ResolventEstimate {
  Estimate estimate;
  double horizon = 0.0;
  double tail_bound = 0.0;
};

/// G_{n,β} g = E ∫_0^∞ e^{-βt} g(X^n_t) dt, truncated at 12/β. g is sampled
/// every `stride` steps and integrated against the exact exponential weight
/// with the trapezoid rule.
template <std::size_t Dim>
ResolventEstimate resolvent_estimate(const InitialLaw<Dim>& law, const CylinderFunction& g, double beta,
                                     std::size_t n, std::size_t M, double dt, const RelocationKernel<Dim>& kernel,
                                     MonteCarloRun mc, std::size_t stride = 10) {
  if (!(beta > 0.0)) throw std::invalid_argument("resolvent_estimate: beta must be positive");
  if (M < 2) throw std::invalid_argument("resolvent_estimate: need at least 2 replicas");
  if (stride == 0) throw std::invalid_argument("resolvent_estimate: stride must be positive");
  const auto& basis = law.basis();
  const double horizon = 12.0 / beta;
  const std::size_t blocks = std::max<std::size_t>(1, (step_count(horizon, dt) + stride - 1) / stride);
  const std::size_t steps = blocks * stride;
  const double h = horizon / static_cast<double>(steps);
  const auto values = run_replicas(M, mc.jobs, [&](std::size_t r) {
    Rng rng = make_stream(mc.seed, r);
    auto start = sample_configuration(law, n, rng);
    ParticleConfig<Dim> cfg(law.basis().domain(), std::move(start.points), std::move(rng));
    cfg.log_jumps = false;
    CompensatedSum integral;
    double g_prev = evaluate(basis, g, cfg.empirical());
    for (std::size_t b = 0; b < blocks; ++b) {
      for (std::size_t s = 0; s < stride; ++s) step(cfg, h, kernel);
      const double a = static_cast<double>(b * stride) * h;
      const double e = static_cast<double>((b + 1) * stride) * h;
      const double g_next = evaluate(basis, g, cfg.empirical());
      integral += (std::exp(-beta * a) - std::exp(-beta * e)) / beta * 0.5 * (g_prev + g_next);
      g_prev = g_next;
    }
    return integral.value();
  });
  return {summarize(values), horizon, sup_bound(basis, g) * std::exp(-beta * horizon) / beta};
}

}  // namespace flemvi
