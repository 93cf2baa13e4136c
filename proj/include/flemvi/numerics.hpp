#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flemvi/geometry.hpp"

namespace flemvi {

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  CompensatedSum& operator+=(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
  CompensatedSum s;
  for (double v : values) s += v;
  return s.value();
}

inline double log_sum_exp(std::span<const double> logs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logs) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  CompensatedSum s;
  for (double v : logs) s += std::exp(v - m);
  return m + std::log(s.value());
}

/// Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(std::size_t n) : nodes(n), weights(n) {
    if (n == 0) throw std::invalid_argument("GaussLegendre: need at least one node");
    // (P_n(x), P_n'(x)) by the three-term recurrence
    auto legendre = [n](double x) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double pk = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      const double dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      return std::pair{p1, dp};
    };
    const double nd = static_cast<double>(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
      for (int iter = 0; iter < 100; ++iter) {
        const auto [p, dp] = legendre(x);
        const double dx = p / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      const double dp = legendre(x).second;
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      nodes[i] = -x;
      nodes[n - 1 - i] = x;
      weights[i] = w;
      weights[n - 1 - i] = w;
    }
  }
};

/// Composite Gauss-Legendre rule on [a, b]: `panels` equal panels with
/// `order` nodes each. The default gives 256 nodes per axis.
class CompositeRule {
 public:
  CompositeRule(double a, double b, std::size_t panels = 16, std::size_t order = 16) {
    const GaussLegendre gl(order);
    const double h = (b - a) / static_cast<double>(panels);
    nodes_.reserve(panels * order);
    weights_.reserve(panels * order);
    for (std::size_t p = 0; p < panels; ++p) {
      const double mid = a + (static_cast<double>(p) + 0.5) * h;
      for (std::size_t i = 0; i < order; ++i) {
        nodes_.push_back(mid + 0.5 * h * gl.nodes[i]);
        weights_.push_back(0.5 * h * gl.weights[i]);
      }
    }
  }

  template <class F>
  double integrate(F&& f) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * f(nodes_[i]);
    return s.value();
  }

  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Tensor-product composite Gauss-Legendre over a box.
template <std::size_t Dim>
class BoxQuadrature {
 public:
  explicit BoxQuadrature(const Box<Dim>& box, std::size_t panels = 16, std::size_t order = 16) {
    for (std::size_t a = 0; a < Dim; ++a) {
      rules_.emplace_back(box.lower(a), box.upper(a), panels, order);
    }
  }

  template <class F>
  double integrate(F&& f) const {
    CompensatedSum s;
    if constexpr (Dim == 1) {
      const auto& r = rules_[0];
      for (std::size_t i = 0; i < r.nodes().size(); ++i) s += r.weights()[i] * f(Point<1>{r.nodes()[i]});
    } else {
      const auto& r0 = rules_[0];
      const auto& r1 = rules_[1];
      for (std::size_t i = 0; i < r0.nodes().size(); ++i) {
        for (std::size_t j = 0; j < r1.nodes().size(); ++j) {
          s += r0.weights()[i] * r1.weights()[j] * f(Point<2>{r0.nodes()[i], r1.nodes()[j]});
        }
      }
    }
    return s.value();
  }

  /// Calls visit(point, weight) for every node.
  template <class Visit>
  void for_each_node(Visit&& visit) const {
    if constexpr (Dim == 1) {
      const auto& r = rules_[0];
      for (std::size_t i = 0; i < r.nodes().size(); ++i) visit(Point<1>{r.nodes()[i]}, r.weights()[i]);
    } else {
      const auto& r0 = rules_[0];
      const auto& r1 = rules_[1];
      for (std::size_t i = 0; i < r0.nodes().size(); ++i) {
        for (std::size_t j = 0; j < r1.nodes().size(); ++j) {
          visit(Point<2>{r0.nodes()[i], r1.nodes()[j]}, r0.weights()[i] * r1.weights()[j]);
        }
      }
    }
  }

 private:
  std::vector<CompositeRule> rules_;
};

/// Midpoint grid with `per_axis` points per axis, strictly inside the box.
template <std::size_t Dim, class Visit>
void for_each_grid_point(const Box<Dim>& box, std::size_t per_axis, Visit&& visit) {
  auto coord = [&](std::size_t a, std::size_t i) {
    return box.lower(a) + (static_cast<double>(i) + 0.5) * box.width(a) / static_cast<double>(per_axis);
  };
  if constexpr (Dim == 1) {
    for (std::size_t i = 0; i < per_axis; ++i) visit(Point<1>{coord(0, i)});
  } else {
    for (std::size_t i = 0; i < per_axis; ++i) {
      for (std::size_t j = 0; j < per_axis; ++j) visit(Point<2>{coord(0, i), coord(1, j)});
    }
  }
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF by bisection.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace flemvi
