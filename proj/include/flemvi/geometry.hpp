#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace flemvi {

template <std::size_t Dim>
using Point = std::array<double, Dim>;

/// Axis-aligned open box (lower_a, upper_a) in R^Dim. Dim = 1 is an interval,
/// Dim = 2 a rectangle. Both carry closed-form Dirichlet eigenbases.
template <std::size_t Dim>
class Box {
  static_assert(Dim == 1 || Dim == 2, "only intervals and rectangles are supported");

 public:
  static constexpr std::size_t dimension = Dim;

  Box(const Point<Dim>& lower, const Point<Dim>& upper) : lower_(lower), upper_(upper) {
    for (std::size_t a = 0; a < Dim; ++a) {
      if (!(lower_[a] < upper_[a]) || !std::isfinite(lower_[a]) || !std::isfinite(upper_[a])) {
        throw std::invalid_argument("Box: need finite lower < upper in every coordinate");
      }
    }
  }

  const Point<Dim>& lower() const { return lower_; }
  const Point<Dim>& upper() const { return upper_; }
  double lower(std::size_t a) const { return lower_[a]; }
  double upper(std::size_t a) const { return upper_[a]; }
  double width(std::size_t a) const { return upper_[a] - lower_[a]; }

  double volume() const {
    double v = 1.0;
    for (std::size_t a = 0; a < Dim; ++a) v *= width(a);
    return v;
  }

  bool contains(const Point<Dim>& x) const {
    for (std::size_t a = 0; a < Dim; ++a) {
      if (!(x[a] > lower_[a] && x[a] < upper_[a])) return false;
    }
    return true;
  }

  /// Euclidean distance to the boundary; for a box this is the smallest gap
  /// to any face.
  double dist_to_boundary(const Point<Dim>& x) const {
    if (!contains(x)) throw std::domain_error("dist_to_boundary: point outside the domain");
    return face_gap(x);
  }

  /// Same as dist_to_boundary but returns 0 for points on or outside the
  /// boundary instead of throwing.
  double face_gap(const Point<Dim>& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < Dim; ++a) {
      d = std::min({d, x[a] - lower_[a], upper_[a] - x[a]});
    }
    return std::max(d, 0.0);
  }

  /// Intersection of the segment [inside, outside] with the boundary closest
  /// to `inside`. The hit coordinate is snapped exactly onto its face.
  Point<Dim> project_to_boundary(const Point<Dim>& inside, const Point<Dim>& outside) const {
    return segment_exit(inside, outside).point;
  }

  struct SegmentHit {
    Point<Dim> point;
    double fraction;  // position along the segment in [0, 1]
    std::size_t axis;
    bool upper_face;
  };

  SegmentHit segment_exit(const Point<Dim>& inside, const Point<Dim>& outside) const {
    double best = std::numeric_limits<double>::infinity();
    std::size_t axis = 0;
    bool upper_face = false;
    for (std::size_t a = 0; a < Dim; ++a) {
      const double delta = outside[a] - inside[a];
      if (outside[a] <= lower_[a] && delta < 0.0) {
        const double s = (lower_[a] - inside[a]) / delta;
        if (s < best) { best = s; axis = a; upper_face = false; }
      }
      if (outside[a] >= upper_[a] && delta > 0.0) {
        const double s = (upper_[a] - inside[a]) / delta;
        if (s < best) { best = s; axis = a; upper_face = true; }
      }
    }
    if (!std::isfinite(best)) {
      throw std::domain_error("project_to_boundary: segment does not leave the domain");
    }
    best = std::clamp(best, 0.0, 1.0);
    Point<Dim> p;
    for (std::size_t a = 0; a < Dim; ++a) {
      p[a] = std::clamp(inside[a] + best * (outside[a] - inside[a]), lower_[a], upper_[a]);
    }
    p[axis] = upper_face ? upper_[axis] : lower_[axis];
    return {p, best, axis, upper_face};
  }

  bool on_boundary(const Point<Dim>& p, double tol = 1e-12) const {
    bool touches = false;
    for (std::size_t a = 0; a < Dim; ++a) {
      if (p[a] < lower_[a] - tol || p[a] > upper_[a] + tol) return false;
      if (std::abs(p[a] - lower_[a]) <= tol || std::abs(p[a] - upper_[a]) <= tol) touches = true;
    }
    return touches;
  }

 private:
  Point<Dim> lower_;
  Point<Dim> upper_;
};

using Interval = Box<1>;
using Rectangle = Box<2>;

template <std::size_t Dim>
double distance(const Point<Dim>& x, const Point<Dim>& y) {
  double s = 0.0;
  for (std::size_t a = 0; a < Dim; ++a) s += (x[a] - y[a]) * (x[a] - y[a]);
  return std::sqrt(s);
}

inline Interval make_interval(double a, double b) { return Interval({a}, {b}); }
inline Rectangle make_rectangle(double a1, double b1, double a2, double b2) {
  return Rectangle({a1, a2}, {b1, b2});
}

}  // namespace flemvi
