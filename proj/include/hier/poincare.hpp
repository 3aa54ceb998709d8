#pragma once

// Poincare ball model with curvature -c, c > 0. Points live in the open ball
// c * ||x||^2 < 1. All entry points re-project results that numerical error
// pushed onto the boundary back to the shell c * ||x||^2 = 1 - kBallEps.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hier {

inline constexpr double kBallEps = 1e-5;

inline double vdot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double squared_norm(std::span<const double> v) { return vdot(v, v); }
inline double vnorm(std::span<const double> v) {
  return std::sqrt(squared_norm(v));
}

struct Curvature {
  double c;
  explicit Curvature(double value) : c(value) {
    if (!(std::isfinite(c) && c > 0))
      throw std::invalid_argument("curvature must be finite and positive");
  }
};

// Tangent vector at the origin; any finite coordinates.
using TangentVector = std::vector<double>;

struct HyperbolicPoint {
  std::vector<double> coords;
  double c = 1.0;

  double norm() const { return vnorm(coords); }
};

namespace detail {

inline void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(what) + ": non-finite input");
}

// Rescale onto the guard shell when c * ||x||^2 >= 1 - kBallEps.
inline void project_into_ball(std::vector<double>& x, double c) {
  double q = c * squared_norm(x);
  if (q >= 1.0 - kBallEps) {
    double f = std::sqrt((1.0 - kBallEps) / q);
    for (double& xi : x) xi *= f;
  }
}

}  // namespace detail

inline HyperbolicPoint make_point(std::vector<double> coords, Curvature cur) {
  detail::check_finite(coords, "make_point");
  if (cur.c * squared_norm(coords) >= 1.0)
    throw std::invalid_argument("make_point: coordinates outside the ball");
  return HyperbolicPoint{std::move(coords), cur.c};
}

inline HyperbolicPoint origin(size_t dim, Curvature cur) {
  return HyperbolicPoint{std::vector<double>(dim, 0.0), cur.c};
}

// exp_0(v) = tanh(sqrt(c) ||v||) * v / (sqrt(c) ||v||); exp_0(0) = 0 exactly.
inline HyperbolicPoint exp_map_0(const TangentVector& v, Curvature cur) {
  detail::check_finite(v, "exp_map_0");
  double n = vnorm(v);
  HyperbolicPoint p;
  p.c = cur.c;
  p.coords = v;
  if (n > 0) {
    double sc = std::sqrt(cur.c);
    double f = std::tanh(sc * n) / (sc * n);
    for (double& x : p.coords) x *= f;
  }
  detail::project_into_ball(p.coords, p.c);
  return p;
}

inline HyperbolicPoint negate(const HyperbolicPoint& p) {
  HyperbolicPoint q = p;
  for (double& x : q.coords) x = -x;
  return q;
}

inline void check_same_ball(const HyperbolicPoint& u, const HyperbolicPoint& v) {
  if (u.c != v.c)
    throw std::invalid_argument("points belong to balls of different curvature");
  if (u.coords.size() != v.coords.size())
    throw std::invalid_argument("points have different dimension");
}

inline HyperbolicPoint mobius_add(const HyperbolicPoint& u,
                                  const HyperbolicPoint& v) {
  check_same_ball(u, v);
  double c = u.c;
  double uu = squared_norm(u.coords);
  double vv = squared_norm(v.coords);
  double uv = vdot(u.coords, v.coords);
  double a = 1.0 + 2.0 * c * uv + c * vv;
  double b = 1.0 - c * uu;
  double den = 1.0 + 2.0 * c * uv + c * c * uu * vv;
  HyperbolicPoint out;
  out.c = c;
  out.coords.resize(u.coords.size());
  for (size_t i = 0; i < out.coords.size(); ++i)
    out.coords[i] = (a * u.coords[i] + b * v.coords[i]) / den;
  detail::project_into_ball(out.coords, c);
  return out;
}

// d(u, v) = (2 / sqrt(c)) * arctanh(sqrt(c) * ||(-u) + v||)
inline double hyp_distance(const HyperbolicPoint& u, const HyperbolicPoint& v) {
  check_same_ball(u, v);
  double sc = std::sqrt(u.c);
  HyperbolicPoint m = mobius_add(negate(u), v);
  double arg = sc * m.norm();
  arg = std::min(arg, 1.0 - 1e-15);
  return 2.0 / sc * std::atanh(arg);
}

// lambda_x = 2 / (1 - c ||x||^2)
inline double conformal_factor(const HyperbolicPoint& x) {
  return 2.0 / (1.0 - x.c * squared_norm(x.coords));
}

// Norm-clip the tangent vector to radius r, then exponential-map.
inline HyperbolicPoint clip_and_exp(const TangentVector& v, double r,
                                    Curvature cur) {
  if (!(std::isfinite(r) && r > 0))
    throw std::invalid_argument("clip_and_exp: radius must be positive");
  detail::check_finite(v, "clip_and_exp");
  double n = vnorm(v);
  if (n <= r) return exp_map_0(v, cur);
  TangentVector clipped = v;
  double f = r / n;
  for (double& x : clipped) x *= f;
  return exp_map_0(clipped, cur);
}

}  // namespace hier
