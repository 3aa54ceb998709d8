#pragma once

// Tape overloads of the ball operations. Values match the plain versions in
// poincare.hpp; gradients follow the smooth formulas, with the boundary guard
// applied as a constant rescale so it never contributes gradient terms.

#include "hier/poincare.hpp"
#include "hier/tape.hpp"

namespace hier {

namespace detail {

// Constant-factor projection if the node's value escaped the guard shell.
inline ad::Var guard_ball(ad::Tape& tape, ad::Var x, double c) {
  double q = c * squared_norm(tape.value(x).data);
  if (q >= 1.0 - kBallEps)
    return tape.scale(x, std::sqrt((1.0 - kBallEps) / q));
  return x;
}

}  // namespace detail

inline ad::Var exp_map_0(ad::Tape& tape, ad::Var v, Curvature cur) {
  ad::Var n = tape.norm2(v);
  if (tape.scalar_value(n) == 0.0) return v;  // exp_0(0) = 0, identity Jacobian
  double sc = std::sqrt(cur.c);
  ad::Var a = tape.scale(n, sc);
  ad::Var f = tape.div(tape.tanh(a), a);
  return detail::guard_ball(tape, tape.mul(v, f), cur.c);
}

inline ad::Var mobius_add(ad::Tape& tape, ad::Var u, ad::Var v, Curvature cur) {
  double c = cur.c;
  ad::Var one = tape.constant(1.0);
  ad::Var uu = tape.dot(u, u);
  ad::Var vv = tape.dot(v, v);
  ad::Var uv = tape.dot(u, v);
  ad::Var a = tape.add(one, tape.add(tape.scale(uv, 2.0 * c), tape.scale(vv, c)));
  ad::Var b = tape.sub(one, tape.scale(uu, c));
  ad::Var den = tape.add(
      one, tape.add(tape.scale(uv, 2.0 * c), tape.scale(tape.mul(uu, vv), c * c)));
  ad::Var num = tape.add(tape.mul(u, a), tape.mul(v, b));
  return detail::guard_ball(tape, tape.div(num, den), c);
}

inline ad::Var hyp_distance(ad::Tape& tape, ad::Var u, ad::Var v, Curvature cur) {
  double sc = std::sqrt(cur.c);
  ad::Var m = mobius_add(tape, tape.neg(u), v, cur);
  ad::Var arg = tape.scale(tape.norm2(m), sc);
  return tape.scale(tape.arctanh(arg), 2.0 / sc);
}

inline ad::Var clip_and_exp(ad::Tape& tape, ad::Var v, double r, Curvature cur) {
  if (!(std::isfinite(r) && r > 0))
    throw std::invalid_argument("clip_and_exp: radius must be positive");
  ad::Var n = tape.norm2(v);
  ad::Var rc = tape.constant(r);
  // r / max(||v||, r): 1 below the clip radius, r/||v|| above. max2 breaks the
  // tie at ||v|| == r toward its first argument, i.e. the clipped branch.
  ad::Var f = tape.div(rc, tape.max2(n, rc));
  return exp_map_0(tape, tape.mul(v, f), cur);
}

}  // namespace hier
