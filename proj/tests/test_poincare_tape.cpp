#include "hier/poincare_tape.hpp"

#include <gtest/gtest.h>

#include <random>

#include "support/util.hpp"

using hier::Curvature;
using hier::ad::grad_check;
using hier::ad::Tape;
using hier::ad::Tensor;
using hier::ad::Var;

namespace {

constexpr double kC = 0.1;
constexpr double kR = 2.3;

TEST(PoincareTape, ValuesMatchPlainRoute) {
  std::mt19937_64 g(21);
  Curvature c(kC);
  for (int i = 0; i < 200; ++i) {
    auto uv = testutil::gaussian_vec(g, 4);
    auto vv = testutil::gaussian_vec(g, 4);

    Tape tape;
    Var u = tape.constant(Tensor::vector(uv));
    Var v = tape.constant(Tensor::vector(vv));

    auto ep = hier::exp_map_0(uv, c);
    EXPECT_LT(testutil::linf(tape.value(hier::exp_map_0(tape, u, c)).data,
                             ep.coords),
              1e-15);

    auto cp = hier::clip_and_exp(uv, kR, c);
    Var ct = hier::clip_and_exp(tape, u, kR, c);
    EXPECT_LT(testutil::linf(tape.value(ct).data, cp.coords), 1e-15);

    auto pu = hier::clip_and_exp(uv, kR, c);
    auto pv = hier::clip_and_exp(vv, kR, c);
    Tape tape2;
    Var tu = tape2.constant(Tensor::vector(pu.coords));
    Var tv = tape2.constant(Tensor::vector(pv.coords));
    auto ma = hier::mobius_add(pu, pv);
    EXPECT_LT(testutil::linf(
                  tape2.value(hier::mobius_add(tape2, tu, tv, c)).data,
                  ma.coords),
              1e-14);
    EXPECT_NEAR(tape2.scalar_value(hier::hyp_distance(tape2, tu, tv, c)),
                hier::hyp_distance(pu, pv), 1e-13);
  }
}

TEST(PoincareTape, ExpMapGradient) {
  std::mt19937_64 g(22);
  Curvature c(kC);
  for (int trial = 0; trial < 50; ++trial) {
    auto w = testutil::gaussian_vec(g, 4);
    std::vector<Tensor> inputs = {Tensor::vector(testutil::gaussian_vec(g, 4))};
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return t.dot(hier::exp_map_0(t, v[0], c),
                   t.constant(Tensor::vector(w)));
    };
    auto rep = grad_check(f, inputs, 1e-5);
    EXPECT_LT(rep.max_rel_err, 1e-7) << "trial " << trial;
  }
}

TEST(PoincareTape, DistanceGradientBothArguments) {
  std::mt19937_64 g(23);
  Curvature c(kC);
  for (int trial = 0; trial < 50; ++trial) {
    auto pu = testutil::random_ball_point(g, 4, kC, 1.8);
    auto pv = testutil::random_ball_point(g, 4, kC, 1.8);
    std::vector<double> diff(4);
    for (int j = 0; j < 4; ++j) diff[j] = pu.coords[j] - pv.coords[j];
    if (hier::vnorm(diff) < 1e-3) continue;  // kink of ||.|| at coincidence
    std::vector<Tensor> inputs = {Tensor::vector(pu.coords),
                                  Tensor::vector(pv.coords)};
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return hier::hyp_distance(t, v[0], v[1], c);
    };
    auto rep = grad_check(f, inputs, 1e-6);
    EXPECT_LT(rep.max_rel_err, 1e-6) << "trial " << trial;
  }
}

TEST(PoincareTape, ClipAndExpGradientAwayFromClipRadius) {
  std::mt19937_64 g(24);
  Curvature c(kC);
  int done = 0;
  for (int trial = 0; trial < 200 && done < 50; ++trial) {
    auto vv = testutil::gaussian_vec(g, 4, 1.5);
    if (std::abs(hier::vnorm(vv) - kR) < 1e-3) continue;
    auto w = testutil::gaussian_vec(g, 4);
    std::vector<Tensor> inputs = {Tensor::vector(vv)};
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return t.dot(hier::clip_and_exp(t, v[0], kR, c),
                   t.constant(Tensor::vector(w)));
    };
    auto rep = grad_check(f, inputs, 1e-6);
    EXPECT_LT(rep.max_rel_err, 1e-6) << "trial " << trial;
    ++done;
  }
  EXPECT_GE(done, 50);
}

// With the clip active, scaling v radially does not move the output, so the
// gradient must be orthogonal to v; finite differences confirm both facts.
TEST(PoincareTape, ClippedRegionHasNoRadialGradient) {
  std::mt19937_64 g(25);
  Curvature c(kC);
  for (int trial = 0; trial < 20; ++trial) {
    auto vv = testutil::gaussian_vec(g, 4);
    double n = hier::vnorm(vv);
    for (double& x : vv) x *= 2.0 * kR / n;  // ||v|| = 2r
    auto w = testutil::gaussian_vec(g, 4);
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return t.dot(hier::clip_and_exp(t, v[0], kR, c),
                   t.constant(Tensor::vector(w)));
    };

    Tape tape;
    Tensor leaf = Tensor::vector(vv);
    leaf.requires_grad = true;
    std::vector<Var> vars = {tape.leaf(leaf)};
    Var root = f(tape, vars);
    tape.backward(root);
    auto grad = tape.grad(vars[0]);
    double radial = hier::vdot(grad, vv) / hier::vnorm(vv);
    EXPECT_NEAR(radial, 0.0, 1e-12);

    // central difference along v itself
    double h = 1e-6;
    auto eval = [&](double s) {
      Tape t2;
      std::vector<double> x = vv;
      for (double& xi : x) xi *= 1.0 + s;
      std::vector<Var> vs = {t2.leaf(Tensor::vector(x))};
      return t2.scalar_value(f(t2, vs));
    };
    EXPECT_NEAR((eval(h) - eval(-h)) / (2 * h), 0.0, 1e-8);

    // an orthogonal direction does move the output
    bool moved = false;
    for (int axis = 0; axis < 4 && !moved; ++axis) {
      std::vector<double> dir(4, 0.0);
      dir[axis] = 1.0;
      double along = hier::vdot(dir, vv) / hier::vnorm(vv);
      for (int j = 0; j < 4; ++j) dir[j] -= along * vv[j] / hier::vnorm(vv);
      if (hier::vnorm(dir) < 1e-6) continue;
      double fd = 0;
      {
        Tape t2;
        std::vector<double> xp = vv, xm = vv;
        for (int j = 0; j < 4; ++j) {
          xp[j] += h * dir[j];
          xm[j] -= h * dir[j];
        }
        std::vector<Var> vp = {t2.leaf(Tensor::vector(xp))};
        double a = t2.scalar_value(f(t2, vp));
        Tape t3;
        std::vector<Var> vm = {t3.leaf(Tensor::vector(xm))};
        double b = t3.scalar_value(f(t3, vm));
        fd = (a - b) / (2 * h);
      }
      if (std::abs(fd) > 1e-6) moved = true;
    }
    EXPECT_TRUE(moved);
  }
}

TEST(PoincareTape, GradientFlowsToBothDistanceArguments) {
  Curvature c(kC);
  Tape tape;
  Tensor tu = Tensor::vector({0.3, 0.1});
  Tensor tv = Tensor::vector({-0.2, 0.4});
  tu.requires_grad = true;
  tv.requires_grad = true;
  Var u = tape.leaf(tu);
  Var v = tape.leaf(tv);
  Var d = hier::hyp_distance(tape, u, v, c);
  tape.backward(d);
  EXPECT_GT(hier::vnorm(tape.grad(u)), 0.0);
  EXPECT_GT(hier::vnorm(tape.grad(v)), 0.0);
}

}  // namespace
