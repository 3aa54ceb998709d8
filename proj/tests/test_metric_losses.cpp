#include "hier/metric_losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support/util.hpp"

using hier::ad::grad_check;
using hier::ad::Tape;
using hier::ad::Tensor;
using hier::ad::Var;

namespace {

constexpr double kPi = std::numbers::pi;

// 60-digit evaluations of the closed forms, frozen.
// Proxy-Anchor: samples at 0/45/90 degrees, labels {0,0,1}, proxies (1,0) and
// (0,1), alpha=32, margin=0.1.
constexpr double kPaLoss = 14.53368516747084470496;
// Multi-Similarity: samples at 0/50/55/120 degrees, labels {0,0,1,1},
// alpha=2, beta=50, base=0.5, eps=0.1.
constexpr double kMsLoss = 0.6001278017438633430506;

Tensor unit_rows(const std::vector<double>& angles) {
  Tensor t = Tensor::zeros({static_cast<int64_t>(angles.size()), 2});
  for (size_t i = 0; i < angles.size(); ++i) {
    t.data[i * 2] = std::cos(angles[i]);
    t.data[i * 2 + 1] = std::sin(angles[i]);
  }
  return t;
}

TEST(ProxyAnchor, FrozenToyValue) {
  Tape tape;
  Var z = tape.constant(unit_rows({0.0, kPi / 4, kPi / 2}));
  Var p = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var loss = hier::proxy_anchor_loss(tape, z, {0, 0, 1}, p, 32.0, 0.1);
  EXPECT_NEAR(tape.scalar_value(loss), kPaLoss, 1e-10);
}

TEST(ProxyAnchor, PullingPositiveCloserReducesLoss) {
  auto eval = [](double angle1) {
    Tape tape;
    Var z = tape.constant(unit_rows({0.0, angle1, kPi / 2}));
    Var p = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    return tape.scalar_value(
        hier::proxy_anchor_loss(tape, z, {0, 0, 1}, p, 32.0, 0.1));
  };
  EXPECT_LT(eval(kPi / 8), eval(kPi / 4));  // sample 1 closer to proxy 0
}

TEST(ProxyAnchor, SingleSampleSingleProxy) {
  Tape tape;
  Var z = tape.constant(unit_rows({0.3}));
  Var p = tape.constant(Tensor::matrix(1, 2, {1, 0}));
  Var loss = hier::proxy_anchor_loss(tape, z, {0}, p, 32.0, 0.1);
  // no foreign samples: only the positive term remains
  double s = std::cos(0.3);
  double expected = std::log(1.0 + std::exp(-32.0 * (s - 0.1)));
  EXPECT_NEAR(tape.scalar_value(loss), expected, 1e-12);
}

TEST(ProxyAnchor, RotationInvariant) {
  std::mt19937_64 g(51);
  for (int trial = 0; trial < 20; ++trial) {
    double theta = std::uniform_real_distribution<double>(0, 2 * kPi)(g);
    std::vector<double> angles = {0.1, 0.9, 2.0, 4.1};
    std::vector<int> labels = {0, 1, 1, 2};
    Tape t1, t2;
    std::vector<double> rotated = angles;
    for (double& a : rotated) a += theta;
    Tensor proxies = Tensor::matrix(3, 2, {1, 0, 0, 1, -1, 0});
    Tensor proxies_rot = Tensor::zeros({3, 2});
    for (int i = 0; i < 3; ++i) {
      double x = proxies.at(i, 0), y = proxies.at(i, 1);
      proxies_rot.at(i, 0) = x * std::cos(theta) - y * std::sin(theta);
      proxies_rot.at(i, 1) = x * std::sin(theta) + y * std::cos(theta);
    }
    double l1 = t1.scalar_value(hier::proxy_anchor_loss(
        t1, t1.constant(unit_rows(angles)), labels, t1.constant(proxies),
        32.0, 0.1));
    double l2 = t2.scalar_value(hier::proxy_anchor_loss(
        t2, t2.constant(unit_rows(rotated)), labels, t2.constant(proxies_rot),
        32.0, 0.1));
    EXPECT_NEAR(l1, l2, 1e-12 * std::max(1.0, std::abs(l1)));
  }
}

TEST(ProxyAnchor, RejectsBadInput) {
  Tape tape;
  Var p = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var z = tape.constant(unit_rows({0.0, 1.0}));
  EXPECT_THROW(hier::proxy_anchor_loss(tape, z, {0}, p, 32, 0.1),
               std::invalid_argument);
  EXPECT_THROW(hier::proxy_anchor_loss(tape, z, {0, 2}, p, 32, 0.1),
               std::invalid_argument);
  Var bad = tape.constant(Tensor::matrix(2, 2, {2, 0, 0, 1}));
  EXPECT_THROW(hier::proxy_anchor_loss(tape, bad, {0, 1}, p, 32, 0.1),
               std::invalid_argument);
}

TEST(ProxyAnchor, GradientMatchesFiniteDifferences) {
  std::mt19937_64 g(52);
  for (int trial = 0; trial < 10; ++trial) {
    auto raw = testutil::gaussian_vec(g, 8);
    auto praw = testutil::gaussian_vec(g, 6);
    std::vector<int> labels = {0, 1, 2, 0};
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return hier::proxy_anchor_loss(t, t.l2_normalize(v[0]), labels, v[1],
                                     32.0, 0.1);
    };
    auto rep = grad_check(
        f, {Tensor::matrix(4, 2, raw), Tensor::matrix(3, 2, praw)}, 1e-6);
    EXPECT_LT(rep.max_rel_err, 1e-4) << "trial " << trial;
  }
}

TEST(MultiSimilarity, FrozenToyValue) {
  Tape tape;
  Var z = tape.constant(unit_rows(
      {0.0, kPi * 50 / 180, kPi * 55 / 180, kPi * 120 / 180}));
  Var loss =
      hier::multi_similarity_loss(tape, z, {0, 0, 1, 1}, 2.0, 50.0, 0.5, 0.1);
  EXPECT_NEAR(tape.scalar_value(loss), kMsLoss, 1e-12);
}

TEST(MultiSimilarity, AnchorsWithoutPositivesContributeZero) {
  Tape tape;
  // four distinct classes: nobody has a positive
  Var z = tape.constant(unit_rows({0.0, 1.0, 2.0, 3.0}));
  Var loss =
      hier::multi_similarity_loss(tape, z, {0, 1, 2, 3}, 2.0, 50.0, 0.5, 0.1);
  EXPECT_DOUBLE_EQ(tape.scalar_value(loss), 0.0);
}

TEST(MultiSimilarity, NoNegativesKeepsPositivesUnfiltered) {
  Tape tape;
  Var z = tape.constant(unit_rows({0.0, 0.4, 2.8}));
  Var loss =
      hier::multi_similarity_loss(tape, z, {0, 0, 0}, 2.0, 50.0, 0.5, 0.1);
  double expected = 0;
  std::vector<double> angles = {0.0, 0.4, 2.8};
  for (int i = 0; i < 3; ++i) {
    double acc = 0;
    for (int j = 0; j < 3; ++j)
      if (j != i) acc += std::exp(-2.0 * (std::cos(angles[i] - angles[j]) - 0.5));
    expected += std::log(1.0 + acc) / 2.0;
  }
  expected /= 3.0;
  EXPECT_NEAR(tape.scalar_value(loss), expected, 1e-12);
}

TEST(MultiSimilarity, RotationInvariant) {
  std::mt19937_64 g(53);
  for (int trial = 0; trial < 20; ++trial) {
    double theta = std::uniform_real_distribution<double>(0, 2 * kPi)(g);
    std::vector<double> angles = {0.2, 0.8, 0.9, 2.5, 3.8};
    std::vector<int> labels = {0, 0, 1, 1, 0};
    std::vector<double> rotated = angles;
    for (double& a : rotated) a += theta;
    Tape t1, t2;
    double l1 = t1.scalar_value(hier::multi_similarity_loss(
        t1, t1.constant(unit_rows(angles)), labels, 2.0, 50.0, 0.5, 0.1));
    double l2 = t2.scalar_value(hier::multi_similarity_loss(
        t2, t2.constant(unit_rows(rotated)), labels, 2.0, 50.0, 0.5, 0.1));
    EXPECT_NEAR(l1, l2, 1e-12 * std::max(1.0, std::abs(l1)));
  }
}

// away from mining-threshold boundaries the mined sets are locally constant
TEST(MultiSimilarity, GradientMatchesFiniteDifferences) {
  std::mt19937_64 g(54);
  int accepted = 0;
  std::vector<int> labels = {0, 0, 1, 1, 2};
  for (int trial = 0; trial < 40 && accepted < 10; ++trial) {
    auto raw = testutil::gaussian_vec(g, 15);
    Tensor in = Tensor::matrix(5, 3, raw);
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return hier::multi_similarity_loss(t, t.l2_normalize(v[0]), labels, 2.0,
                                         50.0, 0.5, 0.1);
    };
    auto near_kink = [&](const std::vector<Tensor>& xs) {
      Tape t;
      Var z = t.l2_normalize(t.leaf(xs[0]));
      const Tensor& zb = t.value(t.matmul_nt(z, z));
      for (int i = 0; i < 5; ++i) {
        double min_pos = 1e300, max_neg = -1e300;
        for (int j = 0; j < 5; ++j) {
          if (j == i) continue;
          if (labels[j] == labels[i]) min_pos = std::min(min_pos, zb.at(i, j));
          else max_neg = std::max(max_neg, zb.at(i, j));
        }
        for (int j = 0; j < 5; ++j) {
          if (j == i) continue;
          double margin = labels[j] == labels[i]
                              ? zb.at(i, j) - (max_neg + 0.1)
                              : zb.at(i, j) - (min_pos - 0.1);
          if (std::abs(margin) < 1e-3) return true;
        }
      }
      return false;
    };
    auto rep = grad_check(f, {in}, 1e-6, near_kink);
    if (rep.skipped) continue;
    EXPECT_LT(rep.max_rel_err, 1e-5) << "trial " << trial;
    ++accepted;
  }
  EXPECT_GE(accepted, 10);
}

TEST(ClassProxySet, DeterministicInit) {
  std::mt19937_64 a(7), b(7);
  auto p1 = hier::ClassProxySet::init(4, 3, 0.5, a);
  auto p2 = hier::ClassProxySet::init(4, 3, 0.5, b);
  EXPECT_EQ(p1.vectors.data, p2.vectors.data);
  EXPECT_TRUE(p1.vectors.requires_grad);
  EXPECT_EQ(p1.count(), 4);
  EXPECT_EQ(p1.dim(), 3);
}

}  // namespace
