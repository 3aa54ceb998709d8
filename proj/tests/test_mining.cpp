#include "hier/mining.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "support/util.hpp"

using hier::build_triplets;
using hier::knn;
using hier::knn_with;
using hier::NeighborIndex;
using hier::reciprocal_knn;
using hier::Triplet;
using hier::TripletBatch;
using hier::TripletKind;

namespace {

// Oracle: full sort of every candidate list by (distance, index).
template <class Dist>
std::vector<std::vector<int>> knn_oracle(int n, int k, Dist&& dist) {
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> all;
    for (int j = 0; j < n; ++j)
      if (j != i) all.emplace_back(dist(i, j), j);
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) {
                       if (a.first != b.first) return a.first < b.first;
                       return a.second < b.second;
                     });
    for (int j = 0; j < k; ++j) out[i].push_back(all[j].second);
  }
  return out;
}

TEST(Knn, MatchesResortOracleOnRandomPoints) {
  std::mt19937_64 g(31);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 5 + static_cast<int>(g() % 40);
    int k = 1 + static_cast<int>(g() % (n - 1));
    std::vector<hier::HyperbolicPoint> pts;
    for (int i = 0; i < n; ++i)
      pts.push_back(testutil::random_ball_point(g, 3, 0.1));
    NeighborIndex idx = knn(pts, k);
    auto oracle = knn_oracle(
        n, k, [&](int i, int j) { return hier::hyp_distance(pts[i], pts[j]); });
    EXPECT_EQ(idx.neighbors, oracle) << "trial " << trial;
  }
}

TEST(Knn, EqualDistancesOrderByIndex) {
  // items 1 and 2 tie as neighbors of 0
  std::vector<std::vector<double>> d = {
      {0, 1, 1, 5}, {1, 0, 3, 5}, {1, 3, 0, 5}, {5, 5, 5, 0}};
  auto idx = knn_with(4, 2, [&](int i, int j) { return d[i][j]; });
  EXPECT_EQ(idx.neighbors[0], (std::vector<int>{1, 2}));
}

TEST(Knn, ExcludesSelf) {
  std::mt19937_64 g(32);
  std::vector<hier::HyperbolicPoint> pts;
  for (int i = 0; i < 10; ++i)
    pts.push_back(testutil::random_ball_point(g, 2, 0.1));
  auto idx = knn(pts, 4);
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(std::count(idx.neighbors[i].begin(), idx.neighbors[i].end(), i), 0);
}

TEST(Knn, RejectsKNotBelowCount) {
  std::mt19937_64 g(33);
  std::vector<hier::HyperbolicPoint> pts;
  for (int i = 0; i < 5; ++i)
    pts.push_back(testutil::random_ball_point(g, 2, 0.1));
  EXPECT_THROW(knn(pts, 5), std::invalid_argument);
  EXPECT_THROW(knn(pts, 0), std::invalid_argument);
  EXPECT_NO_THROW(knn(pts, 4));
}

TEST(ReciprocalKnn, DropsAsymmetricPairs) {
  // chain 0 -- 1 ---- 2: with k=1, knn(0)={1}, knn(1)={0}, knn(2)={1},
  // so 2's candidate 1 is not mutual.
  std::vector<double> x = {0.0, 1.0, 2.5};
  auto idx = knn_with(3, 1, [&](int i, int j) { return std::abs(x[i] - x[j]); });
  auto rec = reciprocal_knn(idx);
  EXPECT_EQ(rec[0], (std::vector<int>{1}));
  EXPECT_EQ(rec[1], (std::vector<int>{0}));
  EXPECT_TRUE(rec[2].empty());
}

TEST(ReciprocalKnn, MutualByConstruction) {
  std::mt19937_64 g(34);
  std::vector<hier::HyperbolicPoint> pts;
  for (int i = 0; i < 30; ++i)
    pts.push_back(testutil::random_ball_point(g, 3, 0.1));
  auto rec = reciprocal_knn(knn(pts, 5));
  for (int i = 0; i < 30; ++i)
    for (int j : rec[i])
      EXPECT_TRUE(std::binary_search(rec[j].begin(), rec[j].end(), i));
}

TEST(BuildTriplets, MembershipPredicateHolds) {
  std::mt19937_64 g(35);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 10 + static_cast<int>(g() % 30);
    std::vector<hier::HyperbolicPoint> pts;
    for (int i = 0; i < n; ++i)
      pts.push_back(testutil::random_ball_point(g, 3, 0.1));
    auto rec = reciprocal_knn(knn(pts, 4));
    TripletBatch batch = build_triplets(rec, n, g, TripletKind::Samples);
    for (const Triplet& t : batch.triples) {
      EXPECT_NE(t.i, t.j);
      EXPECT_NE(t.i, t.k);
      EXPECT_NE(t.j, t.k);
      EXPECT_TRUE(std::binary_search(rec[t.i].begin(), rec[t.i].end(), t.j));
      EXPECT_FALSE(std::binary_search(rec[t.i].begin(), rec[t.i].end(), t.k));
    }
  }
}

TEST(BuildTriplets, SkipsAnchorsWithEmptySets) {
  std::vector<std::vector<int>> rec = {{1}, {0}, {}};
  std::mt19937_64 g(36);
  TripletBatch batch = build_triplets(rec, 10, g, TripletKind::Samples);
  ASSERT_EQ(batch.triples.size(), 2u);
  EXPECT_EQ(batch.triples[0].i, 0);
  EXPECT_EQ(batch.triples[1].i, 1);
}

TEST(BuildTriplets, SkipsAnchorsWithoutNegatives) {
  // every other item is in R(0), so no negative exists for anchor 0
  std::vector<std::vector<int>> rec = {{1, 2}, {0}, {0}};
  std::mt19937_64 g(37);
  TripletBatch batch = build_triplets(rec, 10, g, TripletKind::Samples);
  for (const Triplet& t : batch.triples) EXPECT_NE(t.i, 0);
  EXPECT_EQ(batch.triples.size(), 2u);
}

TEST(BuildTriplets, BudgetCapsAndKeepsIndexOrder) {
  std::mt19937_64 g(38);
  std::vector<hier::HyperbolicPoint> pts;
  for (int i = 0; i < 40; ++i)
    pts.push_back(testutil::random_ball_point(g, 3, 0.1));
  auto rec = reciprocal_knn(knn(pts, 6));
  TripletBatch batch = build_triplets(rec, 7, g, TripletKind::Samples);
  EXPECT_LE(batch.triples.size(), 7u);
  for (size_t t = 1; t < batch.triples.size(); ++t)
    EXPECT_LT(batch.triples[t - 1].i, batch.triples[t].i);
}

TEST(BuildTriplets, DeterministicUnderSeed) {
  std::vector<hier::HyperbolicPoint> pts;
  std::mt19937_64 setup(39);
  for (int i = 0; i < 25; ++i)
    pts.push_back(testutil::random_ball_point(setup, 3, 0.1));
  auto rec = reciprocal_knn(knn(pts, 5));
  auto run = [&] {
    std::mt19937_64 g(123);
    auto b = build_triplets(rec, 25, g, TripletKind::Proxies);
    std::vector<int> flat;
    for (const Triplet& t : b.triples) {
      flat.push_back(t.i);
      flat.push_back(t.j);
      flat.push_back(t.k);
    }
    return flat;
  };
  EXPECT_EQ(run(), run());
}

TEST(BuildTriplets, UniformDrawsCoverChoices) {
  // anchor 0 has R = {1, 2} and negatives {3, 4}; all four combos must appear
  std::vector<std::vector<int>> rec = {{1, 2}, {0}, {0}, {}, {}};
  std::mt19937_64 g(40);
  std::set<std::pair<int, int>> seen;
  for (int it = 0; it < 400; ++it) {
    auto b = build_triplets(rec, 1, g, TripletKind::Samples);
    ASSERT_EQ(b.triples.size(), 1u);
    seen.insert({b.triples[0].j, b.triples[0].k});
  }
  EXPECT_EQ(seen.size(), 4u);
}

}  // namespace
