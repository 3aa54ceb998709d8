#pragma once

// Relational triplet mining: mutual-kNN neighbor sets and (anchor, positive,
// negative) triples drawn from them. Works on any pairwise metric through
// knn_with; the point-based overload uses the ball distance.

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hier/poincare.hpp"

namespace hier {

struct NeighborIndex {
  int k = 0;
  // per item, ascending by (distance, index), self excluded, length k
  std::vector<std::vector<int>> neighbors;
};

template <class Dist>
NeighborIndex knn_with(int n, int k, Dist&& dist) {
  if (k < 1) throw std::invalid_argument("knn: k must be positive");
  if (k >= n) throw std::invalid_argument("knn: k must be smaller than the item count");
  NeighborIndex out;
  out.k = k;
  out.neighbors.resize(n);
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    cand.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(dist(i, j), j);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    out.neighbors[i].resize(k);
    for (int j = 0; j < k; ++j) out.neighbors[i][j] = cand[j].second;
  }
  return out;
}

inline NeighborIndex knn(const std::vector<HyperbolicPoint>& points, int k) {
  return knn_with(static_cast<int>(points.size()), k, [&](int i, int j) {
    return hyp_distance(points[i], points[j]);
  });
}

// Mutual sets R(i) = { j in knn(i) : i in knn(j) }, each sorted by index.
inline std::vector<std::vector<int>> reciprocal_knn(const NeighborIndex& idx) {
  int n = static_cast<int>(idx.neighbors.size());
  std::vector<std::vector<int>> sorted(n);
  for (int i = 0; i < n; ++i) {
    sorted[i] = idx.neighbors[i];
    std::sort(sorted[i].begin(), sorted[i].end());
  }
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i)
    for (int j : sorted[i])
      if (std::binary_search(sorted[j].begin(), sorted[j].end(), i))
        out[i].push_back(j);
  return out;
}

enum class TripletKind { Samples, Proxies };

struct Triplet {
  int i, j, k;
};

struct TripletBatch {
  TripletKind kind = TripletKind::Samples;
  std::vector<Triplet> triples;
};

// One triple per eligible anchor, anchors visited in index order until the
// budget is exhausted: j uniform over R(i), k uniform over the complement of
// R(i) plus i itself. Anchors lacking either set are skipped.
inline TripletBatch build_triplets(const std::vector<std::vector<int>>& reciprocal,
                                   int budget, std::mt19937_64& rng,
                                   TripletKind kind) {
  if (budget < 0) throw std::invalid_argument("build_triplets: negative budget");
  int n = static_cast<int>(reciprocal.size());
  TripletBatch out;
  out.kind = kind;
  for (int i = 0; i < n && static_cast<int>(out.triples.size()) < budget; ++i) {
    const std::vector<int>& r = reciprocal[i];
    if (r.empty()) continue;
    bool self_in_r = std::binary_search(r.begin(), r.end(), i);
    int complement = n - static_cast<int>(r.size()) - (self_in_r ? 0 : 1);
    if (complement <= 0) continue;
    int j = r[std::uniform_int_distribution<int>(0, static_cast<int>(r.size()) - 1)(rng)];
    int t = std::uniform_int_distribution<int>(0, complement - 1)(rng);
    int k = -1;
    auto it = r.begin();
    for (int v = 0; v < n; ++v) {
      while (it != r.end() && *it < v) ++it;
      if (v == i || (it != r.end() && *it == v)) continue;
      if (t-- == 0) {
        k = v;
        break;
      }
    }
    out.triples.push_back({i, j, k});
  }
  return out;
}

}  // namespace hier
