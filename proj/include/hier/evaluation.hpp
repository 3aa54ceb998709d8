#pragma once

// Retrieval and hierarchy-quality metrics plus the artifact writers that dump
// them to disk. Everything here is evaluation-only; none of it feeds
// gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hier/dataset.hpp"
#include "hier/poincare.hpp"

namespace hier {

// Leaves are samples 0..n_leaves-1; internal nodes follow; exactly one node
// has parent -1.
struct InducedTree {
  int n_leaves = 0;
  std::vector<int> parent;

  int node_count() const { return static_cast<int>(parent.size()); }
};

namespace detail {

// Depth of every node, validating single-rootedness and acyclicity.
inline std::vector<int> tree_depths(const InducedTree& t) {
  int n = t.node_count();
  if (n == 0) throw std::invalid_argument("tree: empty");
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (t.parent[i] == -1) ++roots;
    else if (t.parent[i] < 0 || t.parent[i] >= n)
      throw std::invalid_argument("tree: parent id out of range");
  }
  if (roots != 1) throw std::invalid_argument("tree: must have exactly one root");
  std::vector<int> depth(n, -1);
  for (int i = 0; i < n; ++i) {
    int steps = 0, node = i;
    while (t.parent[node] != -1) {
      node = t.parent[node];
      if (++steps > n) throw std::invalid_argument("tree: cycle detected");
    }
    node = i;
    int d = steps;
    while (depth[node] == -1) {
      depth[node] = d--;
      if (t.parent[node] == -1) break;
      node = t.parent[node];
    }
  }
  return depth;
}

}  // namespace detail

// ---- retrieval --------------------------------------------------------------

// Fraction of queries whose k nearest neighbors (self excluded, ties broken
// by index) contain at least one sample of the query's label. dist(q, j)
// supplies the ranking metric.
template <class DistFn>
std::vector<double> recall_at_k_with(int n, const std::vector<int>& labels,
                                     const std::vector<int>& ks, DistFn&& dist) {
  if (n < 2) throw std::invalid_argument("recall: need at least 2 samples");
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("recall: labels size mismatch");
  for (int k : ks)
    if (k < 1 || k >= n)
      throw std::invalid_argument("recall: k must lie in [1, n-1]");

  // rank of the first same-label neighbor per query (n-1 = never)
  std::vector<int> first_hit(n, n - 1);
  std::vector<std::pair<double, int>> order;
  for (int q = 0; q < n; ++q) {
    order.clear();
    for (int j = 0; j < n; ++j) {
      if (j == q) continue;
      order.emplace_back(dist(q, j), j);
    }
    std::sort(order.begin(), order.end());
    for (int r = 0; r < static_cast<int>(order.size()); ++r)
      if (labels[order[r].second] == labels[q]) {
        first_hit[q] = r;
        break;
      }
  }
  std::vector<double> out;
  for (int k : ks) {
    int hits = 0;
    for (int q = 0; q < n; ++q) hits += first_hit[q] < k;
    out.push_back(static_cast<double>(hits) / n);
  }
  return out;
}

inline std::vector<double> recall_at_k(const std::vector<HyperbolicPoint>& points,
                                       const std::vector<int>& labels,
                                       const std::vector<int>& ks) {
  return recall_at_k_with(static_cast<int>(points.size()), labels, ks,
                          [&points](int q, int j) {
                            return hyp_distance(points[q], points[j]);
                          });
}

// ---- hierarchy cost ---------------------------------------------------------

// Sum over unordered leaf pairs of w_ij times the leaf count under their
// lowest common ancestor.
inline double dasgupta_cost(const InducedTree& tree,
                            const std::vector<std::vector<double>>& weights) {
  int n = tree.n_leaves;
  if (n < 1 || n > tree.node_count())
    throw std::invalid_argument("dasgupta: bad leaf count");
  if (static_cast<int>(weights.size()) != n)
    throw std::invalid_argument("dasgupta: weights must be n_leaves x n_leaves");
  for (const auto& row : weights)
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("dasgupta: weights must be n_leaves x n_leaves");

  std::vector<int> depth = detail::tree_depths(tree);
  std::vector<int64_t> leaf_count(tree.node_count(), 0);
  for (int leaf = 0; leaf < n; ++leaf)
    for (int node = leaf; node != -1; node = tree.parent[node])
      ++leaf_count[node];

  double cost = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (weights[i][j] == 0.0) continue;
      int a = i, b = j;
      while (a != b) {
        if (depth[a] >= depth[b]) a = tree.parent[a];
        else b = tree.parent[b];
      }
      cost += weights[i][j] * static_cast<double>(leaf_count[a]);
    }
  return cost;
}

// ---- tree extraction --------------------------------------------------------

// Samples attach to their nearest proxy; each proxy attaches to the nearest
// proxy of strictly smaller norm (none -> virtual root). Ties go to the
// lower index.
inline InducedTree extract_tree(const std::vector<HyperbolicPoint>& samples,
                                const std::vector<HyperbolicPoint>& proxies) {
  int n = static_cast<int>(samples.size());
  int p = static_cast<int>(proxies.size());
  if (p < 1) throw std::invalid_argument("extract_tree: need at least one proxy");

  InducedTree tree;
  tree.n_leaves = n;
  tree.parent.assign(n + p + 1, -1);
  int root = n + p;

  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = hyp_distance(samples[i], proxies[0]);
    for (int q = 1; q < p; ++q) {
      double d = hyp_distance(samples[i], proxies[q]);
      if (d < best_d) {
        best_d = d;
        best = q;
      }
    }
    tree.parent[i] = n + best;
  }

  std::vector<double> norms(p);
  for (int q = 0; q < p; ++q) norms[q] = vnorm(proxies[q].coords);
  for (int q = 0; q < p; ++q) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r < p; ++r) {
      if (!(norms[r] < norms[q])) continue;
      double d = hyp_distance(proxies[q], proxies[r]);
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    tree.parent[n + q] = best == -1 ? root : n + best;
  }

  detail::tree_depths(tree);  // structural check: single root, acyclic
  return tree;
}

// Uniform random merges, the baseline hierarchy for cost comparisons.
inline InducedTree random_binary_tree(int n_leaves, std::mt19937_64& rng) {
  if (n_leaves < 2) throw std::invalid_argument("random tree: need >= 2 leaves");
  InducedTree tree;
  tree.n_leaves = n_leaves;
  tree.parent.assign(2 * n_leaves - 1, -1);
  std::vector<int> open(n_leaves);
  for (int i = 0; i < n_leaves; ++i) open[i] = i;
  int next = n_leaves;
  while (open.size() > 1) {
    std::uniform_int_distribution<size_t> pick(0, open.size() - 1);
    size_t a = pick(rng);
    std::swap(open[a], open.back());
    int left = open.back();
    open.pop_back();
    std::uniform_int_distribution<size_t> pick2(0, open.size() - 1);
    size_t b = pick2(rng);
    int right = open[b];
    tree.parent[left] = next;
    tree.parent[right] = next;
    open[b] = next++;
  }
  return tree;
}

// ---- affinity ---------------------------------------------------------------

// class x class matrix of mean negative distance; within-class entries need
// at least one pair, otherwise they are NaN (missing).
inline std::vector<std::vector<double>> affinity_matrix(
    const std::vector<HyperbolicPoint>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size())
    throw std::invalid_argument("affinity: labels size mismatch");
  int classes = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("affinity: negative label");
    classes = std::max(classes, l + 1);
  }
  if (classes < 2) throw std::invalid_argument("affinity: need >= 2 classes");

  std::vector<std::vector<double>> sum(classes, std::vector<double>(classes, 0.0));
  std::vector<std::vector<int64_t>> cnt(classes, std::vector<int64_t>(classes, 0));
  int n = static_cast<int>(points.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = -hyp_distance(points[i], points[j]);
      int a = labels[i], b = labels[j];
      sum[a][b] += d;
      ++cnt[a][b];
      if (a != b) {
        sum[b][a] += d;
        ++cnt[b][a];
      }
    }
  std::vector<std::vector<double>> out(classes,
                                       std::vector<double>(classes, 0.0));
  for (int a = 0; a < classes; ++a)
    for (int b = 0; b < classes; ++b)
      out[a][b] = cnt[a][b] ? sum[a][b] / static_cast<double>(cnt[a][b])
                            : std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---- proxy neighborhoods ----------------------------------------------------

struct ProxyNeighbors {
  int proxy = 0;
  double norm = 0.0;
  std::vector<uint64_t> neighbors;  // sample ids, nearest first
};

inline std::vector<ProxyNeighbors> proxy_neighbor_report(
    const std::vector<HyperbolicPoint>& samples,
    const std::vector<uint64_t>& sample_ids,
    const std::vector<HyperbolicPoint>& proxies, int top_m) {
  if (samples.size() != sample_ids.size())
    throw std::invalid_argument("neighbor report: ids size mismatch");
  if (top_m < 1 || top_m > static_cast<int>(samples.size()))
    throw std::invalid_argument("neighbor report: top_m out of range");

  std::vector<ProxyNeighbors> report;
  for (int q = 0; q < static_cast<int>(proxies.size()); ++q) {
    ProxyNeighbors entry;
    entry.proxy = q;
    entry.norm = vnorm(proxies[q].coords);
    std::vector<std::pair<double, int>> order;
    for (int i = 0; i < static_cast<int>(samples.size()); ++i)
      order.emplace_back(hyp_distance(samples[i], proxies[q]), i);
    std::partial_sort(order.begin(), order.begin() + top_m, order.end());
    for (int r = 0; r < top_m; ++r)
      entry.neighbors.push_back(sample_ids[order[r].second]);
    report.push_back(std::move(entry));
  }
  std::stable_sort(report.begin(), report.end(),
                   [](const ProxyNeighbors& a, const ProxyNeighbors& b) {
                     return a.norm > b.norm;
                   });
  return report;
}

// ---- artifact writers -------------------------------------------------------

// Embedding dump reuses the feature file format with ball coordinates as the
// feature rows.
inline void write_embeddings(const std::vector<HyperbolicPoint>& points,
                             const std::vector<int>& labels,
                             const std::vector<uint64_t>& ids,
                             const std::string& path) {
  if (points.size() != labels.size() || points.size() != ids.size())
    throw std::invalid_argument("write_embeddings: size mismatch");
  if (points.empty()) throw std::invalid_argument("write_embeddings: empty");
  Dataset d;
  d.feature_dim = static_cast<int>(points[0].coords.size());
  for (size_t i = 0; i < points.size(); ++i) {
    d.ids.push_back(ids[i]);
    d.labels.push_back(labels[i]);
    std::vector<float> row(points[i].coords.begin(), points[i].coords.end());
    d.features.push_back(std::move(row));
  }
  write_features(d, path);
}

inline void write_tree_edges(const InducedTree& tree, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw parse_error("cannot write file: " + path);
  for (int i = 0; i < tree.node_count(); ++i)
    if (tree.parent[i] != -1) out << i << ' ' << tree.parent[i] << '\n';
  if (!out) throw parse_error("short write: " + path);
}

// Header row and column carry class indices; NaN entries are left blank.
inline void write_affinity_csv(const std::vector<std::vector<double>>& matrix,
                               const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw parse_error("cannot write file: " + path);
  out << "class";
  for (size_t b = 0; b < matrix.size(); ++b) out << ",class_" << b;
  out << '\n';
  out.precision(17);
  for (size_t a = 0; a < matrix.size(); ++a) {
    out << "class_" << a;
    for (double v : matrix[a]) {
      out << ',';
      if (!std::isnan(v)) out << v;
    }
    out << '\n';
  }
  if (!out) throw parse_error("short write: " + path);
}

}  // namespace hier
