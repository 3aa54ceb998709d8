#pragma once

// Synthetic hierarchical datasets and the on-disk feature format. Features
// are kept as f32 so file round-trips are bit-exact; they are widened to
// doubles at the encoder boundary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hier {

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rooted class hierarchy: node 0 is the root, leaves carry class indices.
struct ClassTree {
  std::vector<int> parent;      // -1 for the root
  std::vector<int> depth;
  std::vector<char> is_leaf;
  std::vector<int> class_node;  // class index -> leaf node id

  int node_count() const { return static_cast<int>(parent.size()); }
};

// Edge count between the leaves of two classes.
inline int tree_distance(const ClassTree& t, int class_a, int class_b) {
  int a = t.class_node.at(class_a);
  int b = t.class_node.at(class_b);
  while (a != b) {
    if (t.depth[a] >= t.depth[b]) a = t.parent[a];
    else b = t.parent[b];
    if (a < 0 || b < 0)
      throw std::invalid_argument("tree_distance: nodes share no ancestor");
  }
  int lca_depth = t.depth[a];
  return (t.depth[t.class_node[class_a]] - lca_depth) +
         (t.depth[t.class_node[class_b]] - lca_depth);
}

// Ground-truth pair similarity: 1 within a class, halving per tree edge.
inline double gt_weight(const ClassTree& t, int class_a, int class_b) {
  return std::exp2(-static_cast<double>(tree_distance(t, class_a, class_b)));
}

struct Dataset {
  int feature_dim = 0;
  std::vector<uint64_t> ids;
  std::vector<int> labels;
  std::vector<std::vector<float>> features;  // stored exactly as on disk

  // populated only for generated data
  ClassTree tree;
  int num_classes = 0;
  bool separable = false;        // cluster_spread below half the min center gap
  double separation_margin = 0;  // min inter-center half-distance

  int size() const { return static_cast<int>(ids.size()); }

  std::vector<double> feature_row(int i) const {
    return std::vector<double>(features[i].begin(), features[i].end());
  }
};

struct SyntheticSpec {
  int depth = 3;
  int branching = 2;
  int classes = 8;
  int samples_per_class = 200;
  int feature_dim = 32;
  double cluster_spread = 0.1;
  uint64_t seed = 0;
};

// Class centers diffuse down a complete tree: each child adds a Gaussian step
// whose scale halves per level; samples add cluster_spread noise at the leaf.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.depth < 2) throw std::invalid_argument("generate: depth must be >= 2");
  if (spec.branching < 2)
    throw std::invalid_argument("generate: branching must be >= 2");
  if (spec.samples_per_class < 1 || spec.feature_dim < 1)
    throw std::invalid_argument("generate: empty spec");
  int64_t leaves = 1;
  for (int d = 0; d < spec.depth; ++d) leaves *= spec.branching;
  if (leaves != spec.classes)
    throw std::invalid_argument(
        "generate: classes must equal branching^depth (" +
        std::to_string(leaves) + ")");
  if (!(spec.cluster_spread > 0))
    throw std::invalid_argument("generate: cluster_spread must be positive");

  Dataset out;
  out.feature_dim = spec.feature_dim;
  out.num_classes = spec.classes;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  // breadth-first tree with per-node centers
  ClassTree& tree = out.tree;
  std::vector<std::vector<double>> centers;
  tree.parent.push_back(-1);
  tree.depth.push_back(0);
  tree.is_leaf.push_back(spec.depth == 0);
  centers.emplace_back(spec.feature_dim, 0.0);
  int level_begin = 0, level_end = 1;
  for (int level = 1; level <= spec.depth; ++level) {
    double step = std::ldexp(1.0, -(level - 1));  // 1, 1/2, 1/4, ...
    int next_begin = static_cast<int>(tree.parent.size());
    for (int p = level_begin; p < level_end; ++p) {
      for (int b = 0; b < spec.branching; ++b) {
        tree.parent.push_back(p);
        tree.depth.push_back(level);
        tree.is_leaf.push_back(level == spec.depth);
        std::vector<double> c = centers[p];
        for (double& x : c) x += step * unit(rng);
        centers.push_back(std::move(c));
      }
    }
    level_begin = next_begin;
    level_end = static_cast<int>(tree.parent.size());
  }
  for (int n = 0; n < tree.node_count(); ++n)
    if (tree.is_leaf[n]) tree.class_node.push_back(n);

  // separability report: smallest half-distance between leaf centers
  double min_gap = std::numeric_limits<double>::infinity();
  for (int a = 0; a < spec.classes; ++a)
    for (int b = a + 1; b < spec.classes; ++b) {
      const auto& ca = centers[tree.class_node[a]];
      const auto& cb = centers[tree.class_node[b]];
      double s = 0;
      for (int d = 0; d < spec.feature_dim; ++d)
        s += (ca[d] - cb[d]) * (ca[d] - cb[d]);
      min_gap = std::min(min_gap, std::sqrt(s) / 2.0);
    }
  out.separation_margin = min_gap;
  out.separable = spec.cluster_spread < min_gap;

  std::normal_distribution<double> jitter(0.0, spec.cluster_spread);
  uint64_t next_id = 0;
  for (int cls = 0; cls < spec.classes; ++cls) {
    const auto& center = centers[tree.class_node[cls]];
    for (int s = 0; s < spec.samples_per_class; ++s) {
      std::vector<float> row(spec.feature_dim);
      for (int d = 0; d < spec.feature_dim; ++d)
        row[d] = static_cast<float>(center[d] + jitter(rng));
      out.features.push_back(std::move(row));
      out.labels.push_back(cls);
      out.ids.push_back(next_id++);
    }
  }
  return out;
}

// ---- feature file ----------------------------------------------------------
//
// little-endian: magic "HIERDS1\0", u32 version = 1, u32 count, u32 dim,
// then per row u64 id, u32 label, dim x f32.

namespace detail {

inline constexpr char kFeatureMagic[8] = {'H', 'I', 'E', 'R', 'D', 'S', '1', '\0'};
inline constexpr uint32_t kFeatureVersion = 1;

template <class T>
void put_le(std::string& buf, T v) {
  for (size_t i = 0; i < sizeof(T); ++i)
    buf.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& buf, size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw parse_error("feature file: truncated");
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

inline void put_f32(std::string& buf, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_le(buf, bits);
}

inline float get_f32(const std::string& buf, size_t& pos) {
  uint32_t bits = get_le<uint32_t>(buf, pos);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open file: " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace detail

inline void write_features(const Dataset& data, const std::string& path) {
  std::string buf;
  buf.append(detail::kFeatureMagic, 8);
  detail::put_le<uint32_t>(buf, detail::kFeatureVersion);
  detail::put_le<uint32_t>(buf, static_cast<uint32_t>(data.size()));
  detail::put_le<uint32_t>(buf, static_cast<uint32_t>(data.feature_dim));
  for (int i = 0; i < data.size(); ++i) {
    detail::put_le<uint64_t>(buf, data.ids[i]);
    detail::put_le<uint32_t>(buf, static_cast<uint32_t>(data.labels[i]));
    for (float f : data.features[i]) detail::put_f32(buf, f);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw parse_error("cannot write file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw parse_error("short write: " + path);
}

inline Dataset read_features(const std::string& path) {
  std::string buf = detail::read_all(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), detail::kFeatureMagic, 8) != 0)
    throw parse_error("feature file: bad magic");
  size_t pos = 8;
  uint32_t version = detail::get_le<uint32_t>(buf, pos);
  if (version != detail::kFeatureVersion)
    throw parse_error("feature file: unsupported version " +
                      std::to_string(version));
  uint32_t count = detail::get_le<uint32_t>(buf, pos);
  uint32_t dim = detail::get_le<uint32_t>(buf, pos);
  size_t expect = pos + static_cast<size_t>(count) * (8 + 4 + 4ull * dim);
  if (buf.size() < expect) throw parse_error("feature file: truncated");
  if (buf.size() > expect) throw parse_error("feature file: trailing bytes");

  Dataset out;
  out.feature_dim = static_cast<int>(dim);
  for (uint32_t i = 0; i < count; ++i) {
    out.ids.push_back(detail::get_le<uint64_t>(buf, pos));
    out.labels.push_back(static_cast<int>(detail::get_le<uint32_t>(buf, pos)));
    std::vector<float> row(dim);
    for (uint32_t d = 0; d < dim; ++d) row[d] = detail::get_f32(buf, pos);
    out.features.push_back(std::move(row));
  }

  // labels must form a contiguous 0-based range
  int max_label = -1;
  for (int l : out.labels) max_label = std::max(max_label, l);
  std::vector<char> seen(max_label + 1, 0);
  for (int l : out.labels) seen[l] = 1;
  for (int l = 0; l <= max_label; ++l)
    if (!seen[l])
      throw parse_error("feature file: label range has a gap at " +
                        std::to_string(l));
  out.num_classes = max_label + 1;
  return out;
}

// ---- tree sidecar -----------------------------------------------------------

inline void write_tree(const ClassTree& tree, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw parse_error("cannot write file: " + path);
  for (int n = 0; n < tree.node_count(); ++n)
    out << n << ' ' << tree.parent[n] << ' ' << tree.depth[n] << ' '
        << static_cast<int>(tree.is_leaf[n]) << '\n';
  if (!out) throw parse_error("short write: " + path);
}

inline ClassTree read_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open file: " + path);
  ClassTree tree;
  int id, parent, depth, leaf;
  int expected = 0;
  while (in >> id >> parent >> depth >> leaf) {
    if (id != expected++) throw parse_error("tree file: ids must be sequential");
    tree.parent.push_back(parent);
    tree.depth.push_back(depth);
    tree.is_leaf.push_back(static_cast<char>(leaf));
  }
  if (tree.parent.empty()) throw parse_error("tree file: empty");
  for (int n = 0; n < tree.node_count(); ++n)
    if (tree.is_leaf[n]) tree.class_node.push_back(n);
  return tree;
}

// ---- class-disjoint split ---------------------------------------------------

struct SplitView {
  std::vector<int> sample_indices;   // rows of the source dataset
  std::vector<int> labels;           // remapped to a contiguous 0-based range
  std::vector<int> original_class;   // remapped label -> source class
};

struct ClassSplit {
  SplitView train, test;
};

inline ClassSplit split_by_class(const Dataset& data, double fraction,
                                 uint64_t seed) {
  int classes = data.num_classes;
  if (classes < 2) throw std::invalid_argument("split: need at least 2 classes");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split: fraction must lie in (0,1)");
  int train_classes =
      static_cast<int>(std::ceil(fraction * static_cast<double>(classes)));
  if (train_classes <= 0 || train_classes >= classes)
    throw std::invalid_argument("split: a side would be empty");

  std::vector<int> order(classes);
  for (int i = 0; i < classes; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> remap(classes, -1);
  std::vector<char> in_train(classes, 0);
  ClassSplit split;
  for (int rank = 0; rank < classes; ++rank) {
    SplitView& side = rank < train_classes ? split.train : split.test;
    in_train[order[rank]] = rank < train_classes;
    remap[order[rank]] = static_cast<int>(side.original_class.size());
    side.original_class.push_back(order[rank]);
  }
  for (int i = 0; i < data.size(); ++i) {
    int cls = data.labels[i];
    SplitView& side = in_train[cls] ? split.train : split.test;
    side.sample_indices.push_back(i);
    side.labels.push_back(remap[cls]);
  }
  return split;
}

}  // namespace hier
