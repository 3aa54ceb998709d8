#pragma once

// Classification-supervised losses on the unit sphere. Both consume an
// already row-normalized embedding batch; cosine similarities come from one
// matmul and the per-anchor / per-proxy reductions from masked column or row
// sums, so each loss adds a constant number of tape nodes regardless of batch
// size.

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "hier/tape.hpp"

namespace hier {

struct ClassProxySet {
  ad::Tensor vectors;  // {count, dim}

  static ClassProxySet init(int count, int dim, double stddev,
                            std::mt19937_64& rng) {
    if (count < 1) throw std::invalid_argument("class proxy set needs entries");
    std::normal_distribution<double> d(0.0, stddev);
    ad::Tensor t = ad::Tensor::zeros({count, dim});
    for (double& x : t.data) x = d(rng);
    t.requires_grad = true;
    return ClassProxySet{std::move(t)};
  }

  int count() const { return static_cast<int>(vectors.shape[0]); }
  int dim() const { return static_cast<int>(vectors.shape[1]); }
};

namespace detail {

inline void check_batch(const ad::Tape& tape, ad::Var spherical,
                        const std::vector<int>& labels, int num_classes) {
  const ad::Tensor& z = tape.value(spherical);
  if (z.rank() != 2 || z.shape[0] < 1)
    throw std::invalid_argument("loss: batch must be a nonempty {B,n} tensor");
  if (static_cast<int64_t>(labels.size()) != z.shape[0])
    throw std::invalid_argument("loss: one label per row required");
  for (int l : labels)
    if (l < 0 || (num_classes >= 0 && l >= num_classes))
      throw std::invalid_argument("loss: label outside the proxy range");
  int64_t n = z.shape[1];
  for (int64_t i = 0; i < z.shape[0]; ++i) {
    double s = 0;
    for (int64_t j = 0; j < n; ++j) s += z.at(i, j) * z.at(i, j);
    if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
      throw std::invalid_argument("loss: batch rows must be unit vectors");
  }
}

}  // namespace detail

// Proxy-Anchor: every proxy with batch positives pulls them in, every proxy
// pushes all foreign samples out, with log-sum-exp weighting at sharpness
// alpha and margin m.
inline ad::Var proxy_anchor_loss(ad::Tape& tape, ad::Var spherical,
                                 const std::vector<int>& labels,
                                 ad::Var proxies, double alpha, double margin) {
  const ad::Tensor& pv = tape.value(proxies);
  if (pv.rank() != 2) throw std::invalid_argument("proxy_anchor: proxies must be {C,n}");
  int64_t c = pv.shape[0];
  detail::check_batch(tape, spherical, labels, static_cast<int>(c));
  int64_t b = tape.value(spherical).shape[0];
  if (tape.value(spherical).shape[1] != pv.shape[1])
    throw std::invalid_argument("proxy_anchor: dimension mismatch");

  ad::Var s = tape.matmul_nt(spherical, tape.l2_normalize(proxies));  // {B,C}

  ad::Tensor pos_mask = ad::Tensor::zeros({b, c});
  ad::Tensor neg_mask = ad::Tensor::zeros({b, c});
  std::set<int> present(labels.begin(), labels.end());
  for (int64_t i = 0; i < b; ++i)
    for (int64_t p = 0; p < c; ++p)
      (labels[i] == p ? pos_mask : neg_mask).at(i, p) = 1.0;

  ad::Var one = tape.constant(1.0);
  ad::Var m = tape.constant(margin);
  ad::Var e_pos = tape.mul(tape.exp(tape.scale(tape.sub(s, m), -alpha)),
                           tape.constant(std::move(pos_mask)));
  ad::Var e_neg = tape.mul(tape.exp(tape.scale(tape.add(s, m), alpha)),
                           tape.constant(std::move(neg_mask)));

  ad::Var ones_row = tape.constant(ad::Tensor::matrix(1, b, std::vector<double>(b, 1.0)));
  ad::Var per_proxy_pos = tape.log(tape.add(tape.matmul(ones_row, e_pos), one));
  ad::Var per_proxy_neg = tape.log(tape.add(tape.matmul(ones_row, e_neg), one));
  // proxies without positives contribute log(1) = 0 to the first sum
  ad::Var lp = tape.scale(tape.sum(per_proxy_pos),
                          1.0 / static_cast<double>(present.size()));
  ad::Var ln = tape.scale(tape.sum(per_proxy_neg), 1.0 / static_cast<double>(c));
  return tape.add(lp, ln);
}

// Multi-Similarity with pair mining: a negative survives if it is harder than
// the easiest positive minus eps, a positive if it is harder than the hardest
// negative plus eps. Anchors without any batch positive contribute zero; with
// positives but no negatives the positive set is kept unfiltered.
inline ad::Var multi_similarity_loss(ad::Tape& tape, ad::Var spherical,
                                     const std::vector<int>& labels,
                                     double alpha, double beta, double base,
                                     double eps) {
  detail::check_batch(tape, spherical, labels, -1);
  int64_t b = tape.value(spherical).shape[0];

  ad::Var s = tape.matmul_nt(spherical, spherical);  // {B,B}
  const ad::Tensor& sv = tape.value(s);

  ad::Tensor pos_mask = ad::Tensor::zeros({b, b});
  ad::Tensor neg_mask = ad::Tensor::zeros({b, b});
  for (int64_t i = 0; i < b; ++i) {
    double min_pos = 0, max_neg = 0;
    bool has_pos = false, has_neg = false;
    for (int64_t j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        min_pos = has_pos ? std::min(min_pos, sv.at(i, j)) : sv.at(i, j);
        has_pos = true;
      } else {
        max_neg = has_neg ? std::max(max_neg, sv.at(i, j)) : sv.at(i, j);
        has_neg = true;
      }
    }
    if (!has_pos) continue;
    for (int64_t j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (!has_neg || sv.at(i, j) < max_neg + eps) pos_mask.at(i, j) = 1.0;
      } else if (sv.at(i, j) > min_pos - eps) {
        neg_mask.at(i, j) = 1.0;
      }
    }
  }

  ad::Var one = tape.constant(1.0);
  ad::Var centered = tape.sub(s, tape.constant(base));
  ad::Var e_pos = tape.mul(tape.exp(tape.scale(centered, -alpha)),
                           tape.constant(std::move(pos_mask)));
  ad::Var e_neg = tape.mul(tape.exp(tape.scale(centered, beta)),
                           tape.constant(std::move(neg_mask)));
  ad::Var ones_col = tape.constant(ad::Tensor::matrix(b, 1, std::vector<double>(b, 1.0)));
  ad::Var row_pos = tape.log(tape.add(tape.matmul(e_pos, ones_col), one));
  ad::Var row_neg = tape.log(tape.add(tape.matmul(e_neg, ones_col), one));
  ad::Var per_anchor = tape.add(tape.scale(row_pos, 1.0 / alpha),
                                tape.scale(row_neg, 1.0 / beta));
  return tape.scale(tape.sum(per_anchor), 1.0 / static_cast<double>(b));
}

}  // namespace hier
