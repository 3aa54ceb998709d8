#pragma once

// Hierarchical regularizer. Latent hierarchy proxies are free tangent vectors
// realized into the embedding space on use; soft LCA assignments are sampled
// from similarity logits with Gumbel perturbation and then treated as
// constants, so gradients only flow through distances to the chosen proxies.

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "hier/mining.hpp"
#include "hier/poincare_tape.hpp"
#include "hier/tape.hpp"

namespace hier {

enum class HierSpace { Hyperbolic, Spherical };
enum class NoiseDomain { Value, Log };
enum class Reduction { Mean, Sum };

// Realization and distance for the space the regularizer runs in. The plain
// and tape routes compute the same values.
struct HierGeometry {
  HierSpace space = HierSpace::Hyperbolic;
  double c = 0.1;
  double clip_radius = 2.3;

  std::vector<double> realize(const std::vector<double>& pre) const {
    if (space == HierSpace::Hyperbolic)
      return clip_and_exp(pre, clip_radius, Curvature(c)).coords;
    double n = vnorm(pre);
    if (n == 0.0) throw std::domain_error("realize: zero pre-image");
    std::vector<double> out = pre;
    for (double& x : out) x /= n;
    return out;
  }

  double distance(const std::vector<double>& a,
                  const std::vector<double>& b) const {
    if (space == HierSpace::Hyperbolic)
      return hyp_distance(HyperbolicPoint{a, c}, HyperbolicPoint{b, c});
    std::vector<double> d(a.size());
    for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return 2.0 * vnorm(d);
  }

  ad::Var realize(ad::Tape& tape, ad::Var pre) const {
    if (space == HierSpace::Hyperbolic)
      return clip_and_exp(tape, pre, clip_radius, Curvature(c));
    return tape.l2_normalize(pre);
  }

  ad::Var distance(ad::Tape& tape, ad::Var a, ad::Var b) const {
    if (space == HierSpace::Hyperbolic)
      return hyp_distance(tape, a, b, Curvature(c));
    return tape.scale(tape.norm2(tape.sub(a, b)), 2.0);
  }
};

struct HierProxySet {
  ad::Tensor pre_images;  // {count, dim}

  static HierProxySet init(int count, int dim, double stddev,
                           std::mt19937_64& rng) {
    if (count < 2) throw std::invalid_argument("proxy set needs at least 2 entries");
    std::normal_distribution<double> d(0.0, stddev);
    ad::Tensor t = ad::Tensor::zeros({count, dim});
    for (double& x : t.data) x = d(rng);
    t.requires_grad = true;
    return HierProxySet{std::move(t)};
  }

  int count() const { return static_cast<int>(pre_images.shape[0]); }
  int dim() const { return static_cast<int>(pre_images.shape[1]); }
};

// pi(rho) = exp(-max of the member distances to rho), one entry per proxy.
inline std::vector<double> lca_logits_pair(const std::vector<double>& di,
                                           const std::vector<double>& dj) {
  if (di.size() != dj.size())
    throw std::invalid_argument("lca_logits_pair: size mismatch");
  std::vector<double> out(di.size());
  for (size_t p = 0; p < out.size(); ++p)
    out[p] = std::exp(-std::max(di[p], dj[p]));
  return out;
}

inline std::vector<double> lca_logits_triple(const std::vector<double>& di,
                                             const std::vector<double>& dj,
                                             const std::vector<double>& dk) {
  if (di.size() != dj.size() || di.size() != dk.size())
    throw std::invalid_argument("lca_logits_triple: size mismatch");
  std::vector<double> out(di.size());
  for (size_t p = 0; p < out.size(); ++p)
    out[p] = std::exp(-std::max({di[p], dj[p], dk[p]}));
  return out;
}

// Gumbel-max selection over logits. With noise enabled one Gumbel draw is
// consumed per proxy, excluded entries included, so the stream advances by a
// fixed amount per call. Without noise the generator is untouched and ties
// resolve to the smallest index.
struct LcaSampler {
  std::mt19937_64* rng = nullptr;
  bool noise = true;
  NoiseDomain domain = NoiseDomain::Value;

  static double gumbel(std::mt19937_64& g) {
    double u = (static_cast<double>(g() >> 11) + 0.5) * 0x1p-53;
    return -std::log(-std::log(u));
  }

  int sample(const std::vector<double>& logits, int excluded) const {
    int n = static_cast<int>(logits.size());
    int best = -1;
    double best_score = 0;
    for (int p = 0; p < n; ++p) {
      double score;
      if (noise) {
        double g = gumbel(*rng);  // drawn for every entry, excluded or not
        if (p == excluded) continue;
        score = domain == NoiseDomain::Value ? logits[p] + g
                                             : std::log(logits[p]) + g;
      } else {
        if (p == excluded) continue;
        score = logits[p];
      }
      if (best < 0 || score > best_score) {
        best = p;
        best_score = score;
      }
    }
    if (best < 0)
      throw std::invalid_argument("sample_lca: no admissible proxy");
    return best;
  }
};

// Margin loss for one mined triple given its sampled ancestors: the pair LCA
// should sit closer to i and j than the triple LCA, and the triple LCA closer
// to k, each by delta.
inline ad::Var hier_loss_triplet(ad::Tape& tape, ad::Var xi, ad::Var xj,
                                 ad::Var xk, ad::Var rho_pair,
                                 ad::Var rho_triple, double delta,
                                 const HierGeometry& geom) {
  ad::Var dlt = tape.constant(delta);
  auto hinge = [&](ad::Var near, ad::Var far, ad::Var x) {
    return tape.relu(tape.add(
        tape.sub(geom.distance(tape, x, near), geom.distance(tape, x, far)),
        dlt));
  };
  ad::Var li = hinge(rho_pair, rho_triple, xi);
  ad::Var lj = hinge(rho_pair, rho_triple, xj);
  ad::Var lk = hinge(rho_triple, rho_pair, xk);
  return tape.add(tape.add(li, lj), lk);
}

struct LcaAssignment {
  Triplet triple;
  int rho_pair = -1;
  int rho_triple = -1;
};

struct HierBatchResult {
  ad::Var loss;  // scalar, constant 0 when the batch is empty
  std::vector<LcaAssignment> assignments;
  double mean_pair_norm = 0.0;    // Euclidean norms of the realized picks
  double mean_triple_norm = 0.0;
};

// point_at / proxy_at map item and proxy ids to tape nodes in the regularizer
// space; dist_to_proxies holds detached distances item -> every realized
// proxy, and realized_norms the Euclidean norm of each realized proxy.
// Passing forced non-null replays those ancestor assignments instead of
// sampling, e.g. to re-evaluate the loss after a parameter update.
template <class PointAt, class ProxyAt>
HierBatchResult hier_loss_batch(ad::Tape& tape, const TripletBatch& batch,
                                PointAt&& point_at, ProxyAt&& proxy_at,
                                const std::vector<std::vector<double>>& dist_to_proxies,
                                const std::vector<double>& realized_norms,
                                double delta, Reduction reduction,
                                const HierGeometry& geom,
                                const LcaSampler& sampler,
                                const std::vector<LcaAssignment>* forced = nullptr) {
  HierBatchResult res;
  if (batch.triples.empty()) {
    res.loss = tape.constant(0.0);
    return res;
  }
  if (forced && forced->size() != batch.triples.size())
    throw std::invalid_argument("hier_loss_batch: assignment count mismatch");
  ad::Var total{};
  for (size_t ti = 0; ti < batch.triples.size(); ++ti) {
    const Triplet& t = batch.triples[ti];
    const auto& di = dist_to_proxies.at(t.i);
    const auto& dj = dist_to_proxies.at(t.j);
    const auto& dk = dist_to_proxies.at(t.k);
    int rho_triple, rho_pair;
    if (forced) {
      rho_triple = (*forced)[ti].rho_triple;
      rho_pair = (*forced)[ti].rho_pair;
    } else {
      rho_triple = sampler.sample(lca_logits_triple(di, dj, dk), -1);
      rho_pair = sampler.sample(lca_logits_pair(di, dj), rho_triple);
    }
    ad::Var term =
        hier_loss_triplet(tape, point_at(t.i), point_at(t.j), point_at(t.k),
                          proxy_at(rho_pair), proxy_at(rho_triple), delta, geom);
    total = total.valid() ? tape.add(total, term) : term;
    res.assignments.push_back({t, rho_pair, rho_triple});
    res.mean_pair_norm += realized_norms.at(rho_pair);
    res.mean_triple_norm += realized_norms.at(rho_triple);
  }
  double inv = 1.0 / static_cast<double>(batch.triples.size());
  res.mean_pair_norm *= inv;
  res.mean_triple_norm *= inv;
  res.loss = reduction == Reduction::Mean ? tape.scale(total, inv) : total;
  return res;
}

}  // namespace hier
