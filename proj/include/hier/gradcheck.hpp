#pragma once

// Finite-difference audit of every differentiable building block.  Each
// composite wires a small random instance through the tape, compares analytic
// gradients against central differences, and redraws instances that sit near
// a non-smooth switch (clip radius, hinge boundary, argmax tie).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <hier/hier_loss.hpp>
#include <hier/metric_losses.hpp>
#include <hier/poincare_tape.hpp>

namespace hier {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int instances = 0;   // smooth instances actually checked
  int redraws = 0;     // instances rejected by a kink guard
  std::int64_t coords = 0;

  bool pass(double tol = 1e-4) const {
    return instances > 0 && max_rel_err < tol;
  }
};

namespace detail {

using ad::Tape;
using ad::Tensor;
using ad::Var;

inline Tensor gaussian_matrix(std::mt19937_64& rng, int rows, int cols,
                              double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<double> data(static_cast<size_t>(rows) * cols);
  for (double& x : data) x = n(rng);
  return Tensor::matrix(rows, cols, data);
}

inline std::vector<double> tensor_row(const Tensor& t, int row) {
  size_t cols = t.shape[1];
  auto begin = t.data.begin() + static_cast<long>(row * cols);
  return std::vector<double>(begin, begin + static_cast<long>(cols));
}

// Draws until `instances` smooth instances have been checked; RunOne returns
// a grad_check report for one fresh instance.
template <class RunOne>
inline GradCheckEntry drive(const char* name, std::mt19937_64& rng,
                            int instances, RunOne&& run_one) {
  GradCheckEntry entry;
  entry.name = name;
  const int cap = instances * 50 + 50;
  for (int draws = 0; entry.instances < instances; ++draws) {
    if (draws >= cap)
      throw std::runtime_error(
          std::string("gradcheck: kink guard rejected nearly all instances "
                      "for ") +
          name);
    ad::GradCheckReport rep = run_one(rng);
    if (rep.skipped) {
      ++entry.redraws;
      continue;
    }
    ++entry.instances;
    entry.coords += rep.checked;
    entry.max_rel_err = std::max(entry.max_rel_err, rep.max_rel_err);
  }
  return entry;
}

inline GradCheckEntry check_hyp_distance(std::mt19937_64& rng, int instances,
                                         double h) {
  const Curvature cur(0.1);
  return drive("hyp_distance", rng, instances, [&](std::mt19937_64& g) {
    Tensor u = gaussian_matrix(g, 1, 4, 0.8);
    Tensor v = gaussian_matrix(g, 1, 4, 0.8);
    auto f = [&](Tape& t, const std::vector<Var>& vars) {
      return hier::hyp_distance(t, hier::exp_map_0(t, vars[0], cur),
                                hier::exp_map_0(t, vars[1], cur), cur);
    };
    auto near_kink = [&](const std::vector<Tensor>& xs) {
      HyperbolicPoint a = exp_map_0(xs[0].data, cur);
      HyperbolicPoint b = exp_map_0(xs[1].data, cur);
      return hyp_distance(a, b) < 1e-3;  // norm kink at coincident points
    };
    return ad::grad_check(f, {u, v}, h, near_kink);
  });
}

inline GradCheckEntry check_exp_map(std::mt19937_64& rng, int instances,
                                    double h) {
  const Curvature cur(0.1);
  return drive("exp_map", rng, instances, [&](std::mt19937_64& g) {
    Tensor u = gaussian_matrix(g, 1, 4, 0.9);
    auto f = [&](Tape& t, const std::vector<Var>& vars) {
      return t.sum(hier::exp_map_0(t, vars[0], cur));
    };
    auto near_kink = [&](const std::vector<Tensor>& xs) {
      return vnorm(xs[0].data) < 1e-3;  // tangent norm kink at the origin
    };
    return ad::grad_check(f, {u}, h, near_kink);
  });
}

inline GradCheckEntry check_clip_and_exp(std::mt19937_64& rng, int instances,
                                         double h) {
  const Curvature cur(0.1);
  const double r = 2.3;
  return drive("clip_and_exp", rng, instances, [&](std::mt19937_64& g) {
    // stddev picked so draws land on both sides of the clip radius
    Tensor u = gaussian_matrix(g, 1, 4, 1.3);
    auto f = [&](Tape& t, const std::vector<Var>& vars) {
      return t.sum(hier::clip_and_exp(t, vars[0], r, cur));
    };
    auto near_kink = [&](const std::vector<Tensor>& xs) {
      double n = vnorm(xs[0].data);
      return n < 1e-3 || std::abs(n - r) < 1e-3;
    };
    return ad::grad_check(f, {u}, h, near_kink);
  });
}

inline GradCheckEntry check_hier_loss(std::mt19937_64& rng, int instances,
                                      double h) {
  HierGeometry geom;  // hyperbolic, c = 0.1, clip radius 2.3
  const double delta = 0.1;
  const int pts_n = 3, prx_n = 4, dim = 2;
  return drive("hier_loss", rng, instances, [&](std::mt19937_64& g) {
    Tensor pts = gaussian_matrix(g, pts_n, dim, 0.8);
    Tensor pre = gaussian_matrix(g, prx_n, dim, 0.8);
    TripletBatch batch;
    batch.triples = {{0, 1, 2}};
    LcaSampler sampler{nullptr, false, NoiseDomain::Value};

    auto wire = [&](Tape& t, Var points, Var proxies) {
      std::vector<Var> point_vars, proxy_vars;
      for (int i = 0; i < pts_n; ++i)
        point_vars.push_back(hier::clip_and_exp(
            t, t.row(points, i), geom.clip_radius, Curvature(geom.c)));
      for (int p = 0; p < prx_n; ++p)
        proxy_vars.push_back(geom.realize(t, t.row(proxies, p)));
      std::vector<std::vector<double>> dists(pts_n,
                                             std::vector<double>(prx_n));
      for (int i = 0; i < pts_n; ++i)
        for (int p = 0; p < prx_n; ++p)
          dists[i][p] = geom.distance(t.value(point_vars[i]).data,
                                      t.value(proxy_vars[p]).data);
      return std::tuple{point_vars, proxy_vars, dists};
    };

    auto f = [&](Tape& t, const std::vector<Var>& vars) {
      auto [point_vars, proxy_vars, dists] = wire(t, vars[0], vars[1]);
      std::vector<double> norms(prx_n);
      for (int p = 0; p < prx_n; ++p)
        norms[p] = vnorm(t.value(proxy_vars[p]).data);
      auto res = hier::hier_loss_batch(
          t, batch, [&](int i) { return point_vars[i]; },
          [&](int p) { return proxy_vars[p]; }, dists, norms, delta,
          Reduction::Mean, geom, sampler);
      return res.loss;
    };

    // redraw when a clip radius is straddled, an argmax margin is thin (the
    // replayed assignment could flip under perturbation), or a hinge
    // argument sits at its boundary
    auto near_kink = [&](const std::vector<Tensor>& xs) {
      for (int i = 0; i < pts_n; ++i)
        if (std::abs(vnorm(tensor_row(xs[0], i)) - geom.clip_radius) < 1e-3)
          return true;
      for (int p = 0; p < prx_n; ++p)
        if (std::abs(vnorm(tensor_row(xs[1], p)) - geom.clip_radius) < 1e-3)
          return true;
      Tape probe;
      auto [point_vars, proxy_vars, dists] =
          wire(probe, probe.leaf(xs[0]), probe.leaf(xs[1]));
      auto margin_ok = [](std::vector<double> v) {
        std::sort(v.begin(), v.end(), std::greater<>());
        return v[0] - v[1] > 1e-3;
      };
      auto tri = lca_logits_triple(dists[0], dists[1], dists[2]);
      if (!margin_ok(tri)) return true;
      int rt = LcaSampler{nullptr, false, NoiseDomain::Value}.sample(tri, -1);
      auto pair = lca_logits_pair(dists[0], dists[1]);
      pair[rt] = -1e300;
      if (!margin_ok(pair)) return true;
      int rp = LcaSampler{nullptr, false, NoiseDomain::Value}.sample(
          lca_logits_pair(dists[0], dists[1]), rt);
      for (auto [x, nr, fr] : {std::tuple{0, rp, rt}, {1, rp, rt}, {2, rt, rp}})
        if (std::abs(dists[x][nr] - dists[x][fr] + delta) < 1e-3) return true;
      return false;
    };

    return ad::grad_check(f, {pts, pre}, h, near_kink);
  });
}

inline GradCheckEntry check_proxy_anchor(std::mt19937_64& rng, int instances,
                                         double h) {
  const std::vector<int> labels = {0, 1, 2, 0};
  return drive("proxy_anchor", rng, instances, [&](std::mt19937_64& g) {
    Tensor z = gaussian_matrix(g, 4, 3, 1.0);
    Tensor proxies = gaussian_matrix(g, 3, 3, 1.0);
    auto f = [&](Tape& t, const std::vector<Var>& vars) {
      return hier::proxy_anchor_loss(t, t.l2_normalize(vars[0]), labels,
                                     vars[1], 32.0, 0.1);
    };
    auto near_kink = [&](const std::vector<Tensor>& xs) {
      for (const Tensor& x : xs)
        for (int i = 0; i < static_cast<int>(x.shape[0]); ++i)
          if (vnorm(tensor_row(x, i)) < 1e-3) return true;
      return false;
    };
    return ad::grad_check(f, {z, proxies}, h, near_kink);
  });
}

inline GradCheckEntry check_multi_similarity(std::mt19937_64& rng,
                                             int instances, double h) {
  const std::vector<int> labels = {0, 0, 1, 1, 2};
  const int n = 5;
  const double eps = 0.1;
  return drive("multi_similarity", rng, instances, [&](std::mt19937_64& g) {
    Tensor z = gaussian_matrix(g, n, 3, 1.0);
    auto f = [&](Tape& t, const std::vector<Var>& vars) {
      return hier::multi_similarity_loss(t, t.l2_normalize(vars[0]), labels,
                                         2.0, 50.0, 0.5, eps);
    };
    // redraw when any similarity sits within 1e-3 of its mining threshold
    auto near_kink = [&](const std::vector<Tensor>& xs) {
      for (int i = 0; i < n; ++i)
        if (vnorm(tensor_row(xs[0], i)) < 1e-3) return true;
      Tape t;
      Var z2 = t.l2_normalize(t.leaf(xs[0]));
      const Tensor& sims = t.value(t.matmul_nt(z2, z2));
      for (int i = 0; i < n; ++i) {
        double min_pos = 1e300, max_neg = -1e300;
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          if (labels[j] == labels[i])
            min_pos = std::min(min_pos, sims.at(i, j));
          else
            max_neg = std::max(max_neg, sims.at(i, j));
        }
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          double margin = labels[j] == labels[i]
                              ? sims.at(i, j) - (max_neg + eps)
                              : sims.at(i, j) - (min_pos - eps);
          if (std::abs(margin) < 1e-3) return true;
        }
      }
      return false;
    };
    return ad::grad_check(f, {z}, h, near_kink);
  });
}

}  // namespace detail

// Runs all six composites with `instances` smooth instances each.  Every
// instance is an independent random draw; the whole battery is deterministic
// in `seed`.
inline std::vector<GradCheckEntry> run_gradcheck_battery(std::uint64_t seed,
                                                         int instances = 100,
                                                         double h = 1e-5) {
  if (instances < 1) throw std::invalid_argument("gradcheck: instances < 1");
  if (!(h > 0)) throw std::invalid_argument("gradcheck: step must be > 0");
  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> out;
  out.push_back(detail::check_hyp_distance(rng, instances, h));
  out.push_back(detail::check_exp_map(rng, instances, h));
  out.push_back(detail::check_clip_and_exp(rng, instances, h));
  out.push_back(detail::check_hier_loss(rng, instances, h));
  out.push_back(detail::check_proxy_anchor(rng, instances, h));
  out.push_back(detail::check_multi_similarity(rng, instances, h));
  return out;
}

}  // namespace hier
