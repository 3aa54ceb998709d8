#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hier/poincare.hpp"
#include "hier/tape.hpp"

namespace testutil {

inline std::vector<double> gaussian_vec(std::mt19937_64& g, size_t n,
                                        double stddev = 1.0) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<double> v(n);
  for (double& x : v) x = d(g);
  return v;
}

// Sample the way the artifact produces points: clip a Gaussian tangent to
// radius r and exponential-map it.
inline hier::HyperbolicPoint random_ball_point(std::mt19937_64& g, size_t dim,
                                               double c = 0.1, double r = 2.3) {
  return hier::clip_and_exp(gaussian_vec(g, dim), r, hier::Curvature(c));
}

inline hier::ad::Tensor tensor1d(std::vector<double> v) {
  return hier::ad::Tensor::vector(std::move(v));
}

inline double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
