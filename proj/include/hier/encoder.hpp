#pragma once

// Two-layer MLP encoder with the two embedding views: the unit-sphere view
// feeds the classification loss, the ball view feeds the hierarchical
// regularizer. Both derive from the same raw output z.

#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hier/hier_loss.hpp"
#include "hier/metric_losses.hpp"
#include "hier/poincare.hpp"
#include "hier/poincare_tape.hpp"
#include "hier/tape.hpp"

namespace hier {

enum class Activation { Relu, Tanh };

struct Encoder {
  ad::Tensor w1, b1, w2, b2;
  Activation act = Activation::Relu;

  static Encoder init(int in_dim, int hidden_dim, int out_dim, Activation act,
                      std::mt19937_64& rng) {
    if (in_dim < 1 || hidden_dim < 1 || out_dim < 1)
      throw std::invalid_argument("encoder: layer sizes must be positive");
    Encoder e;
    e.act = act;
    auto fill = [&rng](ad::Tensor& t, int fan_in) {
      std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(fan_in));
      for (double& x : t.data) x = d(rng);
      t.requires_grad = true;
    };
    e.w1 = ad::Tensor::zeros({in_dim, hidden_dim});
    e.b1 = ad::Tensor::zeros({hidden_dim});
    e.w2 = ad::Tensor::zeros({hidden_dim, out_dim});
    e.b2 = ad::Tensor::zeros({out_dim});
    fill(e.w1, in_dim);
    e.b1.requires_grad = true;  // biases start at zero
    fill(e.w2, hidden_dim);
    e.b2.requires_grad = true;
    return e;
  }

  int in_dim() const { return static_cast<int>(w1.shape[0]); }
  int hidden_dim() const { return static_cast<int>(w1.shape[1]); }
  int out_dim() const { return static_cast<int>(w2.shape[1]); }

  struct Leaves {
    ad::Var w1, b1, w2, b2;
  };

  Leaves leaves(ad::Tape& tape) const {
    return Leaves{tape.leaf(w1), tape.leaf(b1), tape.leaf(w2), tape.leaf(b2)};
  }

  // Raw embeddings for a {B, in_dim} feature batch already on the tape.
  ad::Var forward(ad::Tape& tape, ad::Var features, const Leaves& v) const {
    if (tape.value(features).cols() != in_dim())
      throw std::invalid_argument("encoder: feature dimension mismatch");
    ad::Var h = tape.add_rowvec(tape.matmul(features, v.w1), v.b1);
    h = act == Activation::Relu ? tape.relu(h) : tape.tanh(h);
    return tape.add_rowvec(tape.matmul(h, v.w2), v.b2);
  }

  // Plain-value forward for one feature row; matches the tape route bitwise.
  std::vector<double> forward(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != in_dim())
      throw std::invalid_argument("encoder: feature dimension mismatch");
    int h = hidden_dim(), o = out_dim();
    std::vector<double> hid(h, 0.0), out(o, 0.0);
    for (int p = 0; p < in_dim(); ++p)
      for (int j = 0; j < h; ++j) hid[j] += x[p] * w1.at(p, j);
    for (int j = 0; j < h; ++j) {
      hid[j] += b1.data[j];
      hid[j] = act == Activation::Relu ? (hid[j] > 0 ? hid[j] : 0.0)
                                       : std::tanh(hid[j]);
    }
    for (int p = 0; p < h; ++p)
      for (int j = 0; j < o; ++j) out[j] += hid[p] * w2.at(p, j);
    for (int j = 0; j < o; ++j) out[j] += b2.data[j];
    return out;
  }
};

struct DualEmbedding {
  std::vector<double> raw;
  std::vector<double> spherical;
  HyperbolicPoint hyperbolic;
};

inline DualEmbedding dual_embed(std::vector<double> raw, double c, double r) {
  DualEmbedding e;
  double n = vnorm(raw);
  if (n == 0.0) throw std::domain_error("dual_embed: zero embedding");
  e.spherical.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) e.spherical[i] = raw[i] / n;
  e.hyperbolic = clip_and_exp(raw, r, Curvature(c));
  e.raw = std::move(raw);
  return e;
}

inline std::vector<DualEmbedding> forward(
    const Encoder& enc, const std::vector<std::vector<double>>& features,
    double c, double r) {
  std::vector<DualEmbedding> out;
  out.reserve(features.size());
  for (const auto& x : features) out.push_back(dual_embed(enc.forward(x), c, r));
  return out;
}

struct ParamGroup {
  std::string name;
  std::vector<std::pair<std::string, ad::Tensor*>> params;
  double lr_mult = 1.0;
  bool weight_decay = true;
  bool backbone = false;  // frozen during warm-up epochs
};

// Partition of every learnable tensor into the four schedule groups.
inline std::vector<ParamGroup> parameter_groups(Encoder& enc,
                                                ClassProxySet& class_proxies,
                                                HierProxySet& hier_proxies,
                                                double last_layer_mult,
                                                double class_proxy_mult,
                                                double hier_proxy_mult) {
  std::vector<ParamGroup> groups;
  groups.push_back({"backbone",
                    {{"encoder.w1", &enc.w1}, {"encoder.b1", &enc.b1}},
                    1.0,
                    true,
                    true});
  groups.push_back({"last_layer",
                    {{"encoder.w2", &enc.w2}, {"encoder.b2", &enc.b2}},
                    last_layer_mult,
                    true,
                    false});
  groups.push_back({"class_proxies",
                    {{"class_proxies", &class_proxies.vectors}},
                    class_proxy_mult,
                    false,
                    false});
  groups.push_back({"hier_proxies",
                    {{"hier_proxies", &hier_proxies.pre_images}},
                    hier_proxy_mult,
                    false,
                    false});
  for (const ParamGroup& g : groups)
    for (const auto& [name, t] : g.params)
      if (t == nullptr || !t->requires_grad)
        throw std::invalid_argument("parameter_groups: tensor '" + name +
                                    "' is not a learnable parameter");
  return groups;
}

}  // namespace hier
