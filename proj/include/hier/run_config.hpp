#pragma once

// Flat run configuration. One JSON object drives training, evaluation, and
// data generation; the same canonical dump is echoed into checkpoints and
// artifacts so every output names the settings that produced it.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hier/encoder.hpp"
#include "hier/hier_loss.hpp"

namespace hier {

enum class MlLoss { ProxyAnchor, MultiSimilarity };

struct RunConfig {
  // geometry and regularizer
  double c = 0.1;
  double r = 2.3;
  int K = 20;
  int proxy_count = 512;
  double lambda = 1.0;
  double delta = 0.1;
  bool hier_enabled = true;
  HierSpace hier_space = HierSpace::Hyperbolic;
  bool lca_noise = true;
  NoiseDomain lca_noise_domain = NoiseDomain::Value;
  Reduction reduction = Reduction::Mean;
  double hier_proxy_init_std = 0.05;

  // classification loss
  MlLoss ml_loss = MlLoss::ProxyAnchor;
  double pa_alpha = 32.0;
  double pa_margin = 0.1;
  double ms_alpha = 2.0;
  double ms_beta = 50.0;
  double ms_base = 0.5;
  double ms_eps = 0.1;
  double class_proxy_init_std = 0.3;

  // model
  int hidden_dim = 64;
  int embed_dim = 16;
  Activation activation = Activation::Relu;

  // optimization
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int epochs = 30;
  int warmup_epochs = 1;
  int batch_size = 32;
  uint64_t seed = 0;
  double last_layer_lr_mult = 1.0;
  double class_proxy_lr_mult = 1e4;
  double hier_proxy_lr_mult = 1.0;

  // data
  std::string dataset;        // feature file path
  std::string out;            // artifact directory
  double split_fraction = 0.5;
  std::vector<int> eval_ks = {1, 2, 4};

  // synthetic generation (gen-data command)
  int gen_depth = 3;
  int gen_branching = 2;
  int gen_classes = 8;
  int gen_samples_per_class = 200;
  int gen_feature_dim = 32;
  double gen_cluster_spread = 0.1;
};

namespace detail {

inline std::string enum_to_string(MlLoss v) {
  return v == MlLoss::ProxyAnchor ? "proxy_anchor" : "multi_similarity";
}
inline std::string enum_to_string(HierSpace v) {
  return v == HierSpace::Hyperbolic ? "hyperbolic" : "spherical";
}
inline std::string enum_to_string(NoiseDomain v) {
  return v == NoiseDomain::Value ? "value" : "log";
}
inline std::string enum_to_string(Reduction v) {
  return v == Reduction::Mean ? "mean" : "sum";
}
inline std::string enum_to_string(Activation v) {
  return v == Activation::Relu ? "relu" : "tanh";
}

template <class E>
E enum_from_string(const std::string& s, const std::string& key);

template <>
inline MlLoss enum_from_string(const std::string& s, const std::string& key) {
  if (s == "proxy_anchor") return MlLoss::ProxyAnchor;
  if (s == "multi_similarity") return MlLoss::MultiSimilarity;
  throw std::invalid_argument("config: bad value '" + s + "' for " + key);
}
template <>
inline HierSpace enum_from_string(const std::string& s, const std::string& key) {
  if (s == "hyperbolic") return HierSpace::Hyperbolic;
  if (s == "spherical") return HierSpace::Spherical;
  throw std::invalid_argument("config: bad value '" + s + "' for " + key);
}
template <>
inline NoiseDomain enum_from_string(const std::string& s, const std::string& key) {
  if (s == "value") return NoiseDomain::Value;
  if (s == "log") return NoiseDomain::Log;
  throw std::invalid_argument("config: bad value '" + s + "' for " + key);
}
template <>
inline Reduction enum_from_string(const std::string& s, const std::string& key) {
  if (s == "mean") return Reduction::Mean;
  if (s == "sum") return Reduction::Sum;
  throw std::invalid_argument("config: bad value '" + s + "' for " + key);
}
template <>
inline Activation enum_from_string(const std::string& s, const std::string& key) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("config: bad value '" + s + "' for " + key);
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["c"] = c.c;
  j["r"] = c.r;
  j["K"] = c.K;
  j["proxy_count"] = c.proxy_count;
  j["lambda"] = c.lambda;
  j["delta"] = c.delta;
  j["hier_enabled"] = c.hier_enabled;
  j["hier_space"] = detail::enum_to_string(c.hier_space);
  j["lca_noise"] = c.lca_noise;
  j["lca_noise_domain"] = detail::enum_to_string(c.lca_noise_domain);
  j["reduction"] = detail::enum_to_string(c.reduction);
  j["hier_proxy_init_std"] = c.hier_proxy_init_std;
  j["ml_loss"] = detail::enum_to_string(c.ml_loss);
  j["pa_alpha"] = c.pa_alpha;
  j["pa_margin"] = c.pa_margin;
  j["ms_alpha"] = c.ms_alpha;
  j["ms_beta"] = c.ms_beta;
  j["ms_base"] = c.ms_base;
  j["ms_eps"] = c.ms_eps;
  j["class_proxy_init_std"] = c.class_proxy_init_std;
  j["hidden_dim"] = c.hidden_dim;
  j["embed_dim"] = c.embed_dim;
  j["activation"] = detail::enum_to_string(c.activation);
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup_epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["last_layer_lr_mult"] = c.last_layer_lr_mult;
  j["class_proxy_lr_mult"] = c.class_proxy_lr_mult;
  j["hier_proxy_lr_mult"] = c.hier_proxy_lr_mult;
  j["dataset"] = c.dataset;
  j["out"] = c.out;
  j["split_fraction"] = c.split_fraction;
  j["eval_ks"] = c.eval_ks;
  j["gen_depth"] = c.gen_depth;
  j["gen_branching"] = c.gen_branching;
  j["gen_classes"] = c.gen_classes;
  j["gen_samples_per_class"] = c.gen_samples_per_class;
  j["gen_feature_dim"] = c.gen_feature_dim;
  j["gen_cluster_spread"] = c.gen_cluster_spread;
  return j;
}

// Canonical text form: sorted keys, no whitespace. This exact string is what
// checkpoints embed.
inline std::string config_dump(const RunConfig& c) {
  return config_to_json(c).dump();
}

inline void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (!(c.c > 0) || !std::isfinite(c.c)) fail("c must be positive");
  if (!(c.r > 0)) fail("r must be positive");
  if (c.K < 1) fail("K must be >= 1");
  if (c.proxy_count < 2) fail("proxy_count must be >= 2");
  if (c.lambda < 0) fail("lambda must be >= 0");
  if (c.delta < 0) fail("delta must be >= 0");
  if (!(c.lr > 0)) fail("lr must be positive");
  if (c.weight_decay < 0) fail("weight_decay must be >= 0");
  if (c.epochs < 0) fail("epochs must be >= 0");
  if (c.warmup_epochs < 0) fail("warmup_epochs must be >= 0");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (c.hidden_dim < 1 || c.embed_dim < 1) fail("model dims must be >= 1");
  if (!(c.split_fraction > 0 && c.split_fraction < 1))
    fail("split_fraction must lie in (0,1)");
  if (c.eval_ks.empty()) fail("eval_ks must not be empty");
  for (int k : c.eval_ks)
    if (k < 1) fail("eval_ks entries must be >= 1");
  if (!(c.hier_proxy_init_std > 0) || !(c.class_proxy_init_std > 0))
    fail("proxy init stddev must be positive");
  if (!(c.pa_alpha > 0) || !(c.ms_alpha > 0) || !(c.ms_beta > 0))
    fail("loss scale parameters must be positive");
}

// Applies the keys present in j on top of defaults (or `base`), rejecting
// unknown keys by name.
inline RunConfig config_from_json(const nlohmann::json& j,
                                  RunConfig base = RunConfig{}) {
  if (!j.is_object()) throw std::invalid_argument("config: expected an object");
  RunConfig c = base;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "c") c.c = value.get<double>();
      else if (key == "r") c.r = value.get<double>();
      else if (key == "K") c.K = value.get<int>();
      else if (key == "proxy_count") c.proxy_count = value.get<int>();
      else if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "delta") c.delta = value.get<double>();
      else if (key == "hier_enabled") c.hier_enabled = value.get<bool>();
      else if (key == "hier_space")
        c.hier_space = detail::enum_from_string<HierSpace>(value.get<std::string>(), key);
      else if (key == "lca_noise") c.lca_noise = value.get<bool>();
      else if (key == "lca_noise_domain")
        c.lca_noise_domain = detail::enum_from_string<NoiseDomain>(value.get<std::string>(), key);
      else if (key == "reduction")
        c.reduction = detail::enum_from_string<Reduction>(value.get<std::string>(), key);
      else if (key == "hier_proxy_init_std") c.hier_proxy_init_std = value.get<double>();
      else if (key == "ml_loss")
        c.ml_loss = detail::enum_from_string<MlLoss>(value.get<std::string>(), key);
      else if (key == "pa_alpha") c.pa_alpha = value.get<double>();
      else if (key == "pa_margin") c.pa_margin = value.get<double>();
      else if (key == "ms_alpha") c.ms_alpha = value.get<double>();
      else if (key == "ms_beta") c.ms_beta = value.get<double>();
      else if (key == "ms_base") c.ms_base = value.get<double>();
      else if (key == "ms_eps") c.ms_eps = value.get<double>();
      else if (key == "class_proxy_init_std") c.class_proxy_init_std = value.get<double>();
      else if (key == "hidden_dim") c.hidden_dim = value.get<int>();
      else if (key == "embed_dim") c.embed_dim = value.get<int>();
      else if (key == "activation")
        c.activation = detail::enum_from_string<Activation>(value.get<std::string>(), key);
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "warmup_epochs") c.warmup_epochs = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else if (key == "last_layer_lr_mult") c.last_layer_lr_mult = value.get<double>();
      else if (key == "class_proxy_lr_mult") c.class_proxy_lr_mult = value.get<double>();
      else if (key == "hier_proxy_lr_mult") c.hier_proxy_lr_mult = value.get<double>();
      else if (key == "dataset") c.dataset = value.get<std::string>();
      else if (key == "out") c.out = value.get<std::string>();
      else if (key == "split_fraction") c.split_fraction = value.get<double>();
      else if (key == "eval_ks") c.eval_ks = value.get<std::vector<int>>();
      else if (key == "gen_depth") c.gen_depth = value.get<int>();
      else if (key == "gen_branching") c.gen_branching = value.get<int>();
      else if (key == "gen_classes") c.gen_classes = value.get<int>();
      else if (key == "gen_samples_per_class") c.gen_samples_per_class = value.get<int>();
      else if (key == "gen_feature_dim") c.gen_feature_dim = value.get<int>();
      else if (key == "gen_cluster_spread") c.gen_cluster_spread = value.get<double>();
      else
        throw std::invalid_argument("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config: bad value type for '" + key + "'");
    }
  }
  validate_config(c);
  return c;
}

inline RunConfig config_from_string(const std::string& text,
                                    RunConfig base = RunConfig{}) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw std::invalid_argument("config: invalid JSON");
  return config_from_json(j, std::move(base));
}

}  // namespace hier
