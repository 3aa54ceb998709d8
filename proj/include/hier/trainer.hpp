#pragma once

// AdamW, the training loop, and run persistence. One mt19937_64 stream drives
// everything after the class-disjoint split, so a fixed seed fixes the whole
// run; the regularizer path consumes no randomness when it is disabled, which
// keeps lambda=0 runs and regularizer-off runs on identical streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hier/dataset.hpp"
#include "hier/encoder.hpp"
#include "hier/evaluation.hpp"
#include "hier/hier_loss.hpp"
#include "hier/metric_losses.hpp"
#include "hier/mining.hpp"
#include "hier/run_config.hpp"
#include "hier/tape.hpp"

namespace hier {

// ---- optimizer ---------------------------------------------------------------

struct TensorMoments {
  std::vector<double> m, v;
  int64_t steps = 0;
};

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, TensorMoments> slots;

  // Decoupled-decay update over the parameter groups. Frozen groups are
  // skipped entirely: no moment update, no decay, no step count.
  void step(const std::vector<ParamGroup>& groups,
            const std::map<std::string, std::vector<double>>& grads, double lr,
            double weight_decay, bool freeze_backbone) {
    for (const ParamGroup& g : groups) {
      if (freeze_backbone && g.backbone) continue;
      double lr_eff = lr * g.lr_mult;
      for (const auto& [name, tensor] : g.params) {
        auto it = grads.find(name);
        if (it == grads.end())
          throw std::logic_error("adamw: no gradient supplied for '" + name + "'");
        const std::vector<double>& grad = it->second;
        if (grad.size() != tensor->data.size())
          throw std::logic_error("adamw: gradient shape mismatch for '" + name + "'");
        for (double x : grad)
          if (!std::isfinite(x))
            throw std::domain_error("adamw: non-finite gradient in '" + name + "'");

        TensorMoments& s = slots[name];
        if (s.m.empty()) {
          s.m.assign(grad.size(), 0.0);
          s.v.assign(grad.size(), 0.0);
        }
        ++s.steps;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.steps));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.steps));
        for (size_t i = 0; i < grad.size(); ++i) {
          s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * grad[i];
          s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * grad[i] * grad[i];
          double mhat = s.m[i] / bc1;
          double vhat = s.v[i] / bc2;
          tensor->data[i] -= lr_eff * mhat / (std::sqrt(vhat) + eps);
          if (g.weight_decay && weight_decay > 0)
            tensor->data[i] -= lr_eff * weight_decay * tensor->data[i];
        }
      }
    }
  }
};

// ---- checkpoint container ------------------------------------------------------

struct Checkpoint {
  uint32_t version = 1;
  std::string config_json;  // canonical echo of the run configuration
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
  std::string rng_state;

  const ad::Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {
inline constexpr char kCheckpointMagic[8] = {'H', 'I', 'E', 'R',
                                             'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline void put_f64(std::string& buf, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_le(buf, bits);
}

inline double get_f64(const std::string& buf, size_t& pos) {
  uint64_t bits = get_le<uint64_t>(buf, pos);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}
}  // namespace detail

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string buf;
  buf.append(detail::kCheckpointMagic, 8);
  detail::put_le<uint32_t>(buf, ck.version);
  detail::put_le<uint64_t>(buf, ck.config_json.size());
  buf.append(ck.config_json);
  detail::put_le<uint32_t>(buf, static_cast<uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    detail::put_le<uint32_t>(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    detail::put_le<uint32_t>(buf, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) detail::put_le<uint32_t>(buf, static_cast<uint32_t>(d));
    for (double x : t.data) detail::put_f64(buf, x);
  }
  detail::put_le<uint64_t>(buf, ck.rng_state.size());
  buf.append(ck.rng_state);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw parse_error("cannot write file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw parse_error("short write: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::string buf = detail::read_all(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), detail::kCheckpointMagic, 8) != 0)
    throw parse_error("checkpoint: bad magic");
  size_t pos = 8;
  Checkpoint ck;
  ck.version = detail::get_le<uint32_t>(buf, pos);
  if (ck.version != detail::kCheckpointVersion)
    throw parse_error("checkpoint: unsupported version " +
                      std::to_string(ck.version));
  uint64_t clen = detail::get_le<uint64_t>(buf, pos);
  if (pos + clen > buf.size()) throw parse_error("checkpoint: truncated");
  ck.config_json = buf.substr(pos, clen);
  pos += clen;
  uint32_t count = detail::get_le<uint32_t>(buf, pos);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = detail::get_le<uint32_t>(buf, pos);
    if (pos + nlen > buf.size()) throw parse_error("checkpoint: truncated");
    std::string name = buf.substr(pos, nlen);
    pos += nlen;
    uint32_t rank = detail::get_le<uint32_t>(buf, pos);
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint32_t dim = detail::get_le<uint32_t>(buf, pos);
      shape.push_back(static_cast<int64_t>(dim));
      numel *= dim;
    }
    std::vector<double> data(static_cast<size_t>(numel));
    for (double& x : data) x = detail::get_f64(buf, pos);
    ad::Tensor t(std::move(shape), std::move(data));
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  uint64_t rlen = detail::get_le<uint64_t>(buf, pos);
  if (pos + rlen > buf.size()) throw parse_error("checkpoint: truncated");
  ck.rng_state = buf.substr(pos, rlen);
  pos += rlen;
  if (pos != buf.size()) throw parse_error("checkpoint: trailing bytes");
  return ck;
}

// ---- metrics log ----------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  std::string split;
  std::optional<double> recall1, recall2, recall4;
  std::optional<double> loss_ml, loss_hier_x, loss_hier_p;
  std::optional<double> norm_pair, norm_triple;
};

inline nlohmann::json record_to_json(const EpochRecord& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["recall@1"] = opt(r.recall1);
  j["recall@2"] = opt(r.recall2);
  j["recall@4"] = opt(r.recall4);
  j["loss_ml"] = opt(r.loss_ml);
  j["loss_hier_x"] = opt(r.loss_hier_x);
  j["loss_hier_p"] = opt(r.loss_hier_p);
  j["mean_proxy_norm_pair"] = opt(r.norm_pair);
  j["mean_proxy_norm_triple"] = opt(r.norm_triple);
  return j;
}

struct TrainResult {
  std::vector<EpochRecord> log;
  bool aborted = false;
  std::string abort_reason;
  double best_recall1 = -1.0;
  int best_epoch = -1;
};

// ---- trainer ---------------------------------------------------------------------

class Trainer {
 public:
  struct SplitData {
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
    std::vector<uint64_t> ids;
    std::vector<int> original_class;
  };

  struct Batch {
    std::vector<int> rows;  // indices into the train split
  };

  struct StepOutcome {
    double total = 0.0;
    double ml = 0.0;
    std::optional<double> hier_x, hier_p;
    TripletBatch tx, tp;
    std::vector<LcaAssignment> ax, ap;
  };

  Trainer(RunConfig cfg, const Dataset& data) : cfg_(std::move(cfg)) {
    validate_config(cfg_);
    if (data.num_classes < 2)
      throw std::invalid_argument("trainer: dataset needs >= 2 classes");
    ClassSplit split = split_by_class(data, cfg_.split_fraction, cfg_.seed);
    fill_split(train_, data, split.train);
    fill_split(test_, data, split.test);

    rng_.seed(cfg_.seed);
    encoder_ = Encoder::init(data.feature_dim, cfg_.hidden_dim, cfg_.embed_dim,
                             cfg_.activation, rng_);
    class_proxies_ = ClassProxySet::init(
        static_cast<int>(train_.original_class.size()), cfg_.embed_dim,
        cfg_.class_proxy_init_std, rng_);
    hier_proxies_ = HierProxySet::init(cfg_.proxy_count, cfg_.embed_dim,
                                       cfg_.hier_proxy_init_std, rng_);
    geom_ = HierGeometry{cfg_.hier_space, cfg_.c, cfg_.r};
  }

  const RunConfig& config() const { return cfg_; }
  const SplitData& train_split() const { return train_; }
  const SplitData& test_split() const { return test_; }
  Encoder& encoder() { return encoder_; }
  ClassProxySet& class_proxies() { return class_proxies_; }
  HierProxySet& hier_proxies() { return hier_proxies_; }
  AdamW& optimizer() { return adam_; }
  std::mt19937_64& rng() { return rng_; }
  int epochs_done() const { return epochs_done_; }

  bool hier_active() const { return cfg_.hier_enabled && cfg_.lambda != 0.0; }

  // One optimization step over the given train rows: forward, mine, sample
  // ancestors, total loss, backward, AdamW. The outcome carries the mined
  // triplets and sampled assignments so the loss can be re-evaluated
  // deterministically after the update.
  StepOutcome train_step(const Batch& batch) {
    StepOutcome plan;
    if (hier_active()) {
      plan.tx = mine_sample_triplets(batch);
      plan.tp = mine_proxy_triplets();
    }
    ad::Tape tape;
    Wired w = wire_loss(tape, batch, plan.tx, plan.tp, nullptr, nullptr);
    StepOutcome out = std::move(w.outcome);
    tape.backward(w.total);

    std::map<std::string, std::vector<double>> grads;
    for (const auto& [name, var] : w.leaves) grads[name] = tape.grad(var);
    auto groups = parameter_groups(encoder_, class_proxies_, hier_proxies_,
                                   cfg_.last_layer_lr_mult,
                                   cfg_.class_proxy_lr_mult,
                                   cfg_.hier_proxy_lr_mult);
    adam_.step(groups, grads, cfg_.lr, cfg_.weight_decay,
               epochs_done_ < cfg_.warmup_epochs);
    return out;
  }

  // Deterministic loss of the current parameters on a fixed batch, replaying
  // the triplets and ancestor assignments of a previous step. Consumes no
  // randomness and performs no update.
  double loss_with(const Batch& batch, const StepOutcome& plan) {
    ad::Tape tape;
    Wired w = wire_loss(tape, batch, plan.tx, plan.tp, &plan.ax, &plan.ap);
    return tape.scalar_value(w.total);
  }

  // Ball (or sphere) realizations of the encoder output for arbitrary rows.
  std::vector<std::vector<double>> realize_rows(
      const std::vector<std::vector<double>>& feats) const {
    std::vector<std::vector<double>> out;
    out.reserve(feats.size());
    for (const auto& x : feats) out.push_back(geom_.realize(encoder_.forward(x)));
    return out;
  }

  std::vector<HyperbolicPoint> realized_proxies() const {
    std::vector<HyperbolicPoint> out;
    for (int p = 0; p < hier_proxies_.count(); ++p)
      out.push_back(make_point(geom_.realize(proxy_pre_image(p)),
                               Curvature(cfg_.c)));
    return out;
  }

  std::vector<HyperbolicPoint> realized_points(
      const std::vector<std::vector<double>>& feats) const {
    std::vector<HyperbolicPoint> out;
    for (auto& coords : realize_rows(feats))
      out.push_back(make_point(std::move(coords), Curvature(cfg_.c)));
    return out;
  }

  // Test-split retrieval quality in the regularizer space; ks too large for
  // the split come back unset.
  std::vector<std::optional<double>> test_recalls(const std::vector<int>& ks) const {
    int n = static_cast<int>(test_.features.size());
    std::vector<std::optional<double>> out(ks.size());
    if (n < 2) return out;
    std::vector<std::vector<double>> pts = realize_rows(test_.features);
    std::vector<int> valid;
    std::vector<size_t> where;
    for (size_t i = 0; i < ks.size(); ++i)
      if (ks[i] < n) {
        valid.push_back(ks[i]);
        where.push_back(i);
      }
    if (valid.empty()) return out;
    std::vector<double> rec = recall_at_k_with(
        n, test_.labels, valid,
        [this, &pts](int a, int b) { return geom_.distance(pts[a], pts[b]); });
    for (size_t i = 0; i < valid.size(); ++i) out[where[i]] = rec[i];
    return out;
  }

  TrainResult run() {
    TrainResult result;
    bool to_disk = !cfg_.out.empty();
    std::filesystem::path dir(cfg_.out);
    if (to_disk) {
      std::filesystem::create_directories(dir);
      std::ofstream cfg_out(dir / "config.json", std::ios::trunc);
      cfg_out << config_to_json(cfg_).dump(2) << '\n';
      if (!cfg_out) throw parse_error("cannot write config echo");
    }

    for (int epoch = epochs_done_; epoch < cfg_.epochs; ++epoch) {
      EpochRecord train_rec;
      train_rec.epoch = epoch;
      train_rec.split = "train";
      double ml_sum = 0, hx_sum = 0, hp_sum = 0;
      int steps = 0, hx_steps = 0, hp_steps = 0;
      double pair_norm_sum = 0, triple_norm_sum = 0;
      int64_t assign_count = 0;

      std::vector<int> order(train_.features.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::shuffle(order.begin(), order.end(), rng_);

      try {
        size_t bs = static_cast<size_t>(cfg_.batch_size);
        for (size_t at = 0; at < order.size(); at += bs) {
          Batch batch;
          for (size_t i = at; i < std::min(order.size(), at + bs); ++i)
            batch.rows.push_back(order[i]);
          StepOutcome out = train_step(batch);
          ml_sum += out.ml;
          ++steps;
          if (out.hier_x) {
            hx_sum += *out.hier_x;
            ++hx_steps;
          }
          if (out.hier_p) {
            hp_sum += *out.hier_p;
            ++hp_steps;
          }
          for (const auto* as : {&out.ax, &out.ap})
            for (const LcaAssignment& a : *as) {
              pair_norm_sum += realized_norm(a.rho_pair);
              triple_norm_sum += realized_norm(a.rho_triple);
              ++assign_count;
            }
        }
      } catch (const std::domain_error& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        if (to_disk) {
          std::ofstream diag(dir / "abort.txt", std::ios::trunc);
          diag << "aborted in epoch " << epoch << ": " << e.what() << '\n';
        }
        return result;
      }

      epochs_done_ = epoch + 1;
      if (steps > 0) train_rec.loss_ml = ml_sum / steps;
      if (hx_steps > 0) train_rec.loss_hier_x = hx_sum / hx_steps;
      if (hp_steps > 0) train_rec.loss_hier_p = hp_sum / hp_steps;
      if (assign_count > 0) {
        train_rec.norm_pair = pair_norm_sum / static_cast<double>(assign_count);
        train_rec.norm_triple = triple_norm_sum / static_cast<double>(assign_count);
      }

      EpochRecord test_rec;
      test_rec.epoch = epoch;
      test_rec.split = "test";
      std::vector<std::optional<double>> rec = test_recalls({1, 2, 4});
      test_rec.recall1 = rec[0];
      test_rec.recall2 = rec[1];
      test_rec.recall4 = rec[2];

      result.log.push_back(train_rec);
      result.log.push_back(test_rec);

      if (test_rec.recall1 && *test_rec.recall1 > result.best_recall1) {
        result.best_recall1 = *test_rec.recall1;
        result.best_epoch = epoch;
        if (to_disk) save((dir / "checkpoint_best.bin").string());
      }
      if (to_disk) {
        save((dir / "checkpoint_last.bin").string());
        write_metrics(result.log, (dir / "metrics.ndjson").string());
      }
    }

    if (to_disk) save((dir / "checkpoint_final.bin").string());
    return result;
  }

  void write_metrics(const std::vector<EpochRecord>& log,
                     const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw parse_error("cannot write file: " + path);
    nlohmann::json head;
    head["config"] = config_to_json(cfg_);
    out << head.dump() << '\n';
    for (const EpochRecord& r : log) out << record_to_json(r).dump() << '\n';
    if (!out) throw parse_error("short write: " + path);
  }

  // ---- persistence ----

  Checkpoint snapshot() const {
    Checkpoint ck;
    ck.config_json = config_dump(cfg_);
    auto put = [&ck](const std::string& name, const ad::Tensor& t) {
      ck.tensors.emplace_back(name, t);
    };
    put("encoder.w1", encoder_.w1);
    put("encoder.b1", encoder_.b1);
    put("encoder.w2", encoder_.w2);
    put("encoder.b2", encoder_.b2);
    put("class_proxies", class_proxies_.vectors);
    put("hier_proxies", hier_proxies_.pre_images);
    for (const auto& [name, s] : adam_.slots) {
      ad::Tensor m = ad::Tensor::vector(s.m);
      ad::Tensor v = ad::Tensor::vector(s.v);
      put("adam." + name + ".m", m);
      put("adam." + name + ".v", v);
      put("adam." + name + ".steps",
          ad::Tensor::scalar(static_cast<double>(s.steps)));
    }
    put("trainer.epochs_done",
        ad::Tensor::scalar(static_cast<double>(epochs_done_)));
    std::ostringstream rs;
    rs << rng_;
    ck.rng_state = rs.str();
    return ck;
  }

  void save(const std::string& path) const { write_checkpoint(snapshot(), path); }

  void restore(const Checkpoint& ck) {
    auto take = [&ck](const std::string& name, ad::Tensor& into) {
      const ad::Tensor* t = ck.find(name);
      if (!t) throw parse_error("checkpoint: missing tensor '" + name + "'");
      if (t->shape != into.shape)
        throw parse_error("checkpoint: shape mismatch for '" + name + "'");
      into.data = t->data;
    };
    take("encoder.w1", encoder_.w1);
    take("encoder.b1", encoder_.b1);
    take("encoder.w2", encoder_.w2);
    take("encoder.b2", encoder_.b2);
    take("class_proxies", class_proxies_.vectors);
    take("hier_proxies", hier_proxies_.pre_images);
    adam_.slots.clear();
    for (const auto& [name, t] : ck.tensors) {
      if (name.rfind("adam.", 0) != 0) continue;
      std::string rest = name.substr(5);
      auto dot = rest.rfind('.');
      std::string param = rest.substr(0, dot);
      std::string field = rest.substr(dot + 1);
      TensorMoments& s = adam_.slots[param];
      if (field == "m") s.m = t.data;
      else if (field == "v") s.v = t.data;
      else if (field == "steps") s.steps = static_cast<int64_t>(t.data.at(0));
      else throw parse_error("checkpoint: unknown optimizer field '" + name + "'");
    }
    const ad::Tensor* ep = ck.find("trainer.epochs_done");
    if (!ep) throw parse_error("checkpoint: missing tensor 'trainer.epochs_done'");
    epochs_done_ = static_cast<int>(ep->data.at(0));
    std::istringstream rs(ck.rng_state);
    rs >> rng_;
    if (!rs) throw parse_error("checkpoint: bad rng state");
  }

 private:
  struct Wired {
    ad::Var total;
    StepOutcome outcome;
    std::vector<std::pair<std::string, ad::Var>> leaves;
  };

  static void fill_split(SplitData& dst, const Dataset& data,
                         const SplitView& view) {
    dst.labels = view.labels;
    dst.original_class = view.original_class;
    for (int row : view.sample_indices) {
      dst.features.push_back(data.feature_row(row));
      dst.ids.push_back(data.ids[row]);
    }
  }

  std::vector<double> proxy_pre_image(int p) const {
    const ad::Tensor& t = hier_proxies_.pre_images;
    return std::vector<double>(t.data.begin() + p * t.shape[1],
                               t.data.begin() + (p + 1) * t.shape[1]);
  }

  double realized_norm(int p) const {
    return vnorm(geom_.realize(proxy_pre_image(p)));
  }

  // Value-route realizations of a batch, for mining and LCA logits.
  std::vector<std::vector<double>> batch_realized(const Batch& batch) const {
    std::vector<std::vector<double>> pts;
    pts.reserve(batch.rows.size());
    for (int row : batch.rows)
      pts.push_back(geom_.realize(encoder_.forward(train_.features[row])));
    return pts;
  }

  TripletBatch mine_sample_triplets(const Batch& batch) {
    int b = static_cast<int>(batch.rows.size());
    if (b < 2) return TripletBatch{TripletKind::Samples, {}};
    std::vector<std::vector<double>> pts = batch_realized(batch);
    int k = std::min(cfg_.K, b - 1);
    NeighborIndex idx = knn_with(b, k, [this, &pts](int i, int j) {
      return geom_.distance(pts[i], pts[j]);
    });
    return build_triplets(reciprocal_knn(idx), b, rng_, TripletKind::Samples);
  }

  TripletBatch mine_proxy_triplets() {
    int p = hier_proxies_.count();
    std::vector<std::vector<double>> pts;
    pts.reserve(p);
    for (int q = 0; q < p; ++q) pts.push_back(geom_.realize(proxy_pre_image(q)));
    int k = std::min(cfg_.K, p - 1);
    NeighborIndex idx = knn_with(p, k, [this, &pts](int i, int j) {
      return geom_.distance(pts[i], pts[j]);
    });
    return build_triplets(reciprocal_knn(idx), p, rng_, TripletKind::Proxies);
  }

  // Builds the full loss graph for one batch on the given tape. forced_ax /
  // forced_ap non-null replay stored LCA assignments instead of sampling.
  Wired wire_loss(ad::Tape& tape, const Batch& batch, const TripletBatch& tx,
                  const TripletBatch& tp,
                  const std::vector<LcaAssignment>* forced_ax,
                  const std::vector<LcaAssignment>* forced_ap) {
    Wired w;
    int b = static_cast<int>(batch.rows.size());
    if (b < 1) throw std::invalid_argument("train_step: empty batch");

    Encoder::Leaves lv = encoder_.leaves(tape);
    w.leaves = {{"encoder.w1", lv.w1},
                {"encoder.b1", lv.b1},
                {"encoder.w2", lv.w2},
                {"encoder.b2", lv.b2}};

    ad::Tensor feats = ad::Tensor::zeros({b, encoder_.in_dim()});
    std::vector<int> labels(b);
    for (int i = 0; i < b; ++i) {
      const std::vector<double>& row = train_.features[batch.rows[i]];
      std::copy(row.begin(), row.end(),
                feats.data.begin() + i * encoder_.in_dim());
      labels[i] = train_.labels[batch.rows[i]];
    }
    ad::Var z = encoder_.forward(tape, tape.constant(std::move(feats)), lv);
    ad::Var spherical = tape.l2_normalize(z);

    ad::Var cp = tape.leaf(class_proxies_.vectors);
    w.leaves.emplace_back("class_proxies", cp);
    ad::Var ml =
        cfg_.ml_loss == MlLoss::ProxyAnchor
            ? proxy_anchor_loss(tape, spherical, labels, cp, cfg_.pa_alpha,
                                cfg_.pa_margin)
            : multi_similarity_loss(tape, spherical, labels, cfg_.ms_alpha,
                                    cfg_.ms_beta, cfg_.ms_base, cfg_.ms_eps);
    w.outcome.ml = tape.scalar_value(ml);
    ad::Var total = ml;

    ad::Var hp = tape.leaf(hier_proxies_.pre_images);
    w.leaves.emplace_back("hier_proxies", hp);

    if (hier_active() && (!tx.triples.empty() || !tp.triples.empty())) {
      // lazily realized tape nodes for batch points and proxies
      std::vector<ad::Var> point_cache(b), proxy_cache(hier_proxies_.count());
      auto point_at = [&](int i) {
        if (!point_cache[i].valid())
          point_cache[i] = geom_.realize(tape, tape.row(z, i));
        return point_cache[i];
      };
      auto proxy_at = [&](int p) {
        if (!proxy_cache[p].valid())
          proxy_cache[p] = geom_.realize(tape, tape.row(hp, p));
        return proxy_cache[p];
      };

      std::vector<std::vector<double>> proxy_pts;
      std::vector<double> proxy_norms;
      for (int p = 0; p < hier_proxies_.count(); ++p) {
        proxy_pts.push_back(geom_.realize(proxy_pre_image(p)));
        proxy_norms.push_back(vnorm(proxy_pts.back()));
      }

      LcaSampler sampler{&rng_, cfg_.lca_noise, cfg_.lca_noise_domain};
      ad::Var hier_total{};

      if (!tx.triples.empty()) {
        std::vector<std::vector<double>> pts = batch_realized(batch);
        std::vector<std::vector<double>> dist(b);
        for (int i = 0; i < b; ++i)
          for (const auto& pp : proxy_pts)
            dist[i].push_back(geom_.distance(pts[i], pp));
        HierBatchResult rx = hier_loss_batch(
            tape, tx, point_at, proxy_at, dist, proxy_norms, cfg_.delta,
            cfg_.reduction, geom_, sampler, forced_ax);
        w.outcome.hier_x = tape.scalar_value(rx.loss);
        w.outcome.ax = std::move(rx.assignments);
        hier_total = rx.loss;
      }
      if (!tp.triples.empty()) {
        std::vector<std::vector<double>> dist(hier_proxies_.count());
        for (int q = 0; q < hier_proxies_.count(); ++q)
          for (const auto& pp : proxy_pts)
            dist[q].push_back(geom_.distance(proxy_pts[q], pp));
        HierBatchResult rp = hier_loss_batch(
            tape, tp, proxy_at, proxy_at, dist, proxy_norms, cfg_.delta,
            cfg_.reduction, geom_, sampler, forced_ap);
        w.outcome.hier_p = tape.scalar_value(rp.loss);
        w.outcome.ap = std::move(rp.assignments);
        hier_total = hier_total.valid() ? tape.add(hier_total, rp.loss) : rp.loss;
      }
      if (hier_total.valid())
        total = tape.add(total, tape.scale(hier_total, cfg_.lambda));
    }

    w.outcome.tx = tx;
    w.outcome.tp = tp;
    w.total = total;
    w.outcome.total = tape.scalar_value(total);
    return w;
  }

  RunConfig cfg_;
  SplitData train_, test_;
  std::mt19937_64 rng_;
  Encoder encoder_;
  ClassProxySet class_proxies_;
  HierProxySet hier_proxies_;
  HierGeometry geom_;
  AdamW adam_;
  int epochs_done_ = 0;
};

}  // namespace hier
