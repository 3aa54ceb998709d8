// Command-line front end: train / eval / gradcheck / sweep / gen-data /
// export.  Every run key lives in the flat JSON config; --set patches single
// keys, --seed and --out are shorthand for the corresponding keys, and the
// effective config is echoed into every artifact a command writes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <hier/dataset.hpp>
#include <hier/evaluation.hpp>
#include <hier/gradcheck.hpp>
#include <hier/run_config.hpp>
#include <hier/trainer.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_config = true) {
  if (with_config)
    cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.sets, "override a config key, key=value");
  cmd->add_option("--seed", opts.seed, "override the run seed");
  cmd->add_option("--out", opts.out, "output directory");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Applies config file, --set pairs, then the dedicated flags onto `base`.
hier::RunConfig effective_config(const CommonOpts& opts,
                                 hier::RunConfig base = hier::RunConfig{}) {
  if (!opts.config_path.empty())
    base = hier::config_from_json(json::parse(slurp(opts.config_path)), base);
  json patch = json::object();
  for (const std::string& kv : opts.sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::string raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // unquoted strings pass through
    patch[key] = value;
  }
  if (!patch.empty()) base = hier::config_from_json(patch, base);
  json tail = json::object();
  if (opts.seed) tail["seed"] = *opts.seed;
  if (!opts.out.empty()) tail["out"] = opts.out;
  if (!tail.empty()) base = hier::config_from_json(tail, base);
  return base;
}

// Features plus, when present, the "<stem>.tree" hierarchy sidecar.
hier::Dataset load_dataset(const std::string& path) {
  hier::Dataset ds = hier::read_features(path);
  fs::path side(path);
  side.replace_extension(".tree");
  if (fs::exists(side)) ds.tree = hier::read_tree(side.string());
  return ds;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
  if (!out) throw std::runtime_error("short write: " + path);
}

void ensure_out_dir(const hier::RunConfig& cfg) {
  if (cfg.out.empty())
    throw std::runtime_error("out: output directory is required here "
                             "(--out DIR)");
  fs::create_directories(cfg.out);
}

json opt_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

// Deterministic subset used for tree extraction; full range when it fits.
std::vector<int> eval_subset(int n, int cap, uint64_t seed) {
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  if (n <= cap) return all;
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(cap);
  std::sort(all.begin(), all.end());
  return all;
}

struct EvalReport {
  json recalls = json::object();
  json dasgupta = nullptr;
  json dasgupta_random_mean = nullptr;
  json dasgupta_samples = nullptr;
  std::vector<std::vector<double>> affinity;
};

// Retrieval, hierarchy cost, and class affinity on the test split.
EvalReport evaluate(const hier::Trainer& tr, const hier::Dataset& ds) {
  const hier::RunConfig& cfg = tr.config();
  const auto& test = tr.test_split();
  EvalReport rep;

  std::vector<std::optional<double>> recs = tr.test_recalls(cfg.eval_ks);
  for (size_t i = 0; i < cfg.eval_ks.size(); ++i)
    rep.recalls["recall@" + std::to_string(cfg.eval_ks[i])] =
        opt_json(recs[i]);

  std::vector<hier::HyperbolicPoint> pts = tr.realized_points(test.features);
  rep.affinity = hier::affinity_matrix(pts, test.labels);

  if (ds.tree.node_count() > 0) {
    std::vector<int> subset =
        eval_subset(static_cast<int>(pts.size()), 256, cfg.seed);
    int n = static_cast<int>(subset.size());
    std::vector<hier::HyperbolicPoint> sub;
    for (int i : subset) sub.push_back(pts[i]);
    std::vector<std::vector<double>> weights(n, std::vector<double>(n, 0.0));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        weights[a][b] = hier::gt_weight(
            ds.tree, test.original_class[test.labels[subset[a]]],
            test.original_class[test.labels[subset[b]]]);
    hier::InducedTree tree = hier::extract_tree(sub, tr.realized_proxies());
    rep.dasgupta = hier::dasgupta_cost(tree, weights);
    std::mt19937_64 rng(cfg.seed);
    double acc = 0.0;
    for (int t = 0; t < 100; ++t)
      acc += hier::dasgupta_cost(hier::random_binary_tree(n, rng), weights);
    rep.dasgupta_random_mean = acc / 100.0;
    rep.dasgupta_samples = n;
  }
  return rep;
}

// Checkpoint -> trainer with restored parameters, optimizer, and RNG.
struct Restored {
  hier::RunConfig cfg;
  hier::Dataset ds;
  std::unique_ptr<hier::Trainer> trainer;
};

Restored restore_from(const std::string& ckpt_path, const CommonOpts& opts) {
  hier::Checkpoint ck = hier::read_checkpoint(ckpt_path);
  hier::RunConfig cfg =
      effective_config(opts, hier::config_from_string(ck.config_json));
  if (cfg.dataset.empty())
    throw std::runtime_error("dataset: checkpoint config has no dataset path "
                             "(--set dataset=PATH)");
  Restored r;
  r.cfg = cfg;
  r.ds = load_dataset(cfg.dataset);
  r.trainer = std::make_unique<hier::Trainer>(cfg, r.ds);
  r.trainer->restore(ck);
  return r;
}

int cmd_train(const CommonOpts& opts) {
  hier::RunConfig cfg = effective_config(opts);
  if (cfg.dataset.empty())
    throw std::runtime_error(
        "dataset: required config field is empty (--set dataset=PATH)");
  hier::Dataset ds = load_dataset(cfg.dataset);
  hier::Trainer tr(cfg, ds);
  hier::TrainResult res = tr.run();

  json summary;
  summary["config"] = hier::config_to_json(cfg);
  summary["epochs_run"] = tr.epochs_done();
  summary["aborted"] = res.aborted;
  summary["abort_reason"] = res.aborted ? json(res.abort_reason) : json(nullptr);
  summary["best_epoch"] = res.best_epoch >= 0 ? json(res.best_epoch) : json(nullptr);
  summary["best_recall@1"] =
      res.best_recall1 >= 0 ? json(res.best_recall1) : json(nullptr);
  json final_r1 = nullptr;
  for (auto it = res.log.rbegin(); it != res.log.rend(); ++it)
    if (it->split == "test") {
      final_r1 = opt_json(it->recall1);
      break;
    }
  summary["final_test_recall@1"] = final_r1;
  std::printf("%s\n", summary.dump().c_str());
  if (res.aborted) {
    std::fprintf(stderr, "hier: training aborted: %s\n",
                 res.abort_reason.c_str());
    return 1;
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const CommonOpts& opts) {
  Restored r = restore_from(ckpt_path, opts);
  EvalReport rep = evaluate(*r.trainer, r.ds);

  json out;
  out["config"] = hier::config_to_json(r.cfg);
  for (auto& [k, v] : rep.recalls.items()) out[k] = v;
  out["dasgupta_cost"] = rep.dasgupta;
  out["dasgupta_random_mean"] = rep.dasgupta_random_mean;
  out["dasgupta_samples"] = rep.dasgupta_samples;
  out["test_samples"] = static_cast<int>(r.trainer->test_split().labels.size());
  std::printf("%s\n", out.dump().c_str());

  if (!r.cfg.out.empty()) {
    ensure_out_dir(r.cfg);
    write_text((fs::path(r.cfg.out) / "eval.json").string(), out.dump(2) + "\n");
    hier::write_affinity_csv(rep.affinity,
                             (fs::path(r.cfg.out) / "affinity.csv").string());
  }
  return 0;
}

int cmd_export(const std::string& ckpt_path, const CommonOpts& opts) {
  Restored r = restore_from(ckpt_path, opts);
  ensure_out_dir(r.cfg);
  const auto& test = r.trainer->test_split();
  std::vector<hier::HyperbolicPoint> pts =
      r.trainer->realized_points(test.features);

  fs::path dir(r.cfg.out);
  hier::write_embeddings(pts, test.labels, test.ids,
                         (dir / "embeddings.features").string());
  hier::InducedTree tree =
      hier::extract_tree(pts, r.trainer->realized_proxies());
  hier::write_tree_edges(tree, (dir / "tree_edges.txt").string());
  hier::write_affinity_csv(hier::affinity_matrix(pts, test.labels),
                           (dir / "affinity.csv").string());
  write_text((dir / "config.json").string(),
             hier::config_to_json(r.cfg).dump(2) + "\n");

  json out;
  out["config"] = hier::config_to_json(r.cfg);
  out["written"] = {"embeddings.features", "tree_edges.txt", "affinity.csv",
                    "config.json"};
  std::printf("%s\n", out.dump().c_str());
  return 0;
}

int cmd_gradcheck(const CommonOpts& opts) {
  uint64_t seed = opts.seed ? static_cast<uint64_t>(*opts.seed) : 0;
  auto entries = hier::run_gradcheck_battery(seed, 100, 1e-5);
  bool ok = true;
  for (const auto& e : entries) {
    bool p = e.pass(1e-4);
    ok = ok && p;
    std::printf("%-18s max_rel_err %.3e  instances %3d  redraws %3d  %s\n",
                e.name.c_str(), e.max_rel_err, e.instances, e.redraws,
                p ? "ok" : "FAIL");
  }
  std::printf("gradcheck: %s (tolerance 1e-4, step 1e-5, seed %llu)\n",
              ok ? "PASS" : "FAIL", static_cast<unsigned long long>(seed));
  return ok ? 0 : 1;
}

int cmd_sweep(const std::string& param, const std::string& values_csv,
              const CommonOpts& opts) {
  static const std::vector<std::string> kParams = {"K", "proxy_count",
                                                   "lambda", "delta"};
  if (std::find(kParams.begin(), kParams.end(), param) == kParams.end())
    throw std::runtime_error(
        "sweep: param must be one of K, proxy_count, lambda, delta");
  std::vector<std::string> tokens;
  std::stringstream ss(values_csv);
  for (std::string tok; std::getline(ss, tok, ',');) tokens.push_back(tok);
  if (tokens.empty()) throw std::runtime_error("sweep: no values given");

  hier::RunConfig base = effective_config(opts);
  if (base.dataset.empty())
    throw std::runtime_error(
        "dataset: required config field is empty (--set dataset=PATH)");
  hier::Dataset ds = load_dataset(base.dataset);
  if (!base.out.empty()) fs::create_directories(base.out);

  std::ostringstream csv;
  csv << "param,value,recall@1\n";
  for (size_t i = 0; i < tokens.size(); ++i) {
    json v = json::parse(tokens[i], nullptr, false);
    if (v.is_discarded() || !v.is_number())
      throw std::runtime_error("sweep: value '" + tokens[i] +
                               "' is not a number");
    json patch = json::object();
    patch[param == "K" ? "K" : param] = v;
    hier::RunConfig cfg = hier::config_from_json(patch, base);
    cfg.out = base.out.empty()
                  ? std::string()
                  : (fs::path(base.out) / ("run_" + std::to_string(i)))
                        .string();
    hier::Trainer tr(cfg, ds);
    hier::TrainResult res = tr.run();
    if (res.aborted)
      throw std::runtime_error("sweep: run for value '" + tokens[i] +
                               "' aborted: " + res.abort_reason);
    std::optional<double> r1;
    for (auto it = res.log.rbegin(); it != res.log.rend(); ++it)
      if (it->split == "test") {
        r1 = it->recall1;
        break;
      }
    csv << param << ',' << tokens[i] << ',';
    if (r1) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", *r1);
      csv << buf;
    }
    csv << '\n';
  }
  std::fputs(csv.str().c_str(), stdout);
  if (!base.out.empty()) {
    write_text((fs::path(base.out) / "sweep.csv").string(), csv.str());
    write_text((fs::path(base.out) / "config.json").string(),
               hier::config_to_json(base).dump(2) + "\n");
  }
  return 0;
}

int cmd_gen_data(const CommonOpts& opts) {
  hier::RunConfig cfg = effective_config(opts);
  ensure_out_dir(cfg);
  hier::SyntheticSpec spec;
  spec.depth = cfg.gen_depth;
  spec.branching = cfg.gen_branching;
  spec.classes = cfg.gen_classes;
  spec.samples_per_class = cfg.gen_samples_per_class;
  spec.feature_dim = cfg.gen_feature_dim;
  spec.cluster_spread = cfg.gen_cluster_spread;
  spec.seed = cfg.seed;
  hier::Dataset ds = hier::generate_synthetic(spec);

  fs::path dir(cfg.out);
  std::string features = (dir / "synthetic.features").string();
  std::string tree = (dir / "synthetic.tree").string();
  hier::write_features(ds, features);
  hier::write_tree(ds.tree, tree);
  write_text((dir / "config.json").string(),
             hier::config_to_json(cfg).dump(2) + "\n");

  json out;
  out["config"] = hier::config_to_json(cfg);
  out["features"] = features;
  out["tree"] = tree;
  out["samples"] = ds.size();
  out["classes"] = ds.num_classes;
  out["separable"] = ds.separable;
  out["separation_margin"] = ds.separation_margin;
  std::printf("%s\n", out.dump().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical hyperbolic metric learning"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_opts, export_opts, grad_opts, sweep_opts,
      gen_opts;
  std::string eval_ckpt, export_ckpt, sweep_param, sweep_values;

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, train_opts);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  add_common(eval, eval_opts, false);

  CLI::App* exp = app.add_subcommand(
      "export", "export embeddings, tree edges, affinity CSV");
  exp->add_option("--checkpoint", export_ckpt, "checkpoint file")->required();
  add_common(exp, export_opts, false);

  CLI::App* grad =
      app.add_subcommand("gradcheck", "finite-difference gradient audit");
  add_common(grad, grad_opts);

  CLI::App* sweep =
      app.add_subcommand("sweep", "recall@1 across one hyperparameter");
  sweep->add_option("--param", sweep_param, "K, proxy_count, lambda, or delta")
      ->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required();
  add_common(sweep, sweep_opts);

  CLI::App* gen =
      app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, gen_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_opts);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_opts);
    if (exp->parsed()) return cmd_export(export_ckpt, export_opts);
    if (grad->parsed()) return cmd_gradcheck(grad_opts);
    if (sweep->parsed()) return cmd_sweep(sweep_param, sweep_values, sweep_opts);
    if (gen->parsed()) return cmd_gen_data(gen_opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hier: %s\n", e.what());
    return 1;
  }
  return 0;
}
