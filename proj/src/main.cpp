// Experiment driver: dataset synthesis, training, probing, disentanglement
// scoring, ablations, seed sweeps, the generative-augmentation experiment,
// latent export, and gradient checking. One JSON config document drives each
// command; --config/--seed/--out are common flags where the latter two
// override the top-level keys, SWAPVAE_OUT prefixes relative output
// directories, and unknown config keys are rejected before any compute.
// Exit codes: 0 ok, 2 config error, 3 data/io error, 4 numeric divergence,
// 5 check failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "swapvae/baselines.hpp"
#include "swapvae/checkpoint.hpp"
#include "swapvae/dataset.hpp"
#include "swapvae/errors.hpp"
#include "swapvae/eval.hpp"
#include "swapvae/gradcheck.hpp"
#include "swapvae/manifest.hpp"
#include "swapvae/model.hpp"
#include "swapvae/rng.hpp"
#include "swapvae/synthdata.hpp"
#include "swapvae/trainer.hpp"

namespace {

using nlohmann::json;
using namespace swapvae;

// Substream tags owned by the driver; disjoint from the synthesis (11..13)
// and trainer (21..24) tags.
namespace cli_tag {
inline constexpr uint64_t split = 31;
inline constexpr uint64_t generate = 41;
}  // namespace cli_tag

// ---------------------------------------------------------------- config ---

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config: " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw config_error("malformed config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw config_error("config root must be a JSON object");
  return cfg;
}

// Allowed keys of each nested config section.
const std::map<std::string, std::set<std::string>>& section_keys() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"synth",
       {"seed", "n_sequences", "variance_floor", "n_coupling_blocks", "rate_gain",
        "rate_offset"}},
      {"model", {"kind", "k_c", "k_s", "hidden", "stochastic_content", "n_classes", "target"}},
      {"train", {"lr", "batch_size", "iterations", "epochs"}},
      {"loss", {"alpha", "beta", "variant"}},
      {"augmentation",
       {"drop_prob", "jitter_window", "enable_spatial", "enable_temporal", "uniform_drop"}},
      {"probe", {"lr", "weight_decay", "epochs", "seed"}},
      {"split_files", {"train", "test"}},
      {"latent_split", {"mode", "k_total", "k_c", "k_s_list"}},
      {"gradcheck", {"d", "k_c", "k_s", "batch", "hidden", "tol", "step", "max_coords"}},
  };
  return s;
}

// Rejects keys outside `allowed`; known sections recurse one level.
void check_keys(const json& cfg, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : cfg.items()) {
    if (!allowed.count(key)) throw config_error("unknown config key: " + key);
    auto it = section_keys().find(key);
    if (it == section_keys().end()) continue;
    if (!value.is_object()) throw config_error("config key '" + key + "' must be an object");
    for (const auto& [sub, ignored] : value.items())
      if (!it->second.count(sub))
        throw config_error("unknown config key: " + key + "." + sub);
  }
}

template <typename T>
T jget(const json& cfg, const std::string& key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error("config key '" + key + "' has the wrong type");
  }
}

template <typename T>
T jrequire(const json& cfg, const std::string& key) {
  if (!cfg.contains(key)) throw config_error("config key '" + key + "' is required");
  return jget<T>(cfg, key, T{});
}

template <typename T>
std::vector<T> jlist(const json& cfg, const std::string& key, std::vector<T> fallback) {
  if (!cfg.contains(key)) return fallback;
  const json& v = cfg.at(key);
  if (!v.is_array()) throw config_error("config key '" + key + "' must be an array");
  std::vector<T> out;
  for (const auto& e : v) {
    try {
      out.push_back(e.get<T>());
    } catch (const json::exception&) {
      throw config_error("config key '" + key + "' holds an element of the wrong type");
    }
  }
  return out;
}

json jsection(const json& cfg, const std::string& key) {
  return cfg.contains(key) ? cfg.at(key) : json::object();
}

// Output directory: --out/config "out", else "<command>-out"; relative paths
// land under $SWAPVAE_OUT when that is set.
std::string resolve_out(const json& cfg, const std::string& command) {
  std::filesystem::path p(jget<std::string>(cfg, "out", command + "-out"));
  if (p.is_relative())
    if (const char* root = std::getenv("SWAPVAE_OUT")) p = std::filesystem::path(root) / p;
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw data_error("cannot create output directory " + p.string() + ": " + ec.message());
  return p.string();
}

// ------------------------------------------------------------------ data ---

struct DataBundle {
  BinnedDataset ds;
  SplitIndex split;
};

struct SynthParts {
  GaussianMixtureSpec spec;
  FlowGenerator gen;
  SyntheticDataset data;
  uint64_t seed = 0;
};

SynthParts make_synth(const json& sy, uint64_t run_seed) {
  SynthParts out;
  out.seed = jget<uint64_t>(sy, "seed", run_seed);
  Rng mix_rng = Rng::derive(out.seed, rng_tag::mixture, 0);
  out.spec = sample_mixture_spec(mix_rng, jget<double>(sy, "variance_floor", 1e-3));
  out.gen = make_flow_generator(out.seed, jget<int>(sy, "n_coupling_blocks", 4),
                                jget<double>(sy, "rate_gain", 32.0),
                                jget<double>(sy, "rate_offset", 12.0));
  Rng data_rng = Rng::derive(out.seed, rng_tag::emission, 0);
  out.data = generate_dataset(out.spec, out.gen, jget<uint64_t>(sy, "n_sequences", 500),
                              data_rng);
  return out;
}

std::vector<size_t> load_row_file(const std::string& path, size_t n_rows) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open split file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty split file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "row") throw data_error("split file must start with a 'row' header: " + path);
  std::vector<size_t> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const long long v = detail::parse_int(line, line_no);
    if (v < 0 || static_cast<size_t>(v) >= n_rows)
      throw data_error("split row " + std::to_string(v) + " out of range in " + path);
    rows.push_back(static_cast<size_t>(v));
  }
  if (rows.empty()) throw data_error("split file lists no rows: " + path);
  return rows;
}

// Source: a CSV path or an inline synthesis spec, never both. Split: explicit
// row files beat a derived split; synthetic data falls back to its generation
// split, CSV data to a split derived from split_seed so every command using
// the same dataset and split_seed agrees on held-out rows.
DataBundle load_data(const json& cfg, uint64_t run_seed) {
  const bool has_csv = cfg.contains("dataset");
  const bool has_synth = cfg.contains("synth");
  if (has_csv == has_synth)
    throw config_error("config needs exactly one of 'dataset' or 'synth'");
  DataBundle out;
  if (has_csv) {
    out.ds = load_csv(jrequire<std::string>(cfg, "dataset"));
  } else {
    SynthParts parts = make_synth(cfg.at("synth"), run_seed);
    out.ds = std::move(parts.data.ds);
    out.split = std::move(parts.data.split);
  }
  if (cfg.contains("split_files")) {
    const json sf = cfg.at("split_files");
    out.split.train_rows = load_row_file(jrequire<std::string>(sf, "train"), out.ds.n());
    out.split.test_rows = load_row_file(jrequire<std::string>(sf, "test"), out.ds.n());
    std::set<size_t> train_set(out.split.train_rows.begin(), out.split.train_rows.end());
    for (size_t r : out.split.test_rows)
      if (train_set.count(r))
        throw data_error("split files overlap at row " + std::to_string(r));
  } else if (has_csv || cfg.contains("split_fraction") || cfg.contains("split_seed")) {
    Rng rng = Rng::derive(jget<uint64_t>(cfg, "split_seed", 17), cli_tag::split, 0);
    out.split = train_test_split(out.ds.n(), jget<double>(cfg, "split_fraction", 0.8), rng);
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<size_t>& rows) {
  std::vector<int> out(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
  return out;
}

// ----------------------------------------------------------------- model ---

// One trained or loaded model of any kind behind a uniform train/feature/save
// surface. "swap" exposes content/style/full feature spaces; the baselines
// expose only "full" (beta: posterior mean, supervised: trunk activations).
struct ModelBundle {
  std::string kind;  // swap | beta | supervised
  std::unique_ptr<SwapVae> swap;
  std::unique_ptr<BetaVae> beta;
  std::unique_ptr<Supervised> sup;
  std::unique_ptr<SwapVaeTrainer> swap_trainer;
  std::unique_ptr<BetaVaeTrainer> beta_trainer;
  std::unique_ptr<SupervisedTrainer> sup_trainer;

  std::vector<std::string> spaces() const {
    if (kind != "swap") return {"full"};
    std::vector<std::string> s;
    if (swap->config().k_c > 0) s.push_back("content");
    if (swap->config().k_s > 0) s.push_back("style");
    s.push_back("full");
    return s;
  }

  Matrix features(const Matrix& x, const std::string& space) {
    if (kind == "swap") {
      if (space == "content" && swap->config().k_c == 0)
        throw config_error("content space is empty (k_c = 0)");
      if (space == "style" && swap->config().k_s == 0)
        throw config_error("style space is empty (k_s = 0)");
      return swap->features(x, space);
    }
    if (space != "full")
      throw config_error("space '" + space + "' only exists for swap models");
    return kind == "beta" ? beta->features(x) : sup->hidden_features(x);
  }

  uint64_t iteration() const {
    if (kind == "swap") return swap_trainer->iteration();
    if (kind == "beta") return beta_trainer->iteration();
    return sup_trainer->iteration();
  }

  TrainResult train(const BinnedDataset& ds, const std::vector<size_t>& rows, uint64_t iters) {
    if (kind == "swap") return swap_trainer->train(ds, rows, iters);
    if (kind == "beta") return beta_trainer->train(ds, rows, iters);
    return sup_trainer->train(ds, rows, iters);
  }

  void save(const std::string& prefix) {
    if (kind == "swap")
      swap_trainer->save(prefix);
    else if (kind == "beta")
      beta_trainer->save(prefix);
    else
      sup_trainer->save(prefix);
  }

  json load(const std::string& prefix) {
    if (kind == "swap") return swap_trainer->load(prefix);
    if (kind == "beta") return beta_trainer->load(prefix);
    return sup_trainer->load(prefix);
  }
};

TrainConfig train_config_from(const json& cfg, uint64_t seed) {
  const json tj = jsection(cfg, "train");
  TrainConfig tc;
  tc.lr = jget<double>(tj, "lr", tc.lr);
  tc.batch_size = jget<size_t>(tj, "batch_size", tc.batch_size);
  tc.seed = seed;
  const json aj = jsection(cfg, "augmentation");
  tc.augmentation.drop_prob = jget<double>(aj, "drop_prob", tc.augmentation.drop_prob);
  tc.augmentation.jitter_window = jget<int>(aj, "jitter_window", tc.augmentation.jitter_window);
  tc.augmentation.enable_spatial =
      jget<bool>(aj, "enable_spatial", tc.augmentation.enable_spatial);
  tc.augmentation.enable_temporal =
      jget<bool>(aj, "enable_temporal", tc.augmentation.enable_temporal);
  tc.augmentation.uniform_drop = jget<bool>(aj, "uniform_drop", tc.augmentation.uniform_drop);
  return tc;
}

LossWeights loss_weights_from(const json& cfg) {
  const json lj = jsection(cfg, "loss");
  LossWeights w;
  w.alpha = jget<double>(lj, "alpha", w.alpha);
  w.beta = jget<double>(lj, "beta", w.beta);
  w.variant = parse_variant(jget<std::string>(lj, "variant", "full"));
  return w;
}

SupervisedTarget parse_target(const std::string& s) {
  if (s == "reach") return SupervisedTarget::reach;
  if (s == "time") return SupervisedTarget::time;
  throw config_error("unknown supervised target: " + s);
}

// Builds a fresh model of the configured kind; weights come from the seed's
// init substream. beta_vae and vanilla_vae use one unified latent of size
// k_c + k_s so capacity matches the swap model under one size config.
ModelBundle build_model(const json& cfg, const BinnedDataset& ds, uint64_t seed) {
  const json mj = jsection(cfg, "model");
  const std::string kind = jget<std::string>(mj, "kind", "swapvae");
  const size_t d = ds.d();
  const size_t hidden = jget<size_t>(mj, "hidden", 128);
  const size_t k_c = jget<size_t>(mj, "k_c", 16);
  const size_t k_s = jget<size_t>(mj, "k_s", 16);
  TrainConfig tc = train_config_from(cfg, seed);
  Rng init = Rng::derive(seed, rng_tag::model_init, 0);

  ModelBundle mb;
  if (kind == "swapvae") {
    mb.kind = "swap";
    SwapVaeConfig mc{d, k_c, k_s, hidden, jget<bool>(mj, "stochastic_content", false)};
    mb.swap = std::make_unique<SwapVae>(mc, init);
    mb.swap_trainer = std::make_unique<SwapVaeTrainer>(mb.swap.get(), tc, loss_weights_from(cfg));
    return mb;
  }
  if (cfg.contains("augmentation"))
    throw config_error("augmentation only applies to model kind 'swapvae'");
  if (kind == "beta_vae" || kind == "vanilla_vae") {
    const json lj = jsection(cfg, "loss");
    if (lj.contains("alpha") || lj.contains("variant"))
      throw config_error("only loss.beta applies to model kind 'beta_vae'");
    double beta = jget<double>(lj, "beta", 1.0);
    if (kind == "vanilla_vae") {
      if (cfg.contains("loss"))
        throw config_error("vanilla_vae fixes beta = 1; remove the loss section");
      beta = 1.0;
    }
    mb.kind = "beta";
    mb.beta = std::make_unique<BetaVae>(d, k_c + k_s, beta, init, hidden);
    mb.beta_trainer = std::make_unique<BetaVaeTrainer>(mb.beta.get(), tc);
    return mb;
  }
  if (kind == "supervised") {
    if (cfg.contains("loss"))
      throw config_error("loss weights do not apply to model kind 'supervised'");
    const auto target = parse_target(jget<std::string>(mj, "target", "reach"));
    const size_t fallback =
        target == SupervisedTarget::reach ? size_t(ds.l) : size_t(ds.t_span());
    const size_t n_classes = jget<size_t>(mj, "n_classes", fallback);
    mb.kind = "supervised";
    mb.sup = std::make_unique<Supervised>(d, n_classes, init, hidden);
    mb.sup_trainer = std::make_unique<SupervisedTrainer>(mb.sup.get(), tc, target);
    return mb;
  }
  throw config_error("unknown model kind: " + kind);
}

// Reconstructs the model recorded in a checkpoint's model-config section and
// restores its weights, optimizer moments, and counters.
ModelBundle load_model(const std::string& prefix) {
  Checkpoint ck = load_checkpoint(prefix);
  const json& mc = ck.model_config;
  if (!mc.is_object() || !mc.contains("kind"))
    throw data_error("checkpoint lacks a model config: " + prefix);
  const auto kind = mc.at("kind").get<std::string>();
  TrainConfig tc;
  tc.lr = mc.value("lr", tc.lr);
  tc.batch_size = mc.value("batch_size", tc.batch_size);
  tc.seed = mc.value("seed", uint64_t(0));
  Rng init(0);  // placeholder weights; the checkpoint overwrites them

  ModelBundle mb;
  mb.kind = kind;
  if (kind == "swap") {
    SwapVaeConfig c{mc.at("d").get<size_t>(), mc.at("k_c").get<size_t>(),
                    mc.at("k_s").get<size_t>(), mc.at("hidden").get<size_t>(),
                    mc.value("stochastic_content", false)};
    tc.augmentation.drop_prob = mc.value("drop_prob", tc.augmentation.drop_prob);
    tc.augmentation.jitter_window = mc.value("jitter_window", tc.augmentation.jitter_window);
    tc.augmentation.enable_spatial =
        mc.value("enable_spatial", tc.augmentation.enable_spatial);
    tc.augmentation.enable_temporal =
        mc.value("enable_temporal", tc.augmentation.enable_temporal);
    tc.augmentation.uniform_drop = mc.value("uniform_drop", tc.augmentation.uniform_drop);
    LossWeights w{mc.value("alpha", 1.0), mc.value("beta", 1.0),
                  parse_variant(mc.value("variant", "full"))};
    mb.swap = std::make_unique<SwapVae>(c, init);
    mb.swap_trainer = std::make_unique<SwapVaeTrainer>(mb.swap.get(), tc, w);
  } else if (kind == "beta") {
    mb.beta = std::make_unique<BetaVae>(mc.at("d").get<size_t>(), mc.at("k").get<size_t>(),
                                        mc.value("beta", 1.0), init,
                                        mc.at("hidden").get<size_t>());
    mb.beta_trainer = std::make_unique<BetaVaeTrainer>(mb.beta.get(), tc);
  } else if (kind == "supervised") {
    mb.sup = std::make_unique<Supervised>(mc.at("d").get<size_t>(),
                                          mc.at("n_classes").get<size_t>(), init,
                                          mc.at("hidden").get<size_t>());
    mb.sup_trainer = std::make_unique<SupervisedTrainer>(
        mb.sup.get(), tc, parse_target(mc.value("target", "reach")));
  } else {
    throw data_error("unknown model kind in checkpoint: " + kind);
  }
  mb.load(prefix);
  return mb;
}

// Iteration budget: exactly one of train.iterations or train.epochs, the
// latter scaled by iterations-per-epoch of the effective batch size.
uint64_t resolve_iterations(const json& cfg, size_t n_train, uint64_t fallback_epochs = 0) {
  const json tj = jsection(cfg, "train");
  const bool has_it = tj.contains("iterations");
  const bool has_ep = tj.contains("epochs");
  if (has_it && has_ep)
    throw config_error("train takes either 'iterations' or 'epochs', not both");
  if (has_it) return jget<uint64_t>(tj, "iterations", 0);
  uint64_t epochs = has_ep ? jget<uint64_t>(tj, "epochs", 0) : fallback_epochs;
  if (epochs == 0)
    throw config_error("train needs one of 'iterations' or 'epochs'");
  const size_t batch = jget<size_t>(tj, "batch_size", TrainConfig{}.batch_size);
  const size_t eff = std::min(batch, n_train);
  if (eff < 2) throw data_error("training needs at least 2 rows");
  return epochs * (n_train / eff);
}

size_t iters_per_epoch(const json& cfg, size_t n_train) {
  const size_t batch = jget<size_t>(jsection(cfg, "train"), "batch_size",
                                    TrainConfig{}.batch_size);
  const size_t eff = std::min(batch, n_train);
  return eff < 2 ? 1 : n_train / eff;
}

// --------------------------------------------------------------- metrics ---

struct MetricRow {
  std::string model, space, metric, seed;
  double value = 0.0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows,
                       RunManifest& man) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write metrics: " + path);
  out << "model,space,metric,seed,value\n";
  for (const auto& r : rows)
    out << r.model << ',' << r.space << ',' << r.metric << ',' << r.seed << ','
        << detail::format_double(r.value) << '\n';
  out.close();
  if (!out) throw data_error("short write on metrics: " + path);
  man.add_file(path);
}

json metrics_to_json(const std::vector<MetricRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"model", r.model},
                   {"space", r.space},
                   {"metric", r.metric},
                   {"seed", r.seed},
                   {"value", r.value}});
  return arr;
}

void write_json_file(const std::string& path, const json& doc, RunManifest& man) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write report: " + path);
  out << doc.dump(2) << "\n";
  out.close();
  if (!out) throw data_error("short write on report: " + path);
  man.add_file(path);
}

void finish_manifest(RunManifest& man, const std::string& out_dir) {
  const std::string path = out_dir + "/manifest.json";
  man.write(path);
  verify_manifest(path);
  std::cout << "manifest verified: " << path << "\n";
}

ProbeConfig probe_config_from(const json& cfg, uint64_t fallback_seed) {
  const json pj = jsection(cfg, "probe");
  ProbeConfig pc;
  pc.lr = jget<double>(pj, "lr", pc.lr);
  pc.weight_decay = jget<double>(pj, "weight_decay", pc.weight_decay);
  pc.epochs = jget<size_t>(pj, "epochs", pc.epochs);
  pc.seed = jget<uint64_t>(pj, "seed", fallback_seed);
  return pc;
}

// Fits direction and time probes per space on the train rows of a frozen
// representation and reports held-out accuracies.
std::map<std::string, DecodingReport> probe_spaces(ModelBundle& mb, const DataBundle& db,
                                                   const std::vector<std::string>& spaces,
                                                   const ProbeConfig& pc) {
  Matrix x_train = gather_rows(db.ds.X, db.split.train_rows);
  Matrix x_test = gather_rows(db.ds.X, db.split.test_rows);
  const auto dir_train = gather_labels(db.ds.y_dir, db.split.train_rows);
  const auto dir_test = gather_labels(db.ds.y_dir, db.split.test_rows);
  const auto time_train = gather_labels(db.ds.y_time, db.split.train_rows);
  const auto time_test = gather_labels(db.ds.y_time, db.split.test_rows);
  std::map<std::string, DecodingReport> out;
  for (const auto& space : spaces)
    out[space] = decode_report(mb.features(x_train, space), mb.features(x_test, space),
                               dir_train, dir_test, time_train, time_test, db.ds.l,
                               db.ds.t_span(), pc, space);
  return out;
}

DisentanglementReport disentangle_space(ModelBundle& mb, const DataBundle& db,
                                        const std::string& space) {
  Matrix z = mb.features(gather_rows(db.ds.X, db.split.test_rows), space);
  return disentanglement_score(z, gather_labels(db.ds.y_dir, db.split.test_rows),
                               gather_labels(db.ds.y_time, db.split.test_rows));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / double(v.size()))};
}

std::string fmt2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

// ------------------------------------------------------------- synth-gen ---

int cmd_synth_gen(const json& cfg) {
  check_keys(cfg, {"seed", "out", "synth"});
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "synth-gen");
  RunManifest man(cfg);
  SynthParts parts;
  {
    auto t = man.time_stage("generate");
    parts = make_synth(jsection(cfg, "synth"), seed);
  }
  const BinnedDataset& ds = parts.data.ds;

  const std::string csv = out + "/dataset.csv";
  save_csv(ds, csv, "synth-gen seed " + std::to_string(parts.seed));
  man.add_file(csv);
  man.add_file(csv + ".json");

  auto write_rows = [&](const std::string& name, const std::vector<size_t>& rows) {
    const std::string path = out + "/" + name;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw data_error("cannot write split file: " + path);
    f << "row\n";
    for (size_t r : rows) f << r << "\n";
    f.close();
    if (!f) throw data_error("short write on split file: " + path);
    man.add_file(path);
  };
  write_rows("train_rows.csv", parts.data.split.train_rows);
  write_rows("test_rows.csv", parts.data.split.test_rows);

  json mixture = json::array();
  for (int i = 0; i < GaussianMixtureSpec::n_components; ++i)
    mixture.push_back({{"u", parts.spec.u[i]},
                       {"mean", parts.spec.mean(i)},
                       {"variance", parts.spec.var(i)}});
  write_json_file(out + "/synth_meta.json",
                  {{"seed", parts.seed},
                   {"rows", ds.n()},
                   {"neurons", ds.d()},
                   {"directions", ds.l},
                   {"time_bins", ds.t_span()},
                   {"train_rows", parts.data.split.train_rows.size()},
                   {"test_rows", parts.data.split.test_rows.size()},
                   {"rate_gain", parts.gen.rate_gain},
                   {"rate_offset", parts.gen.rate_offset},
                   {"n_coupling_blocks", parts.gen.n_coupling_blocks},
                   {"mixture", mixture}},
                  man);
  std::cout << "dataset.csv: " << ds.n() << " rows, " << ds.d() << " neurons; split "
            << parts.data.split.train_rows.size() << "/" << parts.data.split.test_rows.size()
            << "\n";
  finish_manifest(man, out);
  return 0;
}

// ----------------------------------------------------------------- train ---

int cmd_train(const json& cfg) {
  check_keys(cfg, {"seed", "out", "dataset", "synth", "split_fraction", "split_seed",
                   "split_files", "model", "train", "loss", "augmentation", "resume"});
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "train");
  RunManifest man(cfg);

  DataBundle db;
  {
    auto t = man.time_stage("data");
    db = load_data(cfg, seed);
  }
  ModelBundle mb = build_model(cfg, db.ds, seed);
  const uint64_t target_iters = resolve_iterations(cfg, db.split.train_rows.size());
  if (cfg.contains("resume")) {
    const json loaded = mb.load(jrequire<std::string>(cfg, "resume"));
    if (loaded.value("kind", "") != mb.kind)
      throw data_error("resume checkpoint holds a '" + loaded.value("kind", "") +
                       "' model, config asks for '" + mb.kind + "'");
  }
  const uint64_t start_iter = mb.iteration();
  const uint64_t remaining = target_iters > start_iter ? target_iters - start_iter : 0;

  TrainResult result;
  {
    auto t = man.time_stage("train");
    result = mb.train(db.ds, db.split.train_rows, remaining);
  }

  const std::string prefix = out + "/checkpoint";
  mb.save(prefix);
  man.add_file(prefix + ".bin");
  man.add_file(prefix + ".json");

  const size_t ipe = iters_per_epoch(cfg, db.split.train_rows.size());
  const std::string curve = out + "/loss_curve.csv";
  {
    std::ofstream f(curve, std::ios::trunc);
    if (!f) throw data_error("cannot write loss curve: " + curve);
    f << "epoch,mean_total\n";
    for (size_t i = 0; i < result.epoch_loss.size(); ++i)
      f << start_iter / ipe + i << ',' << detail::format_double(result.epoch_loss[i]) << '\n';
    f.close();
    if (!f) throw data_error("short write on loss curve: " + curve);
  }
  man.add_file(curve);

  std::cout << mb.kind << " model: " << result.iterations_run << " iterations ("
            << start_iter << " resumed)";
  if (!result.epoch_loss.empty())
    std::cout << ", last epoch loss " << fmt2(result.epoch_loss.back());
  std::cout << "\ncheckpoint: " << prefix << "\n";
  finish_manifest(man, out);
  if (result.diverged)
    throw numeric_error("training diverged at iteration " + std::to_string(mb.iteration()) +
                        "; checkpoint holds the last finite state");
  return 0;
}

// ----------------------------------------------------------------- probe ---

int cmd_probe(const json& cfg) {
  check_keys(cfg, {"seed", "out", "dataset", "synth", "split_fraction", "split_seed",
                   "split_files", "checkpoint", "probe", "spaces"});
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "probe");
  RunManifest man(cfg);

  ModelBundle mb = load_model(jrequire<std::string>(cfg, "checkpoint"));
  DataBundle db = load_data(cfg, seed);
  const ProbeConfig pc = probe_config_from(cfg, seed);
  const auto spaces = jlist<std::string>(cfg, "spaces", mb.spaces());

  std::map<std::string, DecodingReport> reports;
  {
    auto t = man.time_stage("probe");
    reports = probe_spaces(mb, db, spaces, pc);
  }

  json rows = json::array();
  std::vector<MetricRow> metrics;
  const std::string seed_str = std::to_string(pc.seed);
  for (const auto& space : spaces) {
    const DecodingReport& r = reports.at(space);
    rows.push_back({{"space", r.space},
                    {"acc", r.acc},
                    {"delta_acc", r.delta_acc},
                    {"time_acc", r.time_acc},
                    {"n_test", r.n_test},
                    {"seed", pc.seed}});
    metrics.push_back({mb.kind, space, "dir_acc", seed_str, r.acc});
    metrics.push_back({mb.kind, space, "dir_delta_acc", seed_str, r.delta_acc});
    metrics.push_back({mb.kind, space, "time_acc", seed_str, r.time_acc});
    std::cout << space << ": dir " << fmt2(r.acc) << " (delta " << fmt2(r.delta_acc)
              << "), time " << fmt2(r.time_acc) << "\n";
  }
  write_json_file(out + "/probe_report.json",
                  {{"model", mb.kind},
                   {"seed", pc.seed},
                   {"n_test", db.split.test_rows.size()},
                   {"reports", rows},
                   {"metrics", metrics_to_json(metrics)}},
                  man);
  write_metrics_csv(out + "/metrics.csv", metrics, man);
  finish_manifest(man, out);
  return 0;
}

// ----------------------------------------------------------- disentangle ---

int cmd_disentangle(const json& cfg) {
  check_keys(cfg, {"seed", "out", "dataset", "synth", "split_fraction", "split_seed",
                   "split_files", "checkpoint", "spaces"});
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "disentangle");
  RunManifest man(cfg);

  ModelBundle mb = load_model(jrequire<std::string>(cfg, "checkpoint"));
  DataBundle db = load_data(cfg, seed);
  const auto spaces = jlist<std::string>(cfg, "spaces", {"full"});

  json rows = json::array();
  std::vector<MetricRow> metrics;
  const std::string seed_str = std::to_string(seed);
  {
    auto t = man.time_stage("disentangle");
    for (const auto& space : spaces) {
      DisentanglementReport rep = disentangle_space(mb, db, space);
      rows.push_back({{"space", space},
                      {"overall", rep.overall},
                      {"per_dim_scores", rep.per_dim_scores},
                      {"dropped_cells", rep.dropped_cells}});
      metrics.push_back({mb.kind, space, "disentanglement", seed_str, rep.overall});
      std::cout << space << ": " << fmt2(rep.overall) << " (dropped cells "
                << rep.dropped_cells << ")\n";
    }
  }
  write_json_file(out + "/disentangle_report.json",
                  {{"model", mb.kind},
                   {"seed", seed},
                   {"n_test", db.split.test_rows.size()},
                   {"reports", rows},
                   {"metrics", metrics_to_json(metrics)}},
                  man);
  write_metrics_csv(out + "/metrics.csv", metrics, man);
  finish_manifest(man, out);
  return 0;
}

// ---------------------------------------------------------------- ablate ---

struct MemberResult {
  std::string label;
  std::string kind;
  size_t k_c = 0, k_s = 0;
  uint64_t seed = 0;
  std::map<std::string, DecodingReport> by_space;
  double dis_full = 0.0;
};

// Trains one sweep member and evaluates probes on its available spaces plus
// the full-space disentanglement score. Member artifacts go to its own
// subdirectory.
MemberResult run_member(const std::string& label, ModelBundle mb, const json& cfg,
                        const DataBundle& db, uint64_t member_seed, uint64_t iters,
                        const std::string& out, RunManifest& man) {
  const uint64_t got = mb.train(db.ds, db.split.train_rows, iters).iterations_run;
  if (got < iters)
    throw numeric_error("member " + label + " seed " + std::to_string(member_seed) +
                        " diverged");
  ProbeConfig pc = probe_config_from(cfg, member_seed);
  if (!jsection(cfg, "probe").contains("seed")) pc.seed = member_seed;

  MemberResult r;
  r.label = label;
  r.kind = mb.kind;
  r.seed = member_seed;
  if (mb.kind == "swap") {
    r.k_c = mb.swap->config().k_c;
    r.k_s = mb.swap->config().k_s;
  } else if (mb.kind == "beta") {
    r.k_s = mb.beta->k();
  }
  r.by_space = probe_spaces(mb, db, mb.spaces(), pc);
  r.dis_full = disentangle_space(mb, db, "full").overall;

  const std::string dir = out + "/members/" + label + "-s" + std::to_string(member_seed);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw data_error("cannot create member directory " + dir + ": " + ec.message());
  mb.save(dir + "/checkpoint");
  man.add_file(dir + "/checkpoint.bin");
  man.add_file(dir + "/checkpoint.json");
  return r;
}

// Uniform metric view of one member; absent spaces yield quiet NaN so median
// and CSV columns stay aligned across model kinds.
std::map<std::string, double> member_metrics(const MemberResult& r) {
  auto pick = [&](const std::string& space, double DecodingReport::*field) {
    auto it = r.by_space.find(space);
    return it == r.by_space.end() ? std::nan("") : it->second.*field;
  };
  return {{"dir_full", pick("full", &DecodingReport::acc)},
          {"dir_delta_full", pick("full", &DecodingReport::delta_acc)},
          {"time_full", pick("full", &DecodingReport::time_acc)},
          {"dir_content", pick("content", &DecodingReport::acc)},
          {"dir_style", pick("style", &DecodingReport::acc)},
          {"dis_full", r.dis_full}};
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> c = {"dir_full",    "dir_delta_full", "time_full",
                                             "dir_content", "dir_style",      "dis_full"};
  return c;
}

std::string metric_space(const std::string& column) {
  if (column == "dir_content") return "content";
  if (column == "dir_style") return "style";
  return "full";
}

int cmd_ablate(const json& cfg) {
  check_keys(cfg, {"seed", "out", "dataset", "synth", "split_fraction", "split_seed",
                   "split_files", "model", "train", "loss", "augmentation", "probe", "seeds",
                   "variants", "sweep", "latent_split"});
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "ablate");
  RunManifest man(cfg);

  DataBundle db;
  {
    auto t = man.time_stage("data");
    db = load_data(cfg, seed);
  }
  const auto seeds = jlist<uint64_t>(cfg, "seeds", {seed});
  if (seeds.empty()) throw config_error("seeds must not be empty");
  const uint64_t iters = resolve_iterations(cfg, db.split.train_rows.size());
  const std::string sweep = jget<std::string>(cfg, "sweep", "variants");

  const json mj = jsection(cfg, "model");
  const size_t hidden = jget<size_t>(mj, "hidden", 128);
  const size_t base_k_c = jget<size_t>(mj, "k_c", 16);
  const size_t base_k_s = jget<size_t>(mj, "k_s", 16);
  const LossWeights base_weights = loss_weights_from(cfg);
  const TrainConfig base_tc = train_config_from(cfg, seed);

  // Members of the requested sweep: (label, k_c, k_s, ablation spec).
  struct Plan {
    std::string label;
    size_t k_c, k_s;
    AblationSpec spec;
  };
  std::vector<Plan> plans;
  if (sweep == "variants") {
    for (const auto& v : jlist<std::string>(cfg, "variants", ablation_variants()))
      plans.push_back({v, base_k_c, base_k_s,
                       make_ablation(v, base_weights, base_tc.augmentation)});
  } else if (sweep == "latent_split") {
    if (cfg.contains("variants"))
      throw config_error("the latent_split sweep varies sizes, not variants");
    const json ls = jsection(cfg, "latent_split");
    const std::string mode = jget<std::string>(ls, "mode", "fixed_total");
    AblationSpec spec{base_weights, base_tc.augmentation};
    if (mode == "fixed_total") {
      const size_t k_total = jget<size_t>(ls, "k_total", 128);
      for (size_t k_s : jlist<size_t>(ls, "k_s_list", {0, 16, 32, 64, 96})) {
        if (k_s + 1 > k_total)
          throw config_error("latent split needs k_c >= 1: k_s = " + std::to_string(k_s) +
                             " exceeds k_total = " + std::to_string(k_total));
        plans.push_back({"ks" + std::to_string(k_s), k_total - k_s, k_s, spec});
      }
    } else if (mode == "fixed_content") {
      const size_t k_c = jget<size_t>(ls, "k_c", 128);
      for (size_t k_s : jlist<size_t>(ls, "k_s_list", {32, 64, 128}))
        plans.push_back({"ks" + std::to_string(k_s), k_c, k_s, spec});
    } else {
      throw config_error("unknown latent_split mode: " + mode);
    }
  } else {
    throw config_error("unknown sweep kind: " + sweep);
  }

  std::vector<MemberResult> results;
  {
    auto t = man.time_stage("members");
    for (const auto& plan : plans)
      for (uint64_t s : seeds) {
        TrainConfig tc = base_tc;
        tc.seed = s;
        tc.augmentation = plan.spec.augmentation;
        Rng init = Rng::derive(s, rng_tag::model_init, 0);
        ModelBundle mb;
        if (plan.spec.weights.variant == Variant::vanilla_vae) {
          mb.kind = "beta";
          mb.beta = std::make_unique<BetaVae>(db.ds.d(), plan.k_c + plan.k_s, 1.0, init,
                                              hidden);
          mb.beta_trainer = std::make_unique<BetaVaeTrainer>(mb.beta.get(), tc);
        } else {
          mb.kind = "swap";
          SwapVaeConfig mc{db.ds.d(), plan.k_c, plan.k_s, hidden, false};
          mb.swap = std::make_unique<SwapVae>(mc, init);
          mb.swap_trainer =
              std::make_unique<SwapVaeTrainer>(mb.swap.get(), tc, plan.spec.weights);
        }
        results.push_back(
            run_member(plan.label, std::move(mb), cfg, db, s, iters, out, man));
        const auto m = member_metrics(results.back());
        std::cout << plan.label << " seed " << s << ": dir_full " << fmt2(m.at("dir_full"))
                  << ", time_full " << fmt2(m.at("time_full")) << ", dis "
                  << fmt2(m.at("dis_full")) << "\n";
      }
  }

  // Per-member rows plus a median row per plan when sweeping several seeds.
  json table = json::array();
  std::vector<MetricRow> metrics;
  std::ofstream csv(out + "/ablation.csv", std::ios::trunc);
  if (!csv) throw data_error("cannot write ablation table");
  csv << "label,kind,k_c,k_s,seed";
  for (const auto& c : metric_columns()) csv << ',' << c;
  csv << '\n';
  auto emit = [&](const std::string& label, const std::string& kind, size_t k_c, size_t k_s,
                  const std::string& seed_str, const std::map<std::string, double>& m) {
    csv << label << ',' << kind << ',' << k_c << ',' << k_s << ',' << seed_str;
    json jrow{{"label", label}, {"kind", kind}, {"k_c", k_c}, {"k_s", k_s},
              {"seed", seed_str}};
    for (const auto& c : metric_columns()) {
      const double v = m.at(c);
      csv << ',' << detail::format_double(v);
      if (std::isnan(v))
        jrow[c] = nullptr;
      else
        jrow[c] = v;
      if (!std::isnan(v)) metrics.push_back({label, metric_space(c), c, seed_str, v});
    }
    csv << '\n';
    table.push_back(jrow);
  };
  for (const auto& r : results)
    emit(r.label, r.kind, r.k_c, r.k_s, std::to_string(r.seed), member_metrics(r));
  if (seeds.size() > 1)
    for (const auto& plan : plans) {
      std::map<std::string, std::vector<double>> pool;
      std::string kind;
      size_t k_c = 0, k_s = 0;
      for (const auto& r : results)
        if (r.label == plan.label) {
          kind = r.kind;
          k_c = r.k_c;
          k_s = r.k_s;
          for (const auto& [k, v] : member_metrics(r))
            if (!std::isnan(v)) pool[k].push_back(v);
        }
      std::map<std::string, double> med;
      for (const auto& c : metric_columns())
        med[c] = pool.count(c) ? median_of(pool.at(c)) : std::nan("");
      emit(plan.label, kind, k_c, k_s, "median", med);
    }
  csv.close();
  if (!csv) throw data_error("short write on ablation table");
  man.add_file(out + "/ablation.csv");

  write_json_file(out + "/ablation.json",
                  {{"sweep", sweep}, {"iterations", iters}, {"rows", table}}, man);
  write_metrics_csv(out + "/metrics.csv", metrics, man);
  finish_manifest(man, out);
  return 0;
}

// -------------------------------------------------------------- generate ---

Matrix vstack(const Matrix& a, const Matrix& b) {
  require_shape(a.cols == b.cols, "vstack widths");
  Matrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + long(a.data.size()));
  return out;
}

struct ClassifierRun {
  std::unique_ptr<Supervised> model;
  std::unique_ptr<SupervisedTrainer> trainer;
  double test_acc = 0.0;
};

// Supervised classifier trained from the shared init substream; the fraction-0
// caller and the plain `train` command therefore produce bitwise-identical
// checkpoints for the same config and seed.
ClassifierRun train_classifier(const BinnedDataset& ds, const std::vector<size_t>& train_rows,
                               const std::vector<size_t>& test_rows, SupervisedTarget target,
                               size_t n_classes, size_t hidden, TrainConfig tc,
                               uint64_t epochs) {
  ClassifierRun run;
  Rng init = Rng::derive(tc.seed, rng_tag::model_init, 0);
  run.model = std::make_unique<Supervised>(ds.d(), n_classes, init, hidden);
  run.trainer = std::make_unique<SupervisedTrainer>(run.model.get(), tc, target);
  const size_t eff = std::min(tc.batch_size, train_rows.size());
  if (eff < 2) throw data_error("training needs at least 2 rows");
  const uint64_t iters = epochs * (train_rows.size() / eff);
  TrainResult res = run.trainer->train(ds, train_rows, iters);
  if (res.diverged) throw numeric_error("classifier diverged");
  Matrix x_test = gather_rows(ds.X, test_rows);
  const auto& labels = target == SupervisedTarget::reach ? ds.y_dir : ds.y_time;
  std::vector<int64_t> y(test_rows.size());
  for (size_t i = 0; i < test_rows.size(); ++i) y[i] = labels[test_rows[i]];
  run.test_acc = run.model->accuracy(x_test, y);
  return run;
}

int cmd_generate(const json& cfg) {
  check_keys(cfg, {"seed", "out", "dataset", "synth", "split_fraction", "split_seed",
                   "split_files", "checkpoint", "train", "model", "fractions",
                   "noise_scale"});
  const json mj = jsection(cfg, "model");
  for (const auto& key : {"kind", "k_c", "k_s", "stochastic_content"})
    if (mj.contains(key))
      throw config_error(std::string("generate trains a supervised classifier; 'model.") +
                         key + "' does not apply");
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "generate");
  RunManifest man(cfg);

  ModelBundle mb = load_model(jrequire<std::string>(cfg, "checkpoint"));
  if (mb.kind != "swap")
    throw config_error("generate needs a swap-model checkpoint, got kind '" + mb.kind + "'");
  DataBundle db = load_data(cfg, seed);

  const double noise_scale = jget<double>(cfg, "noise_scale", 0.2);
  auto fractions = jlist<double>(cfg, "fractions", {0.5, 1.0, 2.0});
  std::sort(fractions.begin(), fractions.end());
  for (size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0))
      throw config_error("fractions must be > 0 (the fraction-0 baseline is implicit)");
    if (i > 0 && fractions[i] == fractions[i - 1])
      throw config_error("duplicate fraction: " + std::to_string(fractions[i]));
  }

  const auto target = parse_target(jget<std::string>(mj, "target", "reach"));
  const size_t n_classes = jget<size_t>(
      mj, "n_classes",
      target == SupervisedTarget::reach ? size_t(db.ds.l) : size_t(db.ds.t_span()));
  const size_t hidden = jget<size_t>(mj, "hidden", 128);
  const json tj = jsection(cfg, "train");
  if (tj.contains("iterations"))
    throw config_error("generate scales training by epochs; 'train.iterations' does not apply");
  const uint64_t epochs = jget<uint64_t>(tj, "epochs", 400);
  TrainConfig tc;
  tc.lr = jget<double>(tj, "lr", tc.lr);
  tc.batch_size = jget<size_t>(tj, "batch_size", tc.batch_size);
  tc.seed = seed;

  ClassifierRun baseline;
  {
    auto t = man.time_stage("baseline");
    baseline = train_classifier(db.ds, db.split.train_rows, db.split.test_rows, target,
                                n_classes, hidden, tc, epochs);
  }
  baseline.trainer->save(out + "/baseline_checkpoint");
  man.add_file(out + "/baseline_checkpoint.bin");
  man.add_file(out + "/baseline_checkpoint.json");
  std::cout << "baseline (fraction 0): " << fmt2(baseline.test_acc) << "\n";

  const size_t n_train = db.split.train_rows.size();
  json rows = json::array();
  rows.push_back({{"fraction", 0.0},
                  {"n_generated", 0},
                  {"accuracy", baseline.test_acc},
                  {"delta", 0.0}});

  std::ofstream csv(out + "/generate_report.csv", std::ios::trunc);
  if (!csv) throw data_error("cannot write generate report");
  csv << "fraction,n_generated,accuracy,delta\n";
  csv << "0,0," << detail::format_double(baseline.test_acc) << ",0\n";

  {
    auto t = man.time_stage("augmented");
    for (double f : fractions) {
      // Virtual rows keep the source row's content (hence its direction
      // label) and perturb only the style mean; their epsilon stream is keyed
      // by the fraction so members are independent of list composition.
      const auto m = static_cast<size_t>(std::llround(f * double(n_train)));
      Matrix src(m, db.ds.d());
      std::vector<size_t> sources(m);
      for (size_t i = 0; i < m; ++i) {
        sources[i] = db.split.train_rows[i % n_train];
        for (size_t j = 0; j < db.ds.d(); ++j) src(i, j) = db.ds.X(sources[i], j);
      }
      Rng gen_rng = Rng::derive(seed, cli_tag::generate,
                                static_cast<uint64_t>(std::llround(f * 1e6)));
      Matrix virt = mb.swap->generate_virtual(src, noise_scale, gen_rng);

      BinnedDataset aug = db.ds;
      aug.X = vstack(db.ds.X, virt);
      int64_t next_trial = *std::max_element(db.ds.trial_id.begin(), db.ds.trial_id.end()) + 1;
      std::vector<size_t> aug_train = db.split.train_rows;
      for (size_t i = 0; i < m; ++i) {
        aug.y_dir.push_back(db.ds.y_dir[sources[i]]);
        aug.y_time.push_back(db.ds.y_time[sources[i]]);
        aug.trial_id.push_back(next_trial++);
        aug_train.push_back(db.ds.n() + i);
      }
      aug.validate();

      ClassifierRun run = train_classifier(aug, aug_train, db.split.test_rows, target,
                                           n_classes, hidden, tc, epochs);
      const double delta = run.test_acc - baseline.test_acc;
      rows.push_back({{"fraction", f},
                      {"n_generated", m},
                      {"accuracy", run.test_acc},
                      {"delta", delta}});
      csv << detail::format_double(f) << ',' << m << ','
          << detail::format_double(run.test_acc) << ',' << detail::format_double(delta)
          << '\n';
      std::cout << "fraction " << detail::format_double(f) << ": " << fmt2(run.test_acc)
                << " (delta " << fmt2(delta) << ", " << m << " generated)\n";
    }
  }
  csv.close();
  if (!csv) throw data_error("short write on generate report");
  man.add_file(out + "/generate_report.csv");

  write_json_file(out + "/generate_report.json",
                  {{"noise_scale", noise_scale},
                   {"epochs", epochs},
                   {"target", target == SupervisedTarget::reach ? "reach" : "time"},
                   {"baseline_accuracy", baseline.test_acc},
                   {"rows", rows}},
                  man);
  finish_manifest(man, out);
  return 0;
}

// ----------------------------------------------------------- sweep-seeds ---

int cmd_sweep_seeds(const json& cfg) {
  check_keys(cfg, {"seed", "out", "dataset", "synth", "split_fraction", "split_seed",
                   "split_files", "model", "train", "loss", "augmentation", "probe", "seeds",
                   "n_seeds", "mode"});
  if (jsection(cfg, "probe").contains("seed"))
    throw config_error("sweep-seeds reseeds probes per member; remove probe.seed");
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "sweep-seeds");
  RunManifest man(cfg);

  std::vector<uint64_t> seeds = jlist<uint64_t>(cfg, "seeds", {});
  const auto n_seeds = jget<uint64_t>(cfg, "n_seeds", seeds.empty() ? 3 : seeds.size());
  if (seeds.empty())
    for (uint64_t i = 0; i < n_seeds; ++i) seeds.push_back(seed + i);
  else if (seeds.size() != n_seeds)
    throw config_error("n_seeds disagrees with the seeds list length");
  const std::string mode = jget<std::string>(cfg, "mode", "whole");
  if (mode != "whole" && mode != "evaluation")
    throw config_error("sweep-seeds mode must be 'whole' or 'evaluation'");

  DataBundle db;
  {
    auto t = man.time_stage("data");
    db = load_data(cfg, seed);
  }
  const uint64_t iters = resolve_iterations(cfg, db.split.train_rows.size());

  // evaluation mode trains one model and reseeds only the probes; whole mode
  // retrains everything per member seed. Data stays fixed in both modes.
  ModelBundle fixed;
  if (mode == "evaluation") {
    auto t = man.time_stage("train");
    fixed = build_model(cfg, db.ds, seed);
    if (fixed.train(db.ds, db.split.train_rows, iters).iterations_run < iters)
      throw numeric_error("training diverged");
    fixed.save(out + "/checkpoint");
    man.add_file(out + "/checkpoint.bin");
    man.add_file(out + "/checkpoint.json");
  }

  json members = json::array();
  std::vector<MetricRow> metrics;
  std::map<std::pair<std::string, std::string>, std::vector<double>> pool;
  {
    auto t = man.time_stage("members");
    for (uint64_t s : seeds) {
      ModelBundle own;
      ModelBundle* mb = &fixed;
      if (mode == "whole") {
        own = build_model(cfg, db.ds, s);
        if (own.train(db.ds, db.split.train_rows, iters).iterations_run < iters)
          throw numeric_error("member seed " + std::to_string(s) + " diverged");
        mb = &own;
      }
      ProbeConfig pc = probe_config_from(cfg, s);
      auto reports = probe_spaces(*mb, db, mb->spaces(), pc);
      const double dis = disentangle_space(*mb, db, "full").overall;

      json mrow{{"seed", s}};
      const std::string seed_str = std::to_string(s);
      auto put = [&](const std::string& space, const std::string& metric, double v) {
        metrics.push_back({mb->kind, space, metric, seed_str, v});
        pool[{space, metric}].push_back(v);
        mrow[space + "." + metric] = v;
      };
      for (const auto& [space, r] : reports) {
        put(space, "dir_acc", r.acc);
        put(space, "dir_delta_acc", r.delta_acc);
        put(space, "time_acc", r.time_acc);
      }
      put("full", "disentanglement", dis);
      members.push_back(mrow);
      std::cout << "seed " << s << ": dir_full "
                << fmt2(reports.at("full").acc) << ", time_full "
                << fmt2(reports.at("full").time_acc) << ", dis " << fmt2(dis) << "\n";
    }
  }

  json summary = json::array();
  for (const auto& [key, values] : pool) {
    const auto [mean, sd] = mean_sd(values);
    summary.push_back(
        {{"space", key.first}, {"metric", key.second}, {"mean", mean}, {"sd", sd}});
    metrics.push_back({"summary", key.first, key.second, "mean", mean});
    metrics.push_back({"summary", key.first, key.second, "sd", sd});
    std::cout << key.first << " " << key.second << ": " << fmt2(mean) << " +- " << fmt2(sd)
              << "\n";
  }
  write_json_file(out + "/sweep.json",
                  {{"mode", mode}, {"seeds", seeds}, {"iterations", iters},
                   {"members", members}, {"summary", summary}},
                  man);
  write_metrics_csv(out + "/metrics.csv", metrics, man);
  finish_manifest(man, out);
  return 0;
}

// ------------------------------------------------------------- gradcheck ---

// Central-difference battery over every loss variant on a small instance.
// Sampling noise (views, epsilon, labels) is frozen per member so each
// closure is deterministic.
int cmd_gradcheck(const json& cfg) {
  check_keys(cfg, {"seed", "out", "gradcheck"});
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "gradcheck");
  RunManifest man(cfg);

  const json gj = jsection(cfg, "gradcheck");
  const size_t d = jget<size_t>(gj, "d", 10);
  const size_t k_c = jget<size_t>(gj, "k_c", 4);
  const size_t k_s = jget<size_t>(gj, "k_s", 4);
  const size_t batch = jget<size_t>(gj, "batch", 8);
  const size_t hidden = jget<size_t>(gj, "hidden", 16);
  GradCheckConfig gc;
  gc.tol = jget<double>(gj, "tol", 1e-4);
  gc.step = jget<double>(gj, "step", 1e-5);
  gc.max_coords_per_param = jget<size_t>(gj, "max_coords", 0);
  gc.seed = seed;

  Rng data_rng = Rng::derive(seed, rng_tag::model_init, 99);
  auto counts = [&](size_t rows, size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = std::floor(data_rng.uniform() * 5.0);
    return m;
  };
  const Matrix x1 = counts(batch, d);
  const Matrix x2 = counts(batch, d);
  const Matrix eps1 = draw_normal(data_rng, batch, k_s);
  const Matrix eps2 = draw_normal(data_rng, batch, k_s);
  const Matrix eps_full = draw_normal(data_rng, batch, k_c + k_s);
  std::vector<int64_t> labels(batch);
  for (auto& y : labels) y = int64_t(data_rng.below(4));

  struct Member {
    std::string name;
    std::function<GradCheckReport()> check;
  };
  std::vector<Member> members;
  uint64_t init_idx = 0;
  for (const auto& variant : {"full", "no_l2", "no_swap", "swap_only"}) {
    LossWeights w = make_ablation(variant, LossWeights{1.0, 1.0, Variant::full},
                                  AugmentationConfig{})
                        .weights;
    members.push_back({variant, [&, w, idx = init_idx++]() {
                         Rng init = Rng::derive(seed, rng_tag::model_init, idx);
                         SwapVae model(SwapVaeConfig{d, k_c, k_s, hidden, false}, init);
                         auto loss = [&]() {
                           zero_grads(model.params());
                           return model.loss_total(x1, x2, w, eps1, eps2);
                         };
                         return grad_check(loss, model.params(), gc);
                       }});
  }
  members.push_back({"vanilla_vae", [&, idx = init_idx++]() {
                       Rng init = Rng::derive(seed, rng_tag::model_init, idx);
                       SwapVae model(SwapVaeConfig{d, 0, k_c + k_s, hidden, false}, init);
                       LossWeights w{0.0, 1.0, Variant::vanilla_vae};
                       auto loss = [&]() {
                         zero_grads(model.params());
                         return model.loss_total(x1, x1, w, eps_full, eps_full);
                       };
                       return grad_check(loss, model.params(), gc);
                     }});
  members.push_back({"beta_vae", [&, idx = init_idx++]() {
                       Rng init = Rng::derive(seed, rng_tag::model_init, idx);
                       BetaVae model(d, k_c + k_s, 1.5, init, hidden);
                       auto loss = [&]() {
                         zero_grads(model.params());
                         return model.loss(x1, eps_full);
                       };
                       return grad_check(loss, model.params(), gc);
                     }});
  members.push_back({"supervised", [&, idx = init_idx++]() {
                       Rng init = Rng::derive(seed, rng_tag::model_init, idx);
                       Supervised model(d, 4, init, hidden);
                       auto loss = [&]() {
                         zero_grads(model.params());
                         return model.loss(x1, labels);
                       };
                       return grad_check(loss, model.params(), gc);
                     }});

  bool all_pass = true;
  json rows = json::array();
  {
    auto t = man.time_stage("gradcheck");
    for (const auto& member : members) {
      GradCheckReport rep = member.check();
      all_pass = all_pass && rep.pass();
      rows.push_back({{"variant", member.name},
                      {"coords_checked", rep.coords_checked},
                      {"max_rel_err", rep.max_rel_err},
                      {"offenders", rep.offenders.size()},
                      {"pass", rep.pass()}});
      std::cout << member.name << ": max rel err " << std::scientific
                << std::setprecision(2) << rep.max_rel_err << std::defaultfloat << " over "
                << rep.coords_checked << " coords -> " << (rep.pass() ? "PASS" : "FAIL")
                << "\n";
    }
  }
  write_json_file(out + "/gradcheck_report.json",
                  {{"tol", gc.tol}, {"step", gc.step}, {"pass", all_pass}, {"rows", rows}},
                  man);
  finish_manifest(man, out);
  return all_pass ? 0 : 5;
}

// -------------------------------------------------------- export-latents ---

int cmd_export_latents(const json& cfg) {
  check_keys(cfg, {"seed", "out", "dataset", "synth", "checkpoint"});
  const uint64_t seed = jget<uint64_t>(cfg, "seed", 1);
  const std::string out = resolve_out(cfg, "export-latents");
  RunManifest man(cfg);

  ModelBundle mb = load_model(jrequire<std::string>(cfg, "checkpoint"));
  DataBundle db = load_data(cfg, seed);

  // swap exports [content | style mean]; the baselines export their single
  // representation under the style columns (they have no content block).
  Matrix zc(db.ds.n(), 0), zs(db.ds.n(), 0);
  {
    auto t = man.time_stage("encode");
    if (mb.kind == "swap") {
      if (mb.swap->config().k_c > 0) zc = mb.features(db.ds.X, "content");
      if (mb.swap->config().k_s > 0) zs = mb.features(db.ds.X, "style");
    } else {
      zs = mb.features(db.ds.X, "full");
    }
  }

  const std::string path = out + "/latents.csv";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot write latents: " + path);
  f << "row_id,trial_id,direction,time_bin";
  for (size_t j = 0; j < zc.cols; ++j) f << ",zc" << j;
  for (size_t j = 0; j < zs.cols; ++j) f << ",zs" << j;
  f << '\n';
  for (size_t i = 0; i < db.ds.n(); ++i) {
    f << i << ',' << db.ds.trial_id[i] << ',' << db.ds.y_dir[i] << ',' << db.ds.y_time[i];
    for (size_t j = 0; j < zc.cols; ++j) f << ',' << detail::format_double(zc(i, j));
    for (size_t j = 0; j < zs.cols; ++j) f << ',' << detail::format_double(zs(i, j));
    f << '\n';
  }
  f.close();
  if (!f) throw data_error("short write on latents: " + path);
  man.add_file(path);
  std::cout << "latents.csv: " << db.ds.n() << " rows, " << zc.cols << " content + "
            << zs.cols << " style columns\n";
  finish_manifest(man, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"content/style latent swap experiments"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const json&);
  };
  const std::vector<Command> commands = {
      {"synth-gen", "synthesize a benchmark dataset CSV with split files", cmd_synth_gen},
      {"train", "train a model and write a checkpoint plus loss curve", cmd_train},
      {"probe", "linear decoding accuracies per latent space", cmd_probe},
      {"disentangle", "per-dimension label-specificity scores", cmd_disentangle},
      {"ablate", "loss-variant or latent-split sweep table", cmd_ablate},
      {"generate", "classifier accuracy with virtual training samples", cmd_generate},
      {"sweep-seeds", "mean and sd of metrics across seeds", cmd_sweep_seeds},
      {"gradcheck", "finite-difference check of every loss variant", cmd_gradcheck},
      {"export-latents", "write per-row latent codes as CSV", cmd_export_latents},
  };

  std::string config_path, out_override;
  uint64_t seed_override = 0;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sc = app.add_subcommand(c.name, c.help);
    sc->add_option("--config", config_path, "JSON config document");
    sc->add_option("--seed", seed_override, "override the config seed");
    sc->add_option("--out", out_override, "override the output directory");
    subs[c.name] = sc;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    json cfg = config_path.empty() ? json::object() : load_config_file(config_path);
    const CLI::App* parsed = app.get_subcommands().front();
    if (parsed->count("--seed") > 0) cfg["seed"] = seed_override;
    if (parsed->count("--out") > 0) cfg["out"] = out_override;
    for (const auto& c : commands)
      if (parsed->get_name() == c.name) return c.run(cfg);
    throw config_error("unknown command: " + parsed->get_name());
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
