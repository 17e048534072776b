#include "frl/config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "frl/scoring.hpp"

namespace frl {

using nlohmann::json;

namespace {

// read a field if present, erasing it so leftovers can be flagged
template <typename T>
void take(json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    out = it->get<T>();
    j.erase(it);
  }
}

void expect_empty(const json& j, const std::string& where) {
  if (!j.empty())
    throw std::invalid_argument("config: unknown key '" + j.begin().key() + "' in " + where);
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  freq.validate();
  scorer_from_string(scorer);  // throws on unknown names
  if (train.epochs < 1 || train.batch_size < 1)
    throw std::invalid_argument("config: train.epochs and train.batch_size must be positive");
  if (train.lr < 0.0) throw std::invalid_argument("config: train.lr must be >= 0");
  if (eval.iwae_k < 1) throw std::invalid_argument("config: eval.iwae_k must be >= 1");
  if (eval.bins < 2) throw std::invalid_argument("config: eval.bins must be >= 2");
  if (eval.workers < 1) throw std::invalid_argument("config: eval.workers must be >= 1");
  if (scorer == "frl" && !model.augmented)
    throw std::invalid_argument("config: the frl scorer needs model.augmented=true");
  if (scorer == "ic" && model.augmented)
    throw std::invalid_argument("config: the ic scorer needs a plain model (model.augmented=false)");
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["model"] = {{"family", cfg.model.family},
                {"latent_dim", cfg.model.latent_dim},
                {"layers", cfg.model.layers},
                {"filters", cfg.model.filters},
                {"hidden", cfg.model.hidden},
                {"kernel", cfg.model.kernel},
                {"quant_levels", cfg.model.quant_levels},
                {"augmented", cfg.model.augmented}};
  j["freq"] = {{"method", freq_method_name(cfg.freq.method)},
               {"kernel_size", cfg.freq.kernel_size},
               {"sigma", cfg.freq.sigma},
               {"fft_radius", cfg.freq.fft_radius},
               {"haar_levels", cfg.freq.haar_levels}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"lr_decay_every", cfg.train.lr_decay_every},
                {"lr_decay", cfg.train.lr_decay}};
  j["eval"] = {{"iwae_k", cfg.eval.iwae_k}, {"bins", cfg.eval.bins}, {"workers", cfg.eval.workers}};
  j["scorer"] = cfg.scorer;
  j["seed"] = cfg.seed;
  j["manifest"] = cfg.manifest;
  j["out_dir"] = cfg.out_dir;
  j["complexity_per_dim"] = cfg.complexity_per_dim;
  return j;
}

ExperimentConfig config_from_json(const json& src) {
  ExperimentConfig cfg;
  json j = src;
  if (auto it = j.find("model"); it != j.end()) {
    json m = *it;
    take(m, "family", cfg.model.family);
    take(m, "latent_dim", cfg.model.latent_dim);
    take(m, "layers", cfg.model.layers);
    take(m, "filters", cfg.model.filters);
    take(m, "hidden", cfg.model.hidden);
    take(m, "kernel", cfg.model.kernel);
    take(m, "quant_levels", cfg.model.quant_levels);
    take(m, "augmented", cfg.model.augmented);
    expect_empty(m, "model");
    j.erase(it);
  }
  if (auto it = j.find("freq"); it != j.end()) {
    json f = *it;
    std::string method = freq_method_name(cfg.freq.method);
    take(f, "method", method);
    cfg.freq.method = freq_method_from_string(method);
    take(f, "kernel_size", cfg.freq.kernel_size);
    take(f, "sigma", cfg.freq.sigma);
    take(f, "fft_radius", cfg.freq.fft_radius);
    take(f, "haar_levels", cfg.freq.haar_levels);
    expect_empty(f, "freq");
    j.erase(it);
  }
  if (auto it = j.find("train"); it != j.end()) {
    json t = *it;
    take(t, "epochs", cfg.train.epochs);
    take(t, "batch_size", cfg.train.batch_size);
    take(t, "lr", cfg.train.lr);
    take(t, "lr_decay_every", cfg.train.lr_decay_every);
    take(t, "lr_decay", cfg.train.lr_decay);
    expect_empty(t, "train");
    j.erase(it);
  }
  if (auto it = j.find("eval"); it != j.end()) {
    json e = *it;
    take(e, "iwae_k", cfg.eval.iwae_k);
    take(e, "bins", cfg.eval.bins);
    take(e, "workers", cfg.eval.workers);
    expect_empty(e, "eval");
    j.erase(it);
  }
  take(j, "scorer", cfg.scorer);
  take(j, "seed", cfg.seed);
  take(j, "manifest", cfg.manifest);
  take(j, "out_dir", cfg.out_dir);
  take(j, "complexity_per_dim", cfg.complexity_per_dim);
  j.erase("data");  // informational block written by train snapshots
  expect_empty(j, "config root");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  // manifest paths are relative to the config file's directory
  if (!cfg.manifest.empty() && std::filesystem::path(cfg.manifest).is_relative())
    cfg.manifest = (std::filesystem::path(path).parent_path() / cfg.manifest).string();
  return cfg;
}

void apply_override(json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + spec + "' is not of the form key.path=value");
  std::string key = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  json* node = &j;
  size_t pos = 0;
  while (true) {
    const size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (part.empty()) throw std::invalid_argument("override '" + spec + "' has an empty path part");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest: " + path + " is not valid JSON: " + e.what());
  }
  const auto base = std::filesystem::path(path).parent_path();
  auto parse_entry = [&](const json& src, const std::string& where) {
    ManifestEntry e;
    json m = src;
    take(m, "name", e.name);
    take(m, "kind", e.kind);
    take(m, "path", e.path);
    take(m, "synth", e.synth);
    take(m, "count", e.count);
    take(m, "limit", e.limit);
    expect_empty(m, "manifest entry " + where);
    if (e.name.empty()) throw std::invalid_argument("manifest: entry " + where + " needs a name");
    if (e.kind == "idx" || e.kind == "ppm_dir") {
      if (e.path.empty())
        throw std::invalid_argument("manifest: entry " + e.name + " needs a path");
      if (std::filesystem::path(e.path).is_relative()) e.path = (base / e.path).string();
      if (!std::filesystem::exists(e.path))
        throw std::runtime_error("manifest: dataset path does not exist: " + e.path);
    } else if (e.kind == "synth") {
      if (e.synth != "noise" && e.synth != "constant")
        throw std::invalid_argument("manifest: entry " + e.name + " has unknown synth kind '" +
                                    e.synth + "'");
      if (e.count < 1) throw std::invalid_argument("manifest: synth count must be positive");
    } else {
      throw std::invalid_argument("manifest: entry " + e.name + " has unknown kind '" + e.kind +
                                  "' (expected idx, ppm_dir or synth)");
    }
    return e;
  };
  if (!j.contains("train") || !j.contains("id_test") || !j.contains("ood"))
    throw std::invalid_argument("manifest: needs train, id_test and ood entries");
  Manifest m;
  m.train = parse_entry(j["train"], "train");
  m.id_test = parse_entry(j["id_test"], "id_test");
  for (const auto& o : j["ood"]) m.ood.push_back(parse_entry(o, "ood"));
  if (m.ood.empty()) throw std::invalid_argument("manifest: ood list is empty");
  return m;
}

Dataset load_entry(const ManifestEntry& e, uint64_t seed, int target_h, int target_w,
                   int target_c) {
  Dataset ds;
  if (e.kind == "idx") {
    ds = load_idx(e.path, e.name, e.limit);
  } else if (e.kind == "ppm_dir") {
    ds = load_ppm_dir(e.path, e.name);
    if (e.limit > 0 && static_cast<int64_t>(ds.images.size()) > e.limit)
      ds.images.resize(static_cast<size_t>(e.limit));
  } else {
    const int h = target_h > 0 ? target_h : 28;
    const int w = target_w > 0 ? target_w : 28;
    const int c = target_c > 0 ? target_c : 1;
    ds = synth_ood(e.synth, e.count, h, w, c, mix_seed(seed, hash_str(e.name.c_str())));
    ds.name = e.name;
  }
  if (target_h > 0) {
    for (auto& img : ds.images) img = adapt_image(img, target_h, target_w, target_c);
  }
  return ds;
}

}  // namespace frl
