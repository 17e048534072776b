#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "frl/data.hpp"
#include "frl/frequency.hpp"
#include "frl/model_zoo.hpp"
#include "frl/train.hpp"

namespace frl {

struct EvalSettings {
  int iwae_k = 20;
  int bins = 30;
  int workers = 1;
};

// Everything an experiment needs, JSON round-trippable. The resolved form
// (every default made explicit) is what commands write next to their outputs.
struct ExperimentConfig {
  ModelConfig model;
  FreqConfig freq;
  TrainSettings train;   // train.seed is derived from the top-level seed
  EvalSettings eval;
  std::string scorer = "frl";
  uint64_t seed = 0;
  std::string manifest;
  std::string out_dir = "out";
  bool complexity_per_dim = true;

  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Applies a --key.path=value override onto the raw JSON tree. Values parse
// as JSON when possible (numbers, booleans) and fall back to strings.
void apply_override(nlohmann::json& j, const std::string& spec);

// ---- dataset manifest ----

struct ManifestEntry {
  std::string name;
  std::string kind;   // idx | ppm_dir | synth
  std::string path;   // idx / ppm_dir
  std::string synth;  // noise | constant
  int count = 1000;   // synth only
  int64_t limit = 0;  // cap on loaded images, 0 = all
};

struct Manifest {
  ManifestEntry train;
  ManifestEntry id_test;
  std::vector<ManifestEntry> ood;
};

// Parses and validates the manifest; file paths are resolved against the
// manifest's own directory and must exist (fail-fast, before any compute).
Manifest load_manifest(const std::string& path);

// Materializes one entry. Synthetic sets are seeded from (seed, entry name);
// target_h/w/c of 0 keeps the native shape, otherwise images are adapted.
Dataset load_entry(const ManifestEntry& e, uint64_t seed, int target_h = 0, int target_w = 0,
                   int target_c = 0);

}  // namespace frl
