#pragma once

#include <map>
#include <string>
#include <vector>

#include "frl/config.hpp"
#include "frl/scoring.hpp"

namespace frl {

// Train per the config; writes model.frl1, loss_curve.csv and
// resolved_config.train.json (which also records the data resolution) into
// out_dir.
void cmd_train(const ExperimentConfig& cfg);

// Everything cmd_eval produces, also returned for callers that want the
// numbers without re-reading the files.
struct EvalOutput {
  std::vector<ScoreRecord> records;
  std::map<std::string, double> aurocs;  // per OOD set plus "Average"
  Histogram hist;
  Throughput tp;
};

// Scores the manifest's id_test and ood sets against the trained checkpoint
// in out_dir; writes scores.csv, auroc.csv, histogram.csv, throughput.json,
// report.json and resolved_config.eval.json.
EvalOutput cmd_eval(const ExperimentConfig& cfg);

// Channel-weight sweep on a trained augmented VAE (inference only); writes
// ablate_weight.csv with one average-AUROC row per weight.
std::map<double, double> cmd_ablate_weight(const ExperimentConfig& cfg,
                                           const std::vector<double>& weights);

// Kernel-size sweep: trains and evaluates one model per size under
// out_dir/k<size>; writes ablate_kernel.csv including a spread row.
void cmd_ablate_kernel(const ExperimentConfig& cfg, const std::vector<int>& sizes);

// High-frequency-form sweep: a plain model scored with ic ("none" row) plus
// one augmented model per method scored with frl; writes ablate_freqform.csv.
void cmd_ablate_freqform(const ExperimentConfig& cfg, const std::vector<std::string>& methods);

// Writes the deterministic fixture images and containers used by the tests.
void cmd_fixtures(const std::string& out_dir);

}  // namespace frl
