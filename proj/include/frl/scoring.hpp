#pragma once

#include <map>
#include <string>
#include <vector>

#include "frl/frequency.hpp"
#include "frl/image.hpp"
#include "frl/model_zoo.hpp"

namespace frl {

enum class Scorer { kNll, kIc, kFrl };

Scorer scorer_from_string(const std::string& s);
std::string scorer_name(Scorer s);

struct ScoreRecord {
  std::string sample_id;
  std::string dataset;
  std::string label;  // ID or OOD, set by the harness
  double nll_bpd = 0.0;
  double complexity_bpd = 0.0;
  double score = 0.0;
};

// Builds the model's quantized input for a raw image: augments with the
// high-frequency channel when the model was trained that way.
QuantSample model_input(const Image& img, bool augmented, const FreqConfig& freq, int q);

// Scores one image. nll-only scorers leave complexity at zero; ic/frl
// subtract the PNG code length of the raw image (per-dim by default).
ScoreRecord score_sample(const AnyModel& model, const Image& img, Scorer scorer,
                         const FreqConfig& freq, int iwae_k, uint64_t seed,
                         bool complexity_per_dim = true);

// Probability a random OOD score exceeds a random ID score, ties half.
// Computed by the rank statistic; average ranks are half-integers so the
// result equals exhaustive pair counting exactly.
double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores);

// score <= lambda -> ID, otherwise OOD.
std::vector<std::string> threshold_classify(const std::vector<ScoreRecord>& records, double lambda);

struct Histogram {
  std::vector<double> edges;                           // bins+1 shared edges
  std::map<std::string, std::vector<int64_t>> counts;  // per dataset name
};

// Equal-width bins over the full score range of all records; the top edge is
// inclusive so counts always conserve.
Histogram score_histogram(const std::vector<ScoreRecord>& records, int bins);

// min-sum overlap between two normalized histograms on shared bins
double histogram_overlap(const Histogram& h, const std::string& a, const std::string& b);

struct Throughput {
  double images_per_sec = 0.0;
  double sec_per_image = 0.0;
  int64_t num_images = 0;
};

struct ReconMetrics {
  double mse = 0.0, mae = 0.0, psnr = 0.0, ssim = 0.0;
};

// MSE/MAE/PSNR/SSIM on [0,1] images of equal shape. PSNR caps at 100 dB for
// MSE below 1e-10. SSIM uses an 11x11 Gaussian window (sigma 1.5), valid
// positions only, stabilizers (0.01)^2 and (0.03)^2, averaged over channels.
ReconMetrics recon_metrics(const FloatImage& x, const FloatImage& xhat);

}  // namespace frl
