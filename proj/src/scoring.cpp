#include "frl/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "frl/complexity.hpp"

namespace frl {

Scorer scorer_from_string(const std::string& s) {
  if (s == "nll") return Scorer::kNll;
  if (s == "ic") return Scorer::kIc;
  if (s == "frl") return Scorer::kFrl;
  throw std::invalid_argument("unknown scorer '" + s + "' (expected nll, ic or frl)");
}

std::string scorer_name(Scorer s) {
  switch (s) {
    case Scorer::kNll: return "nll";
    case Scorer::kIc: return "ic";
    case Scorer::kFrl: return "frl";
  }
  return "?";
}

QuantSample model_input(const Image& img, bool augmented, const FreqConfig& freq, int q) {
  const FloatImage x = normalized(img);
  return quantize(augmented ? augment(x, freq) : x, q);
}

ScoreRecord score_sample(const AnyModel& model, const Image& img, Scorer scorer,
                         const FreqConfig& freq, int iwae_k, uint64_t seed,
                         bool complexity_per_dim) {
  const auto& in = model.input_spec();
  if (img.h != in.h || img.w != in.w)
    throw std::invalid_argument("score_sample: image resolution does not match the model");
  if ((model.config().augmented ? img.c + 1 : img.c) != in.c)
    throw std::invalid_argument("score_sample: channel count does not match the model");
  ScoreRecord r;
  const QuantSample q = model_input(img, model.config().augmented, freq, in.q);
  r.nll_bpd = model.nll_bits(q, iwae_k, seed);
  if (scorer == Scorer::kIc || scorer == Scorer::kFrl)
    r.complexity_bpd = complexity_score(img, complexity_per_dim);
  r.score = r.nll_bpd - r.complexity_bpd;
  return r;
}

double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  if (id_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("auroc: both score lists must be non-empty");
  struct Entry {
    double v;
    bool ood;
  };
  std::vector<Entry> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (const double v : id_scores) all.push_back({v, false});
  for (const double v : ood_scores) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.v < b.v; });
  // average ranks within tie groups; with 1-based ranks these are exact
  // half-integers, so the Mann-Whitney sum is exact in double
  const size_t n = all.size();
  double rank_sum_ood = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && all[j].v == all[i].v) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (all[k].ood) rank_sum_ood += avg_rank;
    i = j;
  }
  const double n_ood = static_cast<double>(ood_scores.size());
  const double n_id = static_cast<double>(id_scores.size());
  const double u = rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0;
  return u / (n_ood * n_id);
}

std::vector<std::string> threshold_classify(const std::vector<ScoreRecord>& records, double lambda) {
  if (!std::isfinite(lambda)) {
    // +/- infinity are legal boundary cases; NaN is not
    if (std::isnan(lambda)) throw std::invalid_argument("threshold_classify: lambda is NaN");
  }
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.score <= lambda ? "ID" : "OOD");
  return out;
}

Histogram score_histogram(const std::vector<ScoreRecord>& records, int bins) {
  if (bins < 2) throw std::invalid_argument("histogram: need at least 2 bins");
  if (records.empty()) throw std::invalid_argument("histogram: no records");
  double lo = records.front().score, hi = records.front().score;
  for (const auto& r : records) {
    lo = std::min(lo, r.score);
    hi = std::max(hi, r.score);
  }
  if (hi == lo) hi = lo + 1.0;  // degenerate range: all scores land in bin 0
  Histogram h;
  h.edges.resize(static_cast<size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    h.edges[static_cast<size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / bins;
  for (const auto& r : records) {
    int b = static_cast<int>(static_cast<double>(bins) * (r.score - lo) / (hi - lo));
    if (b >= bins) b = bins - 1;  // top edge inclusive
    if (b < 0) b = 0;
    auto& c = h.counts[r.dataset];
    if (c.empty()) c.assign(static_cast<size_t>(bins), 0);
    ++c[static_cast<size_t>(b)];
  }
  return h;
}

double histogram_overlap(const Histogram& h, const std::string& a, const std::string& b) {
  const auto ia = h.counts.find(a), ib = h.counts.find(b);
  if (ia == h.counts.end() || ib == h.counts.end())
    throw std::invalid_argument("histogram_overlap: unknown dataset name");
  const auto& ca = ia->second;
  const auto& cb = ib->second;
  const double na = static_cast<double>(std::accumulate(ca.begin(), ca.end(), int64_t{0}));
  const double nb = static_cast<double>(std::accumulate(cb.begin(), cb.end(), int64_t{0}));
  double overlap = 0.0;
  for (size_t i = 0; i < ca.size(); ++i)
    overlap += std::min(static_cast<double>(ca[i]) / na, static_cast<double>(cb[i]) / nb);
  return overlap;
}

namespace {

// 11x11 Gaussian window, sigma 1.5, normalized
const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(121);
    double total = 0.0;
    for (int y = -5; y <= 5; ++y)
      for (int x = -5; x <= 5; ++x) {
        const double g = std::exp(-(y * y + x * x) / (2.0 * 1.5 * 1.5));
        v[static_cast<size_t>(y + 5) * 11 + (x + 5)] = g;
        total += g;
      }
    for (double& g : v) g /= total;
    return v;
  }();
  return w;
}

double ssim_channel(const FloatImage& a, const FloatImage& b, int ch) {
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto& win = ssim_window();
  double total = 0.0;
  int64_t count = 0;
  for (int y = 0; y + 11 <= a.h; ++y) {
    for (int x = 0; x + 11 <= a.w; ++x) {
      double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wv = win[static_cast<size_t>(i) * 11 + j];
          const double pa = a.at(y + i, x + j, ch);
          const double pb = b.at(y + i, x + j, ch);
          ma += wv * pa;
          mb += wv * pb;
          va += wv * pa * pa;
          vb += wv * pb * pb;
          cov += wv * pa * pb;
        }
      va -= ma * ma;
      vb -= mb * mb;
      cov -= ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  if (count == 0)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  return total / static_cast<double>(count);
}

}  // namespace

ReconMetrics recon_metrics(const FloatImage& x, const FloatImage& xhat) {
  if (x.h != xhat.h || x.w != xhat.w || x.c != xhat.c)
    throw std::invalid_argument("recon_metrics: shape mismatch");
  ReconMetrics m;
  for (size_t i = 0; i < x.v.size(); ++i) {
    const double d = x.v[i] - xhat.v[i];
    m.mse += d * d;
    m.mae += std::abs(d);
  }
  m.mse /= static_cast<double>(x.v.size());
  m.mae /= static_cast<double>(x.v.size());
  m.psnr = m.mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / m.mse);
  if (m.psnr > 100.0) m.psnr = 100.0;
  double s = 0.0;
  for (int ch = 0; ch < x.c; ++ch) s += ssim_channel(x, xhat, ch);
  m.ssim = s / x.c;
  return m;
}

}  // namespace frl
