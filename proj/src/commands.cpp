#include "frl/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "frl/checkpoint.hpp"
#include "frl/complexity.hpp"
#include "frl/fixtures.hpp"

namespace frl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct DataShape {
  int h = 0, w = 0, c = 0;
};

std::string checkpoint_path(const ExperimentConfig& cfg) {
  return (fs::path(cfg.out_dir) / "model.frl1").string();
}

std::string train_snapshot_path(const ExperimentConfig& cfg) {
  return (fs::path(cfg.out_dir) / "resolved_config.train.json").string();
}

// Loads the training-time snapshot next to the checkpoint; the snapshot is
// the authority on the model and frequency setup an eval must use.
json load_train_snapshot(const ExperimentConfig& cfg) {
  const std::string path = train_snapshot_path(cfg);
  std::ifstream f(path);
  if (!f)
    throw std::runtime_error("eval: training snapshot not found at " + path +
                             " (run train into this out_dir first)");
  json j;
  f >> j;
  return j;
}

void require_matching_setup(const ExperimentConfig& cfg, const ExperimentConfig& trained) {
  const json a = config_to_json(cfg), b = config_to_json(trained);
  if (a["model"] != b["model"])
    throw std::runtime_error("eval: model config does not match the trained checkpoint's");
  if (cfg.model.augmented && a["freq"] != b["freq"])
    throw std::runtime_error(
        "eval: frequency config does not match the one the model was trained with");
}

// The model and eval datasets must live at the training data's resolution.
DataShape snapshot_shape(const json& snap) {
  if (!snap.contains("data"))
    throw std::runtime_error("eval: training snapshot lacks the data block");
  DataShape s;
  s.h = snap["data"]["h"].get<int>();
  s.w = snap["data"]["w"].get<int>();
  s.c = snap["data"]["c"].get<int>();
  return s;
}

AnyModel load_trained_model(const ExperimentConfig& cfg, DataShape* shape_out) {
  const json snap = load_train_snapshot(cfg);
  ExperimentConfig trained = config_from_json(snap);
  trained.out_dir = cfg.out_dir;
  require_matching_setup(cfg, trained);
  const DataShape s = snapshot_shape(snap);
  AnyModel model(trained.model, s.h, s.w, s.c, 0);
  assign_params(load_checkpoint(checkpoint_path(cfg)), model.named_params());
  if (shape_out) *shape_out = s;
  return model;
}

uint64_t sample_seed(uint64_t base, const std::string& dataset, size_t index) {
  return mix_seed(mix_seed(base, hash_str(dataset.c_str())), index);
}

std::string make_sample_id(const std::string& dataset, size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return dataset + "/" + buf;
}

// Scores every dataset (ID first). weight < 0 uses the configured scorer;
// weight >= 0 switches to the channel-weighted VAE bound fused with the
// complexity term, which is what the weight ablation sweeps.
EvalOutput evaluate_model(const AnyModel& model, const ExperimentConfig& cfg,
                          const Dataset& id_set, const std::vector<Dataset>& ood_sets,
                          double weight = -1.0) {
  const Scorer scorer = weight >= 0.0 ? Scorer::kFrl : scorer_from_string(cfg.scorer);
  std::vector<const Dataset*> sets{&id_set};
  for (const auto& d : ood_sets) sets.push_back(&d);

  auto score_one = [&](const Dataset& ds, size_t i) {
    const uint64_t seed = sample_seed(cfg.seed, ds.name, i);
    ScoreRecord r;
    if (weight >= 0.0) {
      const QuantSample q =
          model_input(ds.images[i], true, cfg.freq, model.input_spec().q);
      r.nll_bpd = model.vae().nll_bits_weighted(q, cfg.eval.iwae_k, weight, seed);
      r.complexity_bpd = complexity_score(ds.images[i], cfg.complexity_per_dim);
      r.score = r.nll_bpd - r.complexity_bpd;
    } else {
      r = score_sample(model, ds.images[i], scorer, cfg.freq, cfg.eval.iwae_k, seed,
                       cfg.complexity_per_dim);
    }
    r.sample_id = make_sample_id(ds.name, i);
    r.dataset = ds.name;
    r.label = &ds == &id_set ? "ID" : "OOD";
    return r;
  };

  EvalOutput out;
  score_one(id_set, 0);  // warm-up, excluded from the timed loop

  const auto t0 = std::chrono::steady_clock::now();
  for (const Dataset* ds : sets) {
    std::vector<ScoreRecord> recs(ds->images.size());
    if (cfg.eval.workers > 1) {
      // embarrassingly parallel: records land at their own index, so the
      // schedule cannot change the output
      std::vector<std::thread> pool;
      const size_t nw = static_cast<size_t>(cfg.eval.workers);
      for (size_t w = 0; w < nw; ++w) {
        pool.emplace_back([&, w] {
          for (size_t i = w; i < recs.size(); i += nw) recs[i] = score_one(*ds, i);
        });
      }
      for (auto& t : pool) t.join();
    } else {
      for (size_t i = 0; i < recs.size(); ++i) recs[i] = score_one(*ds, i);
    }
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  }
  const auto t1 = std::chrono::steady_clock::now();

  out.tp.num_images = static_cast<int64_t>(out.records.size());
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  out.tp.images_per_sec = out.tp.num_images / secs;
  out.tp.sec_per_image = secs / static_cast<double>(out.tp.num_images);

  std::vector<double> id_scores;
  for (const auto& r : out.records)
    if (r.label == "ID") id_scores.push_back(r.score);
  double total = 0.0;
  for (const auto& d : ood_sets) {
    std::vector<double> ood_scores;
    for (const auto& r : out.records)
      if (r.dataset == d.name) ood_scores.push_back(r.score);
    const double a = auroc(id_scores, ood_scores);
    out.aurocs[d.name] = a;
    total += a;
  }
  out.aurocs["Average"] = total / static_cast<double>(ood_sets.size());
  out.hist = score_histogram(out.records, cfg.eval.bins);
  return out;
}

void write_eval_files(const ExperimentConfig& cfg, const std::vector<Dataset>& ood_sets,
                      const EvalOutput& out) {
  const fs::path dir(cfg.out_dir);
  std::ostringstream scores;
  scores << "sample_id,dataset,label,nll_bpd,complexity_bpd,score\n";
  for (const auto& r : out.records)
    scores << r.sample_id << "," << r.dataset << "," << r.label << "," << fmt(r.nll_bpd) << ","
           << fmt(r.complexity_bpd) << "," << fmt(r.score) << "\n";
  write_text((dir / "scores.csv").string(), scores.str());

  std::ostringstream table;
  table << "dataset,auroc\n";
  for (const auto& d : ood_sets) table << d.name << "," << fmt(out.aurocs.at(d.name)) << "\n";
  table << "Average," << fmt(out.aurocs.at("Average")) << "\n";
  write_text((dir / "auroc.csv").string(), table.str());

  std::ostringstream hist;
  hist << "dataset,bin_lo,bin_hi,count\n";
  for (const auto& [name, counts] : out.hist.counts)
    for (size_t b = 0; b < counts.size(); ++b)
      hist << name << "," << fmt(out.hist.edges[b]) << "," << fmt(out.hist.edges[b + 1]) << ","
           << counts[b] << "\n";
  write_text((dir / "histogram.csv").string(), hist.str());

  json tp = {{"images_per_sec", out.tp.images_per_sec},
             {"sec_per_image", out.tp.sec_per_image},
             {"num_images", out.tp.num_images},
             {"scorer", cfg.scorer},
             {"note", "wall clock over the scoring loop only; data loading excluded"}};
  write_text((dir / "throughput.json").string(), tp.dump(2) + "\n");

  json report;
  report["scorer"] = cfg.scorer;
  report["auroc"] = out.aurocs;
  report["throughput"] = tp;
  report["histogram"]["edges"] = out.hist.edges;
  for (const auto& [name, counts] : out.hist.counts) report["histogram"]["counts"][name] = counts;
  write_text((dir / "report.json").string(), report.dump(2) + "\n");
}

}  // namespace

void cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const Manifest manifest = load_manifest(cfg.manifest);
  const Dataset train_ds = load_entry(manifest.train, cfg.seed);
  if (train_ds.images.empty()) throw std::runtime_error("train: dataset is empty");

  AnyModel model(cfg.model, train_ds.h(), train_ds.w(), train_ds.c(),
                 mix_seed(cfg.seed, hash_str("init")));
  const int q = model.input_spec().q;

  std::vector<QuantSample> samples;
  samples.reserve(train_ds.images.size());
  for (const auto& img : train_ds.images)
    samples.push_back(model_input(img, cfg.model.augmented, cfg.freq, q));

  TrainSettings ts = cfg.train;
  ts.seed = mix_seed(cfg.seed, hash_str("train"));
  const std::vector<double> curve = model.train(samples, ts);

  fs::create_directories(cfg.out_dir);
  save_checkpoint(checkpoint_path(cfg), model.named_params());

  std::ostringstream csv;
  csv << "epoch,bits_per_dim\n";
  for (size_t i = 0; i < curve.size(); ++i) csv << (i + 1) << "," << fmt(curve[i]) << "\n";
  write_text((fs::path(cfg.out_dir) / "loss_curve.csv").string(), csv.str());

  json snap = config_to_json(cfg);
  snap["data"] = {{"name", train_ds.name},
                  {"h", train_ds.h()},
                  {"w", train_ds.w()},
                  {"c", train_ds.c()},
                  {"count", train_ds.images.size()}};
  write_text(train_snapshot_path(cfg), snap.dump(2) + "\n");

  std::cout << "trained " << cfg.model.family << " on " << train_ds.name << " ("
            << train_ds.images.size() << " images, " << curve.size()
            << " epochs); final loss " << curve.back() << " bits/dim\n";
}

EvalOutput cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  const Manifest manifest = load_manifest(cfg.manifest);
  DataShape shape;
  const AnyModel model = load_trained_model(cfg, &shape);

  const Dataset id_set = load_entry(manifest.id_test, cfg.seed, shape.h, shape.w, shape.c);
  std::vector<Dataset> ood_sets;
  for (const auto& e : manifest.ood)
    ood_sets.push_back(load_entry(e, cfg.seed, shape.h, shape.w, shape.c));

  const EvalOutput out = evaluate_model(model, cfg, id_set, ood_sets);
  fs::create_directories(cfg.out_dir);
  write_eval_files(cfg, ood_sets, out);
  write_text((fs::path(cfg.out_dir) / "resolved_config.eval.json").string(),
             config_to_json(cfg).dump(2) + "\n");

  std::cout << "scorer " << cfg.scorer << "\n";
  for (const auto& d : ood_sets)
    std::cout << "  auroc " << d.name << " = " << out.aurocs.at(d.name) << "\n";
  std::cout << "  auroc Average = " << out.aurocs.at("Average") << "\n"
            << "  throughput " << out.tp.images_per_sec << " img/s\n";
  return out;
}

std::map<double, double> cmd_ablate_weight(const ExperimentConfig& cfg,
                                           const std::vector<double>& weights) {
  if (weights.empty()) throw std::invalid_argument("ablate-weight: empty weight list");
  for (const double w : weights)
    if (w < 0.0) throw std::invalid_argument("ablate-weight: weights must be >= 0");
  ExperimentConfig ecfg = cfg;
  ecfg.scorer = "frl";  // the sweep is defined on the frequency-trained VAE
  ecfg.validate();
  const Manifest manifest = load_manifest(ecfg.manifest);
  DataShape shape;
  const AnyModel model = load_trained_model(ecfg, &shape);
  model.vae();  // fails fast on non-VAE checkpoints
  if (!model.config().augmented)
    throw std::runtime_error("ablate-weight: checkpoint was not trained on augmented inputs");

  const Dataset id_set = load_entry(manifest.id_test, ecfg.seed, shape.h, shape.w, shape.c);
  std::vector<Dataset> ood_sets;
  for (const auto& e : manifest.ood)
    ood_sets.push_back(load_entry(e, ecfg.seed, shape.h, shape.w, shape.c));

  std::map<double, double> result;
  std::ostringstream csv;
  csv << "weight,average_auroc\n";
  for (const double w : weights) {
    const EvalOutput out = evaluate_model(model, ecfg, id_set, ood_sets, w);
    result[w] = out.aurocs.at("Average");
    csv << fmt(w) << "," << fmt(result[w]) << "\n";
    std::cout << "w = " << w << ": average auroc " << result[w] << "\n";
  }
  fs::create_directories(ecfg.out_dir);
  write_text((fs::path(ecfg.out_dir) / "ablate_weight.csv").string(), csv.str());
  write_text((fs::path(ecfg.out_dir) / "resolved_config.ablate_weight.json").string(),
             config_to_json(ecfg).dump(2) + "\n");
  return result;
}

void cmd_ablate_kernel(const ExperimentConfig& cfg, const std::vector<int>& sizes) {
  if (sizes.empty()) throw std::invalid_argument("ablate-kernel: empty size list");
  for (const int k : sizes)
    if (k < 1 || k % 2 == 0)
      throw std::invalid_argument("ablate-kernel: sizes must be odd, got " + std::to_string(k));
  std::ostringstream csv;
  csv << "kernel,average_auroc\n";
  double lo = 1.0, hi = 0.0;
  for (const int k : sizes) {
    ExperimentConfig sub = cfg;
    sub.freq.method = FreqMethod::kGaussian;
    sub.freq.kernel_size = k;
    sub.scorer = "frl";
    sub.model.augmented = true;
    sub.out_dir = (fs::path(cfg.out_dir) / ("k" + std::to_string(k))).string();
    cmd_train(sub);
    const EvalOutput out = cmd_eval(sub);
    const double a = out.aurocs.at("Average");
    csv << k << "," << fmt(a) << "\n";
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  csv << "spread," << fmt(hi - lo) << "\n";
  fs::create_directories(cfg.out_dir);
  write_text((fs::path(cfg.out_dir) / "ablate_kernel.csv").string(), csv.str());
  write_text((fs::path(cfg.out_dir) / "resolved_config.ablate_kernel.json").string(),
             config_to_json(cfg).dump(2) + "\n");
}

void cmd_ablate_freqform(const ExperimentConfig& cfg, const std::vector<std::string>& methods) {
  if (methods.empty()) throw std::invalid_argument("ablate-freqform: empty method list");
  for (const auto& m : methods) freq_method_from_string(m);  // rejects unknown names
  std::ostringstream csv;
  csv << "method,average_auroc\n";
  {
    // the baseline row: plain-trained model scored by likelihood minus
    // complexity, no frequency channel anywhere
    ExperimentConfig sub = cfg;
    sub.model.augmented = false;
    sub.scorer = "ic";
    sub.out_dir = (fs::path(cfg.out_dir) / "none").string();
    cmd_train(sub);
    const EvalOutput out = cmd_eval(sub);
    csv << "none," << fmt(out.aurocs.at("Average")) << "\n";
  }
  for (const auto& m : methods) {
    ExperimentConfig sub = cfg;
    sub.freq.method = freq_method_from_string(m);
    sub.model.augmented = true;
    sub.scorer = "frl";
    sub.out_dir = (fs::path(cfg.out_dir) / m).string();
    cmd_train(sub);
    const EvalOutput out = cmd_eval(sub);
    csv << m << "," << fmt(out.aurocs.at("Average")) << "\n";
  }
  fs::create_directories(cfg.out_dir);
  write_text((fs::path(cfg.out_dir) / "ablate_freqform.csv").string(), csv.str());
  write_text((fs::path(cfg.out_dir) / "resolved_config.ablate_freqform.json").string(),
             config_to_json(cfg).dump(2) + "\n");
}

void cmd_fixtures(const std::string& out_dir) {
  write_fixtures(out_dir);
}

}  // namespace frl
