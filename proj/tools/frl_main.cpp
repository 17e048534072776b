#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "frl/commands.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Precedence, lowest to highest: config file, dotted --key.path=value
// overrides, the FRL_OUT environment variable, the --out flag.
frl::ExperimentConfig build_config(const std::string& config_path,
                                   const std::vector<std::string>& extras,
                                   const std::string& out_flag) {
  json j = json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot open config " + config_path);
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw std::runtime_error("config " + config_path + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& raw : extras) {
    if (raw.rfind("--", 0) != 0)
      throw std::invalid_argument("unexpected argument '" + raw +
                                  "' (overrides look like --freq.kernel_size=7)");
    frl::apply_override(j, raw.substr(2));
  }
  frl::ExperimentConfig cfg = frl::config_from_json(j);
  if (!config_path.empty() && !cfg.manifest.empty() && fs::path(cfg.manifest).is_relative())
    cfg.manifest = (fs::path(config_path).parent_path() / cfg.manifest).string();
  if (const char* env = std::getenv("FRL_OUT"); env && *env) cfg.out_dir = env;
  if (!out_flag.empty()) cfg.out_dir = out_flag;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"likelihood-based OOD detection with frequency-augmented generative models"};
  app.require_subcommand(1);

  std::string config_path, out_flag;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--out", out_flag, "output directory (overrides FRL_OUT and the config)");
    sub->allow_extras();  // dotted config overrides, e.g. --freq.kernel_size=7
    return sub;
  };

  CLI::App* train = add_common(app.add_subcommand("train", "train a model per the config"));
  CLI::App* eval = add_common(
      app.add_subcommand("eval", "score id/ood sets against a trained checkpoint"));

  std::vector<double> weights{0.0, 0.5, 1.0, 1.5, 2.0};
  CLI::App* ab_w = add_common(app.add_subcommand(
      "ablate-weight", "sweep the frequency-channel weight on one trained VAE"));
  ab_w->add_option("--weights", weights, "weights to evaluate")->delimiter(',');

  std::vector<int> sizes{3, 5, 7, 9};
  CLI::App* ab_k = add_common(app.add_subcommand(
      "ablate-kernel", "retrain and evaluate across blur kernel sizes"));
  ab_k->add_option("--sizes", sizes, "odd kernel sizes")->delimiter(',');

  std::vector<std::string> methods{"gaussian", "fft", "haar"};
  CLI::App* ab_f = add_common(app.add_subcommand(
      "ablate-freqform", "retrain and evaluate across high-frequency extractors"));
  ab_f->add_option("--methods", methods, "extractors to compare")->delimiter(',');

  std::string fixture_dir = "fixtures";
  CLI::App* fixtures =
      app.add_subcommand("fixtures", "write the deterministic test images");
  fixtures->add_option("--out", fixture_dir, "directory to write into");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fixtures->parsed()) {
      if (const char* env = std::getenv("FRL_OUT"); env && *env && fixture_dir == "fixtures")
        fixture_dir = env;
      frl::cmd_fixtures(fixture_dir);
      std::cout << "fixtures written to " << fixture_dir << "\n";
      return 0;
    }
    CLI::App* sub = app.get_subcommands().front();
    const frl::ExperimentConfig cfg = build_config(config_path, sub->remaining(), out_flag);
    if (train->parsed()) {
      frl::cmd_train(cfg);
    } else if (eval->parsed()) {
      frl::cmd_eval(cfg);
    } else if (ab_w->parsed()) {
      frl::cmd_ablate_weight(cfg, weights);
    } else if (ab_k->parsed()) {
      frl::cmd_ablate_kernel(cfg, sizes);
    } else if (ab_f->parsed()) {
      frl::cmd_ablate_freqform(cfg, methods);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
