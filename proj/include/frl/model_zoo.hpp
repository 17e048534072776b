#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "frl/checkpoint.hpp"
#include "frl/models.hpp"
#include "frl/train.hpp"

namespace frl {

// Family-independent model settings as they appear in config files. Zeros
// mean "use the family default" (resolved at build time).
struct ModelConfig {
  std::string family = "vae";  // vae | flow | ar
  int latent_dim = 100;
  int layers = 0;    // vae: conv layers, flow: coupling layers, ar: masked layers
  int filters = 0;   // vae: base conv width, flow: hidden width, ar: feature planes
  int hidden = 32;   // dense-mode width (vae with layers resolved to 0)
  int kernel = 3;    // ar receptive-field size
  int quant_levels = 256;
  bool augmented = true;  // consumes [x, x_H] rather than x

  void validate() const;
  // resolved copy with family defaults substituted for zeros
  ModelConfig resolved() const;
};

// One trained (or trainable) generative model of any family, float32.
class AnyModel {
 public:
  // data_spec describes the raw data (h, w, channels); the augmentation
  // channel is added here when the config asks for it.
  AnyModel(const ModelConfig& cfg, int data_h, int data_w, int data_c, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const InputSpec& input_spec() const;
  const std::string& family() const { return cfg_.family; }
  double default_lr() const { return cfg_.family == "vae" ? 1e-3 : 5e-4; }

  // NLL in bits per input dimension; `seed` feeds posterior sampling (vae)
  // or dequantization (flow), the AR model ignores it.
  double nll_bits(const QuantSample& x, int iwae_k, uint64_t seed) const;

  Tensor loss(const std::vector<const QuantSample*>& batch, Rng& rng) const;
  std::vector<NamedParam> named_params();
  std::vector<double> train(const std::vector<QuantSample>& data, const TrainSettings& ts);

  VaeModel& vae();              // throws unless family == vae
  const VaeModel& vae() const;

 private:
  ModelConfig cfg_;
  std::variant<VaeModel, FlowModel, ArModel> m_;
};

}  // namespace frl
