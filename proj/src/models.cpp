#include "frl/model_zoo.hpp"

#include <stdexcept>

namespace frl {

void ModelConfig::validate() const {
  if (family != "vae" && family != "flow" && family != "ar")
    throw std::invalid_argument("model.family must be vae, flow or ar, got '" + family + "'");
  if (latent_dim < 1) throw std::invalid_argument("model.latent_dim must be >= 1");
  if (layers < 0) throw std::invalid_argument("model.layers must be >= 0");
  if (filters < 0) throw std::invalid_argument("model.filters must be >= 0");
  if (quant_levels < 2) throw std::invalid_argument("model.quant_levels must be >= 2");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("model.kernel must be odd");
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig r = *this;
  if (r.layers == 0) r.layers = family == "vae" ? 4 : (family == "flow" ? 8 : 5);
  if (r.filters == 0) r.filters = family == "vae" ? 16 : (family == "flow" ? 32 : 64);
  return r;
}

namespace {

std::variant<VaeModel, FlowModel, ArModel> build(const ModelConfig& raw, int h, int w, int c,
                                                 uint64_t seed) {
  raw.validate();
  const ModelConfig cfg = raw.resolved();
  InputSpec in;
  in.h = h;
  in.w = w;
  in.c = cfg.augmented ? c + 1 : c;
  in.q = cfg.quant_levels;
  if (cfg.family == "vae") {
    VaeArch a;
    a.in = in;
    a.latent_dim = cfg.latent_dim;
    a.conv_layers = cfg.layers;
    a.base_filters = cfg.filters;
    a.hidden = cfg.hidden;
    a.augmented = cfg.augmented;
    return VaeModel(a, seed);
  }
  if (cfg.family == "flow") {
    FlowArch a;
    a.in = in;
    a.coupling_layers = cfg.layers;
    a.hidden = cfg.filters;
    return FlowModel(a, seed);
  }
  ArArch a;
  a.in = in;
  a.layers = cfg.layers;
  a.filters = cfg.filters;
  a.kernel = cfg.kernel;
  a.augmented = cfg.augmented;
  return ArModel(a, seed);
}

}  // namespace

AnyModel::AnyModel(const ModelConfig& cfg, int data_h, int data_w, int data_c, uint64_t init_seed)
    : cfg_(cfg), m_(build(cfg, data_h, data_w, data_c, init_seed)) {}

const InputSpec& AnyModel::input_spec() const {
  return std::visit([](const auto& m) -> const InputSpec& { return m.arch().in; }, m_);
}

double AnyModel::nll_bits(const QuantSample& x, int iwae_k, uint64_t seed) const {
  if (const auto* v = std::get_if<VaeModel>(&m_)) return v->nll_bits(x, iwae_k, seed);
  if (const auto* f = std::get_if<FlowModel>(&m_)) return f->nll_bits(x, seed);
  return std::get<ArModel>(m_).nll_bits(x);
}

Tensor AnyModel::loss(const std::vector<const QuantSample*>& batch, Rng& rng) const {
  return std::visit([&](const auto& m) { return m.loss(batch, rng); }, m_);
}

std::vector<NamedParam> AnyModel::named_params() {
  return std::visit([](auto& m) { return m.named_params(); }, m_);
}

std::vector<double> AnyModel::train(const std::vector<QuantSample>& data, const TrainSettings& ts) {
  return std::visit([&](auto& m) { return train_model(m, data, ts, default_lr()); }, m_);
}

VaeModel& AnyModel::vae() {
  auto* v = std::get_if<VaeModel>(&m_);
  if (!v) throw std::invalid_argument("expected a vae checkpoint, this model is " + cfg_.family);
  return *v;
}

const VaeModel& AnyModel::vae() const {
  const auto* v = std::get_if<VaeModel>(&m_);
  if (!v) throw std::invalid_argument("expected a vae checkpoint, this model is " + cfg_.family);
  return *v;
}

}  // namespace frl
