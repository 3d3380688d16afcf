#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "modify/latent.hpp"
#include "modify/nets.hpp"

namespace modify::model {

// Everything needed to rebuild the five-network pipeline from a manifest.
struct PipelineConfig {
  int resolution = 64;
  latent::LatentConfig latent;
  nets::EncoderSpec encoder;
  nets::DecoderSpec decoder;
  nets::RemapperSpec remapper;
  nets::CriticSpec critic;
  nets::EmbedderSpec perceptual;
  nets::EmbedderSpec identity;
  double gp_coef = 10.0;  // 0 recovers the plain Wasserstein objective

  void validate() const {
    latent.validate();
    if (encoder.resolution != resolution || decoder.resolution != resolution ||
        critic.resolution != resolution || perceptual.resolution != resolution ||
        identity.resolution != resolution)
      throw ConfigError("pipeline: component resolutions disagree");
    encoder.validate();
    decoder.validate();
    remapper.validate();
    critic.validate();
    perceptual.validate();
    identity.validate();
    if (!(encoder.latent == latent) || !(decoder.latent == latent) || !(remapper.latent == latent))
      throw ConfigError("pipeline: latent configs disagree");
    if (!(gp_coef >= 0)) throw ConfigError("pipeline: gp_coef must be >= 0");
  }

  // xi == 0 picks the default round(L/3)
  static PipelineConfig make(int resolution, int xi = 0, int layer_dim = 512, int noise_dim = 512) {
    PipelineConfig c;
    c.resolution = resolution;
    c.latent.num_layers = latent::layers_for_resolution(resolution);
    c.latent.layer_dim = layer_dim;
    c.latent.fusion_index = xi == 0 ? latent::default_fusion_index(c.latent.num_layers) : xi;
    c.latent.validate();

    auto clampw = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    c.encoder.resolution = resolution;
    const int ew = clampw(resolution / 2, 8, 32);
    c.encoder.level_channels = {ew, clampw(resolution, 8, 64), clampw(resolution, 8, 64)};
    c.encoder.latent = c.latent;

    c.decoder.resolution = resolution;
    c.decoder.base_channels = clampw(resolution, 16, 64);
    c.decoder.min_channels = 16;
    c.decoder.latent = c.latent;

    c.remapper.noise_dim = noise_dim;
    c.remapper.hidden = {512, 512, 512};
    c.remapper.latent = c.latent;

    c.critic.resolution = resolution;
    c.critic.widths.clear();
    for (int k = 0; k <= c.critic.blocks(); ++k) c.critic.widths.push_back(clampw(16 << k, 16, 64));

    c.perceptual.role = nets::EmbedderRole::Perceptual;
    c.perceptual.resolution = resolution;
    c.perceptual.widths = resolution >= 32 ? std::vector<int>{8, 16, 32} : std::vector<int>{8, 16};

    c.identity.role = nets::EmbedderRole::Identity;
    c.identity.resolution = resolution;
    c.identity.widths = {8, 16};
    c.identity.embed_dim = 32;

    c.validate();
    return c;
  }
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

template <class T>
struct Model {
  PipelineConfig cfg;
  std::uint64_t seed = 0;
  nets::Encoder<T> encoder;
  nets::Decoder<T> decoder;
  nets::Remapper<T> remapper;
  nets::Critic<T> critic;
  nets::Embedder<T> perceptual;
  nets::Embedder<T> identity;

  static Model init(const PipelineConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    m.seed = seed;
    m.encoder = nets::Encoder<T>::make(cfg.encoder, seed);
    m.decoder = nets::Decoder<T>::make(cfg.decoder, seed);
    m.remapper = nets::Remapper<T>::make(cfg.remapper, seed);
    m.critic = nets::Critic<T>::make(cfg.critic, seed);
    m.perceptual = nets::Embedder<T>::make(cfg.perceptual, seed);
    m.identity = nets::Embedder<T>::make(cfg.identity, seed);
    return m;
  }

  // encoder + decoder + remapper, the "min" side of the stage-1 objective
  std::vector<nets::NamedParam<T>> gen_params() const {
    std::vector<nets::NamedParam<T>> out = encoder.params("encoder.");
    for (auto& p : decoder.params("decoder.")) out.push_back(std::move(p));
    for (auto& p : remapper.params("remapper.")) out.push_back(std::move(p));
    return out;
  }
  std::vector<nets::NamedParam<T>> critic_params() const { return critic.params("critic."); }

  std::vector<nets::NamedParam<T>> all_params(bool include_critic = true) const {
    auto out = gen_params();
    if (include_critic)
      for (auto& p : critic_params()) out.push_back(std::move(p));
    for (auto& p : perceptual.params("embed_lpips.")) out.push_back(std::move(p));
    for (auto& p : identity.params("embed_id.")) out.push_back(std::move(p));
    return out;
  }
};

template <class T>
void set_trainable(const std::vector<nets::NamedParam<T>>& params, bool trainable) {
  for (const auto& p : params) p.var.node()->requires_grad = trainable;
}

template <class T>
void copy_params(const std::vector<nets::NamedParam<T>>& src,
                 const std::vector<nets::NamedParam<T>>& dst) {
  if (src.size() != dst.size()) throw ShapeError("copy_params: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) nets::set_param_value(dst[i].var, src[i].var.value());
}

template <class T>
bool params_bitwise_equal(const std::vector<nets::NamedParam<T>>& a,
                          const std::vector<nets::NamedParam<T>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i].var.value().bitwise_equal(b[i].var.value())) return false;
  return true;
}

template <class T>
Model<T> clone_model(const Model<T>& src) {
  Model<T> dst = Model<T>::init(src.cfg, src.seed);
  copy_params(src.all_params(true), dst.all_params(true));
  return dst;
}

}  // namespace modify::model
