#include "modify/model.hpp"

namespace modify::latent {

static void to_json(nlohmann::json& j, const LatentConfig& c) {
  j = {{"num_layers", c.num_layers}, {"layer_dim", c.layer_dim}, {"fusion_index", c.fusion_index}};
}
static void from_json(const nlohmann::json& j, LatentConfig& c) {
  j.at("num_layers").get_to(c.num_layers);
  j.at("layer_dim").get_to(c.layer_dim);
  j.at("fusion_index").get_to(c.fusion_index);
}

}  // namespace modify::latent

namespace modify::nets {

static void to_json(nlohmann::json& j, const EncoderSpec& s) {
  j = {{"resolution", s.resolution},
       {"level_channels", s.level_channels},
       {"latent", nlohmann::json()}};
  latent::to_json(j["latent"], s.latent);
}
static void from_json(const nlohmann::json& j, EncoderSpec& s) {
  j.at("resolution").get_to(s.resolution);
  j.at("level_channels").get_to(s.level_channels);
  latent::from_json(j.at("latent"), s.latent);
}

static void to_json(nlohmann::json& j, const DecoderSpec& s) {
  j = {{"resolution", s.resolution},
       {"base_channels", s.base_channels},
       {"min_channels", s.min_channels},
       {"latent", nlohmann::json()}};
  latent::to_json(j["latent"], s.latent);
}
static void from_json(const nlohmann::json& j, DecoderSpec& s) {
  j.at("resolution").get_to(s.resolution);
  j.at("base_channels").get_to(s.base_channels);
  j.at("min_channels").get_to(s.min_channels);
  latent::from_json(j.at("latent"), s.latent);
}

static void to_json(nlohmann::json& j, const RemapperSpec& s) {
  j = {{"noise_dim", s.noise_dim}, {"hidden", s.hidden}, {"latent", nlohmann::json()}};
  latent::to_json(j["latent"], s.latent);
}
static void from_json(const nlohmann::json& j, RemapperSpec& s) {
  j.at("noise_dim").get_to(s.noise_dim);
  j.at("hidden").get_to(s.hidden);
  latent::from_json(j.at("latent"), s.latent);
}

static void to_json(nlohmann::json& j, const CriticSpec& s) {
  j = {{"resolution", s.resolution}, {"widths", s.widths}};
}
static void from_json(const nlohmann::json& j, CriticSpec& s) {
  j.at("resolution").get_to(s.resolution);
  j.at("widths").get_to(s.widths);
}

static void to_json(nlohmann::json& j, const EmbedderSpec& s) {
  j = {{"role", s.role == EmbedderRole::Identity ? "identity" : "perceptual"},
       {"resolution", s.resolution},
       {"widths", s.widths},
       {"embed_dim", s.embed_dim}};
}
static void from_json(const nlohmann::json& j, EmbedderSpec& s) {
  s.role = j.at("role").get<std::string>() == "identity" ? EmbedderRole::Identity
                                                         : EmbedderRole::Perceptual;
  j.at("resolution").get_to(s.resolution);
  j.at("widths").get_to(s.widths);
  j.at("embed_dim").get_to(s.embed_dim);
}

}  // namespace modify::nets

namespace modify::model {

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j["resolution"] = c.resolution;
  latent::to_json(j["latent"], c.latent);
  nets::to_json(j["encoder"], c.encoder);
  nets::to_json(j["decoder"], c.decoder);
  nets::to_json(j["remapper"], c.remapper);
  nets::to_json(j["critic"], c.critic);
  nets::to_json(j["perceptual"], c.perceptual);
  nets::to_json(j["identity"], c.identity);
  j["gp_coef"] = c.gp_coef;
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  j.at("resolution").get_to(c.resolution);
  latent::from_json(j.at("latent"), c.latent);
  nets::from_json(j.at("encoder"), c.encoder);
  nets::from_json(j.at("decoder"), c.decoder);
  nets::from_json(j.at("remapper"), c.remapper);
  nets::from_json(j.at("critic"), c.critic);
  nets::from_json(j.at("perceptual"), c.perceptual);
  nets::from_json(j.at("identity"), c.identity);
  j.at("gp_coef").get_to(c.gp_coef);
  c.validate();
}

}  // namespace modify::model
