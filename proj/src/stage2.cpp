#include "modify/stage2.hpp"

#include <cmath>
#include <optional>

#include "modify/latent.hpp"
#include "modify/rng.hpp"

namespace modify::stage2 {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Offline: return "offline";
    case Mode::Online: return "online";
    case Mode::TestTime: return "test-time";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "offline") return Mode::Offline;
  if (s == "online") return Mode::Online;
  if (s == "test-time" || s == "test_time") return Mode::TestTime;
  throw ConfigError("unknown stylize mode: " + s);
}

void to_json(nlohmann::json& j, const StylizeConfig& c) {
  j["mode"] = to_string(c.mode);
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["weights"] = {{"adv_x", c.weights.adv_x},
                  {"recon", c.weights.recon},
                  {"lpips", c.weights.lpips},
                  {"id", c.weights.id}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["critic_warm_start"] = c.critic_warm_start;
  j["reset_per_input"] = c.reset_per_input;
}

void from_json(const nlohmann::json& j, StylizeConfig& c) {
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  j.at("steps").get_to(c.steps);
  j.at("batch_size").get_to(c.batch_size);
  const auto& w = j.at("weights");
  w.at("adv_x").get_to(c.weights.adv_x);
  w.at("recon").get_to(c.weights.recon);
  w.at("lpips").get_to(c.weights.lpips);
  w.at("id").get_to(c.weights.id);
  const auto& o = j.at("optimizer");
  o.at("learning_rate").get_to(c.optimizer.learning_rate);
  o.at("beta1").get_to(c.optimizer.beta1);
  o.at("beta2").get_to(c.optimizer.beta2);
  o.at("epsilon").get_to(c.optimizer.epsilon);
  j.at("critic_warm_start").get_to(c.critic_warm_start);
  j.at("reset_per_input").get_to(c.reset_per_input);
  c.validate();
}

static nets::Encoder<float> copy_encoder(const nets::Encoder<float>& src, std::uint64_t seed,
                                         bool trainable) {
  auto dst = nets::Encoder<float>::make(src.spec, seed, trainable);
  model::copy_params(src.params(""), dst.params(""));
  return dst;
}

std::pair<nets::Encoder<float>, nets::Encoder<float>> clone_encoder(const persist::LoadedPackage& pkg) {
  auto frozen = copy_encoder(pkg.model.encoder, pkg.model.seed, false);
  auto trainable = copy_encoder(pkg.model.encoder, pkg.model.seed, true);
  return {std::move(frozen), std::move(trainable)};
}

Session make_session(const persist::LoadedPackage& pkg, const StylizeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Session s;
  s.cfg = cfg;
  s.cfg.batch_size = cfg.mode == Mode::Offline ? cfg.batch_size : 1;
  s.seed = seed;
  s.model = model::clone_model(pkg.model);
  auto [frozen, trainable] = clone_encoder(pkg);
  s.encoder_frozen = std::move(frozen);
  s.model.encoder = std::move(trainable);

  // frozen networks: decoder, remapper, embedders, the frozen encoder
  model::set_trainable(s.model.decoder.params(""), false);
  model::set_trainable(s.model.remapper.params(""), false);

  if (!(pkg.has_critic && cfg.critic_warm_start)) {
    // fresh critic, seeded off the adaptation seed
    s.model.critic = nets::Critic<float>::make(s.model.cfg.critic, rng::derive(seed, rng::stream::kInit, 40));
  }
  s.enc_opt = optim::Adam<float>(s.cfg.optimizer, s.model.encoder.params("encoder."));
  s.critic_opt = optim::Adam<float>(s.cfg.optimizer, s.model.critic_params());
  return s;
}

static void check_finite(const std::vector<std::pair<std::string, double>>& terms, std::int64_t it) {
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v))
      throw TrainError("non-finite loss term '" + name + "' at iteration " + std::to_string(it));
}

StepReport step(Session& s, const Tensor<float>& x) {
  const auto& w = s.cfg.weights;
  const float gp = static_cast<float>(s.model.cfg.gp_coef);
  StepReport rep;
  rep.iteration = s.iteration;

  auto xv = ad::constant(x);

  // pseudo ground truth: the frozen stage-1 pipeline applied to this batch
  Tensor<float> pseudo;
  {
    ad::NoGradGuard ng;
    pseudo = s.model.decoder(s.encoder_frozen(xv)).value();
  }
  auto pseudo_v = ad::constant(pseudo);

  if (w.adv_x > 0) {
    Tensor<float> xp_det;
    {
      ad::NoGradGuard ng;
      xp_det = s.model.decoder(s.model.encoder(xv)).value();
    }
    rng::Rng r(rng::derive(s.seed, rng::stream::kGpEps, static_cast<std::uint64_t>(s.iteration)));
    Tensor<float> eps({x.dim(0)});
    r.fill_uniform(eps, 0.0, 1.0);
    auto closs = ad::scale(
        losses::loss_adv_critic(s.model.critic, pseudo_v, ad::constant(xp_det), gp, eps),
        static_cast<float>(w.adv_x));
    rep.critic_loss = ad::scalar_value(closs);
    rep.critic_updated = true;
    if (!std::isfinite(rep.critic_loss))
      throw TrainError("non-finite critic loss at iteration " + std::to_string(s.iteration));
    auto gm = ad::backward(closs);
    s.critic_opt.step(gm);
  }

  std::optional<ad::Var<float>> xprime;
  auto get_xprime = [&]() {
    if (!xprime) xprime = s.model.decoder(s.model.encoder(xv));
    return *xprime;
  };

  losses::Stage2Terms<float> terms;
  terms.adv_x = [&] { return losses::wasserstein_gap(s.model.critic, pseudo_v, get_xprime()); };
  terms.recon = [&] { return losses::loss_recon(xv, get_xprime()); };
  terms.lpips = [&] { return losses::loss_lpips(s.model.perceptual, xv, get_xprime()); };
  terms.id = [&] { return losses::loss_id(s.model.identity, xv, get_xprime()); };

  auto obj = losses::objective_stage2(w, terms);
  rep.generator = obj.terms;
  check_finite(rep.generator, s.iteration);
  rep.generator_total = ad::scalar_value(obj.total);
  auto gm = ad::backward(obj.total);
  s.enc_opt.step(gm);

  ++s.iteration;
  return rep;
}

static void run_loop(Session& s, const data::ImageDataset& source, const RunHooks& hooks) {
  if (source.size() == 0) throw DataError("stage2: empty source dataset");
  if (source.resolution != s.model.cfg.resolution)
    throw DataError("stage2: dataset resolution does not match pipeline");
  const bool online = s.cfg.mode == Mode::Online;
  data::BatchStream shuffled(source, s.cfg.batch_size, rng::derive(s.seed, rng::stream::kData));
  const std::int64_t n = static_cast<std::int64_t>(source.size());
  while (s.iteration < s.cfg.steps) {
    Tensor<float> x = online ? data::stack_batch(source, {static_cast<int>(s.iteration % n)})
                             : shuffled.batch_at(s.iteration);
    StepReport rep = step(s, x);
    if (hooks.on_report) hooks.on_report(rep);
    if (hooks.on_checkpoint) {
      const std::int64_t cadence = std::max<std::int64_t>(1, s.cfg.steps / 10);
      if (s.iteration % cadence == 0 || s.iteration == s.cfg.steps) hooks.on_checkpoint(s);
    }
  }
}

Session stylize_offline(const persist::LoadedPackage& pkg, const data::ImageDataset& source,
                        const StylizeConfig& cfg, std::uint64_t seed, const RunHooks& hooks) {
  if (cfg.mode != Mode::Offline) throw ConfigError("stylize_offline: config mode mismatch");
  Session s = make_session(pkg, cfg, seed);
  run_loop(s, source, hooks);
  return s;
}

Session stylize_online(const persist::LoadedPackage& pkg, const data::ImageDataset& source_stream,
                       const StylizeConfig& cfg, std::uint64_t seed, const RunHooks& hooks) {
  if (cfg.mode != Mode::Online) throw ConfigError("stylize_online: config mode mismatch");
  Session s = make_session(pkg, cfg, seed);
  run_loop(s, source_stream, hooks);
  return s;
}

std::pair<Session, Tensor<float>> stylize_test_time(const persist::LoadedPackage& pkg,
                                                    const Tensor<float>& image,
                                                    const StylizeConfig& cfg, std::uint64_t seed) {
  if (cfg.mode != Mode::TestTime) throw ConfigError("stylize_test_time: config mode mismatch");
  if (image.rank() != 3) throw ShapeError("stylize_test_time expects a single [3,R,R] image");
  Session s = make_session(pkg, cfg, seed);
  Tensor<float> batch = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}).clone();
  for (std::int64_t i = 0; i < s.cfg.steps; ++i) step(s, batch);
  Tensor<float> out = stylize_forward(s.model, batch);
  return {std::move(s), out.reshaped({3, image.dim(1), image.dim(2)})};
}

Tensor<float> stylize_forward(const model::Model<float>& m, const Tensor<float>& x) {
  ad::NoGradGuard ng;
  Tensor<float> batch = x.rank() == 3 ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  Tensor<float> out = m.decoder(m.encoder(ad::constant(batch))).value();
  return x.rank() == 3 ? out.reshaped({3, x.dim(1), x.dim(2)}) : out;
}

std::vector<Tensor<float>> sample_multimodal(const model::Model<float>& m, const Tensor<float>& x,
                                             const std::vector<std::uint64_t>& noise_seeds) {
  ad::NoGradGuard ng;
  Tensor<float> batch = x.rank() == 3 ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  const int n = batch.dim(0);
  auto codes = m.encoder(ad::constant(batch));
  auto [wl, wh] = latent::split_var(codes, m.cfg.latent);
  std::vector<Tensor<float>> out;
  for (std::uint64_t zs : noise_seeds) {
    rng::Rng r(rng::derive(zs, rng::stream::kNoise));
    Tensor<float> z({n, m.cfg.remapper.noise_dim});
    r.fill_normal(z, 0.0, 1.0);
    auto wz = m.remapper(ad::constant(z));
    Tensor<float> img = m.decoder(latent::fuse_var(wl, wz)).value();
    out.push_back(x.rank() == 3 ? img.reshaped({3, x.dim(1), x.dim(2)}) : img);
  }
  return out;
}

void save_checkpoint(const Session& s, const std::string& dir) {
  nlohmann::json manifest;
  manifest["format_version"] = persist::kFormatVersion;
  manifest["kind"] = "checkpoint";
  manifest["created_at"] = nullptr;
  model::to_json(manifest["pipeline"], s.model.cfg);
  manifest["seed"] = s.model.seed;
  manifest["has_critic"] = true;
  manifest["stage"] = "stage2";
  manifest["iteration"] = s.iteration;
  manifest["adapt_seed"] = s.seed;
  to_json(manifest["stylize"], s.cfg);
  manifest["stage2_decisions"] = {{"pseudo_real", "frozen_pipeline_output"},
                                  {"critic_warm_start", s.cfg.critic_warm_start}};
  manifest["optimizers"] = {{"enc", {{"step_t", s.enc_opt.step_count()}}},
                            {"critic", {{"step_t", s.critic_opt.step_count()}}}};

  std::vector<persist::Entry> entries;
  for (const auto& p : s.model.all_params(true)) entries.push_back({p.name, p.var.value()});
  for (const auto& p : s.encoder_frozen.params("encoder_frozen."))
    entries.push_back({p.name, p.var.value()});
  persist::append_optimizer_entries("enc", s.enc_opt, entries);
  persist::append_optimizer_entries("critic", s.critic_opt, entries);
  persist::write_bundle(dir, std::move(manifest), std::move(entries));
}

Session load_checkpoint(const std::string& dir) {
  persist::Bundle b = persist::read_bundle(dir);
  if (b.manifest.at("kind").get<std::string>() != "checkpoint" ||
      b.manifest.at("stage").get<std::string>() != "stage2")
    throw PackageError("not a stage-2 checkpoint: " + dir);

  Session s;
  s.model = persist::model_from_bundle(b);
  from_json(b.manifest.at("stylize"), s.cfg);
  s.seed = b.manifest.at("adapt_seed").get<std::uint64_t>();
  s.iteration = b.manifest.at("iteration").get<std::int64_t>();

  s.encoder_frozen = nets::Encoder<float>::make(s.model.cfg.encoder, s.model.seed, false);
  for (const auto& p : s.encoder_frozen.params("encoder_frozen.")) {
    auto it = b.weights.find(p.name);
    if (it == b.weights.end()) throw PackageError("checkpoint missing " + p.name);
    nets::set_param_value(p.var, it->second);
  }
  model::set_trainable(s.model.decoder.params(""), false);
  model::set_trainable(s.model.remapper.params(""), false);

  s.enc_opt = optim::Adam<float>(s.cfg.optimizer, s.model.encoder.params("encoder."));
  s.critic_opt = optim::Adam<float>(s.cfg.optimizer, s.model.critic_params());
  persist::restore_optimizer_entries("enc", b, s.enc_opt,
                                     b.manifest.at("optimizers").at("enc").at("step_t").get<std::int64_t>());
  persist::restore_optimizer_entries(
      "critic", b, s.critic_opt,
      b.manifest.at("optimizers").at("critic").at("step_t").get<std::int64_t>());
  return s;
}

void save_adapted_package(const Session& s, const std::string& dir, nlohmann::json extras) {
  extras["stage"] = "stage2";
  extras["iteration"] = s.iteration;
  to_json(extras["stylize"], s.cfg);
  extras["stage2_decisions"] = {{"pseudo_real", "frozen_pipeline_output"},
                                {"critic_warm_start", s.cfg.critic_warm_start}};
  persist::save_package(s.model, dir, std::move(extras), true);
}

}  // namespace modify::stage2
