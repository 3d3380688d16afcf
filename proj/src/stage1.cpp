#include "modify/stage1.hpp"

#include <cmath>

#include "modify/latent.hpp"
#include "modify/persist.hpp"

namespace modify::stage1 {

static void weights_to_json(nlohmann::json& j, const losses::LossWeights& w) {
  j = {{"adv_r", w.adv_r}, {"adv_z", w.adv_z}, {"recon", w.recon},
       {"lpips", w.lpips}, {"id", w.id},       {"swap", w.swap},
       {"adv_x", w.adv_x}};
}
static void weights_from_json(const nlohmann::json& j, losses::LossWeights& w) {
  j.at("adv_r").get_to(w.adv_r);
  j.at("adv_z").get_to(w.adv_z);
  j.at("recon").get_to(w.recon);
  j.at("lpips").get_to(w.lpips);
  j.at("id").get_to(w.id);
  j.at("swap").get_to(w.swap);
  j.at("adv_x").get_to(w.adv_x);
}

void to_json(nlohmann::json& j, const Stage1Schedule& s) {
  weights_to_json(j["phase1"], s.phase1);
  weights_to_json(j["phase2"], s.phase2);
  j["phase_boundary"] = s.phase_boundary;
  j["total_iterations"] = s.total_iterations;
  j["batch_size"] = s.batch_size;
  j["optimizer"] = {{"learning_rate", s.optimizer.learning_rate},
                    {"beta1", s.optimizer.beta1},
                    {"beta2", s.optimizer.beta2},
                    {"epsilon", s.optimizer.epsilon}};
  j["phase2_freeze_decoder"] = s.phase2_freeze_decoder;
}

void from_json(const nlohmann::json& j, Stage1Schedule& s) {
  weights_from_json(j.at("phase1"), s.phase1);
  weights_from_json(j.at("phase2"), s.phase2);
  j.at("phase_boundary").get_to(s.phase_boundary);
  j.at("total_iterations").get_to(s.total_iterations);
  j.at("batch_size").get_to(s.batch_size);
  const auto& o = j.at("optimizer");
  o.at("learning_rate").get_to(s.optimizer.learning_rate);
  o.at("beta1").get_to(s.optimizer.beta1);
  o.at("beta2").get_to(s.optimizer.beta2);
  o.at("epsilon").get_to(s.optimizer.epsilon);
  j.at("phase2_freeze_decoder").get_to(s.phase2_freeze_decoder);
  s.validate();
}

losses::LossWeights weights_at(const Stage1Schedule& s, std::int64_t iteration) {
  s.validate();
  if (iteration < 0 || iteration >= s.total_iterations)
    throw ConfigError("weights_at: iteration " + std::to_string(iteration) + " outside [0, " +
                      std::to_string(s.total_iterations) + ")");
  return iteration < s.phase_boundary ? s.phase1 : s.phase2;
}

Trainer::Trainer(const model::PipelineConfig& cfg, const Stage1Schedule& sched, std::uint64_t seed)
    : Trainer(model::Model<float>::init(cfg, seed), sched, seed, 0) {}

Trainer::Trainer(model::Model<float> m, const Stage1Schedule& sched, std::uint64_t seed,
                 std::int64_t iteration)
    : m_(std::move(m)), sched_(sched), seed_(seed), it_(iteration) {
  sched_.validate();
  gen_opt_ = optim::Adam<float>(sched_.optimizer, m_.gen_params());
  critic_opt_ = optim::Adam<float>(sched_.optimizer, m_.critic_params());
}

static Tensor<float> draw_gp_eps(int batch, std::uint64_t seed, std::int64_t iteration, int stream) {
  rng::Rng r(rng::derive(seed, rng::stream::kGpEps, static_cast<std::uint64_t>(iteration) * 2 + stream));
  Tensor<float> eps({batch});
  r.fill_uniform(eps, 0.0, 1.0);
  return eps;
}

Tensor<float> draw_noise(const model::PipelineConfig& cfg, int batch, std::uint64_t seed,
                         std::int64_t iteration) {
  rng::Rng r(rng::derive(seed, rng::stream::kNoise, static_cast<std::uint64_t>(iteration)));
  Tensor<float> z({batch, cfg.remapper.noise_dim});
  r.fill_normal(z, 0.0, 1.0);
  return z;
}

static void check_finite_terms(const std::vector<std::pair<std::string, double>>& terms,
                               std::int64_t it) {
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v))
      throw TrainError("non-finite loss term '" + name + "' at iteration " + std::to_string(it));
}

LossReport Trainer::step(const Tensor<float>& y, const Tensor<float>& z, const Tensor<float>& y_prime) {
  const losses::LossWeights w = weights_at(sched_, it_);
  const float gp = static_cast<float>(m_.cfg.gp_coef);
  const auto& lat = m_.cfg.latent;
  LossReport rep;
  rep.iteration = it_;

  auto yv = ad::constant(y);
  auto ypv = ad::constant(y_prime);

  // -- critic update: fakes detached, gradients only into Dis
  if (w.adv_r > 0 || w.adv_z > 0) {
    Tensor<float> yr_det, yz_det;
    {
      ad::NoGradGuard ng;
      if (w.adv_r > 0) yr_det = m_.decoder(m_.encoder(yv)).value();
      if (w.adv_z > 0) {
        auto codes = m_.encoder(yv);
        auto [wl, wh] = latent::split_var(codes, lat);
        auto wz = m_.remapper(ad::constant(z));
        yz_det = m_.decoder(latent::fuse_var(wl, wz)).value();
      }
    }
    ad::Var<float> closs;
    if (w.adv_r > 0) {
      auto l = losses::loss_adv_critic(m_.critic, ypv, ad::constant(yr_det), gp,
                                       draw_gp_eps(y.dim(0), seed_, it_, 0));
      rep.critic.emplace_back("adv_r", ad::scalar_value(l));
      auto weighted = ad::scale(l, static_cast<float>(w.adv_r));
      closs = closs.defined() ? ad::add(closs, weighted) : weighted;
    }
    if (w.adv_z > 0) {
      auto l = losses::loss_adv_critic(m_.critic, ypv, ad::constant(yz_det), gp,
                                       draw_gp_eps(y.dim(0), seed_, it_, 1));
      rep.critic.emplace_back("adv_z", ad::scalar_value(l));
      auto weighted = ad::scale(l, static_cast<float>(w.adv_z));
      closs = closs.defined() ? ad::add(closs, weighted) : weighted;
    }
    check_finite_terms(rep.critic, it_);
    rep.critic_total = ad::scalar_value(closs);
    auto gm = ad::backward(closs);
    critic_opt_.step(gm);
  }

  // -- generator update: E, D, M against the freshly updated critic.
  // Shared intermediates are cached; inactive branches are never built.
  std::optional<ad::Var<float>> codes, y_r, w_z, y_z;
  auto get_codes = [&]() {
    if (!codes) codes = m_.encoder(yv);
    return *codes;
  };
  auto get_yr = [&]() {
    if (!y_r) y_r = m_.decoder(get_codes());
    return *y_r;
  };
  auto get_yz = [&]() {
    if (!y_z) {
      auto [wl, wh] = latent::split_var(get_codes(), lat);
      w_z = m_.remapper(ad::constant(z));
      y_z = m_.decoder(latent::fuse_var(wl, *w_z));
    }
    return *y_z;
  };

  losses::Stage1Terms<float> terms;
  terms.recon = [&] { return losses::loss_recon(yv, get_yr()); };
  terms.lpips = [&] { return losses::loss_lpips(m_.perceptual, yv, get_yr()); };
  terms.id = [&] { return losses::loss_id(m_.identity, yv, get_yr()); };
  terms.adv_r = [&] { return losses::wasserstein_gap(m_.critic, ypv, get_yr()); };
  terms.adv_z = [&] { return losses::wasserstein_gap(m_.critic, ypv, get_yz()); };
  terms.swap = [&] {
    auto reencoded = m_.encoder(get_yz());
    auto [wl2, wz2] = latent::split_var(reencoded, lat);
    return losses::loss_swap(*w_z, wz2);
  };

  auto obj = losses::objective_stage1(w, terms);
  rep.generator = obj.terms;
  check_finite_terms(rep.generator, it_);
  rep.generator_total = ad::scalar_value(obj.total);

  auto gm = ad::backward(obj.total);
  const bool freeze_dec = sched_.phase2_freeze_decoder && it_ >= sched_.phase_boundary;
  gen_opt_.step(gm, freeze_dec ? std::function<bool(const std::string&)>(
                                     [](const std::string& n) { return n.rfind("decoder.", 0) == 0; })
                               : std::function<bool(const std::string&)>());

  ++it_;
  return rep;
}

void run(Trainer& t, const data::ImageDataset& style, const RunHooks& hooks) {
  if (style.size() == 0) throw DataError("stage1: empty style dataset");
  const auto& sched = t.schedule();
  if (style.resolution != t.model().cfg.resolution)
    throw DataError("stage1: dataset resolution does not match pipeline");
  data::BatchStream ys(style, sched.batch_size, rng::derive(t.seed(), rng::stream::kData));
  data::BatchStream yps(style, sched.batch_size, rng::derive(t.seed(), rng::stream::kDataPrime));
  const std::int64_t cadence = sched.checkpoint_every();
  while (t.iteration() < sched.total_iterations) {
    const std::int64_t it = t.iteration();
    Tensor<float> y = ys.batch_at(it);
    Tensor<float> yp = yps.batch_at(it);
    Tensor<float> z = draw_noise(t.model().cfg, sched.batch_size, t.seed(), it);
    LossReport rep = t.step(y, z, yp);
    if (hooks.on_report) hooks.on_report(rep);
    const std::int64_t done = it + 1;
    if (hooks.on_checkpoint && (done % cadence == 0 || done == sched.total_iterations))
      hooks.on_checkpoint(t);
  }
}

model::Model<float> encapsulate(const data::ImageDataset& style, const model::PipelineConfig& cfg,
                                const Stage1Schedule& sched, std::uint64_t seed,
                                const RunHooks& hooks) {
  Trainer t(cfg, sched, seed);
  run(t, style, hooks);
  return std::move(t.model());
}

void save_checkpoint(const Trainer& t, const std::string& dir) {
  nlohmann::json manifest;
  manifest["format_version"] = persist::kFormatVersion;
  manifest["kind"] = "checkpoint";
  manifest["created_at"] = nullptr;
  model::to_json(manifest["pipeline"], t.model().cfg);
  manifest["seed"] = t.seed();
  manifest["has_critic"] = true;
  manifest["stage"] = "stage1";
  manifest["iteration"] = t.iteration();
  to_json(manifest["schedule"], t.schedule());
  manifest["optimizers"] = {{"gen", {{"step_t", t.gen_opt().step_count()}}},
                            {"critic", {{"step_t", t.critic_opt().step_count()}}}};

  std::vector<persist::Entry> entries;
  for (const auto& p : t.model().all_params(true)) entries.push_back({p.name, p.var.value()});
  persist::append_optimizer_entries("gen", t.gen_opt(), entries);
  persist::append_optimizer_entries("critic", t.critic_opt(), entries);
  persist::write_bundle(dir, std::move(manifest), std::move(entries));
}

Trainer load_checkpoint(const std::string& dir) {
  persist::Bundle b = persist::read_bundle(dir);
  if (b.manifest.at("kind").get<std::string>() != "checkpoint" ||
      b.manifest.at("stage").get<std::string>() != "stage1")
    throw PackageError("not a stage-1 checkpoint: " + dir);
  auto m = persist::model_from_bundle(b);
  Stage1Schedule sched;
  from_json(b.manifest.at("schedule"), sched);
  Trainer t(std::move(m), sched, b.manifest.at("seed").get<std::uint64_t>(),
            b.manifest.at("iteration").get<std::int64_t>());
  persist::restore_optimizer_entries("gen", b, t.gen_opt(),
                                     b.manifest.at("optimizers").at("gen").at("step_t").get<std::int64_t>());
  persist::restore_optimizer_entries(
      "critic", b, t.critic_opt(),
      b.manifest.at("optimizers").at("critic").at("step_t").get<std::int64_t>());
  return t;
}

}  // namespace modify::stage1
