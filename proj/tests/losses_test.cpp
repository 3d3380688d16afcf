#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "modify/latent.hpp"
#include "modify/losses.hpp"
#include "modify/model.hpp"
#include "modify/stage1.hpp"

using namespace modify;

namespace {

template <class T>
Tensor<T> random_images(int n, int res, std::uint64_t seed, double amp = 0.8) {
  Tensor<T> t({n, 3, res, res});
  rng::Rng r(seed);
  r.fill_uniform(t, -amp, amp);
  return t;
}

}  // namespace

TEST_CASE("loss_recon identity and unit cases") {
  auto a = ad::constant(random_images<float>(2, 8, 1));
  CHECK(ad::scalar_value(losses::loss_recon(a, a)) == 0.f);  // exact

  Tensor<float> b = a.value().clone();
  for (std::int64_t i = 0; i < b.numel(); ++i) b.data()[i] += 1.f;
  CHECK(ad::scalar_value(losses::loss_recon(a, ad::constant(b))) == doctest::Approx(1.0));

  Tensor<float> wrong({1, 3, 8, 8});
  CHECK_THROWS_AS((void)losses::loss_recon(a, ad::constant(wrong)), ShapeError);
}

TEST_CASE("loss_lpips identity and symmetry") {
  auto cfg = model::PipelineConfig::make(8, 1, 8, 8);
  auto f = nets::Embedder<float>::make(cfg.perceptual, 2);
  auto a = ad::constant(random_images<float>(2, 8, 3));
  auto b = ad::constant(random_images<float>(2, 8, 4));
  CHECK(ad::scalar_value(losses::loss_lpips(f, a, a)) == 0.f);  // exact
  CHECK(ad::scalar_value(losses::loss_lpips(f, a, b)) ==
        ad::scalar_value(losses::loss_lpips(f, b, a)));
  CHECK(ad::scalar_value(losses::loss_lpips(f, a, b)) > 0.f);
}

TEST_CASE("cosine distance on crafted embeddings") {
  auto u = ad::constant(Tensor<float>({1, 3}, {1, 2, 3}));
  auto opp = ad::constant(Tensor<float>({1, 3}, {-1, -2, -3}));
  auto orth = ad::constant(Tensor<float>({1, 3}, {-2, 1, 0}));
  CHECK(ad::scalar_value(losses::cosine_distance(u, u)) == 0.f);           // parallel
  CHECK(ad::scalar_value(losses::cosine_distance(u, opp)) == doctest::Approx(2.0));   // opposite
  CHECK(ad::scalar_value(losses::cosine_distance(u, orth)) == doctest::Approx(1.0));  // orthogonal

  auto zero = ad::constant(Tensor<float>({1, 3}));
  CHECK_THROWS_AS((void)losses::cosine_distance(u, zero), NumericError);
}

TEST_CASE("loss_id identity case is exactly zero and range is [0,2]") {
  auto cfg = model::PipelineConfig::make(8, 1, 8, 8);
  auto r = nets::Embedder<float>::make(cfg.identity, 5);
  auto a = ad::constant(random_images<float>(3, 8, 6));
  CHECK(ad::scalar_value(losses::loss_id(r, a, a)) == 0.f);
  auto b = ad::constant(random_images<float>(3, 8, 7));
  const float v = ad::scalar_value(losses::loss_id(r, a, b));
  CHECK(v >= 0.f);
  CHECK(v <= 2.f);
}

TEST_CASE("wasserstein identity cases") {
  auto cfg = model::PipelineConfig::make(8, 1, 8, 8);
  auto c = nets::Critic<float>::make(cfg.critic, 8);
  auto real = ad::constant(random_images<float>(2, 8, 9));
  // real == fake -> gap exactly 0, critic loss with gp=0 exactly 0
  CHECK(ad::scalar_value(losses::wasserstein_gap(c, real, ad::constant(real.value().clone()))) == 0.f);
  Tensor<float> eps({2});
  CHECK(ad::scalar_value(losses::loss_adv_critic(c, real, ad::constant(real.value().clone()), 0.f,
                                                 eps)) == 0.f);
  // generator loss is -E[Dis(fake)]
  auto fake = ad::constant(random_images<float>(2, 8, 10));
  const float gen = ad::scalar_value(losses::loss_adv_gen(c, fake));
  const float mean_fake = ad::scalar_value(ad::mean_all(c(fake)));
  CHECK(gen == doctest::Approx(-mean_fake));
}

TEST_CASE("loss_swap identity and unit offset") {
  Tensor<float> wz({2, 3, 4});
  rng::Rng r(11);
  r.fill_normal(wz, 0, 1);
  auto a = ad::constant(wz);
  CHECK(ad::scalar_value(losses::loss_swap(a, ad::constant(wz.clone()))) == 0.f);
  Tensor<float> shifted = wz.clone();
  for (std::int64_t i = 0; i < shifted.numel(); ++i) shifted.data()[i] += 1.f;
  CHECK(ad::scalar_value(losses::loss_swap(a, ad::constant(shifted))) == doctest::Approx(1.0));
}

TEST_CASE("objectives: lazy evaluation and exact weighting") {
  int recon_calls = 0, swap_calls = 0;
  losses::Stage1Terms<float> terms;
  terms.recon = [&] {
    ++recon_calls;
    return ad::constant(Tensor<float>::scalar(2.0f));
  };
  terms.swap = [&] {
    ++swap_calls;
    return ad::constant(Tensor<float>::scalar(3.0f));
  };
  terms.adv_r = [] { return ad::constant(Tensor<float>::scalar(5.0f)); };

  losses::LossWeights w;
  w.recon = 0.8;
  w.swap = 0;  // must not be invoked
  w.adv_r = 0.1;
  auto obj = losses::objective_stage1(w, terms);
  CHECK(recon_calls == 1);
  CHECK(swap_calls == 0);
  CHECK(!obj.has("swap"));
  CHECK(obj.term("recon") == doctest::Approx(2.0));
  CHECK(ad::scalar_value(obj.total) == doctest::Approx(0.8 * 2 + 0.1 * 5));

  losses::LossWeights zero;
  auto empty = losses::objective_stage1(zero, terms);
  CHECK(ad::scalar_value(empty.total) == 0.f);
  CHECK(empty.terms.empty());
}

TEST_CASE("paper weight sets") {
  auto p1 = stage1::Stage1Schedule::default_phase1();
  CHECK(p1.swap == 0);
  CHECK(p1.lpips == 0.8);
  CHECK(p1.adv_r == 0.1);
  CHECK(p1.adv_z == 0);
  CHECK(p1.recon == 0.8);
  CHECK(p1.id == 1);
  auto p2 = stage1::Stage1Schedule::default_phase2();
  CHECK(p2.swap == 1.0);
  CHECK(p2.lpips == 0);
  CHECK(p2.adv_r == 0);
  CHECK(p2.adv_z == 0.1);
  CHECK(p2.recon == 0);
  CHECK(p2.id == 0);

  losses::LossWeights bad;
  bad.recon = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gradient checks: every loss against central differences (res 8, L=4, D=8)") {
  using T = double;
  auto cfg = model::PipelineConfig::make(8, 1, 8, 8);
  cfg.remapper.hidden = {16, 16, 16};
  auto m = model::Model<T>::init(cfg, 42);
  auto gen = m.gen_params();
  auto cri = m.critic_params();

  Tensor<T> a = random_images<T>(2, 8, 12);
  Tensor<T> b = random_images<T>(2, 8, 13);
  Tensor<T> z({2, 8});
  Tensor<T> eps({2});
  {
    rng::Rng r(14);
    r.fill_normal(z, 0, 1);
    r.fill_uniform(eps, 0, 1);
  }
  auto va = ad::constant(a);
  auto vb = ad::constant(b);
  auto vz = ad::constant(z);

  auto check = [&](const char* name, const std::vector<nets::NamedParam<T>>& params,
                   const std::function<ad::Var<T>()>& fn) {
    auto res = gradcheck::run(params, fn, 120, 1e-3);
    INFO(name, " pass fraction ", res.pass_fraction(), " worst ", res.worst_rel);
    CHECK(res.pass_fraction() >= 0.95);
  };

  check("recon", gen, [&] { return losses::loss_recon(va, m.decoder(m.encoder(va))); });
  check("lpips", gen, [&] { return losses::loss_lpips(m.perceptual, va, m.decoder(m.encoder(va))); });
  check("id", gen, [&] { return losses::loss_id(m.identity, va, m.decoder(m.encoder(va))); });
  check("adv_critic_gp", cri,
        [&] { return losses::loss_adv_critic(m.critic, va, vb, T(10), eps); });
  check("adv_gen", gen, [&] { return losses::loss_adv_gen(m.critic, m.decoder(m.encoder(va))); });
  check("swap", gen, [&] {
    auto codes = m.encoder(va);
    auto [wl, wh] = latent::split_var(codes, cfg.latent);
    auto wz = m.remapper(vz);
    auto yz = m.decoder(latent::fuse_var(wl, wz));
    auto [wl2, wz2] = latent::split_var(m.encoder(yz), cfg.latent);
    return losses::loss_swap(wz, wz2);
  });
}
