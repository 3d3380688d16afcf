#include <doctest.h>

#include <cmath>

#include "modify/losses.hpp"
#include "modify/model.hpp"
#include "modify/optim.hpp"
#include "modify/rng.hpp"

using namespace modify;

namespace {

Tensor<float> random_images(int n, int res, std::uint64_t seed, float amp = 0.8f) {
  Tensor<float> t({n, 3, res, res});
  rng::Rng r(seed);
  r.fill_uniform(t, -amp, amp);
  return t;
}

}  // namespace

TEST_CASE("encode shape oracle from config arithmetic") {
  auto cfg = model::PipelineConfig::make(64);  // L = 10, D = 512
  auto e = nets::Encoder<float>::make(cfg.encoder, 1);
  auto codes = e(ad::constant(random_images(4, 64, 2)));
  CHECK(codes.shape() == Shape{4, 10, 512});
  CHECK(codes.value().all_finite());
}

TEST_CASE("constant zero image encodes to a finite code") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto e = nets::Encoder<float>::make(cfg.encoder, 3);
  Tensor<float> zero({2, 3, 16, 16});
  auto codes = e(ad::constant(zero));
  CHECK(codes.value().all_finite());
}

TEST_CASE("same image twice in a batch gives identical code rows") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto e = nets::Encoder<float>::make(cfg.encoder, 4);
  Tensor<float> one = random_images(1, 16, 5);
  Tensor<float> two({2, 3, 16, 16});
  std::memcpy(two.data(), one.data(), sizeof(float) * one.numel());
  std::memcpy(two.data() + one.numel(), one.data(), sizeof(float) * one.numel());
  auto codes = e(ad::constant(two)).value();
  CHECK(std::memcmp(codes.data(), codes.data() + codes.numel() / 2,
                    sizeof(float) * codes.numel() / 2) == 0);
}

TEST_CASE("encoder rejects bad inputs") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto e = nets::Encoder<float>::make(cfg.encoder, 6);
  CHECK_THROWS_AS((void)e(ad::constant(random_images(1, 32, 7))), ShapeError);
  Tensor<float> nan_img({1, 3, 16, 16});
  nan_img.data()[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS((void)e(ad::constant(nan_img)), NumericError);
}

TEST_CASE("decode: zero code yields a valid bounded image") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto d = nets::Decoder<float>::make(cfg.decoder, 8);
  Tensor<float> zero_codes({2, cfg.latent.num_layers, cfg.latent.layer_dim});
  auto img = d(ad::constant(zero_codes)).value();
  CHECK(img.shape() == Shape{2, 3, 16, 16});
  CHECK(img.all_finite());
  for (std::int64_t i = 0; i < img.numel(); ++i) {
    CHECK(img[i] <= 1.f);
    CHECK(img[i] >= -1.f);
  }
}

TEST_CASE("decode rejects mismatched code shape") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto d = nets::Decoder<float>::make(cfg.decoder, 9);
  Tensor<float> bad({2, cfg.latent.num_layers + 1, cfg.latent.layer_dim});
  CHECK_THROWS_AS((void)d(ad::constant(bad)), ShapeError);
}

TEST_CASE("remap determinism and shape") {
  auto cfg = model::PipelineConfig::make(16, 2, 16, 16);
  auto m = nets::Remapper<float>::make(cfg.remapper, 10);
  Tensor<float> z({3, 16});
  rng::Rng r(11);
  r.fill_normal(z, 0, 1);
  auto a = m(ad::constant(z)).value();
  auto b = m(ad::constant(z)).value();
  CHECK(a.shape() == Shape{3, 2, 16});
  CHECK(a.bitwise_equal(b));

  Tensor<float> zero({1, 16});
  auto out = m(ad::constant(zero)).value();
  CHECK(out.all_finite());
}

TEST_CASE("criticize: one finite unbounded scalar per image") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto c = nets::Critic<float>::make(cfg.critic, 12);
  Tensor<float> one = random_images(1, 16, 13);
  Tensor<float> two({2, 3, 16, 16});
  std::memcpy(two.data(), one.data(), sizeof(float) * one.numel());
  std::memcpy(two.data() + one.numel(), one.data(), sizeof(float) * one.numel());
  auto scores = c(ad::constant(two)).value();
  CHECK(scores.shape() == Shape{2});
  CHECK(scores.all_finite());
  CHECK(scores[0] == scores[1]);  // duplicated image, duplicated score
}

TEST_CASE("one critic step moves the score gap toward real > fake") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto c = nets::Critic<float>::make(cfg.critic, 14);
  Tensor<float> real = random_images(4, 16, 15, 0.9f);
  Tensor<float> fake({4, 3, 16, 16});  // all zeros: trivially separable
  auto gap = [&]() {
    ad::NoGradGuard ng;
    return ad::scalar_value(losses::wasserstein_gap(c, ad::constant(real), ad::constant(fake)));
  };
  const float before = gap();
  optim::AdamConfig oc;
  oc.learning_rate = 1e-3;
  optim::Adam<float> opt(oc, c.params("critic."));
  Tensor<float> eps({4});
  rng::Rng r(16);
  r.fill_uniform(eps, 0, 1);
  auto loss = losses::loss_adv_critic(c, ad::constant(real), ad::constant(fake), 10.f, eps);
  auto gm = ad::backward(loss);
  opt.step(gm);
  CHECK(gap() > before);
}

TEST_CASE("identity embedder: positive norm for any input, cosine contracts") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto r = nets::Embedder<float>::make(cfg.identity, 17);
  Tensor<float> zero({1, 3, 16, 16});
  auto e0 = r.embed(ad::constant(zero)).value();
  double norm = 0;
  for (std::int64_t i = 0; i < e0.numel(); ++i) norm += static_cast<double>(e0[i]) * e0[i];
  CHECK(norm > 0);

  Tensor<float> x = random_images(1, 16, 18);
  auto xv = ad::constant(x);
  CHECK(ad::scalar_value(losses::loss_id(r, xv, xv)) == 0.f);  // exact zero

  Tensor<float> noisy = x.clone();
  rng::Rng rr(19);
  for (std::int64_t i = 0; i < noisy.numel(); ++i)
    noisy.data()[i] = std::clamp(noisy[i] + static_cast<float>(rr.uniform(-0.9, 0.9)), -1.f, 1.f);
  CHECK(ad::scalar_value(losses::loss_id(r, xv, ad::constant(noisy))) > 0.f);
}

TEST_CASE("perceptual embedder: >= 2 scales, zero distance on identical images") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto f = nets::Embedder<float>::make(cfg.perceptual, 20);
  Tensor<float> x = random_images(2, 16, 21);
  auto acts = f.activations(ad::constant(x));
  CHECK(acts.size() >= 2);
  auto acts2 = f.activations(ad::constant(x.clone()));
  for (std::size_t s = 0; s < acts.size(); ++s)
    CHECK(acts[s].value().bitwise_equal(acts2[s].value()));
}

TEST_CASE("parameter-count oracle matches every instantiated network") {
  for (int res : {16, 64}) {
    auto cfg = model::PipelineConfig::make(res);
    auto m = model::Model<float>::init(cfg, 22);
    CHECK(nets::total_param_size(m.encoder.params("")) == cfg.encoder.param_count());
    CHECK(nets::total_param_size(m.decoder.params("")) == cfg.decoder.param_count());
    CHECK(nets::total_param_size(m.remapper.params("")) == cfg.remapper.param_count());
    CHECK(nets::total_param_size(m.critic.params("")) == cfg.critic.param_count());
    CHECK(nets::total_param_size(m.perceptual.params("")) == cfg.perceptual.param_count());
    CHECK(nets::total_param_size(m.identity.params("")) == cfg.identity.param_count());
  }
}

TEST_CASE("seeded init is deterministic; forward passes agree bitwise") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto m1 = model::Model<float>::init(cfg, 23);
  auto m2 = model::Model<float>::init(cfg, 23);
  CHECK(model::params_bitwise_equal(m1.all_params(), m2.all_params()));
  Tensor<float> x = random_images(2, 16, 24);
  CHECK(m1.decoder(m1.encoder(ad::constant(x))).value().bitwise_equal(
      m2.decoder(m2.encoder(ad::constant(x))).value()));

  auto m3 = model::Model<float>::init(cfg, 99);
  CHECK(!model::params_bitwise_equal(m1.all_params(), m3.all_params()));
}

TEST_CASE("decoder AdaIN parameter counts are a pure function of the spec") {
  auto cfg = model::PipelineConfig::make(16, 0, 16, 16);
  auto counts = cfg.decoder.adain_param_counts();
  CHECK(counts.size() == static_cast<std::size_t>(cfg.latent.num_layers));
  auto d = nets::Decoder<float>::make(cfg.decoder, 25);
  for (std::size_t i = 0; i < d.sites.size(); ++i)
    CHECK(d.sites[i].affine.b.numel() == counts[i]);
}

TEST_CASE("pyramid blocks cover all latent rows with no overlap") {
  for (int l : {4, 10, 18}) {
    auto cfg = model::PipelineConfig::make(l == 4 ? 8 : (l == 10 ? 64 : 1024));
    auto blocks = cfg.encoder.row_blocks();
    CHECK(blocks[0].first == 0);
    CHECK(blocks[0].second == blocks[1].first);
    CHECK(blocks[1].second == blocks[2].first);
    CHECK(blocks[2].second == cfg.latent.num_layers);
  }
}
