#include <doctest.h>

#include "modify/latent.hpp"
#include "modify/rng.hpp"

using namespace modify;

namespace {

latent::LatentCode<float> random_code(int l, int d, int xi, std::uint64_t seed) {
  latent::LatentConfig cfg{l, d, xi};
  Tensor<float> v({l, d});
  rng::Rng r(seed);
  r.fill_normal(v, 0.0, 1.0);
  return {std::move(v), cfg};
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(latent::LatentConfig({18, 512, 0}).validate(), ConfigError);
  CHECK_THROWS_AS(latent::LatentConfig({18, 512, 18}).validate(), ConfigError);
  CHECK_THROWS_AS(latent::LatentConfig({1, 512, 1}).validate(), ConfigError);
  CHECK_NOTHROW(latent::LatentConfig({18, 512, 6}).validate());
  CHECK_NOTHROW(latent::LatentConfig({2, 1, 1}).validate());
}

TEST_CASE("resolution conventions") {
  CHECK(latent::layers_for_resolution(1024) == 18);
  CHECK(latent::layers_for_resolution(64) == 10);
  CHECK(latent::layers_for_resolution(8) == 4);
  CHECK_THROWS_AS(latent::layers_for_resolution(48), ConfigError);
  CHECK(latent::default_fusion_index(18) == 6);
  CHECK(latent::default_fusion_index(10) == 3);
}

TEST_CASE("paper-scale split shapes: L=18, D=512, xi=6") {
  auto code = random_code(18, 512, 6, 1);
  auto [content, style] = latent::split(code);
  CHECK(content.shape() == Shape{12, 512});
  CHECK(style.shape() == Shape{6, 512});
}

TEST_CASE("smallest legal split") {
  latent::LatentConfig cfg{2, 2, 1};
  latent::LatentCode<float> code{Tensor<float>({2, 2}, {1, 2, 3, 4}), cfg};
  auto [content, style] = latent::split(code);
  CHECK(content.shape() == Shape{1, 2});
  CHECK(content[0] == 1.f);
  CHECK(content[1] == 2.f);
  CHECK(style[0] == 3.f);
  CHECK(style[1] == 4.f);
}

TEST_CASE("fuse places content first, style last") {
  Tensor<float> content({1, 2}, {0, 0});
  Tensor<float> style({1, 2}, {0, 0});
  auto code = latent::fuse(content, style);
  CHECK(code.config.num_layers == 2);
  CHECK(code.config.fusion_index == 1);
  for (int i = 0; i < 4; ++i) CHECK(code.values[i] == 0.f);
}

TEST_CASE("fuse(split(w)) == w bitwise over 100 random codes") {
  for (int i = 0; i < 100; ++i) {
    auto code = random_code(10, 16, 1 + i % 9, 100 + static_cast<std::uint64_t>(i));
    auto [content, style] = latent::split(code);
    auto back = latent::fuse(content, style);
    CHECK(back.values.bitwise_equal(code.values));
    CHECK(back.config == code.config);
  }
}

TEST_CASE("split(fuse(a,b)) == (a,b) bitwise") {
  rng::Rng r(7);
  for (int i = 0; i < 50; ++i) {
    Tensor<float> a({3, 8}), b({2, 8});
    r.fill_normal(a, 0, 1);
    r.fill_normal(b, 0, 1);
    auto code = latent::fuse(a, b);
    auto [a2, b2] = latent::split(code);
    CHECK(a2.bitwise_equal(a));
    CHECK(b2.bitwise_equal(b));
  }
}

TEST_CASE("fuse shape errors") {
  Tensor<float> a({3, 8}), b({2, 7});
  CHECK_THROWS_AS((void)latent::fuse(a, b), ShapeError);
  Tensor<float> c({2, 8});
  latent::LatentConfig expect{6, 8, 2};
  CHECK_THROWS_AS((void)latent::fuse(a, c, expect), ShapeError);  // total rows != L
}

TEST_CASE("split outputs do not alias the code") {
  auto code = random_code(4, 4, 2, 9);
  auto [content, style] = latent::split(code);
  content.data()[0] += 100.f;
  CHECK(code.values[0] != content[0]);
}

TEST_CASE("non-finite codes are rejected") {
  auto code = random_code(4, 4, 2, 10);
  code.values.data()[3] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS((void)latent::split(code), NumericError);
}

TEST_CASE("batched graph-level split/fuse round trip") {
  latent::LatentConfig cfg{6, 4, 2};
  Tensor<float> batch({3, 6, 4});
  rng::Rng r(11);
  r.fill_normal(batch, 0, 1);
  auto codes = ad::constant(batch);
  auto [content, style] = latent::split_var(codes, cfg);
  CHECK(content.shape() == Shape{3, 4, 4});
  CHECK(style.shape() == Shape{3, 2, 4});
  auto fused = latent::fuse_var(content, style);
  CHECK(fused.value().bitwise_equal(batch));
}
