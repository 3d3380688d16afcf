#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "modify/autodiff.hpp"
#include "modify/latent.hpp"
#include "modify/rng.hpp"

namespace modify::nets {

inline constexpr double kLreluSlope = 0.2;
inline constexpr double kAdainEps = 1e-8;

template <class T>
struct NamedParam {
  std::string name;
  ad::Var<T> var;
};

template <class T>
void set_param_value(const ad::Var<T>& p, const Tensor<T>& v) {
  if (p.shape() != v.shape())
    throw ShapeError("parameter shape mismatch: " + shape_str(p.shape()) + " vs " +
                     shape_str(v.shape()));
  std::memcpy(p.node()->value.data(), v.data(), sizeof(T) * static_cast<std::size_t>(v.numel()));
}

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

template <class T>
struct Conv2d {
  ad::Var<T> w;  // [out,in,k,k]
  ad::Var<T> b;  // [out], undefined when bias-free
  ad::ConvMeta meta;

  static Conv2d make(rng::Rng& r, int in_ch, int out_ch, int k, int stride, int pad, double gain,
                     bool bias, bool trainable) {
    Conv2d c;
    c.meta = {stride, pad};
    Tensor<T> wt({out_ch, in_ch, k, k});
    r.fill_normal(wt, 0.0, gain / std::sqrt(static_cast<double>(in_ch) * k * k));
    c.w = ad::leaf(std::move(wt), trainable);
    if (bias) c.b = ad::leaf(Tensor<T>({out_ch}), trainable);
    return c;
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const {
    ad::Var<T> y = ad::conv2d(x, w, meta);
    if (b.defined())
      y = ad::add(y, ad::expand_chan(b, y.value().dim(0), y.value().dim(2), y.value().dim(3)));
    return y;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    out.push_back({prefix + ".w", w});
    if (b.defined()) out.push_back({prefix + ".b", b});
  }
  static std::int64_t count(int in_ch, int out_ch, int k, bool bias) {
    return static_cast<std::int64_t>(out_ch) * in_ch * k * k + (bias ? out_ch : 0);
  }
};

template <class T>
struct Linear {
  ad::Var<T> w;  // [out,in]
  ad::Var<T> b;  // [out]

  static Linear make(rng::Rng& r, int in_dim, int out_dim, double gain, bool trainable) {
    Linear l;
    Tensor<T> wt({out_dim, in_dim});
    r.fill_normal(wt, 0.0, gain / std::sqrt(static_cast<double>(in_dim)));
    l.w = ad::leaf(std::move(wt), trainable);
    l.b = ad::leaf(Tensor<T>({out_dim}), trainable);
    return l;
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const {
    return ad::add(ad::linear_xwT(x, w), ad::expand_rows(b, x.value().dim(0)));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
  static std::int64_t count(int in_dim, int out_dim) {
    return static_cast<std::int64_t>(out_dim) * in_dim + out_dim;
  }
};

template <class T>
ad::Var<T> lrelu(const ad::Var<T>& x) {
  return ad::leaky_relu(x, static_cast<T>(kLreluSlope));
}

// mean over spatial dims: [N,C,H,W] -> [N,C]
template <class T>
ad::Var<T> global_avg(const ad::Var<T>& x) {
  const int h = x.value().dim(2), w = x.value().dim(3);
  return ad::scale(ad::sum_hw(x), T(1) / static_cast<T>(h * w));
}

template <class T>
void check_image_input(const Tensor<T>& img, int resolution, const char* who) {
  if (img.rank() != 4 || img.dim(1) != 3)
    throw ShapeError(std::string(who) + ": expected [N,3,H,W], got " + shape_str(img.shape()));
  if (img.dim(2) != resolution || img.dim(3) != resolution)
    throw ShapeError(std::string(who) + ": resolution mismatch, expected " +
                     std::to_string(resolution) + ", got " + shape_str(img.shape()));
  if (!img.all_finite()) throw NumericError(std::string(who) + ": non-finite input image");
}

// ---------------------------------------------------------------------------
// specs
// ---------------------------------------------------------------------------

struct EncoderSpec {
  int resolution = 64;
  std::array<int, 3> level_channels{32, 64, 64};  // fine (res/2), medium (res/4), coarse (res/8)
  latent::LatentConfig latent;

  void validate() const {
    latent.validate();
    if (latent.num_layers != latent::layers_for_resolution(resolution))
      throw ConfigError("encoder: L must match resolution convention");
    for (int c : level_channels)
      if (c < 1) throw ConfigError("encoder: channel widths must be positive");
  }
  // contiguous latent row blocks: coarse, medium, fine
  std::array<std::pair<int, int>, 3> row_blocks() const {
    const int l = latent.num_layers;
    return {{{0, l / 3}, {l / 3, 2 * l / 3}, {2 * l / 3, l}}};
  }
  std::int64_t param_count() const {
    const auto& lc = level_channels;
    std::int64_t n = Conv2d<float>::count(3, lc[0], 3, true);      // stem
    n += Conv2d<float>::count(lc[0], lc[0], 3, true);              // down fine
    n += Conv2d<float>::count(lc[0], lc[1], 3, true);              // down medium
    n += Conv2d<float>::count(lc[1], lc[2], 3, true);              // down coarse
    auto blocks = row_blocks();
    const std::array<int, 3> head_in{lc[2], lc[1], lc[0]};  // coarse, medium, fine
    for (int lvl = 0; lvl < 3; ++lvl)
      n += static_cast<std::int64_t>(blocks[lvl].second - blocks[lvl].first) *
           Linear<float>::count(head_in[lvl], latent.layer_dim);
    return n;
  }
};

struct DecoderSpec {
  int resolution = 64;
  int base_channels = 64;  // at 4x4
  int min_channels = 16;
  latent::LatentConfig latent;

  int levels() const { return static_cast<int>(std::log2(static_cast<double>(resolution))) - 1; }
  int channels(int level) const {
    int c = base_channels >> level;
    return c < min_channels ? min_channels : c;
  }
  void validate() const {
    latent.validate();
    if (2 * levels() != latent.num_layers)
      throw ConfigError("decoder: latent layer count must equal 2*(log2(res)-1)");
    if (base_channels < 1 || min_channels < 1) throw ConfigError("decoder: bad channel config");
  }
  std::vector<int> adain_param_counts() const {
    std::vector<int> v;
    for (int k = 0; k < levels(); ++k) {
      v.push_back(2 * channels(k));
      v.push_back(2 * channels(k));
    }
    return v;
  }
  std::int64_t param_count() const {
    std::int64_t n = static_cast<std::int64_t>(base_channels) * 16;  // constant input
    int prev = base_channels;
    for (int k = 0; k < levels(); ++k) {
      const int c = channels(k);
      n += Conv2d<float>::count(prev, c, 3, true) + Conv2d<float>::count(c, c, 3, true);
      n += 2 * Linear<float>::count(latent.layer_dim, 2 * c);
      prev = c;
    }
    n += Conv2d<float>::count(prev, 3, 1, true);  // to_rgb
    return n;
  }
};

struct RemapperSpec {
  int noise_dim = 512;
  std::vector<int> hidden{512, 512, 512};
  latent::LatentConfig latent;  // output is style_rows() x layer_dim

  void validate() const {
    latent.validate();
    if (noise_dim < 1) throw ConfigError("remapper: noise_dim must be positive");
    if (hidden.empty()) throw ConfigError("remapper: need at least one hidden layer");
  }
  std::int64_t param_count() const {
    std::int64_t n = 0;
    int prev = noise_dim;
    for (int h : hidden) {
      n += Linear<float>::count(prev, h);
      prev = h;
    }
    n += Linear<float>::count(prev, latent.style_rows() * latent.layer_dim);
    return n;
  }
};

struct CriticSpec {
  int resolution = 64;
  std::vector<int> widths{32, 64, 64, 64, 64};  // fromRGB width, then one per halving to 4x4

  int blocks() const { return static_cast<int>(std::log2(resolution / 4.0)); }
  void validate() const {
    if (static_cast<int>(widths.size()) != blocks() + 1)
      throw ConfigError("critic: widths must have one entry for fromRGB plus one per halving (" +
                        std::to_string(blocks() + 1) + " for res " + std::to_string(resolution) + ")");
  }
  std::int64_t param_count() const {
    std::int64_t n = Conv2d<float>::count(3, widths[0], 3, true);
    for (int k = 1; k <= blocks(); ++k) n += Conv2d<float>::count(widths[k - 1], widths[k], 3, true);
    const int last = widths.back();
    n += Conv2d<float>::count(last, last, 3, true);
    n += Linear<float>::count(last * 16, 1);
    return n;
  }
};

enum class EmbedderRole { Perceptual, Identity };

struct EmbedderSpec {
  EmbedderRole role = EmbedderRole::Perceptual;
  int resolution = 64;
  std::vector<int> widths{8, 16, 32};  // one conv scale per entry, each halves resolution
  int embed_dim = 32;                  // identity role only

  void validate() const {
    if (widths.size() < 2) throw ConfigError("embedder: need at least two scales");
    if (resolution >> widths.size() < 1)
      throw ConfigError("embedder: too many scales for resolution");
    if (role == EmbedderRole::Identity && embed_dim < 1)
      throw ConfigError("embedder: embed_dim must be positive");
  }
  std::int64_t param_count() const {
    std::int64_t n = 0;
    int prev = 3;
    const bool bias = role == EmbedderRole::Perceptual;
    for (int w : widths) {
      n += Conv2d<float>::count(prev, w, 3, bias);
      prev = w;
    }
    if (role == EmbedderRole::Identity) n += Linear<float>::count(prev, embed_dim);
    return n;
  }
};

// ---------------------------------------------------------------------------
// networks
// ---------------------------------------------------------------------------

// Feature-pyramid encoder: three stride-2 stages; each pyramid level is
// pooled and mapped by per-row linear heads into a contiguous block of latent
// rows (coarse level -> rows [0, L/3) and so on).
template <class T>
struct Encoder {
  EncoderSpec spec;
  Conv2d<T> stem, down_fine, down_med, down_coarse;
  std::vector<Linear<T>> heads;  // one per latent row, in row order

  static Encoder make(const EncoderSpec& s, std::uint64_t seed, bool trainable = true) {
    s.validate();
    rng::Rng r(rng::derive(seed, rng::stream::kInit, 1));
    Encoder e;
    e.spec = s;
    const auto& lc = s.level_channels;
    e.stem = Conv2d<T>::make(r, 3, lc[0], 3, 1, 1, std::sqrt(2.0), true, trainable);
    e.down_fine = Conv2d<T>::make(r, lc[0], lc[0], 3, 2, 1, std::sqrt(2.0), true, trainable);
    e.down_med = Conv2d<T>::make(r, lc[0], lc[1], 3, 2, 1, std::sqrt(2.0), true, trainable);
    e.down_coarse = Conv2d<T>::make(r, lc[1], lc[2], 3, 2, 1, std::sqrt(2.0), true, trainable);
    auto blocks = s.row_blocks();
    const std::array<int, 3> head_in{lc[2], lc[1], lc[0]};
    for (int lvl = 0; lvl < 3; ++lvl)
      for (int row = blocks[lvl].first; row < blocks[lvl].second; ++row)
        e.heads.push_back(Linear<T>::make(r, head_in[lvl], s.latent.layer_dim, 1.0, trainable));
    return e;
  }

  // [N,3,R,R] -> [N,L,D]
  ad::Var<T> operator()(const ad::Var<T>& img) const {
    check_image_input(img.value(), spec.resolution, "encode");
    auto f0 = lrelu(stem(img));
    auto fine = lrelu(down_fine(f0));
    auto med = lrelu(down_med(fine));
    auto coarse = lrelu(down_coarse(med));
    std::array<ad::Var<T>, 3> pooled{global_avg(coarse), global_avg(med), global_avg(fine)};
    auto blocks = spec.row_blocks();
    const int n = img.value().dim(0);
    ad::Var<T> code;
    int head = 0;
    for (int lvl = 0; lvl < 3; ++lvl)
      for (int row = blocks[lvl].first; row < blocks[lvl].second; ++row, ++head) {
        auto r = ad::reshape(heads[static_cast<std::size_t>(head)](pooled[static_cast<std::size_t>(lvl)]),
                             {n, 1, spec.latent.layer_dim});
        code = code.defined() ? ad::concat_axis1(code, r) : r;
      }
    return code;
  }

  std::vector<NamedParam<T>> params(const std::string& prefix) const {
    std::vector<NamedParam<T>> out;
    stem.collect(prefix + "stem", out);
    down_fine.collect(prefix + "down_fine", out);
    down_med.collect(prefix + "down_med", out);
    down_coarse.collect(prefix + "down_coarse", out);
    for (std::size_t i = 0; i < heads.size(); ++i)
      heads[i].collect(prefix + "head" + (i < 10 ? "0" : "") + std::to_string(i), out);
    return out;
  }
};

// StyleGAN-flavoured decoder: learned constant input, two conv+AdaIN+lrelu
// sites per resolution level, nearest-neighbour upsampling, tanh RGB output.
template <class T>
struct Decoder {
  DecoderSpec spec;
  ad::Var<T> const_input;  // [1,C0,4,4]
  struct Site {
    Conv2d<T> conv;
    Linear<T> affine;  // D -> 2C (scale offset, shift)
  };
  std::vector<Site> sites;  // 2 per level
  Conv2d<T> to_rgb;

  static Decoder make(const DecoderSpec& s, std::uint64_t seed, bool trainable = true) {
    s.validate();
    rng::Rng r(rng::derive(seed, rng::stream::kInit, 2));
    Decoder d;
    d.spec = s;
    Tensor<T> ci({1, s.base_channels, 4, 4});
    r.fill_normal(ci, 0.0, 1.0);
    d.const_input = ad::leaf(std::move(ci), trainable);
    int prev = s.base_channels;
    for (int k = 0; k < s.levels(); ++k) {
      const int c = s.channels(k);
      for (int j = 0; j < 2; ++j) {
        Site site;
        site.conv = Conv2d<T>::make(r, j == 0 ? prev : c, c, 3, 1, 1, std::sqrt(2.0), true, trainable);
        site.affine = Linear<T>::make(r, s.latent.layer_dim, 2 * c, 0.2, trainable);
        d.sites.push_back(std::move(site));
      }
      prev = c;
    }
    d.to_rgb = Conv2d<T>::make(r, prev, 3, 1, 1, 0, 1.0, true, trainable);
    return d;
  }

  static ad::Var<T> adain(const ad::Var<T>& x, const ad::Var<T>& style_row, const Linear<T>& affine) {
    const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
    const T inv_hw = T(1) / static_cast<T>(h * w);
    auto mu = ad::scale(ad::sum_hw(x), inv_hw);
    auto centered = ad::sub(x, ad::expand_hw(mu, h, w));
    auto var = ad::scale(ad::sum_hw(ad::mul(centered, centered)), inv_hw);
    auto inv_std = ad::recip(ad::sqrt_(ad::add_const(var, static_cast<T>(kAdainEps))));
    auto normed = ad::mul(centered, ad::expand_hw(inv_std, h, w));
    auto gb = affine(style_row);  // [N,2C]
    auto gamma = ad::add_const(ad::slice_axis1(gb, 0, c), T(1));
    auto beta = ad::slice_axis1(gb, c, 2 * c);
    (void)n;
    return ad::add(ad::mul(normed, ad::expand_hw(gamma, h, w)), ad::expand_hw(beta, h, w));
  }

  // [N,L,D] -> [N,3,R,R]
  ad::Var<T> operator()(const ad::Var<T>& codes) const {
    const auto& v = codes.value();
    if (v.rank() != 3 || v.dim(1) != spec.latent.num_layers || v.dim(2) != spec.latent.layer_dim)
      throw ShapeError("decode: latent batch shape " + shape_str(v.shape()) + " does not match L=" +
                       std::to_string(spec.latent.num_layers) + ", D=" +
                       std::to_string(spec.latent.layer_dim));
    const int n = v.dim(0);
    auto row = [&](int i) {
      return ad::reshape(ad::slice_axis1(codes, i, i + 1), {n, spec.latent.layer_dim});
    };
    ad::Var<T> x = ad::repeat_batch(const_input, n);
    int site = 0;
    for (int k = 0; k < spec.levels(); ++k) {
      if (k > 0) x = ad::upsample2x(x);
      for (int j = 0; j < 2; ++j, ++site) {
        const auto& s = sites[static_cast<std::size_t>(site)];
        x = lrelu(adain(s.conv(x), row(site), s.affine));
      }
    }
    return ad::tanh_(to_rgb(x));
  }

  std::vector<NamedParam<T>> params(const std::string& prefix) const {
    std::vector<NamedParam<T>> out;
    out.push_back({prefix + "const", const_input});
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const std::string idx = (i < 10 ? "0" : "") + std::to_string(i);
      sites[i].conv.collect(prefix + "site" + idx + ".conv", out);
      sites[i].affine.collect(prefix + "site" + idx + ".affine", out);
    }
    to_rgb.collect(prefix + "to_rgb", out);
    return out;
  }
};

// Fully connected noise-to-style mapping.
template <class T>
struct Remapper {
  RemapperSpec spec;
  std::vector<Linear<T>> layers;

  static Remapper make(const RemapperSpec& s, std::uint64_t seed, bool trainable = true) {
    s.validate();
    rng::Rng r(rng::derive(seed, rng::stream::kInit, 3));
    Remapper m;
    m.spec = s;
    int prev = s.noise_dim;
    for (int h : s.hidden) {
      m.layers.push_back(Linear<T>::make(r, prev, h, std::sqrt(2.0), trainable));
      prev = h;
    }
    m.layers.push_back(
        Linear<T>::make(r, prev, s.latent.style_rows() * s.latent.layer_dim, 1.0, trainable));
    return m;
  }

  // [N,dz] -> [N,xi,D]
  ad::Var<T> operator()(const ad::Var<T>& z) const {
    const auto& v = z.value();
    if (v.rank() != 2 || v.dim(1) != spec.noise_dim)
      throw ShapeError("remap: expected [N," + std::to_string(spec.noise_dim) + "], got " +
                       shape_str(v.shape()));
    if (!v.all_finite()) throw NumericError("remap: non-finite noise input");
    ad::Var<T> x = z;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) x = lrelu(layers[i](x));
    x = layers.back()(x);
    return ad::reshape(x, {v.dim(0), spec.latent.style_rows(), spec.latent.layer_dim});
  }

  std::vector<NamedParam<T>> params(const std::string& prefix) const {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + "fc" + std::to_string(i), out);
    return out;
  }
};

// Wasserstein critic: plain strided conv stack, scalar head, no output
// nonlinearity.
template <class T>
struct Critic {
  CriticSpec spec;
  Conv2d<T> from_rgb;
  std::vector<Conv2d<T>> downs;
  Conv2d<T> final_conv;
  Linear<T> head;

  static Critic make(const CriticSpec& s, std::uint64_t seed, bool trainable = true) {
    s.validate();
    rng::Rng r(rng::derive(seed, rng::stream::kInit, 4));
    Critic c;
    c.spec = s;
    c.from_rgb = Conv2d<T>::make(r, 3, s.widths[0], 3, 1, 1, std::sqrt(2.0), true, trainable);
    for (int k = 1; k <= s.blocks(); ++k)
      c.downs.push_back(
          Conv2d<T>::make(r, s.widths[k - 1], s.widths[k], 3, 2, 1, std::sqrt(2.0), true, trainable));
    const int last = s.widths.back();
    c.final_conv = Conv2d<T>::make(r, last, last, 3, 1, 1, std::sqrt(2.0), true, trainable);
    c.head = Linear<T>::make(r, last * 16, 1, 1.0, trainable);
    return c;
  }

  // [N,3,R,R] -> [N]
  ad::Var<T> operator()(const ad::Var<T>& img) const {
    check_image_input(img.value(), spec.resolution, "criticize");
    auto x = lrelu(from_rgb(img));
    for (const auto& d : downs) x = lrelu(d(x));
    x = lrelu(final_conv(x));
    const int n = img.value().dim(0);
    x = ad::reshape(x, {n, spec.widths.back() * 16});
    return ad::reshape(head(x), {n});
  }

  std::vector<NamedParam<T>> params(const std::string& prefix) const {
    std::vector<NamedParam<T>> out;
    from_rgb.collect(prefix + "from_rgb", out);
    for (std::size_t i = 0; i < downs.size(); ++i)
      downs[i].collect(prefix + "down" + std::to_string(i), out);
    final_conv.collect(prefix + "final_conv", out);
    head.collect(prefix + "head", out);
    return out;
  }
};

// Fixed random-feature surrogate for the perceptual extractor and the face
// embedder. Weights are seeded and never trained; gradients still flow
// through to the images.
template <class T>
struct Embedder {
  EmbedderSpec spec;
  std::vector<Conv2d<T>> convs;
  Linear<T> fc;  // identity role only

  static Embedder make(const EmbedderSpec& s, std::uint64_t seed) {
    s.validate();
    rng::Rng r(rng::derive(seed, rng::stream::kInit, s.role == EmbedderRole::Identity ? 6 : 5));
    Embedder e;
    e.spec = s;
    int prev = 3;
    const bool bias = s.role == EmbedderRole::Perceptual;
    for (int w : s.widths) {
      e.convs.push_back(Conv2d<T>::make(r, prev, w, 3, 2, 1, std::sqrt(2.0), bias, false));
      prev = w;
    }
    if (s.role == EmbedderRole::Identity) {
      e.fc = Linear<T>::make(r, prev, s.embed_dim, 1.0, false);
      // unit-norm bias keeps the embedding away from zero for any input
      Tensor<T> b({s.embed_dim});
      r.fill_normal(b, 0.0, 1.0);
      T norm = std::sqrt(kernels::dot(b.data(), b.data(), b.numel()));
      for (int i = 0; i < s.embed_dim; ++i) b[i] /= norm;
      set_param_value(e.fc.b, b);
    }
    return e;
  }

  // multi-scale activations, coarse last
  std::vector<ad::Var<T>> activations(const ad::Var<T>& img) const {
    check_image_input(img.value(), spec.resolution, "embed");
    std::vector<ad::Var<T>> acts;
    ad::Var<T> x = img;
    for (const auto& c : convs) {
      x = lrelu(c(x));
      acts.push_back(x);
    }
    return acts;
  }

  // identity embedding [N, embed_dim]
  ad::Var<T> embed(const ad::Var<T>& img) const {
    if (spec.role != EmbedderRole::Identity)
      throw ConfigError("embed: embedder is not an identity embedder");
    auto acts = activations(img);
    return fc(global_avg(acts.back()));
  }

  std::vector<NamedParam<T>> params(const std::string& prefix) const {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = 0; i < convs.size(); ++i)
      convs[i].collect(prefix + "conv" + std::to_string(i), out);
    if (spec.role == EmbedderRole::Identity) fc.collect(prefix + "fc", out);
    return out;
  }
};

template <class T>
std::int64_t total_param_size(const std::vector<NamedParam<T>>& ps) {
  std::int64_t n = 0;
  for (const auto& p : ps) n += p.var.numel();
  return n;
}

}  // namespace modify::nets
