#pragma once

#include <cmath>
#include <utility>

#include "modify/autodiff.hpp"
#include "modify/tensor.hpp"

namespace modify::latent {

// Layered latent layout: L rows of dimension D, one row per AdaIN site of the
// decoder. Row 0 drives the coarsest (4x4) layer. The split index xi carves
// off the high-resolution tail: content = first L-xi rows, style = last xi.
struct LatentConfig {
  int num_layers = 0;   // L
  int layer_dim = 512;  // D
  int fusion_index = 0; // xi

  void validate() const {
    if (num_layers < 2) throw ConfigError("latent: need at least 2 layers");
    if (layer_dim < 1) throw ConfigError("latent: layer_dim must be >= 1");
    if (fusion_index < 1 || fusion_index > num_layers - 1)
      throw ConfigError("latent: fusion_index must be in [1, L-1], got " +
                        std::to_string(fusion_index) + " for L=" + std::to_string(num_layers));
  }
  int content_rows() const { return num_layers - fusion_index; }
  int style_rows() const { return fusion_index; }

  bool operator==(const LatentConfig&) const = default;
};

// StyleGAN layer-count convention: two AdaIN sites per resolution from 4x4 up.
inline int layers_for_resolution(int resolution) {
  if (resolution < 8 || (resolution & (resolution - 1)) != 0)
    throw ConfigError("resolution must be a power of two >= 8");
  return 2 * static_cast<int>(std::log2(static_cast<double>(resolution))) - 2;
}

inline int default_fusion_index(int num_layers) {
  int xi = static_cast<int>(std::lround(num_layers / 3.0));
  if (xi < 1) xi = 1;
  if (xi > num_layers - 1) xi = num_layers - 1;
  return xi;
}

template <class T>
struct LatentCode {
  Tensor<T> values;  // [L, D]
  LatentConfig config;

  void validate() const {
    config.validate();
    if (values.rank() != 2 || values.dim(0) != config.num_layers || values.dim(1) != config.layer_dim)
      throw ShapeError("latent code shape " + shape_str(values.shape()) + " does not match config");
    if (!values.all_finite()) throw NumericError("latent code contains non-finite entries");
  }
};

// Pure row rearrangements; outputs are fresh allocations, never views.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split(const LatentCode<T>& code) {
  code.validate();
  const int lc = code.config.content_rows();
  const int d = code.config.layer_dim;
  Tensor<T> content({lc, d}), style({code.config.style_rows(), d});
  std::memcpy(content.data(), code.values.data(), sizeof(T) * static_cast<std::size_t>(content.numel()));
  std::memcpy(style.data(), code.values.data() + content.numel(),
              sizeof(T) * static_cast<std::size_t>(style.numel()));
  return {std::move(content), std::move(style)};
}

template <class T>
LatentCode<T> fuse(const Tensor<T>& content, const Tensor<T>& style) {
  if (content.rank() != 2 || style.rank() != 2 || content.dim(1) != style.dim(1))
    throw ShapeError("fuse: row widths differ, " + shape_str(content.shape()) + " vs " +
                     shape_str(style.shape()));
  LatentConfig cfg;
  cfg.num_layers = content.dim(0) + style.dim(0);
  cfg.layer_dim = content.dim(1);
  cfg.fusion_index = style.dim(0);
  cfg.validate();
  LatentCode<T> code{Tensor<T>({cfg.num_layers, cfg.layer_dim}), cfg};
  std::memcpy(code.values.data(), content.data(), sizeof(T) * static_cast<std::size_t>(content.numel()));
  std::memcpy(code.values.data() + content.numel(), style.data(),
              sizeof(T) * static_cast<std::size_t>(style.numel()));
  return code;
}

template <class T>
LatentCode<T> fuse(const Tensor<T>& content, const Tensor<T>& style, const LatentConfig& expect) {
  LatentCode<T> code = fuse(content, style);
  if (!(code.config == expect))
    throw ShapeError("fuse: rows do not match expected config (L=" +
                     std::to_string(expect.num_layers) + ", xi=" + std::to_string(expect.fusion_index) +
                     ")");
  return code;
}

// Graph-level variants on batched codes [N, L, D]; used inside training steps
// so gradients flow through the rearrangement.
template <class T>
std::pair<ad::Var<T>, ad::Var<T>> split_var(const ad::Var<T>& codes, const LatentConfig& cfg) {
  cfg.validate();
  if (codes.value().rank() != 3 || codes.value().dim(1) != cfg.num_layers ||
      codes.value().dim(2) != cfg.layer_dim)
    throw ShapeError("split_var: batch shape " + shape_str(codes.shape()) + " does not match config");
  auto content = ad::slice_axis1(codes, 0, cfg.content_rows());
  auto style = ad::slice_axis1(codes, cfg.content_rows(), cfg.num_layers);
  return {content, style};
}

template <class T>
ad::Var<T> fuse_var(const ad::Var<T>& content, const ad::Var<T>& style) {
  return ad::concat_axis1(content, style);
}

}  // namespace modify::latent
