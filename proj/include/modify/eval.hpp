#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "modify/data.hpp"
#include "modify/model.hpp"
#include "modify/stage1.hpp"
#include "modify/stage2.hpp"

namespace modify::eval {

// Feature-space Gaussian: mean, covariance (unbiased, n-1), sample count.
struct GaussianStats {
  int dim = 0;
  std::int64_t count = 0;
  std::vector<double> mean;  // [dim]
  std::vector<double> cov;   // [dim*dim], row-major symmetric
  bool diagonal_loaded = false;

  void validate() const;
};

// Diagonal loading is applied (and flagged) when count <= dim, the degenerate
// regime where the sample covariance is singular.
GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}), clamped at 0.
// Matrix root via eigendecomposition of sqrt(Sa) Sb sqrt(Sa); negative
// eigenvalues within -1e-6*scale are clamped, worse is an error.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// symmetric eigensolver (cyclic Jacobi); exposed for the eval unit tests
std::vector<double> sym_eigenvalues(std::vector<double> a, int n);

// per-scale channel means of the perceptual activations, concatenated
std::vector<double> perceptual_embedding(const nets::Embedder<float>& f, const Tensor<float>& image);

std::string embedder_fingerprint(const nets::Embedder<float>& f);

double fid_between(const data::ImageDataset& a, const data::ImageDataset& b,
                   const nets::Embedder<float>& f);

// stylizes `source` through the model, then FID(stylized, reference) under
// the given embedder
double eval_fid(const model::Model<float>& m, const data::ImageDataset& source,
                const data::ImageDataset& reference, const nets::Embedder<float>& f);

// mean pairwise perceptual-embedding distance across noise-seeded samples
double diversity_score(const model::Model<float>& m, const Tensor<float>& x,
                       const std::vector<std::uint64_t>& noise_seeds,
                       const nets::Embedder<float>& f);

// ---------------------------------------------------------------------------
// ablation harness
// ---------------------------------------------------------------------------

struct SwapAblationRun {
  std::uint64_t seed = 0;
  double consistency_on = 0;   // E||w_z - w'_z|| with the swapping loss
  double consistency_off = 0;  // without it
};

struct SwapAblationReport {
  std::vector<SwapAblationRun> runs;
  int wins_on = 0;  // runs where consistency_on < consistency_off
  std::vector<std::vector<Tensor<float>>> grid;  // rows: input, swap-off, swap-on samples
};

SwapAblationReport ablate_swap(const data::ImageDataset& style, const data::ImageDataset& source,
                               const model::PipelineConfig& cfg, const stage1::Stage1Schedule& sched,
                               const std::vector<std::uint64_t>& seeds);

struct XiAblationEntry {
  int xi = 0;
  std::vector<double> id_loss_per_seed;
  double mean_id_loss = 0;
};

struct XiAblationReport {
  std::vector<XiAblationEntry> entries;                // in xi_list order
  std::vector<std::vector<Tensor<float>>> grid;        // rows: probe inputs; cols: input + per-xi outputs
  std::vector<std::uint64_t> seeds;
};

XiAblationReport ablate_xi(const data::ImageDataset& style, const data::ImageDataset& source,
                           const model::PipelineConfig& base, const stage1::Stage1Schedule& sched,
                           const stage2::StylizeConfig& s2cfg, const std::vector<int>& xi_list,
                           const std::vector<std::uint64_t>& seeds);

// mean identity loss between x and D(E'(x)) over a dataset
double mean_identity_loss(const model::Model<float>& m, const data::ImageDataset& source);

// style-code consistency error E||w_z - w'_z|| (Frobenius norm per sample)
double style_consistency_error(const model::Model<float>& m, const data::ImageDataset& style,
                               std::uint64_t eval_seed, int samples = 8);

// one metric per line, "key=value"
void write_report(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace modify::eval
