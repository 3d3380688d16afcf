#include "modify/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "modify/latent.hpp"
#include "modify/persist.hpp"

namespace modify::eval {

void GaussianStats::validate() const {
  if (dim < 1 || static_cast<int>(mean.size()) != dim ||
      static_cast<int>(cov.size()) != dim * dim)
    throw ShapeError("gaussian stats: inconsistent dimensions");
  if (count < 2) throw NumericError("gaussian stats: need at least 2 samples");
  double scale = 0;
  for (int i = 0; i < dim; ++i) scale = std::max(scale, std::fabs(cov[i * dim + i]));
  const double tol = 1e-8 * std::max(1.0, scale);
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j)
      if (std::fabs(cov[i * dim + j] - cov[j * dim + i]) > tol)
        throw NumericError("gaussian stats: covariance not symmetric");
}

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw NumericError("fit_gaussian: need at least 2 samples");
  GaussianStats g;
  g.dim = static_cast<int>(features[0].size());
  g.count = static_cast<std::int64_t>(features.size());
  g.mean.assign(g.dim, 0.0);
  g.cov.assign(static_cast<std::size_t>(g.dim) * g.dim, 0.0);
  for (const auto& f : features) {
    if (static_cast<int>(f.size()) != g.dim) throw ShapeError("fit_gaussian: ragged features");
    for (int i = 0; i < g.dim; ++i) g.mean[i] += f[i];
  }
  for (int i = 0; i < g.dim; ++i) g.mean[i] /= static_cast<double>(g.count);
  for (const auto& f : features)
    for (int i = 0; i < g.dim; ++i)
      for (int j = 0; j < g.dim; ++j)
        g.cov[static_cast<std::size_t>(i) * g.dim + j] += (f[i] - g.mean[i]) * (f[j] - g.mean[j]);
  const double denom = static_cast<double>(g.count - 1);
  for (auto& v : g.cov) v /= denom;

  if (g.count <= g.dim) {
    double tr = 0;
    for (int i = 0; i < g.dim; ++i) tr += g.cov[static_cast<std::size_t>(i) * g.dim + i];
    const double load = 1e-6 * (tr / g.dim + 1.0);
    for (int i = 0; i < g.dim; ++i) g.cov[static_cast<std::size_t>(i) * g.dim + i] += load;
    g.diagonal_loaded = true;
  }
  return g;
}

// cyclic Jacobi; destroys `a`, optionally accumulates eigenvectors in columns
static std::vector<double> jacobi(std::vector<double>& a, int n, std::vector<double>* vecs) {
  if (vecs) {
    vecs->assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) (*vecs)[static_cast<std::size_t>(i) * n + i] = 1.0;
  }
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    double diag = 0;
    for (int i = 0; i < n; ++i) diag += at(i, i) * at(i, i);
    if (off <= 1e-30 * std::max(1.0, diag)) break;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        if (vecs)
          for (int k = 0; k < n; ++k) {
            double& vkp = (*vecs)[static_cast<std::size_t>(k) * n + p];
            double& vkq = (*vecs)[static_cast<std::size_t>(k) * n + q];
            const double t1 = vkp, t2 = vkq;
            vkp = c * t1 - s * t2;
            vkq = s * t1 + c * t2;
          }
      }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = at(i, i);
  return eig;
}

std::vector<double> sym_eigenvalues(std::vector<double> a, int n) {
  return jacobi(a, n, nullptr);
}

// B = V diag(sqrt(max(eig,0))) V^T
static std::vector<double> sqrtm_psd(const std::vector<double>& m, int n, double neg_tol) {
  std::vector<double> a = m, v;
  std::vector<double> eig = jacobi(a, n, &v);
  double scale = 0;
  for (double e : eig) scale = std::max(scale, std::fabs(e));
  for (double& e : eig) {
    if (e < -neg_tol * std::max(1.0, scale))
      throw NumericError("matrix square root: input not PSD within tolerance");
    e = e > 0 ? std::sqrt(e) : 0.0;
  }
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int k = 0; k < n; ++k)
        acc += v[static_cast<std::size_t>(i) * n + k] * eig[k] * v[static_cast<std::size_t>(j) * n + k];
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  return out;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  a.validate();
  b.validate();
  if (a.dim != b.dim) throw ShapeError("frechet_distance: dimension mismatch");
  const int n = a.dim;

  double mean_term = 0;
  for (int i = 0; i < n; ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }

  const std::vector<double> sa = sqrtm_psd(a.cov, n, 1e-6);
  // M = sa * cov_b * sa, symmetrized; same spectrum as cov_a * cov_b
  std::vector<double> tmp(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int k = 0; k < n; ++k)
        acc += sa[static_cast<std::size_t>(i) * n + k] * b.cov[static_cast<std::size_t>(k) * n + j];
      tmp[static_cast<std::size_t>(i) * n + j] = acc;
    }
  std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int k = 0; k < n; ++k)
        acc += tmp[static_cast<std::size_t>(i) * n + k] * sa[static_cast<std::size_t>(k) * n + j];
      m[static_cast<std::size_t>(i) * n + j] = acc;
    }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double s = 0.5 * (m[static_cast<std::size_t>(i) * n + j] + m[static_cast<std::size_t>(j) * n + i]);
      m[static_cast<std::size_t>(i) * n + j] = s;
      m[static_cast<std::size_t>(j) * n + i] = s;
    }

  std::vector<double> eig = sym_eigenvalues(std::move(m), n);
  double scale = 0;
  for (double e : eig) scale = std::max(scale, std::fabs(e));
  double sqrt_trace = 0;
  for (double e : eig) {
    if (e < -1e-6 * std::max(1.0, scale))
      throw NumericError("frechet_distance: product matrix not PSD within tolerance");
    sqrt_trace += e > 0 ? std::sqrt(e) : 0.0;
  }

  double tr_a = 0, tr_b = 0;
  for (int i = 0; i < n; ++i) {
    tr_a += a.cov[static_cast<std::size_t>(i) * n + i];
    tr_b += b.cov[static_cast<std::size_t>(i) * n + i];
  }
  const double d = mean_term + tr_a + tr_b - 2.0 * sqrt_trace;
  return d > 0 ? d : 0.0;
}

std::vector<double> perceptual_embedding(const nets::Embedder<float>& f, const Tensor<float>& image) {
  ad::NoGradGuard ng;
  Tensor<float> batch = image.rank() == 3
                            ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                            : image;
  if (batch.dim(0) != 1) throw ShapeError("perceptual_embedding: one image at a time");
  auto acts = f.activations(ad::constant(batch));
  std::vector<double> emb;
  for (const auto& a : acts) {
    const auto& v = a.value();
    const int c = v.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(v.dim(2)) * v.dim(3);
    for (int j = 0; j < c; ++j) {
      double acc = 0;
      const float* p = v.data() + j * hw;
      for (std::int64_t s = 0; s < hw; ++s) acc += p[s];
      emb.push_back(acc / static_cast<double>(hw));
    }
  }
  return emb;
}

std::string embedder_fingerprint(const nets::Embedder<float>& f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "crc32:%08x", persist::params_checksum(f.params("embed.")));
  return buf;
}

static std::vector<std::vector<double>> embed_dataset(const data::ImageDataset& ds,
                                                      const nets::Embedder<float>& f) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.size());
  for (const auto& img : ds.images) out.push_back(perceptual_embedding(f, img));
  return out;
}

double fid_between(const data::ImageDataset& a, const data::ImageDataset& b,
                   const nets::Embedder<float>& f) {
  return frechet_distance(fit_gaussian(embed_dataset(a, f)), fit_gaussian(embed_dataset(b, f)));
}

double eval_fid(const model::Model<float>& m, const data::ImageDataset& source,
                const data::ImageDataset& reference, const nets::Embedder<float>& f) {
  data::ImageDataset stylized;
  stylized.resolution = source.resolution;
  for (const auto& img : source.images) {
    stylized.images.push_back(stage2::stylize_forward(m, img));
    stylized.ids.push_back("stylized");
  }
  return fid_between(stylized, reference, f);
}

double diversity_score(const model::Model<float>& m, const Tensor<float>& x,
                       const std::vector<std::uint64_t>& noise_seeds,
                       const nets::Embedder<float>& f) {
  if (noise_seeds.size() < 2) throw ConfigError("diversity_score: need at least 2 noise seeds");
  auto samples = stage2::sample_multimodal(m, x, noise_seeds);
  std::vector<std::vector<double>> embs;
  for (const auto& s : samples) embs.push_back(perceptual_embedding(f, s));
  double total = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < embs.size(); ++i)
    for (std::size_t j = i + 1; j < embs.size(); ++j) {
      double d2 = 0;
      for (std::size_t k = 0; k < embs[i].size(); ++k) {
        const double d = embs[i][k] - embs[j][k];
        d2 += d * d;
      }
      total += std::sqrt(d2);
      ++pairs;
    }
  return total / pairs;
}

double mean_identity_loss(const model::Model<float>& m, const data::ImageDataset& source) {
  ad::NoGradGuard ng;
  double total = 0;
  for (const auto& img : source.images) {
    Tensor<float> batch = img.reshaped({1, 3, img.dim(1), img.dim(2)});
    auto xv = ad::constant(batch);
    auto xp = m.decoder(m.encoder(xv));
    total += ad::scalar_value(losses::loss_id(m.identity, xv, xp));
  }
  return total / static_cast<double>(source.size());
}

double style_consistency_error(const model::Model<float>& m, const data::ImageDataset& style,
                               std::uint64_t eval_seed, int samples) {
  ad::NoGradGuard ng;
  const int n = std::min<int>(samples, static_cast<int>(style.size()));
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Tensor<float> y = data::stack_batch(style, idx);
  rng::Rng r(rng::derive(eval_seed, rng::stream::kEval));
  Tensor<float> z({n, m.cfg.remapper.noise_dim});
  r.fill_normal(z, 0.0, 1.0);

  auto codes = m.encoder(ad::constant(y));
  auto [wl, wh] = latent::split_var(codes, m.cfg.latent);
  auto wz = m.remapper(ad::constant(z));
  auto yz = m.decoder(latent::fuse_var(wl, wz));
  auto [wl2, wz2] = latent::split_var(m.encoder(yz), m.cfg.latent);

  const auto& a = wz.value();
  const auto& b = wz2.value();
  const std::int64_t per = a.numel() / n;
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double d2 = 0;
    for (std::int64_t k = 0; k < per; ++k) {
      const double d = static_cast<double>(a[i * per + k]) - static_cast<double>(b[i * per + k]);
      d2 += d * d;
    }
    total += std::sqrt(d2);
  }
  return total / n;
}

SwapAblationReport ablate_swap(const data::ImageDataset& style, const data::ImageDataset& source,
                               const model::PipelineConfig& cfg, const stage1::Stage1Schedule& sched,
                               const std::vector<std::uint64_t>& seeds) {
  SwapAblationReport rep;
  stage1::Stage1Schedule off = sched;
  off.phase1.swap = 0;
  off.phase2.swap = 0;

  model::Model<float> last_on, last_off;
  for (std::uint64_t seed : seeds) {
    auto m_on = stage1::encapsulate(style, cfg, sched, seed);
    auto m_off = stage1::encapsulate(style, cfg, off, seed);
    SwapAblationRun run;
    run.seed = seed;
    run.consistency_on = style_consistency_error(m_on, style, seed);
    run.consistency_off = style_consistency_error(m_off, style, seed);
    if (run.consistency_on < run.consistency_off) ++rep.wins_on;
    rep.runs.push_back(run);
    last_on = std::move(m_on);
    last_off = std::move(m_off);
  }

  // qualitative grid from the last pair: input, swap-off sample, swap-on sample
  const int probes = std::min<int>(3, static_cast<int>(source.size()));
  for (int i = 0; i < probes; ++i) {
    const Tensor<float>& x = source.images[static_cast<std::size_t>(i)];
    std::vector<Tensor<float>> row{x.clone()};
    row.push_back(stage2::sample_multimodal(last_off, x, {1})[0]);
    row.push_back(stage2::sample_multimodal(last_on, x, {1})[0]);
    rep.grid.push_back(std::move(row));
  }
  return rep;
}

XiAblationReport ablate_xi(const data::ImageDataset& style, const data::ImageDataset& source,
                           const model::PipelineConfig& base, const stage1::Stage1Schedule& sched,
                           const stage2::StylizeConfig& s2cfg, const std::vector<int>& xi_list,
                           const std::vector<std::uint64_t>& seeds) {
  if (xi_list.empty()) throw ConfigError("ablate_xi: empty xi list");
  for (int xi : xi_list)
    if (xi < 1 || xi > base.latent.num_layers - 1)
      throw ConfigError("ablate_xi: xi " + std::to_string(xi) + " outside [1, L-1]");
  XiAblationReport rep;
  rep.seeds = seeds;

  const int probes = std::min<int>(3, static_cast<int>(source.size()));
  std::vector<std::vector<Tensor<float>>> grid(static_cast<std::size_t>(probes));
  for (int i = 0; i < probes; ++i) grid[static_cast<std::size_t>(i)].push_back(source.images[static_cast<std::size_t>(i)].clone());

  for (int xi : xi_list) {
    model::PipelineConfig cfg = model::PipelineConfig::make(
        base.resolution, xi, base.latent.layer_dim, base.remapper.noise_dim);
    cfg.gp_coef = base.gp_coef;
    XiAblationEntry entry;
    entry.xi = xi;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      auto m = stage1::encapsulate(style, cfg, sched, seeds[si]);
      persist::LoadedPackage pkg;
      pkg.model = std::move(m);
      pkg.has_critic = true;
      auto session = stage2::stylize_offline(pkg, source, s2cfg, seeds[si]);
      entry.id_loss_per_seed.push_back(mean_identity_loss(session.model, source));
      if (si == 0)
        for (int i = 0; i < probes; ++i)
          grid[static_cast<std::size_t>(i)].push_back(
              stage2::stylize_forward(session.model, source.images[static_cast<std::size_t>(i)]));
    }
    entry.mean_id_loss = 0;
    for (double v : entry.id_loss_per_seed) entry.mean_id_loss += v;
    entry.mean_id_loss /= static_cast<double>(entry.id_loss_per_seed.size());
    rep.entries.push_back(std::move(entry));
  }
  rep.grid = std::move(grid);
  return rep;
}

void write_report(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write report: " + path);
  for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

}  // namespace modify::eval
