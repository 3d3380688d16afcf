#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "modify/autodiff.hpp"
#include "modify/nets.hpp"
#include "modify/rng.hpp"

namespace modify::losses {

// Norm convention throughout: per-element mean of squares. All identity cases
// (a==b and friends) return exactly 0, not an epsilon.

struct LossWeights {
  // stage 1
  double adv_r = 0, adv_z = 0, recon = 0, lpips = 0, id = 0, swap = 0;
  // stage 2
  double adv_x = 0;

  void validate() const {
    for (double v : {adv_r, adv_z, recon, lpips, id, swap, adv_x})
      if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
  }
  bool operator==(const LossWeights&) const = default;
};

template <class T>
ad::Var<T> mse(const ad::Var<T>& a, const ad::Var<T>& b) {
  check_same_shape(a.value(), b.value(), "mse");
  return ad::mean_all(ad::square(ad::sub(a, b)));
}

template <class T>
ad::Var<T> loss_recon(const ad::Var<T>& a, const ad::Var<T>& b) {
  return mse(a, b);
}

template <class T>
ad::Var<T> loss_lpips(const nets::Embedder<T>& f, const ad::Var<T>& a, const ad::Var<T>& b) {
  check_same_shape(a.value(), b.value(), "loss_lpips");
  auto fa = f.activations(a);
  auto fb = f.activations(b);
  ad::Var<T> total;
  for (std::size_t s = 0; s < fa.size(); ++s) {
    auto term = mse(fa[s], fb[s]);
    total = total.defined() ? ad::add(total, term) : term;
  }
  return ad::scale(total, T(1) / static_cast<T>(fa.size()));
}

// mean over rows of (1 - cos(ea_i, eb_i)); rows must have positive norm
template <class T>
ad::Var<T> cosine_distance(const ad::Var<T>& ea, const ad::Var<T>& eb) {
  check_same_shape(ea.value(), eb.value(), "cosine_distance");
  auto dots = ad::sum_cols(ad::mul(ea, eb));
  auto na2 = ad::sum_cols(ad::square(ea));
  auto nb2 = ad::sum_cols(ad::square(eb));
  for (int i = 0; i < na2.value().dim(0); ++i)
    if (na2.value()[i] <= T(0) || nb2.value()[i] <= T(0))
      throw NumericError("cosine undefined: zero-norm embedding in row " + std::to_string(i));
  auto cos = ad::div(dots, ad::sqrt_(ad::mul(na2, nb2)));
  return ad::mean_all(ad::sub(ad::constant(Tensor<T>::full(cos.shape(), T(1))), cos));
}

template <class T>
ad::Var<T> loss_id(const nets::Embedder<T>& r, const ad::Var<T>& a, const ad::Var<T>& b) {
  return cosine_distance(r.embed(a), r.embed(b));
}

// E[Dis(real)] - E[Dis(fake)], the paper-form adversarial value. Constant in
// the generator's real stream, so it doubles as the generator-side term.
template <class T>
ad::Var<T> wasserstein_gap(const nets::Critic<T>& critic, const ad::Var<T>& real,
                           const ad::Var<T>& fake) {
  check_same_shape(real.value(), fake.value(), "wasserstein_gap");
  return ad::sub(ad::mean_all(critic(real)), ad::mean_all(critic(fake)));
}

template <class T>
ad::Var<T> loss_adv_gen(const nets::Critic<T>& critic, const ad::Var<T>& fake) {
  return ad::neg(ad::mean_all(critic(fake)));
}

// Penalises (||grad_xhat Dis(xhat)|| - 1)^2 on per-sample interpolates; the
// input-gradient is kept on the graph so the penalty trains the critic.
template <class T>
ad::Var<T> gradient_penalty(const nets::Critic<T>& critic, const Tensor<T>& real,
                            const Tensor<T>& fake, const Tensor<T>& eps) {
  check_same_shape(real, fake, "gradient_penalty");
  const int n = real.dim(0), c = real.dim(1), h = real.dim(2), w = real.dim(3);
  if (eps.rank() != 1 || eps.dim(0) != n)
    throw ShapeError("gradient_penalty: eps must be [N]");
  Tensor<T> xh({n, c, h, w});
  const std::int64_t chw = static_cast<std::int64_t>(c) * h * w;
  for (int i = 0; i < n; ++i) {
    const T e = eps[i];
    const T* rp = real.data() + i * chw;
    const T* fp = fake.data() + i * chw;
    T* xp = xh.data() + i * chw;
    for (std::int64_t j = 0; j < chw; ++j) xp[j] = e * rp[j] + (T(1) - e) * fp[j];
  }
  auto xhat = ad::leaf(std::move(xh), true);
  auto gm = ad::backward(ad::sum_all(critic(xhat)));
  auto g = ad::reshape(gm.at(xhat), {n, static_cast<int>(chw)});
  auto norms = ad::sqrt_(ad::add_const(ad::sum_cols(ad::square(g)), T(1e-12)));
  return ad::mean_all(ad::square(ad::add_const(norms, T(-1))));
}

// critic loss: -(E[Dis(real)] - E[Dis(fake)]) + gp_coef * penalty.
// Caller detaches real/fake; eps supplies the per-sample interpolation draws.
template <class T>
ad::Var<T> loss_adv_critic(const nets::Critic<T>& critic, const ad::Var<T>& real,
                           const ad::Var<T>& fake, T gp_coef, const Tensor<T>& eps) {
  auto loss = ad::neg(wasserstein_gap(critic, real, fake));
  if (gp_coef != T(0))
    loss = ad::add(loss, ad::scale(gradient_penalty(critic, real.value(), fake.value(), eps), gp_coef));
  return loss;
}

// distance between injected style rows and the re-encoded ones, [N,xi,D]
template <class T>
ad::Var<T> loss_swap(const ad::Var<T>& w_z, const ad::Var<T>& w_z_prime) {
  check_same_shape(w_z.value(), w_z_prime.value(), "loss_swap");
  return mse(w_z, w_z_prime);
}

// ---------------------------------------------------------------------------
// stage objectives — lazy: a term's thunk is only invoked when its weight is
// nonzero, so disabled branches are never even computed.
// ---------------------------------------------------------------------------

template <class T>
using TermFn = std::function<ad::Var<T>()>;

template <class T>
struct Objective {
  ad::Var<T> total;
  std::vector<std::pair<std::string, double>> terms;  // active terms only

  bool has(const std::string& name) const {
    for (const auto& [k, v] : terms)
      if (k == name) return true;
    return false;
  }
  double term(const std::string& name) const {
    for (const auto& [k, v] : terms)
      if (k == name) return v;
    throw Error("objective has no term " + name);
  }
};

template <class T>
struct Stage1Terms {
  TermFn<T> adv_r, adv_z, recon, lpips, id, swap;
};

template <class T>
struct Stage2Terms {
  TermFn<T> adv_x, recon, lpips, id;
};

namespace detail {
template <class T>
void accumulate(Objective<T>& obj, const char* name, double weight, const TermFn<T>& fn) {
  if (weight == 0) return;
  if (!fn) throw Error(std::string("objective: missing thunk for active term ") + name);
  ad::Var<T> term = fn();
  obj.terms.emplace_back(name, static_cast<double>(ad::scalar_value(term)));
  auto weighted = ad::scale(term, static_cast<T>(weight));
  obj.total = obj.total.defined() ? ad::add(obj.total, weighted) : weighted;
}
template <class T>
void finish(Objective<T>& obj) {
  if (!obj.total.defined()) obj.total = ad::constant(Tensor<T>::scalar(T(0)));
}
}  // namespace detail

template <class T>
Objective<T> objective_stage1(const LossWeights& w, const Stage1Terms<T>& t) {
  w.validate();
  Objective<T> obj;
  detail::accumulate(obj, "adv_r", w.adv_r, t.adv_r);
  detail::accumulate(obj, "adv_z", w.adv_z, t.adv_z);
  detail::accumulate(obj, "recon", w.recon, t.recon);
  detail::accumulate(obj, "lpips", w.lpips, t.lpips);
  detail::accumulate(obj, "id", w.id, t.id);
  detail::accumulate(obj, "swap", w.swap, t.swap);
  detail::finish(obj);
  return obj;
}

template <class T>
Objective<T> objective_stage2(const LossWeights& w, const Stage2Terms<T>& t) {
  w.validate();
  Objective<T> obj;
  detail::accumulate(obj, "adv_x", w.adv_x, t.adv_x);
  detail::accumulate(obj, "recon", w.recon, t.recon);
  detail::accumulate(obj, "lpips", w.lpips, t.lpips);
  detail::accumulate(obj, "id", w.id, t.id);
  detail::finish(obj);
  return obj;
}

}  // namespace modify::losses
