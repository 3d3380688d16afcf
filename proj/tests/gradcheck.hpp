#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "modify/autodiff.hpp"
#include "modify/nets.hpp"
#include "modify/rng.hpp"

// Central-difference oracle shared by the loss and acceptance tests. Samples
// coordinates uniformly over the given parameters, compares against the
// analytic gradient of loss_fn(), and reports the fraction within `tol`
// relative error. Runs in double; the loss function must be a pure function
// of the parameter values.
namespace gradcheck {

struct Result {
  int total = 0;
  int ok = 0;
  double worst_rel = 0;

  double pass_fraction() const { return total == 0 ? 1.0 : static_cast<double>(ok) / total; }
};

inline Result run(const std::vector<modify::nets::NamedParam<double>>& params,
                  const std::function<modify::ad::Var<double>()>& loss_fn, int samples,
                  double tol, std::uint64_t pick_seed = 1234) {
  using namespace modify;
  auto gm = ad::backward(loss_fn());
  rng::Rng pick(pick_seed);
  Result res;
  for (int s = 0; s < samples; ++s) {
    const auto& p = params[pick.integer(params.size())];
    const std::int64_t i =
        static_cast<std::int64_t>(pick.integer(static_cast<std::uint64_t>(p.var.numel())));
    double* w = p.var.node()->value.data();
    const double orig = w[i];
    const double h = std::max(std::fabs(orig), 0.1) * 1e-3;
    w[i] = orig + h;
    const double lp = ad::scalar_value(loss_fn());
    w[i] = orig - h;
    const double lm = ad::scalar_value(loss_fn());
    w[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    const double an = gm.get_or_zero(p.var).value()[i];
    const double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8});
    ++res.total;
    if (rel <= tol)
      ++res.ok;
    else if (rel > res.worst_rel)
      res.worst_rel = rel;
  }
  return res;
}

}  // namespace gradcheck
