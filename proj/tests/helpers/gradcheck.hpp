#pragma once

// Central finite-difference oracle for analytic gradients. Test-only code:
// independent of the backward pass it checks.

#include "nap/nn.hpp"

namespace nap::testing {

// Scalar loss L = 0.5 * ||forward(net, x) - target||^2 so the upstream
// gradient for backward() is simply (y - target).
inline double quadratic_loss(nap::nn::DenseNet<double>& net,
                             const nap::Vecd& x, const nap::Vecd& target) {
  nap::Vecd y = nap::nn::forward(net, nap::Matd(x));
  return 0.5 * (y - target).squaredNorm();
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// Compares analytic parameter gradients against central differences.
inline GradCheckResult grad_check(nap::nn::DenseNet<double> net,
                                  const nap::Vecd& x, const nap::Vecd& target,
                                  double step = 1e-5) {
  nap::nn::ForwardCache<double> cache;
  nap::Vecd y = nap::nn::forward(net, nap::Matd(x), &cache);
  nap::nn::DenseNet<double> grads = nap::nn::zero_grads(net);
  nap::nn::backward(net, cache, nap::Matd(y - target), grads);

  GradCheckResult result;
  auto params = nap::nn::param_views(net);
  auto analytic = nap::nn::param_views(grads);
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index j = 0; j < params[k].size; ++j) {
      double saved = params[k].data[j];
      params[k].data[j] = saved + step;
      double lp = quadratic_loss(net, x, target);
      params[k].data[j] = saved - step;
      double lm = quadratic_loss(net, x, target);
      params[k].data[j] = saved;
      double numeric = (lp - lm) / (2.0 * step);
      double a = analytic[k].data[j];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = params[k].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return result;
}

}  // namespace nap::testing
