#pragma once

// Oracle suite: independent re-derivations of the load-bearing math,
// runnable from a shipped binary without the test tree.

#include <iostream>

#include "nap/ppo.hpp"

namespace nap::selftest {

inline bool st_gae() {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    int T = 10;
    Vecd r(T), v(T);
    std::vector<std::uint8_t> done(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      r[t] = rng.uniform(-2.0, 2.0);
      v[t] = rng.uniform(-1.0, 1.0);
      done[static_cast<std::size_t>(t)] = rng.uniform() < 0.2 ? 1 : 0;
    }
    double bootstrap = rng.uniform(-1.0, 1.0);
    auto [adv, ret] = nav::gae(r, v, done, bootstrap, 0.99, 0.95);
    for (int t = 0; t < T; ++t) {
      // brute-force discounted sum of TD errors up to the episode boundary
      double acc = 0.0, w = 1.0;
      for (int u = t; u < T; ++u) {
        double mask = done[static_cast<std::size_t>(u)] ? 0.0 : 1.0;
        double vn = u + 1 < T ? v[u + 1] : bootstrap;
        acc += w * (r[u] + 0.99 * mask * vn - v[u]);
        if (done[static_cast<std::size_t>(u)]) break;
        w *= 0.99 * 0.95;
      }
      if (std::abs(adv[t] - acc) > 1e-10) return false;
    }
  }
  return true;
}

inline bool st_ddim() {
  prior::NoiseSchedule s = prior::NoiseSchedule::make();
  Rng rng(2);
  Matf x0in(6, 1);
  for (int i = 0; i < 6; ++i) x0in(i, 0) = static_cast<float>(rng.normal());

  // zero denoiser: track the scalar multiplier through the recursion
  {
    Matf out = prior::ddim_denoise_fn(s, x0in, [](const Matf& x, int) {
      return Matf::Zero(x.rows(), x.cols()).eval();
    });
    double m = 1.0, x0s = 0.0;
    for (std::size_t i = 0; i < s.ddim_indices.size(); ++i) {
      double ab = s.alphas_bar[s.ddim_indices[i]];
      x0s = m / std::sqrt(ab);
      if (i + 1 < s.ddim_indices.size())
        m = std::sqrt(s.alphas_bar[s.ddim_indices[i + 1]]) * x0s;
    }
    for (int i = 0; i < 6; ++i)
      if (std::abs(out(i, 0) - x0s * x0in(i, 0)) > 1e-6) return false;
  }
  // linear denoiser eps = A x
  {
    const float A = 0.37f;
    Matf out = prior::ddim_denoise_fn(
        s, x0in, [A](const Matf& x, int) { return (A * x).eval(); });
    double m = 1.0, x0s = 0.0;
    for (std::size_t i = 0; i < s.ddim_indices.size(); ++i) {
      double ab = s.alphas_bar[s.ddim_indices[i]];
      x0s = (m - std::sqrt(1.0 - ab) * A * m) / std::sqrt(ab);
      if (i + 1 < s.ddim_indices.size()) {
        double abn = s.alphas_bar[s.ddim_indices[i + 1]];
        m = std::sqrt(abn) * x0s + std::sqrt(1.0 - abn) * A * m;
      }
    }
    for (int i = 0; i < 6; ++i)
      if (std::abs(out(i, 0) - x0s * x0in(i, 0)) > 1e-6) return false;
  }
  return true;
}

inline bool st_rewards() {
  using namespace nap::rewards;
  auto near = [](double a, double b) { return std::abs(a - b) < 1e-9; };
  bool ok = true;
  ok &= near(reward_location(Vec2d(0.5, 0), Vec2d(0, 0), 4.0), std::exp(-2.0));
  ok &= std::abs(reward_location(Vec2d(0.5, 0), Vec2d(0, 0), 4.0) - 0.135335) <
        1e-5;
  ok &= near(reward_location(Vec3d(0, 0, 1.0), Vec3d(0, 0, 0), 2.0),
             std::exp(-2.0));
  ok &= near(reward_orientation(Vec2d(2, 0), Vec2d(0, 0), Vec2d(0, 1), 2.0),
             std::exp(-2.0));
  ReachParams p;
  ok &= near(reward_stability(Vec2d(0.5, 0), Vec2d(0, 0), 1.0, 1.0, p), -0.4);
  ok &= near(reward_reach(Vec2d(0, 0), Vec2d(0, 0), Vec2d(1, 0), 0.0, 0.0, p),
             0.65);
  VelocityParams vp;
  double lambda = 10.0 / 11.0;
  ok &= near(reward_velocity(Vec2d(0, 0), Vec2d(0, 1), Vec2d(0, 0),
                             Vec2d(1, 0), vp),
             (1.0 - lambda) * 1.0 + lambda * 0.5);
  ok &= near(reward_velocity(Vec2d(0, 0), Vec2d(1, 0), Vec2d(2, 0),
                             Vec2d(1, 0), vp),
             std::exp(-1.0));
  return ok;
}

inline bool st_gradients() {
  Rng rng(3);
  for (bool norm : {false, true}) {
    nn::DenseNet<double> net = nn::make_mlp<double>({4, 8, 3}, norm, rng);
    Vecd x = rng.normal_vec<double>(4), target = rng.normal_vec<double>(3);
    nn::ForwardCache<double> cache;
    Vecd y = nn::forward(net, Matd(x), &cache);
    nn::DenseNet<double> grads = nn::zero_grads(net);
    nn::backward(net, cache, Matd(y - target), grads);
    auto params = nn::param_views(net);
    auto analytic = nn::param_views(grads);
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (Eigen::Index j = 0; j < params[k].size; ++j) {
        double saved = params[k].data[j];
        auto loss = [&]() {
          Vecd yy = nn::forward(net, Matd(x));
          return 0.5 * (yy - target).squaredNorm();
        };
        params[k].data[j] = saved + 1e-5;
        double lp = loss();
        params[k].data[j] = saved - 1e-5;
        double lm = loss();
        params[k].data[j] = saved;
        double numeric = (lp - lm) / 2e-5;
        double a = analytic[k].data[j];
        double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (std::abs(a - numeric) / denom > 1e-4) return false;
      }
    }
  }
  return true;
}

inline bool st_ppo_clip() {
  Rng rng(4);
  nav::PolicyArch arch;
  arch.trunk_hidden = {8, 4};
  arch.norm_middle = false;
  nav::NoisePolicy p =
      nav::make_policy(nav::Task::far_goal, false, 0, 2, arch, rng);
  nav::PPOConfig cfg;
  int n = 5;
  nav::MiniBatch mb;
  mb.obs = Matf::Random(p.obs_dim(), n);
  mb.omega = Matf::Random(p.out_dim, n);
  mb.old_logp.resize(n);
  mb.adv.resize(n);
  mb.ret.resize(n);
  nav::PolicyEval ev;
  nav::policy_forward(p, mb.obs, ev);
  for (int i = 0; i < n; ++i) {
    mb.old_logp[i] =
        nav::gaussian_log_prob(ev.mean.col(i), p.log_std, mb.omega.col(i));
    mb.adv[i] = 0.3 * (i - 2);
    mb.ret[i] = ev.value[i];
  }
  nav::LossDiag d1 = nav::ppo_loss(p, mb, cfg);
  if (std::abs(d1.l_clip - (-mb.adv.mean())) > 1e-9) return false;
  for (int i = 0; i < n; ++i) {
    mb.old_logp[i] -= std::log(1.5);
    mb.adv[i] = 1.0;
  }
  nav::LossDiag d2 = nav::ppo_loss(p, mb, cfg);
  return std::abs(d2.l_clip - (-1.2)) < 1e-9;
}

inline bool st_bound() {
  Rng rng(5);
  nav::PolicyArch arch;
  arch.trunk_hidden = {8, 4};
  arch.norm_middle = false;
  nav::NoisePolicy p =
      nav::make_policy(nav::Task::far_goal, false, 0, 2, arch, rng);
  nav::PPOConfig cfg;
  int n = 4;
  nav::MiniBatch mb;
  mb.obs = Matf::Random(p.obs_dim(), n);
  mb.old_logp.resize(n);
  mb.adv = Vecd::Zero(n);
  mb.ret.resize(n);
  auto eval_bound = [&](double mu) {
    for (auto& layer : p.mean_head.layers) {
      layer.W.setZero();
      layer.b.setConstant(static_cast<float>(mu));
    }
    nav::PolicyEval ev;
    nav::policy_forward(p, mb.obs, ev);
    mb.omega = ev.mean;
    for (int i = 0; i < n; ++i) {
      mb.old_logp[i] =
          nav::gaussian_log_prob(ev.mean.col(i), p.log_std, mb.omega.col(i));
      mb.ret[i] = ev.value[i];
    }
    return nav::ppo_loss(p, mb, cfg).l_bound;
  };
  return std::abs(eval_bound(0.8)) < 1e-12 &&
         std::abs(eval_bound(1.5) - 0.25) < 1e-9;
}

// Runs the whole suite, printing one line per check. Returns failure count.
inline int run_all(std::ostream& os = std::cout) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    os << "selftest " << name << ": " << (ok ? "ok" : "FAIL") << '\n';
    if (!ok) ++failures;
  };
  check("gae-brute-force", st_gae());
  check("ddim-closed-form", st_ddim());
  check("reward-point-values", st_rewards());
  check("gradient-finite-difference", st_gradients());
  check("ppo-clip-hand-cases", st_ppo_clip());
  check("bounding-loss", st_bound());
  return failures;
}

}  // namespace nap::selftest
