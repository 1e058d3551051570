#pragma once

#include "nap/env_task.hpp"

#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace nap::nav {

// ---------------------------------------------------------------------------
// Policy

// Actor-critic over [prop | task | heightmap] observations. The trunk sees
// proprioception plus either raw task features (flat) or the task MLP's
// encoding of (task ‖ heightmap) (terrain mode). Separate linear heads emit
// the noise mean and the value; log_std is a free state-independent vector.
struct NoisePolicy {
  Task task = Task::far_goal;
  bool terrain_mode = false;
  bool direct = false;  // output is a raw action, not diffusion noise
  int prop_dim = kPropDim;
  int task_dim = 2;
  int hm_dim = 0;
  int out_dim = 0;

  nn::DenseNet<float> task_mlp;  // terrain mode only
  nn::DenseNet<float> trunk;     // linear output; SiLU applied before heads
  nn::DenseNet<float> mean_head;
  nn::DenseNet<float> value_head;
  Vecf log_std;

  static constexpr float kLogStdLo = -5.0f, kLogStdHi = 2.0f;

  int obs_dim() const { return prop_dim + task_dim + hm_dim; }

  void validate() const {
    trunk.validate();
    mean_head.validate();
    value_head.validate();
    if (out_dim < 1 || log_std.size() != out_dim)
      throw ConfigError("policy: bad output dims");
    if (mean_head.output_dim() != out_dim || value_head.output_dim() != 1)
      throw ConfigError("policy: head dims mismatch");
    int trunk_in = terrain_mode ? prop_dim + task_mlp.output_dim()
                                : prop_dim + task_dim;
    if (trunk.input_dim() != trunk_in)
      throw ConfigError("policy: trunk input dim mismatch");
    if (terrain_mode) {
      task_mlp.validate();
      if (task_mlp.input_dim() != task_dim + hm_dim)
        throw ConfigError("policy: task mlp input dim mismatch");
    }
    if ((log_std.array() < kLogStdLo - 1e-6f).any() ||
        (log_std.array() > kLogStdHi + 1e-6f).any())
      throw ConfigError("policy: log_std outside clamp range");
  }
};

struct PolicyArch {
  std::vector<int> trunk_hidden = {2048, 1024, 512};
  std::vector<int> task_hidden = {512, 256};
  bool norm_middle = true;
};

inline NoisePolicy make_policy(Task task, bool terrain_mode, int hm_dim,
                               int out_dim, const PolicyArch& arch, Rng& rng) {
  NoisePolicy p;
  p.task = task;
  p.terrain_mode = terrain_mode;
  p.task_dim = task_feature_dim(task);
  p.hm_dim = terrain_mode ? hm_dim : 0;
  p.out_dim = out_dim;
  int trunk_in = p.prop_dim + p.task_dim;
  if (terrain_mode) {
    std::vector<int> tdims{p.task_dim + p.hm_dim};
    for (int h : arch.task_hidden) tdims.push_back(h);
    p.task_mlp = nn::make_mlp<float>(tdims, false, rng);
    trunk_in = p.prop_dim + arch.task_hidden.back();
  }
  std::vector<int> dims{trunk_in};
  for (int h : arch.trunk_hidden) dims.push_back(h);
  p.trunk = nn::make_mlp<float>(dims, arch.norm_middle, rng);
  p.mean_head =
      nn::make_mlp<float>({arch.trunk_hidden.back(), out_dim}, false, rng, 0.01);
  p.value_head =
      nn::make_mlp<float>({arch.trunk_hidden.back(), 1}, false, rng);
  p.log_std = Vecf::Zero(out_dim);  // sigma = 1: the prior's Gaussian regime
  p.validate();
  return p;
}

struct PolicyEval {
  Matf mean;   // out_dim x B
  Vecf value;  // B
  // caches for the backward pass
  nn::ForwardCache<float> task_c, trunk_c, mean_c, value_c;
  Matf trunk_pre, trunk_act;
};

inline void policy_forward(const NoisePolicy& p, const Matf& obs,
                           PolicyEval& ev, bool with_cache = false) {
  if (obs.rows() != p.obs_dim()) throw UsageError("policy: obs dim mismatch");
  Eigen::Index B = obs.cols();
  Matf trunk_in;
  if (p.terrain_mode) {
    Matf task_in = obs.bottomRows(p.task_dim + p.hm_dim);
    Matf emb =
        nn::forward(p.task_mlp, task_in, with_cache ? &ev.task_c : nullptr);
    trunk_in.resize(p.prop_dim + emb.rows(), B);
    trunk_in.topRows(p.prop_dim) = obs.topRows(p.prop_dim);
    trunk_in.bottomRows(emb.rows()) = emb;
  } else {
    trunk_in = obs;
  }
  ev.trunk_pre =
      nn::forward(p.trunk, trunk_in, with_cache ? &ev.trunk_c : nullptr);
  ev.trunk_act = ev.trunk_pre.unaryExpr([](float v) { return nn::silu(v); });
  ev.mean = nn::forward(p.mean_head, ev.trunk_act,
                        with_cache ? &ev.mean_c : nullptr);
  ev.value = nn::forward(p.value_head, ev.trunk_act,
                         with_cache ? &ev.value_c : nullptr)
                 .row(0)
                 .transpose();
}

// Gradient containers for every trainable block.
struct PolicyGrads {
  nn::DenseNet<float> task_mlp, trunk, mean_head, value_head;
  Vecf log_std;
};

inline PolicyGrads zero_policy_grads(const NoisePolicy& p) {
  PolicyGrads g;
  if (p.terrain_mode) g.task_mlp = nn::zero_grads(p.task_mlp);
  g.trunk = nn::zero_grads(p.trunk);
  g.mean_head = nn::zero_grads(p.mean_head);
  g.value_head = nn::zero_grads(p.value_head);
  g.log_std = Vecf::Zero(p.log_std.size());
  return g;
}

// Backward through heads and trunk given upstream gradients on the mean and
// value outputs; accumulates into `g`.
inline void policy_backward(const NoisePolicy& p, PolicyEval& ev,
                            const Matf& d_mean, const Matf& d_value,
                            PolicyGrads& g) {
  Matf d_act = nn::backward(p.mean_head, ev.mean_c, d_mean, g.mean_head);
  d_act += nn::backward(p.value_head, ev.value_c, d_value, g.value_head);
  Matf d_pre = d_act.cwiseProduct(
      ev.trunk_pre.unaryExpr([](float v) { return nn::silu_grad(v); }));
  Matf d_in = nn::backward(p.trunk, ev.trunk_c, d_pre, g.trunk);
  if (p.terrain_mode) {
    Matf d_emb = d_in.bottomRows(d_in.rows() - p.prop_dim);
    nn::backward(p.task_mlp, ev.task_c, d_emb, g.task_mlp);
  }
}

// Diagonal-Gaussian log density of `x` under (mean, exp(log_std)).
inline double gaussian_log_prob(const Vecf& mean, const Vecf& log_std,
                                const Vecf& x) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    double ls = log_std[i];
    double z = (static_cast<double>(x[i]) - mean[i]) * std::exp(-ls);
    lp += -0.5 * z * z - ls - 0.5 * std::log(2.0 * M_PI);
  }
  return lp;
}

struct ActResult {
  Vecf omega;
  double log_prob = 0.0;
  double value = 0.0;
};

// Samples omega ~ N(mean(obs), diag exp(2 log_std)); eval mode returns the
// mean with its own density.
inline ActResult act(const NoisePolicy& p, const Vecf& obs, Rng& rng,
                     bool eval_mode = false) {
  if (obs.size() != p.obs_dim()) throw UsageError("act: obs dim mismatch");
  PolicyEval ev;
  Matf o(obs.size(), 1);
  o.col(0) = obs;
  policy_forward(p, o, ev);
  ActResult r;
  Vecf mean = ev.mean.col(0);
  if (eval_mode) {
    r.omega = mean;
  } else {
    r.omega.resize(p.out_dim);
    for (int i = 0; i < p.out_dim; ++i)
      r.omega[i] = mean[i] + std::exp(p.log_std[i]) *
                                 static_cast<float>(rng.normal());
  }
  r.log_prob = gaussian_log_prob(mean, p.log_std, r.omega);
  r.value = ev.value[0];
  return r;
}

// ---------------------------------------------------------------------------
// GAE

// delta_t = r_t + gamma (1-done_t) V_{t+1} - V_t;
// A_t = delta_t + gamma tau (1-done_t) A_{t+1}; returns = A + V.
inline std::pair<Vecd, Vecd> gae(const Vecd& rewards, const Vecd& values,
                                 const std::vector<std::uint8_t>& dones,
                                 double bootstrap, double gamma, double tau) {
  Eigen::Index T = rewards.size();
  if (values.size() != T || static_cast<Eigen::Index>(dones.size()) != T)
    throw UsageError("gae: length mismatch");
  if (gamma <= 0 || gamma > 1 || tau < 0 || tau > 1)
    throw UsageError("gae: gamma in (0,1], tau in [0,1]");
  Vecd adv(T), ret(T);
  double a_next = 0.0;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    double mask = dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    double v_next = t + 1 < T ? values[t + 1] : bootstrap;
    double delta = rewards[t] + gamma * mask * v_next - values[t];
    a_next = delta + gamma * tau * mask * a_next;
    adv[t] = a_next;
    ret[t] = adv[t] + values[t];
  }
  return {adv, ret};
}

// ---------------------------------------------------------------------------
// PPO objective

struct PPOConfig {
  double gamma = 0.99;
  double gae_tau = 0.95;
  double clip_eps = 0.2;
  int horizon = 32;
  int minibatch_size = 4096;
  int mini_epochs = 8;
  double lr = 2e-5;
  double b1 = 5.0;   // value coefficient
  double b2 = 10.0;  // bound coefficient
  double bound_threshold = 1.0;
  int n_envs = 256;
  double kl_stop = 0.0;        // skip the rest of the epoch above this KL (0 = off)
  double lr_final_frac = 1.0;  // linear lr decay target (1 = constant)

  void validate() const {
    if (kl_stop < 0 || lr_final_frac <= 0 || lr_final_frac > 1)
      throw ConfigError("ppo: invalid kl_stop or lr_final_frac");
    if (gamma <= 0 || gamma > 1 || gae_tau < 0 || gae_tau > 1 ||
        clip_eps <= 0 || horizon < 1 || minibatch_size < 1 ||
        mini_epochs < 1 || lr <= 0 || b1 < 0 || b2 < 0 ||
        bound_threshold <= 0 || n_envs < 1)
      throw ConfigError("ppo: invalid hyperparameter");
    if (minibatch_size > n_envs * horizon)
      throw ConfigError("ppo: minibatch larger than the rollout");
  }
};

struct MiniBatch {
  Matf obs;       // obs_dim x n
  Matf omega;     // out_dim x n
  Vecd old_logp;  // n
  Vecd adv;       // normalized
  Vecd ret;       // n
};

struct LossDiag {
  double total = 0, l_clip = 0, l_vf = 0, l_bound = 0;
  double clip_frac = 0, approx_kl = 0, mean_abs_mu = 0;
};

// L = L_clip + b1 L_vf + b2 L_bound; accumulates parameter gradients when
// `grads` is given.
inline LossDiag ppo_loss(const NoisePolicy& p, const MiniBatch& mb,
                         const PPOConfig& cfg, PolicyGrads* grads = nullptr) {
  Eigen::Index n = mb.obs.cols();
  if (n < 1 || mb.omega.cols() != n ||
      mb.old_logp.size() != n || mb.adv.size() != n || mb.ret.size() != n)
    throw UsageError("ppo_loss: batch shape mismatch");
  PolicyEval ev;
  policy_forward(p, mb.obs, ev, grads != nullptr);

  LossDiag d;
  const int od = p.out_dim;
  Matf d_mean = Matf::Zero(od, n);
  Matf d_value = Matf::Zero(1, n);
  Vecf d_logstd = Vecf::Zero(od);

  double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // new log prob
    double lp = gaussian_log_prob(ev.mean.col(i), p.log_std, mb.omega.col(i));
    double ratio = std::exp(lp - mb.old_logp[i]);
    double a = mb.adv[i];
    double surr1 = ratio * a;
    double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    double surr2 = clipped * a;
    d.l_clip += -std::min(surr1, surr2) * inv_n;
    d.approx_kl += (mb.old_logp[i] - lp) * inv_n;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) d.clip_frac += inv_n;

    double v = ev.value[i];
    double verr = v - mb.ret[i];
    d.l_vf += verr * verr * inv_n;

    double dlp = 0.0;
    if (surr1 <= surr2) dlp = -a * ratio * inv_n;  // clip inactive branch
    for (int j = 0; j < od; ++j) {
      double mu = ev.mean(j, i);
      double sig = std::exp(static_cast<double>(p.log_std[j]));
      double zx = (static_cast<double>(mb.omega(j, i)) - mu) / sig;
      // policy-gradient path through the Gaussian density
      d_mean(j, i) += static_cast<float>(dlp * zx / sig);
      d_logstd[j] += static_cast<float>(dlp * (zx * zx - 1.0));
      // bounding hinge on the mean
      double excess = std::abs(mu) - cfg.bound_threshold;
      d.mean_abs_mu += std::abs(mu) * inv_n / od;
      if (excess > 0) {
        d.l_bound += excess * excess * inv_n / od;
        d_mean(j, i) += static_cast<float>(
            cfg.b2 * 2.0 * excess * (mu > 0 ? 1.0 : -1.0) * inv_n / od);
      }
    }
    d_value(0, i) = static_cast<float>(cfg.b1 * 2.0 * verr * inv_n);
  }
  d.total = d.l_clip + cfg.b1 * d.l_vf + cfg.b2 * d.l_bound;
  if (!std::isfinite(d.total))
    throw TrainingError("ppo_loss: non-finite loss");
  if (grads) {
    policy_backward(p, ev, d_mean, d_value, *grads);
    grads->log_std += d_logstd;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Curriculum

struct CurriculumState {
  std::vector<double> thresholds = {50.0, 100.0};  // unlock level 1; unlock all
  int max_level = 4;
  int unlocked = 0;  // highest unlocked level, monotone

  void update(double mean_reward) {
    int target = 0;
    if (thresholds.size() >= 1 && mean_reward > thresholds[0]) target = 1;
    if (thresholds.size() >= 2 && mean_reward > thresholds[1])
      target = max_level;
    unlocked = std::max(unlocked, target);
  }
};

// ---------------------------------------------------------------------------
// Rollout

struct RolloutBuffer {
  // column index = t * n_envs + e
  Matf obs, omega;
  Vecd logp, value, reward;
  std::vector<std::uint8_t> done;
  Vecd bootstrap;  // per env, V(s_T)
  // episode bookkeeping for the epoch
  long episodes_done = 0, episodes_success = 0;
  double episode_reward_sum = 0.0;
  double mean_abs_mu = 0.0;
};

// Executes one chunk for one env given the denoised latent frames; returns
// the discounted chunk reward and done flag.
inline std::pair<double, bool> execute_chunk(
    TaskEnv& env, const latent::LatentCodec& codec, const Matf& z_frames,
    double gamma, const sim::SimConfig& sim_cfg) {
  double total = 0.0, scale = 1.0;
  data::Frame anchor = env.history().anchor();
  if (env.history().size() == 0) anchor = data::Frame::from_state(env.state());
  for (Eigen::Index i = 0; i < z_frames.cols(); ++i) {
    data::Frame cur = data::Frame::from_state(env.state());
    Vecf feat =
        data::canonicalize_frame(cur, anchor, codec.repr, sim_cfg).cast<float>();
    sim::RawAction a = latent::decode(codec, feat, z_frames.col(i), sim_cfg);
    FrameResult fr = env.step_frame(a);
    env.history().push(cur, z_frames.col(i));
    total += scale * fr.reward;
    scale *= gamma;
    if (fr.done) return {total, true};
  }
  return {total, false};
}

inline RolloutBuffer collect_rollout(const NoisePolicy& policy,
                                     std::vector<TaskEnv>& envs,
                                     const prior::DenoiserModel* prior_model,
                                     const latent::LatentCodec& codec,
                                     const PPOConfig& cfg,
                                     const CurriculumState& curriculum,
                                     bool action_only_noise = false) {
  const int E = static_cast<int>(envs.size());
  const int T = cfg.horizon;
  const int od = policy.out_dim;
  if (!policy.direct && prior_model == nullptr)
    throw UsageError("collect_rollout: noise policy needs a prior");
  const TaskEnvConfig& tcfg = envs.front().config();

  RolloutBuffer buf;
  buf.obs.resize(policy.obs_dim(), T * E);
  buf.omega.resize(od, T * E);
  buf.logp.resize(T * E);
  buf.value.resize(T * E);
  buf.reward.resize(T * E);
  buf.done.assign(static_cast<std::size_t>(T * E), 0);
  buf.bootstrap.resize(E);

  Matf obs_cols(policy.obs_dim(), E);
  parallel_for(E, [&](int e) { obs_cols.col(e) = envs[static_cast<std::size_t>(e)].observe(); });

  for (int t = 0; t < T; ++t) {
    PolicyEval ev;
    policy_forward(policy, obs_cols, ev);
    Matf omegas(od, E);
    for (int e = 0; e < E; ++e) {
      Rng& r = envs[static_cast<std::size_t>(e)].rng();
      for (int j = 0; j < od; ++j)
        omegas(j, e) = ev.mean(j, e) +
                       std::exp(policy.log_std[j]) *
                           static_cast<float>(r.normal());
    }
    buf.mean_abs_mu +=
        ev.mean.cast<double>().cwiseAbs().mean() / T;

    // denoise all envs' chunks in one batched pass
    std::vector<Matf> chunk_z(static_cast<std::size_t>(E));
    if (!policy.direct) {
      const prior::DenoiserModel& m = *prior_model;
      Matf init(m.chunk_len(), E), hist(m.hist_len(), E);
      for (int e = 0; e < E; ++e) {
        init.col(e) =
            prior::build_init_noise(m, omegas.col(e), action_only_noise,
                                    &envs[static_cast<std::size_t>(e)].rng())
                .col(0);
        hist.col(e) =
            envs[static_cast<std::size_t>(e)].history().features(m, tcfg.sim);
      }
      Matf x0 = prior::ddim_denoise(m, init, hist);
      for (int e = 0; e < E; ++e)
        chunk_z[static_cast<std::size_t>(e)] =
            prior::split_chunk(m, x0.col(e), tcfg.k).z;
    }

    // per-step episode-end records; reduced sequentially after the loop so
    // worker count never affects the totals
    std::vector<std::uint8_t> ep_end(static_cast<std::size_t>(E), 0);
    std::vector<std::uint8_t> ep_succ(static_cast<std::size_t>(E), 0);
    std::vector<double> ep_rew(static_cast<std::size_t>(E), 0.0);
    parallel_for(E, [&](int ei) {
      auto e = static_cast<std::size_t>(ei);
      TaskEnv& env = envs[e];
      Eigen::Index col = static_cast<Eigen::Index>(t) * E + ei;
      buf.obs.col(col) = obs_cols.col(ei);
      buf.omega.col(col) = omegas.col(ei);
      buf.logp[col] =
          gaussian_log_prob(ev.mean.col(ei), policy.log_std, omegas.col(ei));
      buf.value[col] = ev.value[ei];

      double reward;
      bool done;
      if (policy.direct) {
        sim::RawAction a = clamp_action(
            sim::action_from_unit(omegas.col(ei).cast<double>(), tcfg.sim),
            tcfg.sim);
        FrameResult fr = env.step_frame(a);
        reward = fr.reward;
        done = fr.done;
      } else {
        std::tie(reward, done) = execute_chunk(env, codec, chunk_z[e],
                                               cfg.gamma, tcfg.sim);
      }
      buf.reward[col] = reward;
      buf.done[static_cast<std::size_t>(col)] = done ? 1 : 0;
      if (done) {
        ep_end[e] = 1;
        ep_succ[e] = env.succeeded() ? 1 : 0;
        ep_rew[e] = env.episode_reward();
        env.reset(curriculum.unlocked);
      }
      obs_cols.col(ei) = env.observe();
    });
    for (int e = 0; e < E; ++e) {
      if (!ep_end[static_cast<std::size_t>(e)]) continue;
      ++buf.episodes_done;
      buf.episodes_success += ep_succ[static_cast<std::size_t>(e)];
      buf.episode_reward_sum += ep_rew[static_cast<std::size_t>(e)];
    }
  }

  PolicyEval ev;
  policy_forward(policy, obs_cols, ev);
  for (int e = 0; e < E; ++e) buf.bootstrap[e] = ev.value[e];
  return buf;
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  int epoch = 0;
  double mean_reward = 0.0;  // mean completed-episode reward
  double success_rate = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
  double mean_abs_mu = 0.0;
  int level = 0;
};

struct TrainResult {
  NoisePolicy policy;
  std::vector<EpochStats> log;
  std::vector<int> unlock_epochs;  // epoch at which each threshold crossed

  std::string csv() const {
    std::ostringstream os;
    os << "epoch,mean_reward,success_rate,clip_frac,approx_kl,mean_abs_mu,"
          "level\n";
    for (const EpochStats& s : log)
      os << s.epoch << ',' << s.mean_reward << ',' << s.success_rate << ','
         << s.clip_frac << ',' << s.approx_kl << ',' << s.mean_abs_mu << ','
         << s.level << '\n';
    return os.str();
  }
};

struct NavTrainConfig {
  PPOConfig ppo;
  PolicyArch arch;
  int epochs = 100;
  bool direct = false;  // raw-action PPO baseline (no prior, 1 frame/step)
  bool action_only_noise = false;  // steer only the latent-action rows
  CurriculumState curriculum;
};

inline TrainResult train(const TaskEnvConfig& tcfg,
                         const prior::DenoiserModel* prior_model,
                         const latent::LatentCodec& codec,
                         const NavTrainConfig& cfg, std::uint64_t seed) {
  cfg.ppo.validate();
  if (!cfg.direct) {
    if (prior_model == nullptr)
      throw UsageError("train: noise navigation needs a prior");
    prior_model->validate();
    if (tcfg.k > prior_model->F)
      throw ConfigError("train: k exceeds the prior's chunk length");
    if (prior_model->repr != codec.repr)
      throw ConfigError("train: prior and codec repr differ");
  }
  codec.validate();

  Rng root(seed);
  Rng init_rng = root.derive(0);
  int out_dim = cfg.direct ? sim::RawAction::kDim
                           : prior_model->d_x();
  int hm_dim = tcfg.terrain_mode
                   ? tcfg.sim.heightmap_n * tcfg.sim.heightmap_n
                   : 0;
  TrainResult res;
  res.policy = make_policy(tcfg.task, tcfg.terrain_mode, hm_dim, out_dim,
                           cfg.arch, init_rng);
  NoisePolicy& policy = res.policy;
  policy.direct = cfg.direct;

  int history_cap = cfg.direct ? 1 : prior_model->h;
  std::vector<TaskEnv> envs;
  envs.reserve(static_cast<std::size_t>(cfg.ppo.n_envs));
  for (int e = 0; e < cfg.ppo.n_envs; ++e)
    envs.emplace_back(tcfg, history_cap,
                      root.derive(1000 + static_cast<std::uint64_t>(e)));
  CurriculumState curriculum = cfg.curriculum;
  for (auto& env : envs) env.reset(curriculum.unlocked);

  nn::Adam<float> opt_trunk(policy.trunk, cfg.ppo.lr);
  nn::Adam<float> opt_mean(policy.mean_head, cfg.ppo.lr);
  nn::Adam<float> opt_value(policy.value_head, cfg.ppo.lr);
  std::optional<nn::Adam<float>> opt_task;
  if (policy.terrain_mode) opt_task.emplace(policy.task_mlp, cfg.ppo.lr);
  nn::AdamVec<float> opt_logstd(policy.log_std.size(), cfg.ppo.lr);

  Rng shuffle_rng = root.derive(2);
  double running_mean_reward = 0.0;
  bool have_reward = false;
  std::size_t thresholds_crossed = 0;

  double succ_ema = 0.0, best_score = -1.0;
  NoisePolicy best_policy = policy;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double frac =
        cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    double lr =
        cfg.ppo.lr * (1.0 - (1.0 - cfg.ppo.lr_final_frac) * frac);
    opt_trunk.set_lr(lr);
    opt_mean.set_lr(lr);
    opt_value.set_lr(lr);
    if (opt_task) opt_task->set_lr(lr);
    opt_logstd.set_lr(lr);
    RolloutBuffer buf = collect_rollout(policy, envs,
                                        cfg.direct ? nullptr : prior_model,
                                        codec, cfg.ppo, curriculum,
                                        cfg.action_only_noise);
    const Eigen::Index N = buf.reward.size();
    const int E = cfg.ppo.n_envs, T = cfg.ppo.horizon;

    // GAE per env over its strided sequence
    Vecd adv(N), ret(N);
    for (int e = 0; e < E; ++e) {
      Vecd r(T), v(T);
      std::vector<std::uint8_t> dn(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) {
        Eigen::Index col = static_cast<Eigen::Index>(t) * E + e;
        r[t] = buf.reward[col];
        v[t] = buf.value[col];
        dn[static_cast<std::size_t>(t)] =
            buf.done[static_cast<std::size_t>(col)];
      }
      auto [a, rt] = gae(r, v, dn, buf.bootstrap[e], cfg.ppo.gamma,
                         cfg.ppo.gae_tau);
      for (int t = 0; t < T; ++t) {
        Eigen::Index col = static_cast<Eigen::Index>(t) * E + e;
        adv[col] = a[t];
        ret[col] = rt[t];
      }
    }
    double a_mean = adv.mean();
    double a_std = std::sqrt((adv.array() - a_mean).square().sum() /
                             static_cast<double>(N));
    adv = (adv.array() - a_mean) / (a_std + 1e-8);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i)
      order[static_cast<std::size_t>(i)] = i;
    double kl_sum = 0, clip_sum = 0;
    long nb = 0;
    bool kl_tripped = false;
    int mb_size = std::min<int>(cfg.ppo.minibatch_size, static_cast<int>(N));
    for (int me = 0; me < cfg.ppo.mini_epochs && !kl_tripped; ++me) {
      for (Eigen::Index i = N - 1; i > 0; --i) {
        auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, i));
        std::swap(order[static_cast<std::size_t>(i)], order[j]);
      }
      for (Eigen::Index start = 0; start + mb_size <= N; start += mb_size) {
        MiniBatch mb;
        mb.obs.resize(policy.obs_dim(), mb_size);
        mb.omega.resize(policy.out_dim, mb_size);
        mb.old_logp.resize(mb_size);
        mb.adv.resize(mb_size);
        mb.ret.resize(mb_size);
        for (int i = 0; i < mb_size; ++i) {
          Eigen::Index src = order[static_cast<std::size_t>(start + i)];
          mb.obs.col(i) = buf.obs.col(src);
          mb.omega.col(i) = buf.omega.col(src);
          mb.old_logp[i] = buf.logp[src];
          mb.adv[i] = adv[src];
          mb.ret[i] = ret[src];
        }
        PolicyGrads grads = zero_policy_grads(policy);
        LossDiag d = ppo_loss(policy, mb, cfg.ppo, &grads);
        kl_sum += d.approx_kl;
        clip_sum += d.clip_frac;
        ++nb;
        if (cfg.ppo.kl_stop > 0 && d.approx_kl > cfg.ppo.kl_stop) {
          kl_tripped = true;
          break;
        }
        opt_trunk.update(policy.trunk, grads.trunk);
        opt_mean.update(policy.mean_head, grads.mean_head);
        opt_value.update(policy.value_head, grads.value_head);
        if (opt_task) opt_task->update(policy.task_mlp, grads.task_mlp);
        opt_logstd.update(policy.log_std, grads.log_std);
        policy.log_std = policy.log_std.cwiseMax(NoisePolicy::kLogStdLo)
                             .cwiseMin(NoisePolicy::kLogStdHi);
      }
    }

    double epoch_mean = 0.0;
    if (buf.episodes_done > 0) {
      epoch_mean =
          buf.episode_reward_sum / static_cast<double>(buf.episodes_done);
      // smoothed reward (from zero) drives the curriculum so early lucky
      // epochs cannot unlock levels; early completions over-represent
      // successes because timeouts take several epochs to land
      running_mean_reward = 0.8 * running_mean_reward + 0.2 * epoch_mean;
      have_reward = true;
    }
    if (have_reward) {
      std::size_t before = thresholds_crossed;
      curriculum.update(running_mean_reward);
      while (thresholds_crossed < curriculum.thresholds.size() &&
             running_mean_reward >
                 curriculum.thresholds[thresholds_crossed]) {
        ++thresholds_crossed;
        res.unlock_epochs.push_back(epoch);
      }
      (void)before;
    }

    EpochStats s;
    s.epoch = epoch;
    s.mean_reward = running_mean_reward;
    s.success_rate =
        buf.episodes_done > 0
            ? static_cast<double>(buf.episodes_success) / buf.episodes_done
            : 0.0;
    s.clip_frac = nb > 0 ? clip_sum / nb : 0.0;
    s.approx_kl = nb > 0 ? kl_sum / nb : 0.0;
    s.mean_abs_mu = buf.mean_abs_mu;
    s.level = curriculum.unlocked;
    res.log.push_back(s);

    // best-iterate selection: PPO can collapse late in training, so keep the
    // snapshot with the best smoothed success (preferring higher levels)
    succ_ema = 0.9 * succ_ema + 0.1 * s.success_rate;
    double score = static_cast<double>(curriculum.unlocked) + succ_ema;
    if (score > best_score) {
      best_score = score;
      best_policy = policy;
    }
  }
  res.policy = best_policy;
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoint: NAPP header around core net blocks.

inline void policy_save(const NoisePolicy& p, const std::string& path) {
  p.validate();
  io::ByteWriter w;
  w.magic("NAPP");
  w.u32(io::kFormatVersion);
  w.u8(static_cast<std::uint8_t>(p.task));
  w.u8(p.terrain_mode ? 1 : 0);
  w.u8(p.direct ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(p.prop_dim));
  w.u32(static_cast<std::uint32_t>(p.task_dim));
  w.u32(static_cast<std::uint32_t>(p.hm_dim));
  w.u32(static_cast<std::uint32_t>(p.out_dim));
  if (p.terrain_mode) io::serialize_net(w, p.task_mlp);
  io::serialize_net(w, p.trunk);
  io::serialize_net(w, p.mean_head);
  io::serialize_net(w, p.value_head);
  w.f32_span(p.log_std.data(), static_cast<std::size_t>(p.log_std.size()));
  w.write_file(path);
}

inline NoisePolicy policy_load(const std::string& path) {
  io::ByteReader r = io::ByteReader::from_file(path);
  r.check_trailer();
  r.expect_magic("NAPP");
  std::uint32_t version = r.u32();
  if (version != io::kFormatVersion)
    throw IoError(path + ": unsupported policy version " +
                  std::to_string(version));
  NoisePolicy p;
  std::uint8_t task_tag = r.u8();
  if (task_tag > 2) throw IoError(path + ": bad task tag");
  p.task = static_cast<Task>(task_tag);
  p.terrain_mode = r.u8() != 0;
  p.direct = r.u8() != 0;
  p.prop_dim = static_cast<int>(r.u32());
  p.task_dim = static_cast<int>(r.u32());
  p.hm_dim = static_cast<int>(r.u32());
  p.out_dim = static_cast<int>(r.u32());
  if (p.prop_dim != kPropDim || p.out_dim < 1 || p.out_dim > 4096)
    throw IoError(path + ": implausible policy header");
  if (p.terrain_mode) p.task_mlp = io::parse_net<float>(r);
  p.trunk = io::parse_net<float>(r);
  p.mean_head = io::parse_net<float>(r);
  p.value_head = io::parse_net<float>(r);
  p.log_std.resize(p.out_dim);
  r.f32_span(p.log_std.data(), static_cast<std::size_t>(p.out_dim));
  r.finish();
  p.validate();
  return p;
}

}  // namespace nap::nav
