#pragma once

#include "nap/expert.hpp"
#include "nap/ppo.hpp"

#include <chrono>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace nap::metrics {

// ---------------------------------------------------------------------------
// Jerk: mean magnitude of the third time derivative of body position.

// Central third differences on the interior (exact for cubics); with exactly
// four frames a single forward-difference estimate is used. Boundary frames
// never enter the mean.
inline double jerk(const std::vector<Vec2d>& p, double fps = 30.0) {
  auto n = static_cast<Eigen::Index>(p.size());
  if (n < 4) throw UsageError("jerk: need at least 4 frames");
  double h3 = 1.0 / (fps * fps * fps);
  if (n == 4) {
    Vec2d d = p[3] - 3.0 * p[2] + 3.0 * p[1] - p[0];
    return d.norm() / h3;
  }
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index t = 2; t + 2 < n; ++t) {
    Vec2d d = 0.5 * (p[static_cast<std::size_t>(t + 2)] -
                     2.0 * p[static_cast<std::size_t>(t + 1)] +
                     2.0 * p[static_cast<std::size_t>(t - 1)] -
                     p[static_cast<std::size_t>(t - 2)]);
    sum += d.norm() / h3;
    ++count;
  }
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Evaluation harness

enum class EvalAgent { policy, random_omega, guidance, expert };

inline std::string to_string(EvalAgent a) {
  switch (a) {
    case EvalAgent::policy: return "policy";
    case EvalAgent::random_omega: return "random_omega";
    case EvalAgent::guidance: return "guidance";
    case EvalAgent::expert: return "expert";
  }
  return "?";
}

struct EvalConfig {
  EvalAgent agent = EvalAgent::policy;
  int n_episodes = 200;
  std::uint64_t seed = 0;
  int level = 0;            // curriculum level evaluated (fixed)
  int guide_steps = 10;     // guidance agent only
  double guide_rate = 0.02;
  bool action_only_noise = false;  // match a policy trained in that mode
};

struct EpisodeMetrics {
  int episode = 0;
  bool success = false;
  bool fell = false;
  std::optional<double> jerk_mean;           // absent when fallen
  std::optional<double> velocity_error_mean; // velocity task only
  int frames = 0;
  long nfe_forward = 0;
  long nfe_guidance = 0;
  double wall_ms = 0.0;  // policy + denoiser compute, excludes the simulator
};

struct EvalReport {
  std::vector<EpisodeMetrics> episodes;
  double success_rate = 0.0;
  double fall_rate = 0.0;
  std::optional<double> jerk_mean;
  std::optional<double> vel_err_mean;
  long nfe_forward = 0;
  long nfe_guidance = 0;
  long total_frames = 0;
  double compute_ms = 0.0;
  double fps = 0.0;  // simulated frames per second of compute

  static std::string episode_header() {
    return "episode,success,fell,jerk,vel_err,frames,nfe_fwd,nfe_guid,"
           "wall_ms";
  }

  std::string episode_csv() const {
    std::ostringstream os;
    os << episode_header() << '\n';
    for (const EpisodeMetrics& e : episodes) {
      os << e.episode << ',' << (e.success ? 1 : 0) << ',' << (e.fell ? 1 : 0)
         << ',';
      if (e.jerk_mean) os << *e.jerk_mean;
      os << ',';
      if (e.velocity_error_mean) os << *e.velocity_error_mean;
      os << ',' << e.frames << ',' << e.nfe_forward << ',' << e.nfe_guidance
         << ',' << e.wall_ms << '\n';
    }
    return os.str();
  }

  std::string aggregate_csv() const {
    std::ostringstream os;
    os << "episodes,success_rate,fall_rate,jerk_mean,vel_err_mean,nfe_fwd,"
          "nfe_guid,fps\n";
    os << episodes.size() << ',' << success_rate << ',' << fall_rate << ',';
    if (jerk_mean) os << *jerk_mean;
    os << ',';
    if (vel_err_mean) os << *vel_err_mean;
    os << ',' << nfe_forward << ',' << nfe_guidance << ',' << fps << '\n';
    return os.str();
  }
};

// Task loss over the chunk's predicted (denormalized, anchor-frame) features.
// Feature layout per frame: p(0,1), heading(2,3), v(4,5), ...
inline prior::GuidanceObjective make_guidance_objective(
    const nav::TaskEnv& env, const data::Frame& anchor) {
  Eigen::Rotation2D<double> rot(M_PI / 2.0 - anchor.theta);
  nav::Task task = env.config().task;
  Vec2d target;
  if (task == nav::Task::velocity) {
    target = rot * (env.target_speed() * env.target_dir());
  } else {
    Vec2d goal_xy = task == nav::Task::hand_reach
                        ? Vec2d(env.hand_target().head<2>())
                        : env.goal();
    target = rot * (goal_xy - anchor.p);
  }
  int row = task == nav::Task::velocity ? 4 : 0;  // v rows vs p rows
  Eigen::Vector2f tf = target.cast<float>();
  prior::GuidanceObjective obj;
  obj.loss = [tf, row](const Matf& feats) {
    double acc = 0.0;
    for (Eigen::Index f = 0; f < feats.cols(); ++f)
      acc += (feats.col(f).segment<2>(row) - tf).squaredNorm();
    return acc / static_cast<double>(feats.cols());
  };
  obj.grad = [tf, row](const Matf& feats) {
    Matf g = Matf::Zero(feats.rows(), feats.cols());
    float inv = 1.0f / static_cast<float>(feats.cols());
    for (Eigen::Index f = 0; f < feats.cols(); ++f)
      g.col(f).segment<2>(row) =
          2.0f * inv * (feats.col(f).segment<2>(row) - tf);
    return g;
  };
  return obj;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Runs one episode; positions are collected for the jerk estimate.
inline EpisodeMetrics run_episode(const nav::TaskEnvConfig& tcfg,
                                  const prior::DenoiserModel* model,
                                  const latent::LatentCodec& codec,
                                  const nav::NoisePolicy* policy,
                                  const EvalConfig& cfg, int episode,
                                  Rng rng) {
  bool uses_prior = cfg.agent != EvalAgent::expert &&
                    !(policy != nullptr && policy->direct);
  if (uses_prior && model == nullptr)
    throw UsageError("evaluate: this agent needs a prior");
  if ((cfg.agent == EvalAgent::policy) && policy == nullptr)
    throw UsageError("evaluate: policy agent needs a policy checkpoint");

  int hist_cap = uses_prior ? model->h : 1;
  nav::TaskEnv env(tcfg, hist_cap, rng.derive(0));
  Rng omega_rng = rng.derive(1);
  env.reset(cfg.level, cfg.level);

  EpisodeMetrics m;
  m.episode = episode;
  std::vector<Vec2d> positions{env.state().p};
  data::ExpertController expert;
  prior::NfeCounter nfe;
  double wall = 0.0;
  bool done = false;

  while (!done) {
    if (cfg.agent == EvalAgent::expert) {
      Vec2d waypoint;
      switch (tcfg.task) {
        case nav::Task::far_goal: waypoint = env.goal(); break;
        case nav::Task::hand_reach:
          waypoint = env.hand_target().head<2>();
          break;
        case nav::Task::velocity:
          // k_vel = 1: err of v_target/k_vel commands exactly v_target
          waypoint = env.state().p +
                     env.target_speed() * env.target_dir() /
                         expert.gains().k_vel;
          break;
      }
      auto t0 = Clock::now();
      sim::RawAction a = expert.act(env.state(), waypoint, tcfg.sim.dt);
      wall += ms_since(t0);
      done = env.step_frame(a).done;
      positions.push_back(env.state().p);
      continue;
    }

    if (policy != nullptr && policy->direct) {
      auto t0 = Clock::now();
      nav::ActResult a = nav::act(*policy, env.observe(), omega_rng, true);
      wall += ms_since(t0);
      sim::RawAction ra = clamp_action(
          sim::action_from_unit(a.omega.cast<double>(), tcfg.sim), tcfg.sim);
      done = env.step_frame(ra).done;
      positions.push_back(env.state().p);
      continue;
    }

    // diffusion-prior agents: one chunk per decision
    data::Frame anchor = env.history().size() > 0
                             ? env.history().anchor()
                             : data::Frame::from_state(env.state());
    Matf z_frames;
    if (cfg.agent == EvalAgent::guidance) {
      prior::GuidanceObjective obj = make_guidance_objective(env, anchor);
      auto t0 = Clock::now();
      prior::GuidedResult gr =
          prior::guided_sample_chunk(*model, tcfg.k, env.history(), obj,
                                     cfg.guide_steps, cfg.guide_rate,
                                     omega_rng, nfe, tcfg.sim);
      wall += ms_since(t0);
      z_frames = gr.chunk.z;
    } else {
      Vecf omega;
      auto t0 = Clock::now();
      if (cfg.agent == EvalAgent::random_omega) {
        omega = omega_rng.normal_vec<float>(model->d_x());
      } else {
        nav::ActResult a = nav::act(*policy, env.observe(), omega_rng, true);
        omega = a.omega;
      }
      prior::ChunkSample chunk =
          prior::sample_chunk(*model, omega, tcfg.k, env.history(), tcfg.sim,
                              cfg.action_only_noise, &omega_rng);
      wall += ms_since(t0);
      nfe.forward += static_cast<long>(model->schedule.ddim_indices.size());
      z_frames = chunk.z;
    }

    for (Eigen::Index i = 0; i < z_frames.cols() && !done; ++i) {
      data::Frame cur = data::Frame::from_state(env.state());
      Vecf feat = data::canonicalize_frame(cur, anchor, codec.repr, tcfg.sim)
                      .cast<float>();
      sim::RawAction a =
          latent::decode(codec, feat, z_frames.col(i), tcfg.sim);
      done = env.step_frame(a).done;
      env.history().push(cur, z_frames.col(i));
      positions.push_back(env.state().p);
    }
  }

  m.success = env.succeeded();
  m.fell = env.fell();
  m.frames = env.frame();
  m.nfe_forward = nfe.forward;
  m.nfe_guidance = nfe.guidance;
  m.wall_ms = wall;
  if (!m.fell && positions.size() >= 4) m.jerk_mean = jerk(positions);
  if (tcfg.task == nav::Task::velocity && env.vel_err_frames() > 0)
    m.velocity_error_mean =
        env.vel_err_sum() / static_cast<double>(env.vel_err_frames());
  return m;
}

}  // namespace detail

inline EvalReport evaluate(const nav::TaskEnvConfig& tcfg,
                           const prior::DenoiserModel* model,
                           const latent::LatentCodec& codec,
                           const nav::NoisePolicy* policy,
                           const EvalConfig& cfg) {
  if (cfg.n_episodes < 1) throw ConfigError("evaluate: n_episodes >= 1");
  Rng root(cfg.seed);
  EvalReport rep;
  rep.episodes.resize(static_cast<std::size_t>(cfg.n_episodes));
  // derive every episode stream up front so worker order cannot matter
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(cfg.n_episodes));
  for (int i = 0; i < cfg.n_episodes; ++i)
    streams.push_back(root.derive(static_cast<std::uint64_t>(i)));
  parallel_for(cfg.n_episodes, [&](int i) {
    rep.episodes[static_cast<std::size_t>(i)] = detail::run_episode(
        tcfg, model, codec, policy, cfg, i, streams[static_cast<std::size_t>(i)]);
  });

  double jerk_sum = 0.0, vel_sum = 0.0;
  long jerk_n = 0, vel_n = 0;
  for (const EpisodeMetrics& e : rep.episodes) {
    rep.success_rate += e.success ? 1.0 : 0.0;
    rep.fall_rate += e.fell ? 1.0 : 0.0;
    rep.nfe_forward += e.nfe_forward;
    rep.nfe_guidance += e.nfe_guidance;
    rep.total_frames += e.frames;
    rep.compute_ms += e.wall_ms;
    if (e.jerk_mean) {
      jerk_sum += *e.jerk_mean;
      ++jerk_n;
    }
    if (e.velocity_error_mean) {
      vel_sum += *e.velocity_error_mean;
      ++vel_n;
    }
  }
  rep.success_rate /= cfg.n_episodes;
  rep.fall_rate /= cfg.n_episodes;
  if (jerk_n > 0) rep.jerk_mean = jerk_sum / jerk_n;
  if (vel_n > 0) rep.vel_err_mean = vel_sum / vel_n;
  if (rep.compute_ms > 0.0)
    rep.fps = static_cast<double>(rep.total_frames) / (rep.compute_ms / 1e3);
  return rep;
}

// ---------------------------------------------------------------------------
// Steering vs loss-guided comparison on the same frozen prior and codec.

struct ComparisonReport {
  EvalReport steering;
  EvalReport guidance;

  std::string csv() const {
    auto row = [](const char* path, const EvalReport& r) {
      std::ostringstream os;
      os << path << ',' << r.episodes.size() << ',' << r.success_rate << ','
         << r.fall_rate << ',' << r.nfe_forward << ',' << r.nfe_guidance
         << ',' << r.fps << '\n';
      return os.str();
    };
    return "path,episodes,success_rate,fall_rate,nfe_fwd,nfe_guid,fps\n" +
           row("steering", steering) + row("guidance", guidance);
  }
};

// Steering runs the trained policy when given, else standard-Gaussian omega.
inline ComparisonReport compare_efficiency(const nav::TaskEnvConfig& tcfg,
                                           const prior::DenoiserModel& model,
                                           const latent::LatentCodec& codec,
                                           const nav::NoisePolicy* policy,
                                           const EvalConfig& base) {
  ComparisonReport rep;
  EvalConfig s = base;
  s.agent = policy != nullptr ? EvalAgent::policy : EvalAgent::random_omega;
  rep.steering = evaluate(tcfg, &model, codec, policy, s);
  EvalConfig g = base;
  g.agent = EvalAgent::guidance;
  rep.guidance = evaluate(tcfg, &model, codec, nullptr, g);
  return rep;
}

}  // namespace nap::metrics
