#pragma once

#include "nap/diffusion.hpp"
#include "nap/rewards.hpp"

#include <optional>
#include <string>

namespace nap::nav {

enum class Task { far_goal, hand_reach, velocity };

inline std::string to_string(Task t) {
  switch (t) {
    case Task::far_goal: return "far_goal";
    case Task::hand_reach: return "hand_reach";
    case Task::velocity: return "velocity";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  for (Task t : {Task::far_goal, Task::hand_reach, Task::velocity})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown task: " + s);
}

constexpr int kPropDim = 9;  // body-frame v(2), omega, b, b_dot, q(2), q_dot(2)

inline int task_feature_dim(Task t) {
  switch (t) {
    case Task::far_goal: return 2;   // body-frame goal offset
    case Task::hand_reach: return 3; // body-frame target offset + height delta
    case Task::velocity: return 3;   // target speed, heading delta (cos, sin)
  }
  throw ConfigError("task_feature_dim: bad task");
}

struct TaskEnvConfig {
  Task task = Task::far_goal;
  bool terrain_mode = false;
  int k = 8;                    // chunk frames executed per macro-step
  double gamma = 0.99;          // intra-chunk discount
  int max_frames = 450;         // episode frame budget (15 s)
  rewards::ReachParams reach;   // per-task overrides applied in make_*
  rewards::VelocityParams vel;
  // training goal geometry; the curriculum walks the band out to the
  // goal band per level; the upper edge grows faster so level 1 already
  // reaches toward the fixed 5 m eval distance (level 4: 4.5-9.5 m)
  double goal_dist_lo = 0.5, goal_dist_hi = 1.5;
  double goal_dist_per_level = 1.0, goal_dist_hi_per_level = 1.0;
  double hand_height_lo = 1.7, hand_height_hi = 2.9;
  // capped so a full episode's travel stays inside the arena
  double vel_speed_lo = 0.5, vel_speed_hi = 1.0;
  double vel_success_err = 0.35;  // mean post-transient speed error bound (m/s)
  int vel_transient = 90;
  // evaluation geometry: fixed distance, +-45 degree sector around heading
  bool eval_geometry = false;
  double eval_goal_dist = 5.0;
  sim::SimConfig sim;

  int obs_dim() const {
    return kPropDim + task_feature_dim(task) +
           (terrain_mode ? sim.heightmap_n * sim.heightmap_n : 0);
  }
};

inline TaskEnvConfig make_task_config(Task task, bool terrain_mode) {
  TaskEnvConfig c;
  c.task = task;
  c.terrain_mode = terrain_mode;
  c.k = (terrain_mode || task == Task::hand_reach) ? 4 : 8;
  if (task == Task::hand_reach) {
    c.reach.alpha1 = 2.0;
    c.max_frames = 450;
  }
  if (terrain_mode) {
    c.reach.alpha1 = 2.0;
    c.reach.lambda1 = 0.35;
    c.reach.lambda2 = 0.35;
  }
  if (task == Task::velocity) c.max_frames = 290;
  // open ground: stretch the band's upper edge so level 1 already trains
  // goals near the fixed 5 m eval distance (terrain keeps the tight band —
  // its difficulty scaling does the curriculum work)
  if (!terrain_mode && task != Task::velocity) c.goal_dist_hi_per_level = 3.0;
  return c;
}

// Result of advancing one simulator frame inside a chunk.
struct FrameResult {
  double reward = 0.0;
  bool done = false;
  bool fell = false;
};

// One environment slot: owns its terrain, character, goal, success tracker,
// history buffer, and rng stream.
class TaskEnv {
 public:
  TaskEnv(const TaskEnvConfig& cfg, int history_cap, Rng rng)
      : cfg_(cfg), history_(history_cap), rng_(rng) {}

  const TaskEnvConfig& config() const { return cfg_; }
  const sim::CharacterState& state() const { return state_; }
  const sim::TerrainField& terrain() const { return terrain_; }
  prior::HistoryBuffer& history() { return history_; }
  const prior::HistoryBuffer& history() const { return history_; }
  Rng& rng() { return rng_; }
  int frame() const { return frame_; }
  int level() const { return level_; }
  const Vec2d& goal() const { return goal_; }
  const Vec3d& hand_target() const { return hand_target_; }
  double target_speed() const { return v_target_speed_; }
  const Vec2d& target_dir() const { return v_target_dir_; }
  bool succeeded() const { return success_latched_; }
  bool fell() const { return fell_; }
  double episode_reward() const { return episode_reward_; }
  double vel_err_sum() const { return vel_err_sum_; }
  long vel_err_frames() const { return vel_err_frames_; }

  // Samples terrain (kind per the configured proportions in terrain mode),
  // spawn pose, and a task goal for the given curriculum level.
  void reset(int max_level) { reset(0, max_level); }

  void reset(int min_level, int max_level) {
    level_ = static_cast<int>(rng_.uniform_int(min_level, max_level));
    sim::TerrainKind kind =
        cfg_.terrain_mode ? sim::TerrainKind::random : sim::TerrainKind::flat;
    terrain_ = sim::generate_terrain(kind, cfg_.terrain_mode ? level_ : 0,
                                     rng_.next_u64());
    state_ = sim::spawn(terrain_, rng_, cfg_.sim);
    frame_ = 0;
    fell_ = false;
    success_latched_ = false;
    episode_reward_ = 0.0;
    vel_err_sum_ = 0.0;
    vel_err_frames_ = 0;
    history_.clear();
    sample_goal();
    int hold = cfg_.task == Task::hand_reach ? rewards::kHandReachHoldFrames
                                             : rewards::kFarGoalHoldFrames;
    tracker_ = rewards::SuccessTracker(rewards::kSuccessRadius, hold);
  }

  // Observation: [prop(9) | task features | heightmap (terrain mode)].
  Vecf observe() const {
    Vecf obs(cfg_.obs_dim());
    Eigen::Rotation2D<double> to_body(-state_.theta);
    Vec2d v_b = to_body * state_.v;
    obs[0] = static_cast<float>(v_b.x());
    obs[1] = static_cast<float>(v_b.y());
    obs[2] = static_cast<float>(state_.omega);
    obs[3] = static_cast<float>(state_.b);
    obs[4] = static_cast<float>(state_.b_dot);
    obs[5] = static_cast<float>(state_.q.x());
    obs[6] = static_cast<float>(state_.q.y());
    obs[7] = static_cast<float>(state_.q_dot.x());
    obs[8] = static_cast<float>(state_.q_dot.y());
    int at = kPropDim;
    switch (cfg_.task) {
      case Task::far_goal: {
        Vec2d off = to_body * (goal_ - state_.p);
        obs[at] = static_cast<float>(off.x());
        obs[at + 1] = static_cast<float>(off.y());
        break;
      }
      case Task::hand_reach: {
        Vec2d off = to_body * (hand_target_.head<2>() - state_.p);
        obs[at] = static_cast<float>(off.x());
        obs[at + 1] = static_cast<float>(off.y());
        obs[at + 2] = static_cast<float>(hand_target_.z() - state_.z_body);
        break;
      }
      case Task::velocity: {
        double dtheta =
            wrap_angle(std::atan2(v_target_dir_.y(), v_target_dir_.x()) -
                       state_.theta);
        obs[at] = static_cast<float>(v_target_speed_);
        obs[at + 1] = static_cast<float>(std::cos(dtheta));
        obs[at + 2] = static_cast<float>(std::sin(dtheta));
        break;
      }
    }
    if (cfg_.terrain_mode) {
      Vecd hm = sim::heightmap_sample(terrain_, state_.p, state_.theta,
                                      state_.z_body, cfg_.sim);
      obs.tail(hm.size()) = hm.cast<float>();
    }
    return obs;
  }

  // Advances one frame with the given raw action; returns the per-frame
  // reward (dense + any sparse bonus) and episode-done bookkeeping.
  FrameResult step_frame(const sim::RawAction& action) {
    FrameResult out;
    auto [next, terminated] = sim::step(state_, action, terrain_, rng_, cfg_.sim);
    state_ = next;
    ++frame_;
    out.reward = frame_reward();
    if (terminated) {
      out.done = true;
      out.fell = true;
      fell_ = true;
    } else if (cfg_.task != Task::velocity && tracker_.succeeded()) {
      out.done = true;  // goal held long enough; end the episode
    } else if (frame_ >= cfg_.max_frames) {
      out.done = true;
      if (cfg_.task == Task::velocity) finish_velocity_episode();
    }
    episode_reward_ += out.reward;
    return out;
  }

 private:
  double frame_reward() {
    switch (cfg_.task) {
      case Task::far_goal: {
        double dense = rewards::reward_reach(goal_, state_.p, state_.forward(),
                                             state_.v.norm(),
                                             std::abs(state_.omega), cfg_.reach);
        double bonus =
            tracker_.update((goal_ - state_.p).norm(), cfg_.reach.r_sparse);
        if (tracker_.succeeded()) success_latched_ = true;
        return dense + bonus;
      }
      case Task::hand_reach: {
        Vec3d hand = sim::hand_position(state_, cfg_.sim);
        double r_loc =
            rewards::reward_location(hand_target_, hand, cfg_.reach.alpha1);
        double r_ori = rewards::reward_orientation(
            hand_target_.head<2>(), state_.p, state_.forward(),
            cfg_.reach.alpha2);
        double r_stab = rewards::reward_stability(
            hand_target_.head<2>(), state_.p, state_.v.norm(),
            std::abs(state_.omega), cfg_.reach);
        double dense =
            (1.0 - cfg_.reach.lambda1 - cfg_.reach.lambda2) * r_loc +
            cfg_.reach.lambda1 * r_ori + cfg_.reach.lambda2 * r_stab;
        double bonus =
            tracker_.update((hand_target_ - hand).norm(), cfg_.reach.r_sparse);
        if (tracker_.succeeded()) success_latched_ = true;
        return dense + bonus;
      }
      case Task::velocity: {
        double r = rewards::reward_velocity(state_.v, state_.forward(),
                                            v_target_speed_ * v_target_dir_,
                                            v_target_dir_, cfg_.vel);
        if (frame_ > cfg_.vel_transient) {
          vel_err_sum_ +=
              (state_.v - v_target_speed_ * v_target_dir_).norm();
          ++vel_err_frames_;
        }
        return r;
      }
    }
    throw ConfigError("frame_reward: bad task");
  }

  void finish_velocity_episode() {
    if (!fell_ && vel_err_frames_ > 0 &&
        vel_err_sum_ / vel_err_frames_ <= cfg_.vel_success_err)
      success_latched_ = true;
  }

  void sample_goal() {
    double dist, bearing;
    if (cfg_.eval_geometry) {
      dist = cfg_.eval_goal_dist;
      bearing = state_.theta + rng_.uniform(-M_PI / 4, M_PI / 4);
    } else {
      double lo = cfg_.goal_dist_lo + cfg_.goal_dist_per_level * level_;
      double hi = cfg_.goal_dist_hi + cfg_.goal_dist_hi_per_level * level_;
      dist = rng_.uniform(lo, hi);
      bearing = rng_.uniform(-M_PI, M_PI);
    }
    Vec2d dir(std::cos(bearing), std::sin(bearing));
    Vec2d target = state_.p + dist * dir;
    double half = cfg_.sim.arena_half - 1.0;
    target.x() = std::clamp(target.x(), -half, half);
    target.y() = std::clamp(target.y(), -half, half);
    goal_ = target;
    if (cfg_.task == Task::hand_reach) {
      double ground = terrain_.height(target.x(), target.y());
      hand_target_ = Vec3d(
          target.x(), target.y(),
          ground + rng_.uniform(cfg_.hand_height_lo, cfg_.hand_height_hi));
    }
    if (cfg_.task == Task::velocity) {
      double head = rng_.uniform(-M_PI, M_PI);
      v_target_dir_ = Vec2d(std::cos(head), std::sin(head));
      v_target_speed_ = rng_.uniform(cfg_.vel_speed_lo, cfg_.vel_speed_hi);
    }
  }

  TaskEnvConfig cfg_;
  sim::TerrainField terrain_;
  sim::CharacterState state_;
  prior::HistoryBuffer history_;
  Rng rng_;
  rewards::SuccessTracker tracker_{rewards::kSuccessRadius,
                                   rewards::kFarGoalHoldFrames};
  Vec2d goal_{0, 0};
  Vec3d hand_target_{0, 0, 0};
  Vec2d v_target_dir_{1, 0};
  double v_target_speed_ = 0.0;
  int frame_ = 0;
  int level_ = 0;
  bool fell_ = false;
  bool success_latched_ = false;
  double episode_reward_ = 0.0;
  double vel_err_sum_ = 0.0;
  long vel_err_frames_ = 0;
};

}  // namespace nap::nav
