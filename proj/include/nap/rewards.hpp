#pragma once

#include "nap/common.hpp"

namespace nap::rewards {

// Far-goal / hand-reach reward parameters. Defaults are the flat-ground
// far-goal values; uneven-terrain and hand-reach variants override per task.
struct ReachParams {
  double alpha1 = 4.0;
  double alpha2 = 2.0;
  double lambda1 = 0.05;
  double lambda2 = 0.35;
  double beta1 = 2.0;
  double beta2 = 1.0;
  double c1 = 0.05;
  double c2 = 0.15;
  double v_threshold = 0.6;
  double w_threshold = 0.5;
  double r_sparse = 100.0;

  void validate() const {
    if (lambda1 + lambda2 >= 1.0)
      throw ConfigError("reach reward: lambda1 + lambda2 must be < 1");
    for (double v : {alpha1, alpha2, beta1, beta2, c1, c2})
      if (v < 0) throw ConfigError("reach reward: scales must be >= 0");
  }
};

struct VelocityParams {
  double alpha3 = 0.25;
  double lambda_soften = 0.05;  // the 0.05 in lambda = e / (e + 0.05)

  void validate() const {
    if (alpha3 <= 0 || lambda_soften <= 0)
      throw ConfigError("velocity reward: alpha3 and soften must be > 0");
  }
};

// exp(-alpha1 * ||p_goal - p_joint||)
template <class V>
double reward_location(const V& p_goal, const V& p_joint, double alpha1) {
  return std::exp(-alpha1 * (p_goal - p_joint).norm());
}

// 1 inside the 0.3 m ball, exp(alpha2 * (d_fwd . d_goal - 1)) outside.
inline double reward_orientation(const Vec2d& p_goal, const Vec2d& p_joint,
                                 const Vec2d& d_fwd, double alpha2) {
  Vec2d offset = p_goal - p_joint;
  double dist = offset.norm();
  if (dist <= 0.3) return 1.0;
  if (dist < 1e-12) return 1.0;  // degenerate offset: treat d_goal as d_fwd
  Vec2d d_goal = offset / dist;
  return std::exp(alpha2 * (d_fwd.dot(d_goal) - 1.0));
}

// Piecewise speed penalty; the c1/c2 contributions are gated off below the
// speed thresholds.
inline double reward_stability(const Vec2d& p_goal, const Vec2d& p_joint,
                               double v, double omega,
                               const ReachParams& params) {
  double dist = (p_goal - p_joint).norm();
  if (dist >= 6.0) return 0.0;
  double c1 = v <= params.v_threshold ? 0.0 : params.c1;
  double c2 = omega <= params.w_threshold ? 0.0 : params.c2;
  double beta = dist < 1.2 ? params.beta1 : params.beta2;
  return -beta * (c1 * v + c2 * omega);
}

// Weighted mix of the three terms (dense part; the sparse bonus is added by
// the episode-level success tracker).
inline double reward_reach(const Vec2d& p_goal, const Vec2d& p_joint,
                           const Vec2d& d_fwd, double v, double omega,
                           const ReachParams& params) {
  double r_loc = reward_location(p_goal, p_joint, params.alpha1);
  double r_ori = reward_orientation(p_goal, p_joint, d_fwd, params.alpha2);
  double r_stab = reward_stability(p_goal, p_joint, v, omega, params);
  return (1.0 - params.lambda1 - params.lambda2) * r_loc +
         params.lambda1 * r_ori + params.lambda2 * r_stab;
}

// (1-lambda) exp(-alpha3 ||v_target - v_joint||^2) + lambda (d.d + 1)/2
// with lambda = e / (e + 0.05), e = 1 - (d_fwd . d_target + 1)/2.
inline double reward_velocity(const Vec2d& v_joint, const Vec2d& d_fwd,
                              const Vec2d& v_target, const Vec2d& d_target,
                              const VelocityParams& params) {
  double align = (d_fwd.dot(d_target) + 1.0) / 2.0;
  double e = 1.0 - align;
  double lambda = e / (e + params.lambda_soften);
  double track = std::exp(-params.alpha3 * (v_target - v_joint).squaredNorm());
  return (1.0 - lambda) * track + lambda * align;
}

// Discounted within-chunk accumulation: sum_i gamma^i r[i].
inline double chunk_reward(const Vecd& rewards, double gamma) {
  if (rewards.size() < 1) throw UsageError("chunk_reward: empty chunk");
  if (gamma <= 0.0 || gamma > 1.0)
    throw UsageError("chunk_reward: gamma must be in (0, 1]");
  double total = 0.0;
  double scale = 1.0;
  for (Eigen::Index i = 0; i < rewards.size(); ++i) {
    total += scale * rewards[i];
    scale *= gamma;
  }
  return total;
}

// Consecutive-frame success predicate with a one-shot sparse bonus on the
// frame where the window first completes.
class SuccessTracker {
 public:
  SuccessTracker(double radius, int frames_required)
      : radius_(radius), frames_required_(frames_required) {}

  // Returns the sparse bonus to add at this frame (0 or r_sparse).
  double update(double distance, double r_sparse) {
    consecutive_ = distance <= radius_ ? consecutive_ + 1 : 0;
    if (consecutive_ >= frames_required_ && !fired_) {
      fired_ = true;
      succeeded_ = true;
      return r_sparse;
    }
    if (consecutive_ >= frames_required_) succeeded_ = true;
    return 0.0;
  }

  void reset_window() { consecutive_ = 0; }
  void reset_all() {
    consecutive_ = 0;
    fired_ = false;
    succeeded_ = false;
  }

  bool succeeded() const { return succeeded_; }
  bool bonus_fired() const { return fired_; }
  int consecutive() const { return consecutive_; }

 private:
  double radius_;
  int frames_required_;
  int consecutive_ = 0;
  bool fired_ = false;
  bool succeeded_ = false;
};

// 0.5 s and 0.2 s at 30 Hz.
constexpr int kFarGoalHoldFrames = 15;
constexpr int kHandReachHoldFrames = 6;
constexpr double kSuccessRadius = 0.3;

}  // namespace nap::rewards
