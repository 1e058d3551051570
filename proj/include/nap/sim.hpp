#pragma once

#include "nap/common.hpp"
#include "nap/terrain.hpp"

#include <ostream>

namespace nap::sim {

// Planar unicycle body with an inverted-pendulum balance coordinate and a
// 2-link arm mounted at shoulder height.
struct CharacterState {
  Vec2d p{0.0, 0.0};       // planar position (m)
  double theta = 0.0;      // heading (rad)
  Vec2d v{0.0, 0.0};       // linear velocity (m/s)
  double omega = 0.0;      // yaw rate (rad/s)
  double b = 0.0;          // balance angle (rad)
  double b_dot = 0.0;      // balance angular velocity (rad/s)
  Vec2d q{0.0, 0.0};       // arm joint angles (rad)
  Vec2d q_dot{0.0, 0.0};   // arm joint velocities (rad/s)
  double z_body = 0.0;     // body height above datum (m)

  Vec2d forward() const { return Vec2d(std::cos(theta), std::sin(theta)); }

  bool finite() const {
    return p.allFinite() && std::isfinite(theta) && v.allFinite() &&
           std::isfinite(omega) && std::isfinite(b) && std::isfinite(b_dot) &&
           q.allFinite() && q_dot.allFinite() && std::isfinite(z_body);
  }
};

struct RawAction {
  Vec2d drive{0.0, 0.0};        // commanded planar acceleration (m/s^2)
  double balance_torque = 0.0;  // N*m analog
  Vec2d q_target{0.0, 0.0};     // arm PD target angles (rad)

  static constexpr int kDim = 5;

  Vecd flat() const {
    Vecd a(kDim);
    a << drive.x(), drive.y(), balance_torque, q_target.x(), q_target.y();
    return a;
  }
  static RawAction from_flat(const Vecd& a) {
    if (a.size() != kDim) throw UsageError("RawAction: expected 5 entries");
    RawAction r;
    r.drive = Vec2d(a[0], a[1]);
    r.balance_torque = a[2];
    r.q_target = Vec2d(a[3], a[4]);
    return r;
  }
};

struct SimConfig {
  double dt = 1.0 / 30.0;
  double a_max = 5.0;          // drive clamp (m/s^2)
  double tau_max = 12.0;       // balance torque clamp
  double q_target_max = 2.0;   // arm PD target clamp (rad)
  double damping = 0.5;        // drive damping (1/s)
  double g_over_l = 9.0;       // pendulum constant (1/s^2)
  double b_max = 0.8;          // balance termination threshold (rad)
  double kp_arm = 30.0;
  double kd_arm = 2.0 * std::sqrt(30.0);
  double body_offset = 0.9;    // body height above terrain (m)
  double shoulder_height = 1.4;  // shoulder above body (m)
  double arm_l1 = 0.4, arm_l2 = 0.35;
  double arena_half = 11.5;    // out-of-arena termination bound (m)
  double yaw_align_gain = 6.0;
  double yaw_damp = 4.0;
  double slope_gain = 1.5;     // balance bias from terrain gradient
  double rough_gain = 20.0;    // noise scale per unit local height variance
  double process_noise = 0.02; // baseline balance disturbance
  bool noise_enabled = true;
  int heightmap_n = 32;        // heightmap grid (cells per side)
  double heightmap_span = 4.0; // m
};

// Maps a normalized command in [-1,1]^5 onto the physical action ranges.
inline RawAction action_from_unit(const Vecd& u, const SimConfig& cfg) {
  if (u.size() != RawAction::kDim)
    throw UsageError("action_from_unit: expected 5 entries");
  Vecd s(RawAction::kDim);
  s << cfg.a_max, cfg.a_max, cfg.tau_max, cfg.q_target_max, cfg.q_target_max;
  return RawAction::from_flat(u.cwiseProduct(s));
}

inline RawAction clamp_action(const RawAction& a, const SimConfig& cfg) {
  RawAction c;
  c.drive.x() = std::clamp(a.drive.x(), -cfg.a_max, cfg.a_max);
  c.drive.y() = std::clamp(a.drive.y(), -cfg.a_max, cfg.a_max);
  c.balance_torque = std::clamp(a.balance_torque, -cfg.tau_max, cfg.tau_max);
  c.q_target.x() = std::clamp(a.q_target.x(), -cfg.q_target_max, cfg.q_target_max);
  c.q_target.y() = std::clamp(a.q_target.y(), -cfg.q_target_max, cfg.q_target_max);
  return c;
}

// Hand position from forward kinematics: the arm swings in the vertical plane
// containing the heading.
inline Vec3d hand_position(const CharacterState& s, const SimConfig& cfg) {
  double reach = cfg.arm_l1 * std::cos(s.q.x()) +
                 cfg.arm_l2 * std::cos(s.q.x() + s.q.y());
  double lift = cfg.arm_l1 * std::sin(s.q.x()) +
                cfg.arm_l2 * std::sin(s.q.x() + s.q.y());
  Vec2d xy = s.p + reach * s.forward();
  return Vec3d(xy.x(), xy.y(), s.z_body + cfg.shoulder_height + lift);
}

struct StepResult {
  CharacterState state;
  bool terminated = false;
};

// Semi-implicit Euler step at 30 Hz.
inline StepResult step(const CharacterState& state, const RawAction& action_in,
                       const TerrainField& terrain, Rng& rng,
                       const SimConfig& cfg = SimConfig{}) {
  RawAction action = clamp_action(action_in, cfg);
  CharacterState s = state;
  const double dt = cfg.dt;

  // planar body
  s.v += (action.drive - cfg.damping * s.v) * dt;
  s.p += s.v * dt;

  // heading relaxes toward the direction of travel
  double speed = s.v.norm();
  double err = 0.0;
  if (speed > 0.15)
    err = wrap_angle(std::atan2(s.v.y(), s.v.x()) - s.theta);
  double omega_dot = cfg.yaw_align_gain * err - cfg.yaw_damp * s.omega;
  s.omega += omega_dot * dt;
  s.theta = wrap_angle(s.theta + s.omega * dt);

  // balance pendulum; terrain couples through a slope bias and a roughness
  // disturbance drawn from the env-owned rng stream
  Vec2d grad = terrain.gradient(s.p.x(), s.p.y());
  double slope_bias = cfg.slope_gain * grad.dot(s.forward());
  double noise = 0.0;
  if (cfg.noise_enabled) {
    double scale =
        cfg.process_noise + cfg.rough_gain * terrain.local_variance(s.p.x(), s.p.y());
    noise = rng.normal() * scale;
  }
  double b_ddot =
      cfg.g_over_l * std::sin(s.b) - action.balance_torque + slope_bias + noise;
  s.b_dot += b_ddot * dt;
  s.b += s.b_dot * dt;

  // arm PD with unit inertia
  Vec2d tau = cfg.kp_arm * (action.q_target - s.q) - cfg.kd_arm * s.q_dot;
  s.q_dot += tau * dt;
  s.q += s.q_dot * dt;

  s.z_body = terrain.height(s.p.x(), s.p.y()) + cfg.body_offset;

  if (!s.finite())
    throw SimulationError("simulation produced non-finite state");

  bool terminated = std::abs(s.b) > cfg.b_max ||
                    std::abs(s.p.x()) > cfg.arena_half ||
                    std::abs(s.p.y()) > cfg.arena_half;
  return {s, terminated};
}

// Local height samples relative to body height, in the body yaw frame.
// Returns heightmap_n^2 cell-center samples spanning heightmap_span meters,
// row-major with the forward axis varying over rows.
inline Vecd heightmap_sample(const TerrainField& terrain, const Vec2d& p,
                             double theta, double z_body,
                             const SimConfig& cfg = SimConfig{}) {
  const int n = cfg.heightmap_n;
  const double cell = cfg.heightmap_span / n;
  Vec2d fwd(std::cos(theta), std::sin(theta));
  Vec2d left(-fwd.y(), fwd.x());
  Vecd out(n * n);
  for (int i = 0; i < n; ++i) {
    double u = -cfg.heightmap_span / 2 + (i + 0.5) * cell;
    for (int j = 0; j < n; ++j) {
      double v = -cfg.heightmap_span / 2 + (j + 0.5) * cell;
      Vec2d w = p + u * fwd + v * left;
      out[i * n + j] = terrain.height(w.x(), w.y()) - z_body;
    }
  }
  return out;
}

// Upright spawn at a terrain-supported pose near the arena center.
inline CharacterState spawn(const TerrainField& terrain, Rng& rng,
                            const SimConfig& cfg = SimConfig{}) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    CharacterState s;
    double jitter = attempt == 0 ? 0.0 : 0.4;
    s.p = Vec2d(rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter));
    s.theta = rng.uniform(-M_PI, M_PI);
    s.z_body = terrain.height(s.p.x(), s.p.y()) + cfg.body_offset;
    if (terrain.gradient(s.p.x(), s.p.y()).norm() < 1.0) return s;
  }
  throw SimulationError("spawn: no valid upright pose found");
}

inline void write_trajectory_header(std::ostream& os) {
  os << "frame,px,py,theta,vx,vy,omega,b,bdot,q0,q1,hand_x,hand_y,hand_z,"
        "terminated\n";
}

inline void write_trajectory_row(std::ostream& os, int frame,
                                 const CharacterState& s, bool terminated,
                                 const SimConfig& cfg = SimConfig{}) {
  Vec3d hand = hand_position(s, cfg);
  os << frame << ',' << s.p.x() << ',' << s.p.y() << ',' << s.theta << ','
     << s.v.x() << ',' << s.v.y() << ',' << s.omega << ',' << s.b << ','
     << s.b_dot << ',' << s.q.x() << ',' << s.q.y() << ',' << hand.x() << ','
     << hand.y() << ',' << hand.z() << ',' << (terminated ? 1 : 0) << '\n';
}

}  // namespace nap::sim
