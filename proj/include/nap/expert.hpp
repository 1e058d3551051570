#pragma once

#include "nap/canon.hpp"
#include "nap/sim.hpp"

namespace nap::data {

struct ExpertGains {
  double kb = 15.0;         // balance proportional gain
  double kbd = 4.0;         // balance derivative gain
  double k_vel = 1.0;       // desired speed per meter of waypoint error
  double k_acc = 2.5;       // acceleration toward desired velocity
  double v_max = 2.5;       // cruise speed cap (m/s)
  double swing_amp = 0.55;  // arm swing amplitude at cruise speed (rad)
  double swing_rate = 2.4;  // swing phase advance per meter traveled
  double q0_rest = 0.0, q1_rest = 0.0;
};

// Waypoint-pursuit controller: velocity-field drive, linear balance
// stabilization, arm swing whose amplitude scales with speed and whose phase
// is tied to traveled distance (so the style is repeatable, not clocked).
inline sim::RawAction expert_act(const sim::CharacterState& s,
                                 const Vec2d& waypoint, double phase,
                                 const ExpertGains& g = ExpertGains{}) {
  sim::RawAction a;

  Vec2d err = waypoint - s.p;
  Vec2d v_des = g.k_vel * err;
  double speed_des = v_des.norm();
  if (speed_des > g.v_max) v_des *= g.v_max / speed_des;
  a.drive = g.k_acc * (v_des - s.v);

  a.balance_torque = g.kb * s.b + g.kbd * s.b_dot;

  double amp = g.swing_amp * std::min(s.v.norm() / g.v_max, 1.0);
  a.q_target = Vec2d(g.q0_rest + amp * std::sin(phase),
                     g.q1_rest + 0.6 * amp * std::cos(phase));
  return a;
}

// Stateful wrapper owning the swing phase.
class ExpertController {
 public:
  explicit ExpertController(ExpertGains gains = ExpertGains{}) : gains_(gains) {}

  sim::RawAction act(const sim::CharacterState& s, const Vec2d& waypoint,
                     double dt) {
    sim::RawAction a = expert_act(s, waypoint, phase_, gains_);
    phase_ += gains_.swing_rate * s.v.norm() * dt;
    return a;
  }

  void reset() { phase_ = 0.0; }
  const ExpertGains& gains() const { return gains_; }

 private:
  ExpertGains gains_;
  double phase_ = 0.0;
};

}  // namespace nap::data
