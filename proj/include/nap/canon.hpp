#pragma once

#include "nap/common.hpp"
#include "nap/sim.hpp"

#include <string>
#include <vector>

namespace nap::data {

// State-representation variants. `full` appends redundant derived hand
// features to `compact`; `root_only` keeps body-root features only.
enum class ReprVariant : std::uint8_t { full = 0, compact = 1, root_only = 2 };

inline std::string to_string(ReprVariant r) {
  switch (r) {
    case ReprVariant::full: return "full";
    case ReprVariant::compact: return "compact";
    case ReprVariant::root_only: return "root_only";
  }
  return "?";
}

inline ReprVariant repr_from_string(const std::string& s) {
  for (ReprVariant r :
       {ReprVariant::full, ReprVariant::compact, ReprVariant::root_only})
    if (to_string(r) == s) return r;
  throw ConfigError("unknown state representation: " + s);
}

// Feature layout (canonical frame):
//   root_only (7):  p' (2), heading (cos, sin) (2), v' (2), omega (1)
//   compact  (13):  root_only + b, b_dot, q (2), q_dot (2)
//   full     (17):  compact + hand reach/lift and their rates (4)
inline int repr_dim(ReprVariant r) {
  switch (r) {
    case ReprVariant::root_only: return 7;
    case ReprVariant::compact: return 13;
    case ReprVariant::full: return 17;
  }
  throw ConfigError("repr_dim: bad variant");
}

// Minimal pose sample holding everything any repr variant needs.
struct Frame {
  Vec2d p{0, 0};
  double theta = 0;
  Vec2d v{0, 0};
  double omega = 0;
  double b = 0, b_dot = 0;
  Vec2d q{0, 0}, q_dot{0, 0};

  static Frame from_state(const sim::CharacterState& s) {
    Frame f;
    f.p = s.p;
    f.theta = s.theta;
    f.v = s.v;
    f.omega = s.omega;
    f.b = s.b;
    f.b_dot = s.b_dot;
    f.q = s.q;
    f.q_dot = s.q_dot;
    return f;
  }
};

namespace detail {

inline Eigen::Rotation2D<double> canon_rotation(double anchor_theta) {
  // canonical +y is the anchor frame's forward direction
  return Eigen::Rotation2D<double>(M_PI / 2 - anchor_theta);
}

}  // namespace detail

// Features of `f` expressed in the canonical frame of `anchor` (anchor
// position at the origin, anchor forward along +y).
inline Vecd canonicalize_frame(const Frame& f, const Frame& anchor,
                               ReprVariant repr,
                               const sim::SimConfig& cfg = sim::SimConfig{}) {
  auto rot = detail::canon_rotation(anchor.theta);
  Vec2d p = rot * (f.p - anchor.p);
  double theta = f.theta - anchor.theta + M_PI / 2;
  Vec2d v = rot * f.v;

  Vecd out(repr_dim(repr));
  out.segment<2>(0) = p;
  out[2] = std::cos(theta);
  out[3] = std::sin(theta);
  out.segment<2>(4) = v;
  out[6] = f.omega;
  if (repr == ReprVariant::root_only) return out;

  out[7] = f.b;
  out[8] = f.b_dot;
  out.segment<2>(9) = f.q;
  out.segment<2>(11) = f.q_dot;
  if (repr == ReprVariant::compact) return out;

  double s0 = std::sin(f.q.x()), c0 = std::cos(f.q.x());
  double s01 = std::sin(f.q.x() + f.q.y()), c01 = std::cos(f.q.x() + f.q.y());
  double qd0 = f.q_dot.x(), qd01 = f.q_dot.x() + f.q_dot.y();
  out[13] = cfg.arm_l1 * c0 + cfg.arm_l2 * c01;                 // reach
  out[14] = cfg.arm_l1 * s0 + cfg.arm_l2 * s01;                 // lift
  out[15] = -cfg.arm_l1 * s0 * qd0 - cfg.arm_l2 * s01 * qd01;   // reach rate
  out[16] = cfg.arm_l1 * c0 * qd0 + cfg.arm_l2 * c01 * qd01;    // lift rate
  return out;
}

// Whole-window canonicalization relative to the first frame.
inline std::vector<Vecd> canonicalize(const std::vector<Frame>& frames,
                                      ReprVariant repr,
                                      const sim::SimConfig& cfg = sim::SimConfig{}) {
  if (frames.empty()) throw UsageError("canonicalize: empty window");
  std::vector<Vecd> out;
  out.reserve(frames.size());
  for (const Frame& f : frames)
    out.push_back(canonicalize_frame(f, frames.front(), repr, cfg));
  return out;
}

// Re-expresses features (canonical w.r.t. some anchor A) in the canonical
// frame of the window's own first frame. Exact because canonicalization
// composes under rigid transforms; per-frame local features are untouched.
inline void reanchor_window(std::vector<Vecd>& window, ReprVariant repr) {
  if (window.empty()) throw UsageError("reanchor_window: empty window");
  (void)repr;
  const Vecd& a = window.front();
  Vec2d p_a(a[0], a[1]);
  double theta_a = std::atan2(a[3], a[2]);
  auto rot = detail::canon_rotation(theta_a);
  for (Vecd& f : window) {
    Vec2d p(f[0], f[1]);
    Vec2d v(f[4], f[5]);
    double theta = std::atan2(f[3], f[2]);
    Vec2d p2 = rot * (p - p_a);
    Vec2d v2 = rot * v;
    double theta2 = theta - theta_a + M_PI / 2;
    f[0] = p2.x();
    f[1] = p2.y();
    f[2] = std::cos(theta2);
    f[3] = std::sin(theta2);
    f[4] = v2.x();
    f[5] = v2.y();
  }
}

// Index map embedding the compact layout inside the full layout.
inline std::vector<int> compact_in_full_indices() {
  std::vector<int> idx(repr_dim(ReprVariant::compact));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace nap::data
