#pragma once

#include "nap/canon.hpp"
#include "nap/checkpoint.hpp"
#include "nap/expert.hpp"

#include <string>
#include <vector>

namespace nap::data {

// Expert trajectory corpus. Episodes are stored column-per-frame as
// (canonicalized state features ‖ executed raw action); features are
// canonical w.r.t. each episode's first frame. Normalization statistics
// cover all stored columns (features and actions).
struct TrajectoryDataset {
  ReprVariant repr = ReprVariant::compact;
  int feature_dim = 0;
  int action_dim = 0;
  std::uint64_t seed = 0;
  std::vector<Matf> episodes;  // (feature_dim + action_dim) x frames
  Vecf mean, stddev;           // length feature_dim + action_dim

  int row_dim() const { return feature_dim + action_dim; }

  std::size_t total_frames() const {
    std::size_t n = 0;
    for (const Matf& e : episodes) n += static_cast<std::size_t>(e.cols());
    return n;
  }

  void validate() const {
    int rd = row_dim();
    if (feature_dim != repr_dim(repr))
      throw IoError("dataset: feature_dim does not match repr");
    if (mean.size() != rd || stddev.size() != rd)
      throw IoError("dataset: bad normalization stat length");
    if ((stddev.array() <= 0).any())
      throw IoError("dataset: non-positive std");
    for (const Matf& e : episodes) {
      if (e.rows() != rd) throw IoError("dataset: bad episode row count");
      if (!e.allFinite()) throw IoError("dataset: non-finite frame");
    }
  }
};

// Recomputes per-column mean/std over every stored frame (double-precision
// accumulation, then rounded to f32 like the rest of the file).
inline void compute_normalization(TrajectoryDataset& d) {
  int rd = d.row_dim();
  Vecd sum = Vecd::Zero(rd), sumsq = Vecd::Zero(rd);
  std::size_t n = 0;
  for (const Matf& e : d.episodes) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      Vecd col = e.col(c).cast<double>();
      sum += col;
      sumsq += col.cwiseProduct(col);
      ++n;
    }
  }
  if (n < 2) throw TrainingError("dataset: too few frames for statistics");
  Vecd mean = sum / static_cast<double>(n);
  Vecd var = sumsq / static_cast<double>(n) - mean.cwiseProduct(mean);
  var = var.cwiseMax(1e-10);
  d.mean = mean.cast<float>();
  d.stddev = var.cwiseSqrt().cast<float>();
}

inline void dataset_save(const TrajectoryDataset& d, const std::string& path) {
  d.validate();
  io::ByteWriter w;
  w.magic("NAPD");
  w.u32(io::kFormatVersion);
  w.u8(static_cast<std::uint8_t>(d.repr));
  w.u32(static_cast<std::uint32_t>(d.feature_dim));
  w.u32(static_cast<std::uint32_t>(d.action_dim));
  w.u64(d.seed);
  w.u32(static_cast<std::uint32_t>(d.episodes.size()));
  for (const Matf& e : d.episodes) {
    w.u32(static_cast<std::uint32_t>(e.cols()));
    for (Eigen::Index c = 0; c < e.cols(); ++c)
      for (Eigen::Index r = 0; r < e.rows(); ++r) w.f32(e(r, c));
  }
  w.f32_span(d.mean.data(), static_cast<std::size_t>(d.mean.size()));
  w.f32_span(d.stddev.data(), static_cast<std::size_t>(d.stddev.size()));
  w.write_file(path);
}

inline TrajectoryDataset dataset_load(const std::string& path) {
  io::ByteReader r = io::ByteReader::from_file(path);
  r.check_trailer();
  r.expect_magic("NAPD");
  std::uint32_t version = r.u32();
  if (version != io::kFormatVersion)
    throw IoError(path + ": unsupported dataset version " +
                  std::to_string(version));
  TrajectoryDataset d;
  std::uint8_t tag = r.u8();
  if (tag > 2) throw IoError(path + ": bad repr tag");
  d.repr = static_cast<ReprVariant>(tag);
  d.feature_dim = static_cast<int>(r.u32());
  d.action_dim = static_cast<int>(r.u32());
  d.seed = r.u64();
  if (d.feature_dim != repr_dim(d.repr) || d.action_dim <= 0 ||
      d.action_dim > 64)
    throw IoError(path + ": implausible dataset dims");
  std::uint32_t n_eps = r.u32();
  if (n_eps > (1u << 24)) throw IoError(path + ": implausible episode count");
  int rd = d.row_dim();
  d.episodes.reserve(n_eps);
  for (std::uint32_t i = 0; i < n_eps; ++i) {
    std::uint32_t frames = r.u32();
    if (frames == 0 || frames > (1u << 24))
      throw IoError(path + ": implausible frame count");
    Matf e(rd, frames);
    for (std::uint32_t c = 0; c < frames; ++c)
      for (int rr = 0; rr < rd; ++rr) e(rr, c) = r.f32();
    d.episodes.push_back(std::move(e));
  }
  d.mean.resize(rd);
  d.stddev.resize(rd);
  r.f32_span(d.mean.data(), static_cast<std::size_t>(rd));
  r.f32_span(d.stddev.data(), static_cast<std::size_t>(rd));
  r.finish();
  d.validate();
  return d;
}

struct GenerationConfig {
  int waypoint_min_hold = 45;   // frames before a forced waypoint resample
  int waypoint_max_hold = 150;
  double waypoint_box = 8.0;    // waypoints drawn from [-box, box]^2
  double waypoint_reach = 0.5;  // resample when this close (m)
  sim::SimConfig sim;
  ExpertGains gains;
};

namespace detail {

struct EpisodeRun {
  Matf columns;  // empty if the expert fell
  bool fell = false;
};

inline EpisodeRun run_expert_episode(int episode_len, ReprVariant repr,
                                     Rng rng, const GenerationConfig& cfg) {
  sim::TerrainField flat =
      sim::generate_terrain(sim::TerrainKind::flat, 0, rng.derive(1).next_u64());
  Rng sim_rng = rng.derive(2);
  Rng script_rng = rng.derive(3);
  sim::CharacterState s = sim::spawn(flat, script_rng, cfg.sim);
  ExpertController expert(cfg.gains);

  auto draw_waypoint = [&] {
    return Vec2d(script_rng.uniform(-cfg.waypoint_box, cfg.waypoint_box),
                 script_rng.uniform(-cfg.waypoint_box, cfg.waypoint_box));
  };
  Vec2d waypoint = draw_waypoint();
  int hold = static_cast<int>(
      script_rng.uniform_int(cfg.waypoint_min_hold, cfg.waypoint_max_hold));

  std::vector<Frame> frames;
  std::vector<Vecd> actions;
  frames.reserve(episode_len);
  actions.reserve(episode_len);
  for (int t = 0; t < episode_len; ++t) {
    if (--hold <= 0 || (waypoint - s.p).norm() < cfg.waypoint_reach) {
      waypoint = draw_waypoint();
      hold = static_cast<int>(
          script_rng.uniform_int(cfg.waypoint_min_hold, cfg.waypoint_max_hold));
    }
    sim::RawAction a = clamp_action(expert.act(s, waypoint, cfg.sim.dt), cfg.sim);
    frames.push_back(Frame::from_state(s));
    actions.push_back(a.flat());
    auto [next, terminated] = sim::step(s, a, flat, sim_rng, cfg.sim);
    s = next;
    if (terminated) return {Matf(), true};
  }

  std::vector<Vecd> feats = canonicalize(frames, repr, cfg.sim);
  int fd = repr_dim(repr);
  int ad = sim::RawAction::kDim;
  Matf cols(fd + ad, episode_len);
  for (int t = 0; t < episode_len; ++t) {
    cols.col(t).head(fd) = feats[static_cast<std::size_t>(t)].cast<float>();
    cols.col(t).tail(ad) = actions[static_cast<std::size_t>(t)].cast<float>();
  }
  return {std::move(cols), false};
}

}  // namespace detail

// Runs the expert over random waypoint scripts on flat terrain. Fallen
// episodes are discarded; a fall rate above 20% means the dynamics or gains
// are mis-tuned and aborts generation.
inline TrajectoryDataset generate_dataset(int n_episodes, int episode_len,
                                          ReprVariant repr, std::uint64_t seed,
                                          const GenerationConfig& cfg = {}) {
  if (n_episodes < 1) throw UsageError("generate_dataset: n_episodes >= 1");
  if (episode_len < 2) throw UsageError("generate_dataset: episode_len >= 2");

  Rng root(seed);
  std::vector<detail::EpisodeRun> runs(static_cast<std::size_t>(n_episodes));
  parallel_for(n_episodes, [&](int i) {
    runs[static_cast<std::size_t>(i)] = detail::run_expert_episode(
        episode_len, repr, root.derive(static_cast<std::uint64_t>(i)), cfg);
  });

  TrajectoryDataset d;
  d.repr = repr;
  d.feature_dim = repr_dim(repr);
  d.action_dim = sim::RawAction::kDim;
  d.seed = seed;
  int falls = 0;
  for (auto& run : runs) {
    if (run.fell)
      ++falls;
    else
      d.episodes.push_back(std::move(run.columns));
  }
  if (falls * 5 > n_episodes)
    throw TrainingError("generate_dataset: expert fall rate " +
                        std::to_string(100.0 * falls / n_episodes) +
                        "% exceeds 20% — dynamics or gains mis-tuned");
  compute_normalization(d);
  d.validate();
  return d;
}

}  // namespace nap::data
