// Acceptance gate: runs the desk-scale experiments end to end and prints one
// pass/fail line per criterion. Heavy artifacts (datasets, checkpoints) are
// cached under NAP_ACCEPT_DIR; set NAP_ACCEPT_REUSE=1 to keep artifacts from
// a previous run instead of recomputing them.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "nap/config.hpp"
#include "nap/selftest.hpp"

namespace fs = std::filesystem;
using namespace nap;

namespace {

struct Gate {
  int failed = 0;

  void line(int idx, const std::string& desc, bool ok,
            const std::string& detail) {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << idx << ": "
              << desc << " (" << detail << ")\n"
              << std::flush;
    if (!ok) ++failed;
  }
};

fs::path g_dir;
bool g_reuse = false;

// Terrain curriculum needs to cross both reward thresholds; it climbs far more
// slowly than open-ground reaching, so its runs get a larger epoch budget.
constexpr int kTerrainEpochs = 16000;

bool have(const fs::path& p) { return g_reuse && fs::exists(p); }

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Cached pipeline stages.

data::TrajectoryDataset stage_dataset(const cfg::RunConfig& c,
                                      const std::string& name) {
  fs::path p = g_dir / name;
  if (have(p)) return data::dataset_load(p.string());
  data::TrajectoryDataset d =
      data::generate_dataset(c.expert_episodes, c.expert_episode_len,
                             cfg::repr(c), c.seed, cfg::generation_config(c));
  data::dataset_save(d, p.string());
  return d;
}

latent::LatentCodec stage_codec(const cfg::RunConfig& c,
                                const data::TrajectoryDataset& d,
                                const std::string& name) {
  fs::path p = g_dir / name;
  if (have(p)) return latent::codec_load(p.string());
  latent::LatentCodec codec =
      latent::train_codec(d, c.codec_z_dim, c.codec_epochs, c.seed,
                          cfg::codec_config(c))
          .codec;
  latent::codec_save(codec, p.string());
  return codec;
}

prior::DenoiserModel stage_prior(const cfg::RunConfig& c,
                                 const data::TrajectoryDataset& d,
                                 const latent::LatentCodec& codec,
                                 const std::string& name) {
  fs::path p = g_dir / name;
  if (have(p)) return prior::prior_load(p.string());
  prior::DenoiserModel m =
      prior::train_prior(d, codec, prior::NoiseSchedule::make(),
                         c.prior_epochs, c.seed, cfg::prior_config(c))
          .model;
  prior::prior_save(m, p.string());
  return m;
}

struct NavSpec {
  nav::Task task = nav::Task::far_goal;
  bool terrain = false, direct = false, action_only = false;
  int k = 0;  // 0 = task default
  int epochs = 0;  // 0 = config default
};

nav::NoisePolicy stage_nav(const cfg::RunConfig& c,
                           const prior::DenoiserModel* model,
                           const latent::LatentCodec& codec,
                           const NavSpec& spec, std::uint64_t seed,
                           const std::string& name) {
  fs::path p = g_dir / name;
  if (have(p)) return nav::policy_load(p.string());
  nav::TaskEnvConfig tcfg = nav::make_task_config(spec.task, spec.terrain);
  tcfg.sim.noise_enabled = c.sim_noise;
  tcfg.gamma = c.ppo_gamma;
  if (spec.k > 0) tcfg.k = spec.k;
  nav::NavTrainConfig ncfg = cfg::nav_config(c);
  ncfg.direct = spec.direct;
  ncfg.action_only_noise = spec.action_only;
  if (spec.epochs > 0) ncfg.epochs = spec.epochs;
  nav::TrainResult r = nav::train(tcfg, spec.direct ? nullptr : model,
                                  spec.direct ? latent::make_identity_codec(
                                                    cfg::repr(c))
                                              : codec,
                                  ncfg, seed);
  nav::policy_save(r.policy, p.string());
  std::ofstream(g_dir / (name + ".train.csv")) << r.csv();
  std::ofstream un(g_dir / (name + ".unlocks.txt"));
  for (int e : r.unlock_epochs) un << e << '\n';
  return r.policy;
}

std::vector<int> load_unlocks(const std::string& name) {
  std::vector<int> v;
  std::ifstream is(g_dir / (name + ".unlocks.txt"));
  int e;
  while (is >> e) v.push_back(e);
  return v;
}

metrics::EvalReport eval_agent(const cfg::RunConfig& c, nav::Task task,
                               bool terrain, const prior::DenoiserModel* model,
                               const latent::LatentCodec& codec,
                               const nav::NoisePolicy* policy,
                               metrics::EvalConfig ecfg) {
  nav::TaskEnvConfig tcfg = nav::make_task_config(task, terrain);
  tcfg.sim.noise_enabled = c.sim_noise;
  tcfg.eval_geometry = task != nav::Task::velocity;
  if (model != nullptr) tcfg.k = std::min(tcfg.k, model->F);
  return metrics::evaluate(tcfg, model, codec, policy, ecfg);
}

metrics::EvalConfig desk_eval(metrics::EvalAgent agent, int episodes,
                              int level = 0) {
  metrics::EvalConfig e;
  e.agent = agent;
  e.n_episodes = episodes;
  e.seed = 3;
  e.level = level;
  return e;
}

}  // namespace

int main() {
  const char* dir_env = std::getenv("NAP_ACCEPT_DIR");
  g_dir = dir_env != nullptr && *dir_env != '\0'
              ? fs::path(dir_env)
              : fs::temp_directory_path() / "nap_acceptance";
  const char* reuse_env = std::getenv("NAP_ACCEPT_REUSE");
  g_reuse = reuse_env != nullptr && std::string(reuse_env) == "1";
  fs::create_directories(g_dir);
  std::cout << "acceptance artifacts: " << g_dir
            << (g_reuse ? " (reusing)" : " (fresh)") << '\n';

  Gate gate;
  cfg::RunConfig c = cfg::make_profile("desk");

  // --- criterion 1: oracle selftest suite, all green in under a minute
  {
    double t0 = now_s();
    std::ostringstream sink;
    int failures = selftest::run_all(sink);
    double dt = now_s() - t0;
    gate.line(1, "oracle selftest suite green in <60s",
              failures == 0 && dt < 60.0,
              std::to_string(failures) + " failures, " + fmt(dt, 1) + "s");
  }

  // --- shared desk artifacts (compact repr)
  data::TrajectoryDataset dset = stage_dataset(c, "data_compact.bin");
  latent::LatentCodec codec = stage_codec(c, dset, "codec_compact.bin");
  prior::DenoiserModel model = stage_prior(c, dset, codec, "prior_compact.bin");

  // snapshot the frozen models before any nav training (criterion 2)
  fs::path pre_prior = g_dir / "frozen_prior_pre.bin";
  fs::path pre_codec = g_dir / "frozen_codec_pre.bin";
  prior::prior_save(model, pre_prior.string());
  latent::codec_save(codec, pre_codec.string());

  // --- far-goal policies, three seeds (criteria 2,4,5,7a share these)
  std::vector<nav::NoisePolicy> fg;
  std::vector<std::uint64_t> seeds = {7, 8, 9};
  for (std::uint64_t s : seeds)
    fg.push_back(stage_nav(c, &model, codec, NavSpec{}, s,
                           "pol_fg_s" + std::to_string(s) + ".bin"));

  // --- criterion 2: the frozen prior and codec are not mutated by training
  {
    fs::path post_prior = g_dir / "frozen_prior_post.bin";
    fs::path post_codec = g_dir / "frozen_codec_post.bin";
    prior::prior_save(model, post_prior.string());
    latent::codec_save(codec, post_codec.string());
    bool ok = io::files_identical(pre_prior.string(), post_prior.string()) &&
              io::files_identical(pre_codec.string(), post_codec.string());
    gate.line(2, "frozen prior/codec byte-identical across nav training", ok,
              ok ? "byte-identical" : "bytes differ");
  }

  // --- criterion 4: far-goal success and margin over random noise
  double fg_success = 0.0, fg_jerk = 0.0;
  int fg_jerk_n = 0;
  {
    for (std::size_t i = 0; i < fg.size(); ++i) {
      metrics::EvalReport r =
          eval_agent(c, nav::Task::far_goal, false, &model, codec, &fg[i],
                     desk_eval(metrics::EvalAgent::policy, 200));
      std::ofstream(g_dir / ("eval_fg_s" + std::to_string(seeds[i]) + ".csv"))
          << r.aggregate_csv();
      fg_success += r.success_rate / static_cast<double>(fg.size());
      if (r.jerk_mean) {
        fg_jerk += *r.jerk_mean;
        ++fg_jerk_n;
      }
    }
    fg_jerk = fg_jerk_n > 0 ? fg_jerk / fg_jerk_n : -1.0;
    metrics::EvalReport rnd =
        eval_agent(c, nav::Task::far_goal, false, &model, codec, nullptr,
                   desk_eval(metrics::EvalAgent::random_omega, 200));
    bool ok = fg_success >= 0.90 && fg_success - rnd.success_rate >= 0.30;
    gate.line(4, "far-goal success >=0.90 and >=30pts over random noise", ok,
              "policy " + fmt(fg_success) + ", random " +
                  fmt(rnd.success_rate) + " (3 seeds, 200 eps)");
  }

  // --- criterion 5: steering smoothness vs expert and direct raw-action PPO
  {
    // the reference jerk is the expert dataset's own (canonical positions are
    // a rigid transform of world positions, so the jerk is identical)
    double ex_jerk = 0.0;
    int ex_n = 0;
    for (const Matf& e : dset.episodes) {
      std::vector<Vec2d> pos;
      for (Eigen::Index col = 0; col < e.cols(); ++col)
        pos.emplace_back(e(0, col), e(1, col));
      if (pos.size() >= 4) {
        ex_jerk += metrics::jerk(pos);
        ++ex_n;
      }
    }
    ex_jerk /= ex_n > 0 ? ex_n : 1;
    NavSpec dspec;
    dspec.direct = true;
    nav::NoisePolicy dpol =
        stage_nav(c, nullptr, codec, dspec, 7, "pol_direct.bin");
    // The direct baseline falls almost every episode at the fixed 5 m eval
    // radius, which leaves its jerk absent under the fallen-episode exclusion
    // rule; measure it on the level-0 training band where it can walk.
    nav::TaskEnvConfig dcfg = nav::make_task_config(nav::Task::far_goal, false);
    dcfg.sim.noise_enabled = c.sim_noise;
    metrics::EvalReport dr = metrics::evaluate(
        dcfg, nullptr, latent::make_identity_codec(cfg::repr(c)), &dpol,
        desk_eval(metrics::EvalAgent::policy, 200));
    bool have_all = fg_jerk >= 0.0 && ex_n > 0 && dr.jerk_mean;
    bool ok = have_all && fg_jerk <= 2.0 * ex_jerk &&
              fg_jerk <= 0.5 * *dr.jerk_mean;
    gate.line(5, "policy jerk <=2x expert and <=0.5x direct-action PPO", ok,
              "policy " + fmt(fg_jerk) + ", expert dataset " + fmt(ex_jerk) +
                  ", direct " +
                  (dr.jerk_mean ? fmt(*dr.jerk_mean) : "n/a"));
  }

  // --- criterion 6: sampling cost accounting and speed advantage
  {
    nav::TaskEnvConfig tcfg = nav::make_task_config(nav::Task::far_goal, false);
    tcfg.sim.noise_enabled = c.sim_noise;
    tcfg.eval_geometry = true;
    tcfg.k = std::min(tcfg.k, model.F);
    metrics::EvalConfig ecfg = desk_eval(metrics::EvalAgent::policy, 20);
    ecfg.guide_steps = 10;
    metrics::ComparisonReport rep =
        metrics::compare_efficiency(tcfg, model, codec, &fg[0], ecfg);
    std::ofstream(g_dir / "efficiency.csv") << rep.csv();
    bool nfe_ok = true;
    for (const metrics::EpisodeMetrics& e : rep.steering.episodes) {
      long chunks = (e.frames + tcfg.k - 1) / tcfg.k;
      nfe_ok = nfe_ok && e.nfe_forward == 5 * chunks && e.nfe_guidance == 0;
    }
    for (const metrics::EpisodeMetrics& e : rep.guidance.episodes) {
      long chunks = (e.frames + tcfg.k - 1) / tcfg.k;
      nfe_ok = nfe_ok && e.nfe_forward == 5 * chunks &&
               e.nfe_guidance == 50 * chunks;
    }
    double ratio = rep.guidance.fps > 0 ? rep.steering.fps / rep.guidance.fps
                                        : -1.0;
    bool ok = nfe_ok && ratio > 3.0;
    gate.line(6, "NFE 5/chunk steering, 5+50 guided; fps ratio >3", ok,
              std::string(nfe_ok ? "NFE exact" : "NFE mismatch") +
                  ", fps ratio " + fmt(ratio, 1));
  }

  // --- criterion 3: end-to-end determinism and wall-clock budget
  {
    double t0 = now_s();
    fs::path tfile = g_dir / "pipeline_seconds.txt";
    bool timed_now = !have(g_dir / "det2_pol.bin");
    cfg::RunConfig c2 = c;
    data::TrajectoryDataset d2 = stage_dataset(c2, "det2_data.bin");
    latent::LatentCodec cd2 = stage_codec(c2, d2, "det2_codec.bin");
    prior::DenoiserModel m2 = stage_prior(c2, d2, cd2, "det2_prior.bin");
    nav::NoisePolicy p2 =
        stage_nav(c2, &m2, cd2, NavSpec{}, 7, "det2_pol.bin");
    metrics::EvalReport e2 =
        eval_agent(c2, nav::Task::far_goal, false, &m2, cd2, &p2,
                   desk_eval(metrics::EvalAgent::policy, 200));
    double secs;
    if (timed_now) {
      secs = now_s() - t0;
      std::ofstream(tfile) << secs << '\n';
    } else {
      std::ifstream(tfile) >> secs;
    }
    metrics::EvalReport e1 =
        eval_agent(c, nav::Task::far_goal, false, &model, codec, &fg[0],
                   desk_eval(metrics::EvalAgent::policy, 200));
    bool eval_same = e1.episodes.size() == e2.episodes.size();
    for (std::size_t i = 0; eval_same && i < e1.episodes.size(); ++i) {
      const metrics::EpisodeMetrics &a = e1.episodes[i], &b = e2.episodes[i];
      eval_same = a.success == b.success && a.fell == b.fell &&
                  a.frames == b.frames && a.nfe_forward == b.nfe_forward &&
                  a.jerk_mean == b.jerk_mean;
    }
    bool bytes_same =
        io::files_identical((g_dir / "data_compact.bin").string(),
                            (g_dir / "det2_data.bin").string()) &&
        io::files_identical((g_dir / "codec_compact.bin").string(),
                            (g_dir / "det2_codec.bin").string()) &&
        io::files_identical((g_dir / "prior_compact.bin").string(),
                            (g_dir / "det2_prior.bin").string()) &&
        io::files_identical((g_dir / "pol_fg_s7.bin").string(),
                            (g_dir / "det2_pol.bin").string());
    bool ok = bytes_same && eval_same && secs < 7200.0;
    gate.line(3, "desk pipeline bit-identical across runs and <2h", ok,
              std::string(bytes_same ? "checkpoints identical"
                                     : "checkpoint bytes differ") +
                  ", " + std::string(eval_same ? "evals identical"
                                               : "evals differ") +
                  ", " + fmt(secs / 60.0, 1) + " min");
  }

  // --- criterion 7: ablation orderings, each arm averaged over 3 seeds
  {
    // (a) compact repr vs root-only repr on far-goal
    cfg::RunConfig cr = c;
    cr.repr = "root_only";
    data::TrajectoryDataset droot = stage_dataset(cr, "data_root.bin");
    latent::LatentCodec cdr = stage_codec(cr, droot, "codec_root.bin");
    prior::DenoiserModel mr = stage_prior(cr, droot, cdr, "prior_root.bin");
    double root_success = 0.0;
    for (std::uint64_t s : seeds) {
      nav::NoisePolicy pr = stage_nav(cr, &mr, cdr, NavSpec{}, s,
                                      "pol_root_s" + std::to_string(s) + ".bin");
      metrics::EvalReport er =
          eval_agent(cr, nav::Task::far_goal, false, &mr, cdr, &pr,
                     desk_eval(metrics::EvalAgent::policy, 200));
      root_success += er.success_rate / static_cast<double>(seeds.size());
    }
    bool ok_a = fg_success - root_success >= 0.10;

    // (b) joint state+latent noise vs action-only noise on hand-reach
    double hand_joint = 0.0, hand_ao = 0.0;
    for (std::uint64_t s : seeds) {
      NavSpec hs;
      hs.task = nav::Task::hand_reach;
      nav::NoisePolicy ph = stage_nav(c, &model, codec, hs, s,
                                      "pol_hand_s" + std::to_string(s) + ".bin");
      metrics::EvalReport eh =
          eval_agent(c, nav::Task::hand_reach, false, &model, codec, &ph,
                     desk_eval(metrics::EvalAgent::policy, 200));
      hand_joint += eh.success_rate / static_cast<double>(seeds.size());
      hs.action_only = true;
      nav::NoisePolicy pha = stage_nav(
          c, &model, codec, hs, s, "pol_hand_ao_s" + std::to_string(s) + ".bin");
      metrics::EvalConfig eha_cfg = desk_eval(metrics::EvalAgent::policy, 200);
      eha_cfg.action_only_noise = true;
      metrics::EvalReport eha = eval_agent(c, nav::Task::hand_reach, false,
                                           &model, codec, &pha, eha_cfg);
      hand_ao += eha.success_rate / static_cast<double>(seeds.size());
    }
    bool ok_b = hand_joint - hand_ao >= 0.05;

    // (c) execute horizon k=4 vs k=16 on terrain; terrain needs a longer
    // budget than open ground to climb the curriculum
    double ter4 = 0.0, ter16 = 0.0, ter4_l4 = 0.0;
    for (std::uint64_t s : seeds) {
      NavSpec t4;
      t4.terrain = true;
      t4.epochs = kTerrainEpochs;
      nav::NoisePolicy pt4 = stage_nav(
          c, &model, codec, t4, s, "pol_ter_k4_s" + std::to_string(s) + ".bin");
      NavSpec t16 = t4;
      t16.k = 16;
      nav::NoisePolicy pt16 = stage_nav(
          c, &model, codec, t16, s, "pol_ter_k16_s" + std::to_string(s) + ".bin");
      metrics::EvalReport et4 =
          eval_agent(c, nav::Task::far_goal, true, &model, codec, &pt4,
                     desk_eval(metrics::EvalAgent::policy, 200, 2));
      metrics::EvalReport et16 =
          eval_agent(c, nav::Task::far_goal, true, &model, codec, &pt16,
                     desk_eval(metrics::EvalAgent::policy, 200, 2));
      ter4 += et4.success_rate / static_cast<double>(seeds.size());
      ter16 += et16.success_rate / static_cast<double>(seeds.size());
      metrics::EvalReport el4 =
          eval_agent(c, nav::Task::far_goal, true, &model, codec, &pt4,
                     desk_eval(metrics::EvalAgent::policy, 200, 4));
      ter4_l4 += el4.success_rate / static_cast<double>(seeds.size());
    }
    bool ok_c = ter4 - ter16 >= 0.05;

    gate.line(7, "ablation margins (repr +10pts, joint +5pts, k4 +5pts)",
              ok_a && ok_b && ok_c,
              "repr " + fmt(fg_success) + " vs " + fmt(root_success) +
                  "; hand " + fmt(hand_joint) + " vs " + fmt(hand_ao) +
                  "; k " + fmt(ter4) + " vs " + fmt(ter16));

    // --- criterion 8: terrain curriculum unlocks and level-4 success
    std::vector<int> unlocks = load_unlocks("pol_ter_k4_s7.bin");
    bool ok8 = unlocks.size() == 2 && ter4_l4 >= 0.6;
    std::string un_str = unlocks.empty() ? "none" : "";
    for (std::size_t i = 0; i < unlocks.size(); ++i)
      un_str += (i ? "," : "") + std::to_string(unlocks[i]);
    gate.line(8, "terrain curriculum unlocks both thresholds, level-4 >=0.6",
              ok8, "unlock epochs [" + un_str + "], level-4 success " +
                       fmt(ter4_l4));
  }

  // --- criterion 9: terrain sampling distribution and heightmap size
  {
    Rng rng(123);
    const int n = 10000;
    std::array<int, 5> counts{};
    for (int i = 0; i < n; ++i) {
      sim::TerrainKind k = sim::sample_terrain_kind(rng);
      switch (k) {
        case sim::TerrainKind::smooth_slope: ++counts[0]; break;
        case sim::TerrainKind::rough_slope: ++counts[1]; break;
        case sim::TerrainKind::stairs_up: ++counts[2]; break;
        case sim::TerrainKind::stairs_down: ++counts[3]; break;
        case sim::TerrainKind::discrete_blocks: ++counts[4]; break;
        default: break;
      }
    }
    bool freq_ok = true;
    std::string fstr;
    for (int i = 0; i < 5; ++i) {
      double f = static_cast<double>(counts[i]) / n;
      freq_ok = freq_ok && std::abs(f - sim::kTerrainProportions[i]) <= 0.03;
      fstr += (i ? "," : "") + fmt(f);
    }
    nav::TaskEnvConfig tcfg = nav::make_task_config(nav::Task::far_goal, true);
    Rng erng(1);
    nav::TaskEnv env(tcfg, 4, erng);
    int hm = static_cast<int>(env.observe().size()) - nav::kPropDim -
             nav::task_feature_dim(nav::Task::far_goal);
    bool ok = freq_ok && hm == 1024;
    gate.line(9, "terrain kind frequencies within 0.03, heightmap 1024", ok,
              "[" + fstr + "], heightmap " + std::to_string(hm));
  }

  if (gate.failed > 0) {
    std::cout << gate.failed << " criterion(s) failing\n";
    return 1;
  }
  std::cout << "all acceptance criteria pass\n";
  return 0;
}
