// Pipeline driver: expert data -> latent codec -> diffusion prior ->
// noise-navigation policy -> evaluation, each stage a subcommand.

#include <CLI11.hpp>

#include "nap/config.hpp"
#include "nap/selftest.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace nap;

namespace {

constexpr const char* kVersion = "nap 0.1.0";

struct CommonOpts {
  std::string config_path;
  std::string profile = "desk";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string run_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "config file (section.key = value)");
  cmd->add_option("--profile", o.profile, "profile when no config is given")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", o.seed, "override run.seed")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--run-dir", o.run_dir,
                  "directory for the effective config and logs");
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  if (fs::path(path).has_parent_path())
    fs::create_directories(fs::path(path).parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << content;
  if (!os) throw IoError("short write to " + path);
}

cfg::RunConfig load_config(const CommonOpts& o) {
  cfg::RunConfig c = o.config_path.empty()
                         ? cfg::make_profile(o.profile)
                         : cfg::parse_config(read_file(o.config_path));
  if (o.seed_set) c.seed = o.seed;
  return c;
}

// The run directory must suffice to reproduce the run: effective config
// (seed included), plus a version stamp.
void record_run(const CommonOpts& o, const cfg::RunConfig& c) {
  if (o.run_dir.empty()) return;
  fs::create_directories(o.run_dir);
  write_file((fs::path(o.run_dir) / "config.txt").string(),
             cfg::emit_config(c));
  write_file((fs::path(o.run_dir) / "VERSION").string(),
             std::string(kVersion) + "\n");
}

void emit_loss_csv(const std::string& path, const std::vector<double>& curve) {
  std::ostringstream os;
  os << "epoch,loss\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < curve.size(); ++i)
    os << i << ',' << curve[i] << '\n';
  write_file(path, os.str());
}

struct NavOpts {
  std::string prior_path, codec_path, out, task = "far_goal";
  bool terrain = false, direct = false, action_only = false;
  int k = 0;  // 0 = task default
};

int run_gen_expert(const CommonOpts& o, const std::string& out) {
  cfg::RunConfig c = load_config(o);
  record_run(o, c);
  data::TrajectoryDataset d =
      data::generate_dataset(c.expert_episodes, c.expert_episode_len,
                             cfg::repr(c), c.seed, cfg::generation_config(c));
  data::dataset_save(d, out);
  std::cout << "wrote " << out << " (" << d.episodes.size() << " episodes)\n";
  return 0;
}

int run_train_codec(const CommonOpts& o, const std::string& data_path,
                    const std::string& out) {
  cfg::RunConfig c = load_config(o);
  record_run(o, c);
  data::TrajectoryDataset d = data::dataset_load(data_path);
  if (c.codec_identity) {
    latent::codec_save(latent::make_identity_codec(d.repr), out);
    std::cout << "wrote identity codec " << out << '\n';
    return 0;
  }
  latent::CodecTrainResult r = latent::train_codec(
      d, c.codec_z_dim, c.codec_epochs, c.seed, cfg::codec_config(c));
  latent::codec_save(r.codec, out);
  emit_loss_csv(out + ".loss.csv", r.loss_curve);
  std::cout << "wrote " << out << " final loss " << r.loss_curve.back()
            << '\n';
  return 0;
}

int run_train_prior(const CommonOpts& o, const std::string& data_path,
                    const std::string& codec_path, const std::string& out) {
  cfg::RunConfig c = load_config(o);
  record_run(o, c);
  data::TrajectoryDataset d = data::dataset_load(data_path);
  latent::LatentCodec codec = latent::codec_load(codec_path);
  prior::PriorTrainResult r =
      prior::train_prior(d, codec, prior::NoiseSchedule::make(),
                         c.prior_epochs, c.seed, cfg::prior_config(c));
  prior::prior_save(r.model, out);
  emit_loss_csv(out + ".loss.csv", r.loss_curve);
  std::cout << "wrote " << out << " final loss " << r.loss_curve.back()
            << '\n';
  return 0;
}

int run_train_nav(const CommonOpts& o, const NavOpts& n) {
  cfg::RunConfig c = load_config(o);
  record_run(o, c);
  nav::Task task = nav::task_from_string(n.task);
  nav::TaskEnvConfig tcfg = nav::make_task_config(task, n.terrain);
  tcfg.sim.noise_enabled = c.sim_noise;
  tcfg.gamma = c.ppo_gamma;
  if (n.k > 0) tcfg.k = n.k;
  nav::NavTrainConfig ncfg = cfg::nav_config(c);
  ncfg.direct = n.direct;
  ncfg.action_only_noise = n.action_only;

  prior::DenoiserModel model;
  latent::LatentCodec codec;
  if (n.direct) {
    codec = latent::make_identity_codec(cfg::repr(c));
  } else {
    if (n.prior_path.empty()) throw ConfigError("missing prior");
    if (n.codec_path.empty()) throw ConfigError("missing codec");
    model = prior::prior_load(n.prior_path);
    codec = latent::codec_load(n.codec_path);
  }
  nav::TrainResult r = nav::train(tcfg, n.direct ? nullptr : &model, codec,
                                  ncfg, c.seed);
  nav::policy_save(r.policy, n.out);
  write_file(n.out + ".train.csv", r.csv());
  double final_sr = r.log.empty() ? 0.0 : r.log.back().success_rate;
  std::cout << "wrote " << n.out << " final success_rate " << final_sr
            << " level " << (r.log.empty() ? 0 : r.log.back().level) << '\n';
  return 0;
}

struct EvalOpts {
  std::string policy_path, prior_path, codec_path, out, task = "far_goal";
  std::string agent = "policy";
  bool terrain = false, action_only = false, train_geometry = false;
  int episodes = 0;  // 0 = config default
  int level = -1;
  int k = 0;  // 0 = task default
};

int run_eval(const CommonOpts& o, const EvalOpts& e) {
  cfg::RunConfig c = load_config(o);
  record_run(o, c);
  nav::Task task = nav::task_from_string(e.task);
  nav::TaskEnvConfig tcfg = nav::make_task_config(task, e.terrain);
  tcfg.sim.noise_enabled = c.sim_noise;
  tcfg.eval_geometry = !e.train_geometry && task != nav::Task::velocity;
  if (e.k > 0) tcfg.k = e.k;
  metrics::EvalConfig ecfg = cfg::eval_config(c);
  if (o.seed_set) ecfg.seed = o.seed;
  if (e.episodes > 0) ecfg.n_episodes = e.episodes;
  if (e.level >= 0) ecfg.level = e.level;
  ecfg.action_only_noise = e.action_only;

  if (e.agent == "policy") ecfg.agent = metrics::EvalAgent::policy;
  else if (e.agent == "random") ecfg.agent = metrics::EvalAgent::random_omega;
  else if (e.agent == "guidance") ecfg.agent = metrics::EvalAgent::guidance;
  else if (e.agent == "expert") ecfg.agent = metrics::EvalAgent::expert;
  else throw ConfigError("unknown agent: " + e.agent);

  nav::NoisePolicy policy;
  bool have_policy = false;
  if (ecfg.agent == metrics::EvalAgent::policy) {
    if (e.policy_path.empty()) throw ConfigError("missing policy");
    policy = nav::policy_load(e.policy_path);
    have_policy = true;
  }
  prior::DenoiserModel model;
  latent::LatentCodec codec = latent::make_identity_codec(cfg::repr(c));
  bool needs_prior = ecfg.agent != metrics::EvalAgent::expert &&
                     !(have_policy && policy.direct);
  if (needs_prior) {
    if (e.prior_path.empty()) throw ConfigError("missing prior");
    if (e.codec_path.empty()) throw ConfigError("missing codec");
    model = prior::prior_load(e.prior_path);
    codec = latent::codec_load(e.codec_path);
    tcfg.k = std::min(tcfg.k, model.F);
  }
  metrics::EvalReport rep =
      metrics::evaluate(tcfg, needs_prior ? &model : nullptr, codec,
                        have_policy ? &policy : nullptr, ecfg);
  write_file(e.out + ".episodes.csv", rep.episode_csv());
  write_file(e.out + ".aggregate.csv", rep.aggregate_csv());
  std::cout << "success_rate " << rep.success_rate << " fall_rate "
            << rep.fall_rate << " fps " << rep.fps << '\n';
  return 0;
}

int run_compare(const CommonOpts& o, const EvalOpts& e, int guide_steps) {
  cfg::RunConfig c = load_config(o);
  record_run(o, c);
  nav::Task task = nav::task_from_string(e.task);
  nav::TaskEnvConfig tcfg = nav::make_task_config(task, e.terrain);
  tcfg.sim.noise_enabled = c.sim_noise;
  tcfg.eval_geometry = task != nav::Task::velocity;
  if (e.prior_path.empty()) throw ConfigError("missing prior");
  if (e.codec_path.empty()) throw ConfigError("missing codec");
  prior::DenoiserModel model = prior::prior_load(e.prior_path);
  latent::LatentCodec codec = latent::codec_load(e.codec_path);
  tcfg.k = std::min(tcfg.k, model.F);
  metrics::EvalConfig ecfg = cfg::eval_config(c);
  if (o.seed_set) ecfg.seed = o.seed;
  if (e.episodes > 0) ecfg.n_episodes = e.episodes;
  if (guide_steps >= 0) ecfg.guide_steps = guide_steps;

  nav::NoisePolicy policy;
  bool have_policy = !e.policy_path.empty();
  if (have_policy) policy = nav::policy_load(e.policy_path);
  metrics::ComparisonReport rep = metrics::compare_efficiency(
      tcfg, model, codec, have_policy ? &policy : nullptr, ecfg);
  write_file(e.out + ".compare.csv", rep.csv());
  std::cout << rep.csv();
  return 0;
}

// ---------------------------------------------------------------------------
// selftest: the oracle suite (see include/nap/selftest.hpp).

int run_selftest() {
  int failures = selftest::run_all(std::cout);
  if (failures > 0) {
    std::cout << failures << " selftest failure(s)\n";
    return 4;
  }
  std::cout << "all selftests passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-noise navigation pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOpts gen_o, codec_o, prior_o, nav_o, eval_o, cmp_o;
  std::string gen_out, codec_data, codec_out, prior_data, prior_codec,
      prior_out;
  NavOpts nav;
  EvalOpts ev, cmp;
  int cmp_guide_steps = 10;

  CLI::App* c_gen = app.add_subcommand("gen-expert", "generate expert data");
  add_common(c_gen, gen_o);
  c_gen->add_option("--out", gen_out, "dataset output path")->required();

  CLI::App* c_codec = app.add_subcommand("train-codec", "train latent codec");
  add_common(c_codec, codec_o);
  c_codec->add_option("--data", codec_data, "dataset path")->required();
  c_codec->add_option("--out", codec_out, "codec output path")->required();

  CLI::App* c_prior =
      app.add_subcommand("train-prior", "train the diffusion prior");
  add_common(c_prior, prior_o);
  c_prior->add_option("--data", prior_data, "dataset path")->required();
  c_prior->add_option("--codec", prior_codec, "codec path")->required();
  c_prior->add_option("--out", prior_out, "prior output path")->required();

  CLI::App* c_nav =
      app.add_subcommand("train-nav", "train the noise-navigation policy");
  add_common(c_nav, nav_o);
  c_nav->add_option("--prior", nav.prior_path, "prior checkpoint");
  c_nav->add_option("--codec", nav.codec_path, "codec checkpoint");
  c_nav->add_option("--task", nav.task, "far_goal|hand_reach|velocity");
  c_nav->add_flag("--terrain", nav.terrain, "terrain curriculum mode");
  c_nav->add_flag("--direct", nav.direct, "raw-action PPO baseline");
  c_nav->add_flag("--action-only", nav.action_only,
                  "steer only action-noise rows");
  c_nav->add_option("--k", nav.k, "chunk frames executed per step");
  c_nav->add_option("--out", nav.out, "policy output path")->required();

  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a policy or agent");
  add_common(c_eval, eval_o);
  c_eval->add_option("--policy", ev.policy_path, "policy checkpoint");
  c_eval->add_option("--prior", ev.prior_path, "prior checkpoint");
  c_eval->add_option("--codec", ev.codec_path, "codec checkpoint");
  c_eval->add_option("--task", ev.task, "far_goal|hand_reach|velocity");
  c_eval->add_flag("--terrain", ev.terrain, "terrain mode");
  c_eval->add_option("--agent", ev.agent, "policy|random|guidance|expert");
  c_eval->add_flag("--action-only", ev.action_only,
                   "match an action-only-trained policy");
  c_eval->add_option("--episodes", ev.episodes, "episode count");
  c_eval->add_option("--level", ev.level, "fixed curriculum level");
  c_eval->add_option("--k", ev.k, "chunk frames executed per step");
  c_eval->add_flag("--train-geometry", ev.train_geometry,
                   "sample goals from the level's training band instead of "
                   "the fixed evaluation radius");
  c_eval->add_option("--out", ev.out, "report path prefix")->required();

  CLI::App* c_cmp = app.add_subcommand(
      "compare-guidance", "steering vs loss-guided denoising");
  add_common(c_cmp, cmp_o);
  c_cmp->add_option("--prior", cmp.prior_path, "prior checkpoint");
  c_cmp->add_option("--codec", cmp.codec_path, "codec checkpoint");
  c_cmp->add_option("--policy", cmp.policy_path,
                    "optional steering policy (default random omega)");
  c_cmp->add_option("--task", cmp.task, "far_goal|hand_reach|velocity");
  c_cmp->add_flag("--terrain", cmp.terrain, "terrain mode");
  c_cmp->add_option("--guide-steps", cmp_guide_steps, "G inner iterations");
  c_cmp->add_option("--episodes", cmp.episodes, "episode count");
  c_cmp->add_option("--out", cmp.out, "report path prefix")->required();

  CLI::App* c_self = app.add_subcommand("selftest", "run the oracle suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "NAP-ERR: " << e.what() << '\n';
    return 2;
  }

  try {
    if (c_gen->parsed()) return run_gen_expert(gen_o, gen_out);
    if (c_codec->parsed()) return run_train_codec(codec_o, codec_data, codec_out);
    if (c_prior->parsed())
      return run_train_prior(prior_o, prior_data, prior_codec, prior_out);
    if (c_nav->parsed()) return run_train_nav(nav_o, nav);
    if (c_eval->parsed()) return run_eval(eval_o, ev);
    if (c_cmp->parsed()) return run_compare(cmp_o, cmp, cmp_guide_steps);
    if (c_self->parsed()) return run_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "NAP-ERR: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "NAP-ERR: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
