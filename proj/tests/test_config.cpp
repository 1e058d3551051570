#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nap/config.hpp"

using namespace nap;

TEST_CASE("profiles") {
  cfg::RunConfig desk = cfg::make_profile("desk");
  cfg::RunConfig paper = cfg::make_profile("paper");
  CHECK(desk.ppo_n_envs == 32);
  CHECK(paper.ppo_n_envs == 256);
  CHECK(paper.ppo_lr == 2e-5);
  CHECK(paper.ppo_minibatch == 4096);
  CHECK(paper.policy_trunk == std::vector<int>{2048, 1024, 512});
  CHECK(paper.policy_task == std::vector<int>{512, 256});
  CHECK(paper.eval_episodes == 1000);
  CHECK(desk.eval_episodes == 200);
  CHECK_THROWS_AS(cfg::make_profile("huge"), ConfigError);
}

TEST_CASE("config round trip") {
  for (const char* name : {"desk", "paper"}) {
    cfg::RunConfig c = cfg::make_profile(name);
    c.seed = 12345;
    c.ppo_lr = 7.25e-4;
    c.policy_trunk = {96, 48};
    std::string text = cfg::emit_config(c);
    cfg::RunConfig back = cfg::parse_config(text);
    CHECK(cfg::emit_config(back) == text);
    CHECK(back.seed == 12345);
    CHECK(back.ppo_lr == 7.25e-4);
    CHECK(back.policy_trunk == std::vector<int>{96, 48});
  }
}

TEST_CASE("parser behavior") {
  SUBCASE("comments, blanks, and spacing are tolerated") {
    cfg::RunConfig c = cfg::parse_config(
        "# a comment\n\n  ppo.n_envs =  64  # trailing\n");
    CHECK(c.ppo_n_envs == 64);
    CHECK(c.profile == "desk");
  }
  SUBCASE("int lists tolerate whitespace around commas") {
    cfg::RunConfig c =
        cfg::parse_config("prior.hidden = 384, 384,\t192\n");
    CHECK(c.prior_hidden == std::vector<int>{384, 384, 192});
  }
  SUBCASE("profile key applies its defaults wherever it appears") {
    cfg::RunConfig c =
        cfg::parse_config("ppo.n_envs = 64\nrun.profile = paper\n");
    CHECK(c.profile == "paper");
    CHECK(c.ppo_n_envs == 64);       // explicit override survives
    CHECK(c.ppo_minibatch == 4096);  // the rest comes from the profile
  }
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(cfg::parse_config("ppo.momentum = 0.9\n"), ConfigError);
  }
  SUBCASE("malformed values are rejected") {
    CHECK_THROWS_AS(cfg::parse_config("ppo.n_envs = many\n"), ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("ppo.lr = fast\n"), ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("sim.noise_enabled = maybe\n"),
                    ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("policy.trunk_hidden = 12,,\n"),
                    ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("run.repr = half\n"), ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("just a line\n"), ConfigError);
    CHECK_THROWS_AS(cfg::parse_config("ppo.n_envs =\n"), ConfigError);
  }
}

TEST_CASE("module projections") {
  cfg::RunConfig c = cfg::make_profile("desk");
  c.seed = 9;
  nav::NavTrainConfig n = cfg::nav_config(c);
  CHECK(n.ppo.lr == c.ppo_lr);
  CHECK(n.ppo.n_envs == 32);
  CHECK(n.ppo.b1 == 5.0);
  CHECK(n.ppo.b2 == 10.0);
  CHECK(n.curriculum.thresholds == std::vector<double>{50.0, 100.0});
  CHECK(n.arch.trunk_hidden == c.policy_trunk);

  prior::PriorConfig p = cfg::prior_config(c);
  CHECK(p.F == c.prior_chunk_frames);
  CHECK(p.h == 4);

  metrics::EvalConfig e = cfg::eval_config(c);
  CHECK(e.n_episodes == 200);
  CHECK(e.seed == 9);

  CHECK(cfg::repr(c) == data::ReprVariant::compact);
}
