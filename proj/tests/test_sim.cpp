#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nap/sim.hpp"

using namespace nap;
using namespace nap::sim;

TEST_CASE("step: equilibrium on flat terrain with zero action") {
  TerrainField flat = generate_terrain(TerrainKind::flat, 0, 1);
  SimConfig cfg;
  cfg.noise_enabled = false;
  CharacterState s;
  s.z_body = cfg.body_offset;
  Rng rng(3);
  auto [next, terminated] = step(s, RawAction{}, flat, rng, cfg);
  CHECK_FALSE(terminated);
  CHECK(next.p == s.p);
  CHECK(next.v == s.v);
  CHECK(next.theta == s.theta);
  CHECK(next.omega == s.omega);
  CHECK(next.b == 0.0);
  CHECK(next.q == s.q);
}

TEST_CASE("step: upright equilibrium is unstable (independent pendulum oracle)") {
  TerrainField flat = generate_terrain(TerrainKind::flat, 0, 1);
  SimConfig cfg;
  cfg.noise_enabled = false;
  CharacterState s;
  s.b = 0.01;
  s.z_body = cfg.body_offset;
  Rng rng(3);

  // independent straight-line integration of b'' = (g/L) sin b
  double ob = 0.01, obd = 0.0;
  double prev = s.b;
  for (int i = 0; i < 30; ++i) {
    auto [next, term] = step(s, RawAction{}, flat, rng, cfg);
    s = next;
    CHECK(s.b > prev);  // monotone growth
    prev = s.b;
    obd += cfg.g_over_l * std::sin(ob) * cfg.dt;
    ob += obd * cfg.dt;
    CHECK(s.b == doctest::Approx(ob).epsilon(1e-12));
  }
}

TEST_CASE("step: balance beyond threshold terminates after one step") {
  TerrainField flat = generate_terrain(TerrainKind::flat, 0, 1);
  SimConfig cfg;
  CharacterState s;
  s.b = cfg.b_max + 0.1;
  Rng rng(3);
  auto [next, terminated] = step(s, RawAction{}, flat, rng, cfg);
  CHECK(terminated);
}

TEST_CASE("step: leaving the arena terminates") {
  TerrainField flat = generate_terrain(TerrainKind::flat, 0, 1);
  SimConfig cfg;
  CharacterState s;
  s.p = Vec2d(cfg.arena_half + 1.0, 0.0);
  Rng rng(3);
  auto [next, terminated] = step(s, RawAction{}, flat, rng, cfg);
  CHECK(terminated);
}

TEST_CASE("step: energy non-increasing with zero action and zero noise") {
  TerrainField flat = generate_terrain(TerrainKind::flat, 0, 1);
  SimConfig cfg;
  cfg.noise_enabled = false;
  CharacterState s;
  s.v = Vec2d(2.0, -1.0);
  s.z_body = cfg.body_offset;
  Rng rng(3);
  double ke = 0.5 * s.v.squaredNorm();
  for (int i = 0; i < 100; ++i) {
    auto [next, term] = step(s, RawAction{}, flat, rng, cfg);
    s = next;
    double ke_next = 0.5 * s.v.squaredNorm();
    CHECK(ke_next <= ke + 1e-12);
    ke = ke_next;
  }
}

TEST_CASE("step: determinism over seeds and action sequences") {
  TerrainField terr = generate_terrain(TerrainKind::rough_slope, 3, 42);
  SimConfig cfg;
  auto run = [&] {
    CharacterState s;
    Rng rng(17);
    Rng action_rng(99);
    std::vector<double> trace;
    for (int i = 0; i < 60; ++i) {
      RawAction a;
      a.drive = Vec2d(action_rng.uniform(-3, 3), action_rng.uniform(-3, 3));
      a.balance_torque = action_rng.uniform(-5, 5);
      auto [next, term] = step(s, a, terr, rng, cfg);
      s = next;
      trace.push_back(s.b);
      trace.push_back(s.p.x());
      if (term) break;
    }
    return trace;
  };
  auto t1 = run();
  auto t2 = run();
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == t2[i]);
}

TEST_CASE("heightmap: flat terrain gives uniform -body_offset samples") {
  TerrainField flat = generate_terrain(TerrainKind::flat, 0, 1);
  SimConfig cfg;
  Vecd hm = heightmap_sample(flat, Vec2d(1.0, -2.0), 0.7, cfg.body_offset, cfg);
  CHECK(hm.size() == 1024);
  for (Eigen::Index i = 0; i < hm.size(); ++i)
    CHECK(hm[i] == doctest::Approx(-cfg.body_offset).epsilon(1e-12));
}

TEST_CASE("heightmap: uniform slope along world x varies along the forward axis") {
  double grade = 0.1;
  TerrainField terr = generate_terrain(TerrainKind::flat, 0, 1);
  int n = terr.nodes();
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      terr.grid(ix, iy) = grade * (terr.origin.x() + ix * terr.cell);
  SimConfig cfg;
  Vecd hm = heightmap_sample(terr, Vec2d(0.0, 0.0), 0.0, 0.0, cfg);
  // theta = 0: forward = +x varies over rows; per-cell increment grade * 0.125
  for (int i = 0; i + 1 < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      double diff = hm[(i + 1) * 32 + j] - hm[i * 32 + j];
      CHECK(diff == doctest::Approx(grade * 0.125).epsilon(1e-9));
      if (i == 0)  // constant across the lateral axis
        CHECK(hm[j] == doctest::Approx(hm[0]).epsilon(1e-9));
    }
}

TEST_CASE("heightmap: invariant under simultaneous world translation") {
  TerrainField terr = generate_terrain(TerrainKind::stairs_up, 4, 7);
  SimConfig cfg;
  Vec2d shift(0.5, -0.25);  // multiples of nothing in particular
  // translate terrain by shifting its origin, and the character by the same
  TerrainField shifted = terr;
  shifted.origin += shift;
  Vec2d p(1.3, 2.1);
  Vecd a = heightmap_sample(terr, p, 0.9, 1.0, cfg);
  Vecd b = heightmap_sample(shifted, p + shift, 0.9, 1.0, cfg);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("terrain: flat is all zeros at any level") {
  for (int level : {0, 2, 4}) {
    TerrainField t = generate_terrain(TerrainKind::flat, level, 5);
    CHECK(t.grid.isZero(0.0));
  }
}

TEST_CASE("terrain: level 0 of every kind is within 2 cm of flat") {
  for (TerrainKind k : {TerrainKind::smooth_slope, TerrainKind::rough_slope,
                        TerrainKind::stairs_up, TerrainKind::stairs_down,
                        TerrainKind::discrete_blocks}) {
    TerrainField t = generate_terrain(k, 0, 11);
    CHECK(t.grid.cwiseAbs().maxCoeff() <= 0.02);
  }
}

TEST_CASE("terrain: stairs difficulty scales monotonically with level") {
  auto max_adjacent_diff = [](const TerrainField& t) {
    double m = 0.0;
    for (int ix = 0; ix + 1 < t.nodes(); ++ix)
      for (int iy = 0; iy < t.nodes(); ++iy)
        m = std::max(m, std::abs(t.grid(ix + 1, iy) - t.grid(ix, iy)));
    return m;
  };
  TerrainField lo = generate_terrain(TerrainKind::stairs_up, 0, 9);
  TerrainField mid = generate_terrain(TerrainKind::stairs_up, 2, 9);
  TerrainField hi = generate_terrain(TerrainKind::stairs_up, 4, 9);
  CHECK(max_adjacent_diff(hi) > max_adjacent_diff(mid));
  CHECK(max_adjacent_diff(mid) > max_adjacent_diff(lo));
}

TEST_CASE("terrain: deterministic per seed") {
  TerrainField a = generate_terrain(TerrainKind::discrete_blocks, 3, 123);
  TerrainField b = generate_terrain(TerrainKind::discrete_blocks, 3, 123);
  CHECK(a.grid == b.grid);
  TerrainField c = generate_terrain(TerrainKind::discrete_blocks, 3, 124);
  CHECK(a.grid != c.grid);
}

TEST_CASE("terrain: random kind frequencies match the configured proportions") {
  std::array<int, 5> counts{};
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    TerrainField t = generate_terrain(TerrainKind::random, 1, 1000 + i);
    switch (t.kind) {
      case TerrainKind::smooth_slope: counts[0]++; break;
      case TerrainKind::rough_slope: counts[1]++; break;
      case TerrainKind::stairs_up: counts[2]++; break;
      case TerrainKind::stairs_down: counts[3]++; break;
      case TerrainKind::discrete_blocks: counts[4]++; break;
      default: FAIL("unexpected kind");
    }
  }
  for (int i = 0; i < 5; ++i) {
    double freq = static_cast<double>(counts[i]) / trials;
    CHECK(std::abs(freq - sim::kTerrainProportions[i]) <= 0.03);
  }
}

TEST_CASE("terrain: unknown level is a configuration error") {
  CHECK_THROWS_AS(generate_terrain(TerrainKind::flat, 7, 1), ConfigError);
}

TEST_CASE("spawn: deterministic and terrain-supported") {
  TerrainField terr = generate_terrain(TerrainKind::smooth_slope, 2, 31);
  SimConfig cfg;
  Rng r1(55), r2(55);
  CharacterState a = spawn(terr, r1, cfg);
  CharacterState b = spawn(terr, r2, cfg);
  CHECK(a.p == b.p);
  CHECK(a.theta == b.theta);
  CHECK(a.b == 0.0);
  CHECK(a.z_body ==
        doctest::Approx(terr.height(a.p.x(), a.p.y()) + cfg.body_offset));
}

TEST_CASE("hand position: straight arm reaches l1+l2 forward at shoulder height") {
  SimConfig cfg;
  CharacterState s;
  s.theta = M_PI / 2;  // facing +y
  s.z_body = cfg.body_offset;
  Vec3d hand = hand_position(s, cfg);
  CHECK(hand.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hand.y() == doctest::Approx(cfg.arm_l1 + cfg.arm_l2));
  CHECK(hand.z() == doctest::Approx(cfg.body_offset + cfg.shoulder_height));
}
