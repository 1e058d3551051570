#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nap/codec.hpp"

#include <cstdio>

using namespace nap;
using namespace nap::latent;

TEST_CASE("identity codec: exact pass-through, zero reconstruction error") {
  LatentCodec c = make_identity_codec(data::ReprVariant::compact);
  Vecf feat = Vecf::Zero(13);
  Vecf a(5);
  a << 1.5, -2.0, 0.7, 0.3, -0.4;  // within action bounds
  Vecf z = encode(c, feat, a);
  CHECK(z == a);
  sim::RawAction back = decode(c, feat, z);
  CHECK(back.flat().cast<float>() == a);
}

TEST_CASE("identity codec: z_dim mismatch rejected") {
  LatentCodec c = make_identity_codec(data::ReprVariant::compact);
  c.z_dim = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("decode: dim mismatches are usage errors") {
  LatentCodec c = make_identity_codec(data::ReprVariant::compact);
  Vecf feat = Vecf::Zero(13);
  CHECK_THROWS_AS(decode(c, feat, Vecf::Zero(3)), UsageError);
  Vecf bad_feat = Vecf::Zero(9);
  CHECK_THROWS_AS(encode(c, bad_feat, Vecf::Zero(4)), UsageError);
}

TEST_CASE("train_codec: linear nets with z_dim = action_dim learn identity") {
  auto ds = data::generate_dataset(6, 100, data::ReprVariant::compact, 11);
  CodecConfig cfg;
  cfg.hidden.clear();  // single affine layer each
  cfg.lr = 1e-2;
  cfg.batch = 64;
  auto res = train_codec(ds, sim::RawAction::kDim, 1000, 1, cfg);
  CHECK(res.rmse_per_dim.maxCoeff() < 1e-3);
}

TEST_CASE("train_codec: default z_dim=4 reaches RMSE below 10% of action std") {
  auto ds = data::generate_dataset(12, 150, data::ReprVariant::compact, 13);
  auto res = train_codec(ds, 4, 200, 2);
  // normalized units: per-dim action std is 1
  CHECK(res.rmse_per_dim.maxCoeff() < 0.1);

  SUBCASE("held-out reconstruction is consistent with the training report") {
    auto held = data::generate_dataset(6, 150, data::ReprVariant::compact, 99);
    Vecd rmse = codec_rmse(res.codec, held);
    CHECK(rmse.mean() ==
          doctest::Approx(res.rmse_per_dim.mean()).epsilon(0.10));
  }

  SUBCASE("decode is deterministic bit-for-bit") {
    Vecf feat = ds.episodes[0].col(5).head(13);
    Vecf z = Vecf::Constant(4, 0.3f);
    sim::RawAction a1 = decode(res.codec, feat, z);
    sim::RawAction a2 = decode(res.codec, feat, z);
    CHECK(a1.flat() == a2.flat());
  }

  SUBCASE("decode has bounded finite-difference sensitivity in z") {
    Vecf feat = ds.episodes[0].col(10).head(13);
    Rng rng(5);
    double max_slope = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      Vecf z = rng.normal_vec<float>(4);
      for (int j = 0; j < 4; ++j) {
        Vecf z2 = z;
        z2[j] += 1e-3f;
        Vecd da = decode(res.codec, feat, z2).flat() -
                  decode(res.codec, feat, z).flat();
        max_slope = std::max(max_slope, da.norm() / 1e-3);
      }
    }
    CHECK(max_slope < 100.0);
  }

  SUBCASE("checkpoint round-trip preserves behavior bit-exactly") {
    codec_save(res.codec, "codec_rt.bin");
    LatentCodec loaded = codec_load("codec_rt.bin");
    Vecf feat = ds.episodes[1].col(3).head(13);
    Vecf z = Vecf::Constant(4, -0.7f);
    CHECK(decode(loaded, feat, z).flat() == decode(res.codec, feat, z).flat());
    codec_save(loaded, "codec_rt2.bin");
    CHECK(io::files_identical("codec_rt.bin", "codec_rt2.bin"));
    std::remove("codec_rt.bin");
    std::remove("codec_rt2.bin");
  }
}

TEST_CASE("train_codec: deterministic per seed") {
  auto ds = data::generate_dataset(4, 80, data::ReprVariant::compact, 7);
  auto r1 = train_codec(ds, 4, 5, 42);
  auto r2 = train_codec(ds, 4, 5, 42);
  codec_save(r1.codec, "codec_d1.bin");
  codec_save(r2.codec, "codec_d2.bin");
  CHECK(io::files_identical("codec_d1.bin", "codec_d2.bin"));
  std::remove("codec_d1.bin");
  std::remove("codec_d2.bin");
}

TEST_CASE("codec: identity checkpoint round-trip") {
  LatentCodec c = make_identity_codec(data::ReprVariant::root_only);
  codec_save(c, "codec_id.bin");
  LatentCodec l = codec_load("codec_id.bin");
  CHECK(l.identity_mode);
  CHECK(l.repr == data::ReprVariant::root_only);
  CHECK(l.z_dim == sim::RawAction::kDim);
  std::remove("codec_id.bin");
}

TEST_CASE("codec: wrong magic is rejected with the magic named") {
  auto ds = data::generate_dataset(1, 30, data::ReprVariant::compact, 3);
  data::dataset_save(ds, "not_a_codec.bin");
  try {
    codec_load("not_a_codec.bin");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("NAPZ") != std::string::npos);
  }
  std::remove("not_a_codec.bin");
}
