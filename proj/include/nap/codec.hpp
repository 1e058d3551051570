#pragma once

#include "nap/dataset.hpp"
#include "nap/nn.hpp"

#include <string>
#include <utility>
#include <vector>

namespace nap::latent {

// Encoder/decoder pair over a compact latent action space. Both nets operate
// in normalized units (dataset statistics); raw actions are denormalized and
// clamped only at the decode boundary. In identity mode both directions are
// exact pass-throughs of the raw action.
struct LatentCodec {
  data::ReprVariant repr = data::ReprVariant::compact;
  int z_dim = 4;
  bool identity_mode = false;
  nn::DenseNet<float> encoder;  // (feat_n ‖ action_n) -> z
  nn::DenseNet<float> decoder;  // (feat_n ‖ z) -> action_n
  Vecf feat_mean, feat_std;     // length repr_dim
  Vecf act_mean, act_std;       // length action_dim

  int feature_dim() const { return static_cast<int>(feat_mean.size()); }
  int action_dim() const { return static_cast<int>(act_mean.size()); }

  void validate() const {
    if (z_dim < 1) throw ConfigError("codec: z_dim must be >= 1");
    if (identity_mode) {
      if (z_dim != action_dim() && action_dim() != 0)
        throw ConfigError("codec: identity mode requires z_dim == action_dim");
      return;
    }
    encoder.validate();
    decoder.validate();
    if (encoder.input_dim() != feature_dim() + action_dim() ||
        encoder.output_dim() != z_dim)
      throw ConfigError("codec: encoder shape mismatch");
    if (decoder.input_dim() != feature_dim() + z_dim ||
        decoder.output_dim() != action_dim())
      throw ConfigError("codec: decoder shape mismatch");
  }
};

inline LatentCodec make_identity_codec(data::ReprVariant repr) {
  LatentCodec c;
  c.repr = repr;
  c.identity_mode = true;
  c.z_dim = sim::RawAction::kDim;
  c.feat_mean = Vecf::Zero(data::repr_dim(repr));
  c.feat_std = Vecf::Ones(data::repr_dim(repr));
  c.act_mean = Vecf::Zero(sim::RawAction::kDim);
  c.act_std = Vecf::Ones(sim::RawAction::kDim);
  return c;
}

inline Vecf normalize_features(const LatentCodec& c, const Vecf& feat) {
  if (feat.size() != c.feature_dim())
    throw UsageError("codec: feature dim mismatch");
  return (feat - c.feat_mean).cwiseQuotient(c.feat_std);
}

// Raw canonical features + raw action -> latent z.
inline Vecf encode(const LatentCodec& c, const Vecf& feat, const Vecf& action) {
  if (action.size() != c.action_dim())
    throw UsageError("codec: action dim mismatch");
  if (c.identity_mode) return action;
  Matf in(c.encoder.input_dim(), 1);
  in.col(0).head(c.feature_dim()) = normalize_features(c, feat);
  in.col(0).tail(c.action_dim()) =
      (action - c.act_mean).cwiseQuotient(c.act_std);
  return nn::forward(c.encoder, in).col(0);
}

// Raw canonical features + latent z -> clamped raw action.
inline sim::RawAction decode(const LatentCodec& c, const Vecf& feat,
                             const Vecf& z,
                             const sim::SimConfig& sim_cfg = sim::SimConfig{}) {
  if (z.size() != c.z_dim) throw UsageError("codec: z dim mismatch");
  Vecd raw;
  if (c.identity_mode) {
    raw = z.cast<double>();
  } else {
    Matf in(c.decoder.input_dim(), 1);
    in.col(0).head(c.feature_dim()) = normalize_features(c, feat);
    in.col(0).tail(c.z_dim) = z;
    Vecf out_n = nn::forward(c.decoder, in).col(0);
    raw = (out_n.cwiseProduct(c.act_std) + c.act_mean).cast<double>();
  }
  return clamp_action(sim::RawAction::from_flat(raw), sim_cfg);
}

struct CodecConfig {
  std::vector<int> hidden = {64, 64};  // empty = single affine layer
  double lr = 1e-3;
  double lr_final_frac = 0.01;  // linear decay target as a fraction of lr
  int batch = 256;
};

struct CodecTrainResult {
  LatentCodec codec;
  std::vector<double> loss_curve;  // mean squared error per epoch
  Vecd rmse_per_dim;               // normalized units, final epoch's data
};

namespace detail {

// All frames of the dataset as normalized feature/action column blocks.
inline std::pair<Matf, Matf> normalized_columns(
    const data::TrajectoryDataset& d) {
  int fd = d.feature_dim, ad = d.action_dim;
  Matf feats(fd, d.total_frames()), acts(ad, d.total_frames());
  Eigen::Index col = 0;
  for (const Matf& e : d.episodes)
    for (Eigen::Index c = 0; c < e.cols(); ++c, ++col) {
      feats.col(col) = (e.col(c).head(fd) - d.mean.head(fd))
                           .cwiseQuotient(d.stddev.head(fd));
      acts.col(col) = (e.col(c).tail(ad) - d.mean.tail(ad))
                          .cwiseQuotient(d.stddev.tail(ad));
    }
  return {std::move(feats), std::move(acts)};
}

}  // namespace detail

// Joint reconstruction training: minimize mean ||a_n - D(s_n, E(s_n, a_n))||^2
// with a shared optimizer over both nets. Deterministic per seed.
inline CodecTrainResult train_codec(const data::TrajectoryDataset& d, int z_dim,
                                    int epochs, std::uint64_t seed,
                                    const CodecConfig& cfg = {}) {
  d.validate();
  if (epochs < 1) throw UsageError("train_codec: epochs >= 1");
  int fd = d.feature_dim, ad = d.action_dim;

  Rng rng(seed);
  Rng init_rng = rng.derive(0);
  CodecTrainResult res;
  LatentCodec& c = res.codec;
  c.repr = d.repr;
  c.z_dim = z_dim;
  c.feat_mean = d.mean.head(fd);
  c.feat_std = d.stddev.head(fd);
  c.act_mean = d.mean.tail(ad);
  c.act_std = d.stddev.tail(ad);

  std::vector<int> enc_dims{fd + ad};
  std::vector<int> dec_dims{fd + z_dim};
  for (int h : cfg.hidden) enc_dims.push_back(h);
  for (int h : cfg.hidden) dec_dims.push_back(h);
  enc_dims.push_back(z_dim);
  dec_dims.push_back(ad);
  c.encoder = nn::make_mlp<float>(enc_dims, false, init_rng);
  c.decoder = nn::make_mlp<float>(dec_dims, false, init_rng);

  auto [feats, acts] = detail::normalized_columns(d);
  const Eigen::Index n = feats.cols();
  if (n < 2) throw TrainingError("train_codec: dataset too small");

  nn::Adam<float> opt_e(c.encoder, cfg.lr), opt_d(c.decoder, cfg.lr);
  Rng shuffle_rng = rng.derive(1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  Vecd sq_err_sum = Vecd::Zero(ad);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double frac = epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 0.0;
    double lr = cfg.lr * (1.0 - (1.0 - cfg.lr_final_frac) * frac);
    opt_e.set_lr(lr);
    opt_d.set_lr(lr);
    // Fisher-Yates with the owned stream
    for (Eigen::Index i = n - 1; i > 0; --i) {
      auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, i));
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    double loss_sum = 0.0;
    sq_err_sum.setZero();
    for (Eigen::Index start = 0; start < n; start += cfg.batch) {
      Eigen::Index bs = std::min<Eigen::Index>(cfg.batch, n - start);
      Matf enc_in(fd + ad, bs), feat_b(fd, bs), act_b(ad, bs);
      for (Eigen::Index i = 0; i < bs; ++i) {
        Eigen::Index src = order[static_cast<std::size_t>(start + i)];
        feat_b.col(i) = feats.col(src);
        act_b.col(i) = acts.col(src);
        enc_in.col(i).head(fd) = feats.col(src);
        enc_in.col(i).tail(ad) = acts.col(src);
      }
      nn::ForwardCache<float> enc_cache, dec_cache;
      Matf z = nn::forward(c.encoder, enc_in, &enc_cache);
      Matf dec_in(fd + z_dim, bs);
      dec_in.topRows(fd) = feat_b;
      dec_in.bottomRows(z_dim) = z;
      Matf recon = nn::forward(c.decoder, dec_in, &dec_cache);

      Matf err = recon - act_b;
      loss_sum += static_cast<double>(err.cast<double>().squaredNorm());
      sq_err_sum += err.cast<double>().cwiseProduct(err.cast<double>())
                        .rowwise().sum();

      // d/d recon of mean squared error over the batch
      Matf up = err * static_cast<float>(2.0 / (static_cast<double>(bs) * ad));
      auto dec_grads = nn::zero_grads(c.decoder);
      Matf d_dec_in = nn::backward(c.decoder, dec_cache, up, dec_grads);
      auto enc_grads = nn::zero_grads(c.encoder);
      Matf dz = d_dec_in.bottomRows(z_dim);
      nn::backward(c.encoder, enc_cache, dz, enc_grads);
      opt_d.update(c.decoder, dec_grads);
      opt_e.update(c.encoder, enc_grads);
    }
    double mse = loss_sum / (static_cast<double>(n) * ad);
    if (!std::isfinite(mse))
      throw TrainingError("train_codec: loss diverged (non-finite)");
    res.loss_curve.push_back(mse);
  }
  res.rmse_per_dim = (sq_err_sum / static_cast<double>(n)).cwiseSqrt();
  c.validate();
  return res;
}

// Held-out reconstruction error, normalized units per action dim.
inline Vecd codec_rmse(const LatentCodec& c, const data::TrajectoryDataset& d) {
  if (c.identity_mode) return Vecd::Zero(d.action_dim);
  auto [feats, acts] = detail::normalized_columns(d);
  Eigen::Index n = feats.cols();
  Matf enc_in(d.feature_dim + d.action_dim, n);
  enc_in.topRows(d.feature_dim) = feats;
  enc_in.bottomRows(d.action_dim) = acts;
  Matf z = nn::forward(c.encoder, enc_in);
  Matf dec_in(d.feature_dim + c.z_dim, n);
  dec_in.topRows(d.feature_dim) = feats;
  dec_in.bottomRows(c.z_dim) = z;
  Matf recon = nn::forward(c.decoder, dec_in);
  Matd err = (recon - acts).cast<double>();
  return (err.cwiseProduct(err).rowwise().sum() / static_cast<double>(n))
      .cwiseSqrt();
}

// Codec checkpoint: NAPZ header extension around core net blocks.
inline void codec_save(const LatentCodec& c, const std::string& path) {
  c.validate();
  io::ByteWriter w;
  w.magic("NAPZ");
  w.u32(io::kFormatVersion);
  w.u8(static_cast<std::uint8_t>(c.repr));
  w.u32(static_cast<std::uint32_t>(c.z_dim));
  w.u8(c.identity_mode ? 1 : 0);
  if (!c.identity_mode) {
    io::serialize_net(w, c.encoder);
    io::serialize_net(w, c.decoder);
    w.f32_span(c.feat_mean.data(), static_cast<std::size_t>(c.feat_mean.size()));
    w.f32_span(c.feat_std.data(), static_cast<std::size_t>(c.feat_std.size()));
    w.f32_span(c.act_mean.data(), static_cast<std::size_t>(c.act_mean.size()));
    w.f32_span(c.act_std.data(), static_cast<std::size_t>(c.act_std.size()));
  }
  w.write_file(path);
}

inline LatentCodec codec_load(const std::string& path) {
  io::ByteReader r = io::ByteReader::from_file(path);
  r.check_trailer();
  r.expect_magic("NAPZ");
  std::uint32_t version = r.u32();
  if (version != io::kFormatVersion)
    throw IoError(path + ": unsupported codec version " +
                  std::to_string(version));
  std::uint8_t tag = r.u8();
  if (tag > 2) throw IoError(path + ": bad repr tag");
  LatentCodec c;
  c.repr = static_cast<data::ReprVariant>(tag);
  c.z_dim = static_cast<int>(r.u32());
  c.identity_mode = r.u8() != 0;
  if (c.identity_mode) {
    c = make_identity_codec(c.repr);
  } else {
    c.encoder = io::parse_net<float>(r);
    c.decoder = io::parse_net<float>(r);
    int fd = data::repr_dim(c.repr);
    int ad = c.decoder.output_dim();
    c.feat_mean.resize(fd);
    c.feat_std.resize(fd);
    c.act_mean.resize(ad);
    c.act_std.resize(ad);
    r.f32_span(c.feat_mean.data(), static_cast<std::size_t>(fd));
    r.f32_span(c.feat_std.data(), static_cast<std::size_t>(fd));
    r.f32_span(c.act_mean.data(), static_cast<std::size_t>(ad));
    r.f32_span(c.act_std.data(), static_cast<std::size_t>(ad));
  }
  r.finish();
  c.validate();
  return c;
}

}  // namespace nap::latent
