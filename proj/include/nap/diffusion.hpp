#pragma once

#include "nap/codec.hpp"

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace nap::prior {

// Linear-beta diffusion schedule with a stride-derived DDIM step subset.
struct NoiseSchedule {
  int T_train = 50;
  double beta_lo = 1e-4, beta_hi = 2e-2;
  Vecd betas;
  Vecd alphas_bar;
  std::vector<int> ddim_indices;  // descending, largest first

  static NoiseSchedule make(int T_train = 50, int ddim_steps = 5,
                            double beta_lo = 1e-4, double beta_hi = 2e-2) {
    if (T_train < 1) throw ConfigError("schedule: T_train >= 1");
    if (ddim_steps < 1 || ddim_steps > T_train)
      throw ConfigError("schedule: ddim_steps in [1, T_train]");
    NoiseSchedule s;
    s.T_train = T_train;
    s.beta_lo = beta_lo;
    s.beta_hi = beta_hi;
    s.betas.resize(T_train);
    for (int t = 0; t < T_train; ++t)
      s.betas[t] = T_train == 1
                       ? beta_lo
                       : beta_lo + (beta_hi - beta_lo) * t / (T_train - 1);
    s.alphas_bar.resize(T_train);
    double prod = 1.0;
    for (int t = 0; t < T_train; ++t) {
      prod *= 1.0 - s.betas[t];
      s.alphas_bar[t] = prod;
    }
    int stride = T_train / ddim_steps;
    for (int i = 0; i < ddim_steps; ++i)
      s.ddim_indices.push_back(T_train - 1 - i * stride);
    s.validate();
    return s;
  }

  void validate() const {
    if (static_cast<int>(betas.size()) != T_train ||
        static_cast<int>(alphas_bar.size()) != T_train)
      throw ConfigError("schedule: array lengths do not match T_train");
    for (int t = 0; t < T_train; ++t) {
      if (betas[t] <= 0 || betas[t] >= 1)
        throw ConfigError("schedule: betas must lie in (0,1)");
      if (t > 0 && betas[t] < betas[t - 1])
        throw ConfigError("schedule: betas must be non-decreasing");
      if (alphas_bar[t] <= 0 || alphas_bar[t] >= 1)
        throw ConfigError("schedule: alphas_bar must lie in (0,1)");
      if (t > 0 && alphas_bar[t] >= alphas_bar[t - 1])
        throw ConfigError("schedule: alphas_bar must be strictly decreasing");
    }
    if (ddim_indices.empty() || ddim_indices.front() != T_train - 1)
      throw ConfigError("schedule: ddim subset must start at T_train-1");
    for (std::size_t i = 0; i < ddim_indices.size(); ++i) {
      if (ddim_indices[i] < 0 || ddim_indices[i] >= T_train)
        throw ConfigError("schedule: ddim index out of range");
      if (i > 0 && ddim_indices[i] >= ddim_indices[i - 1])
        throw ConfigError("schedule: ddim indices must be strictly descending");
    }
  }
};

// History-conditioned denoiser over flattened chunks. Operates entirely in
// normalized units; feature/z statistics live here so the module boundary
// (sample_chunk) can denormalize.
struct DenoiserModel {
  nn::DenseNet<float> net;
  NoiseSchedule schedule;
  data::ReprVariant repr = data::ReprVariant::compact;
  int F = 8;   // chunk frames
  int h = 4;   // history frames
  int z_dim = 4;
  int step_emb_dim = 16;
  Vecf feat_mean, feat_std;  // repr_dim
  Vecf z_mean, z_std;        // z_dim

  int feature_dim() const { return static_cast<int>(feat_mean.size()); }
  int d_x() const { return feature_dim() + z_dim; }
  int chunk_len() const { return F * d_x(); }
  int hist_len() const { return h * d_x(); }

  void validate() const {
    schedule.validate();
    net.validate();
    if (F < 1 || h < 1 || z_dim < 1 || step_emb_dim < 2 ||
        step_emb_dim % 2 != 0)
      throw ConfigError("denoiser: bad shape parameters");
    if (feature_dim() != data::repr_dim(repr))
      throw ConfigError("denoiser: feature stats do not match repr");
    if (net.input_dim() != chunk_len() + hist_len() + step_emb_dim)
      throw ConfigError("denoiser: net input dim mismatch");
    if (net.output_dim() != chunk_len())
      throw ConfigError("denoiser: net output dim mismatch");
  }
};

// Sinusoidal embedding of the integer diffusion step.
inline Vecf step_embedding(int t, int dim) {
  Vecf e(dim);
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    e[2 * i] = static_cast<float>(std::sin(t * freq));
    e[2 * i + 1] = static_cast<float>(std::cos(t * freq));
  }
  return e;
}

// Batched forward; columns are independent samples. `t` may vary per column.
inline Matf denoiser_forward(const DenoiserModel& m, const Matf& chunk,
                             const Matf& hist, const std::vector<int>& t,
                             nn::ForwardCache<float>* cache = nullptr) {
  if (chunk.rows() != m.chunk_len() || hist.rows() != m.hist_len() ||
      chunk.cols() != hist.cols() ||
      static_cast<Eigen::Index>(t.size()) != chunk.cols())
    throw UsageError("denoiser_forward: shape mismatch");
  Matf in(m.net.input_dim(), chunk.cols());
  in.topRows(m.chunk_len()) = chunk;
  in.middleRows(m.chunk_len(), m.hist_len()) = hist;
  for (Eigen::Index c = 0; c < chunk.cols(); ++c)
    in.col(c).tail(m.step_emb_dim) = step_embedding(t[static_cast<std::size_t>(c)], m.step_emb_dim);
  return nn::forward(m.net, in, cache);
}

inline Matf denoiser_forward(const DenoiserModel& m, const Matf& chunk,
                             const Matf& hist, int t,
                             nn::ForwardCache<float>* cache = nullptr) {
  return denoiser_forward(m, chunk, hist,
                          std::vector<int>(static_cast<std::size_t>(chunk.cols()), t),
                          cache);
}

// Ring of raw executed (frame, z) pairs. Conditioning features are
// canonicalized against the oldest buffered frame and normalized; missing
// slots are padded with the dataset mean (zero in normalized units).
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity) : cap_(capacity) {
    if (capacity < 1) throw ConfigError("history: capacity >= 1");
  }

  void push(const data::Frame& frame, const Vecf& z) {
    entries_.emplace_back(frame, z);
    if (static_cast<int>(entries_.size()) > cap_) entries_.pop_front();
  }

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return cap_; }
  void clear() { entries_.clear(); }

  // The canonical frame every conditioning feature (and the sampled chunk's
  // predicted features) is expressed in. Identity when the buffer is empty.
  data::Frame anchor() const {
    return entries_.empty() ? data::Frame{} : entries_.front().first;
  }

  // Flattened normalized conditioning, oldest first, length h*(fd+z_dim).
  Vecf features(const DenoiserModel& m,
                const sim::SimConfig& cfg = sim::SimConfig{}) const {
    if (m.h != cap_) throw UsageError("history: capacity != model h");
    int fd = m.feature_dim(), dx = m.d_x();
    Vecf out = Vecf::Zero(m.hist_len());  // zero = normalized dataset mean
    int pad = cap_ - size();
    data::Frame a = anchor();
    for (int i = 0; i < size(); ++i) {
      const auto& [frame, z] = entries_[static_cast<std::size_t>(i)];
      if (z.size() != m.z_dim) throw UsageError("history: z dim mismatch");
      Vecf feat =
          data::canonicalize_frame(frame, a, m.repr, cfg).cast<float>();
      out.segment((pad + i) * dx, fd) =
          (feat - m.feat_mean).cwiseQuotient(m.feat_std);
      out.segment((pad + i) * dx + fd, m.z_dim) =
          (z - m.z_mean).cwiseQuotient(m.z_std);
    }
    return out;
  }

 private:
  int cap_;
  std::deque<std::pair<data::Frame, Vecf>> entries_;
};

// ---------------------------------------------------------------------------
// DDIM (eta = 0)

using DenoiseFn = std::function<Matf(const Matf& x, int t)>;

// Deterministic DDIM recursion over the schedule's step subset; returns the
// x0 estimate produced at the smallest retained step.
inline Matf ddim_denoise_fn(const NoiseSchedule& s, Matf x,
                            const DenoiseFn& fn) {
  s.validate();
  Matf x0;
  for (std::size_t i = 0; i < s.ddim_indices.size(); ++i) {
    int t = s.ddim_indices[i];
    double ab = s.alphas_bar[t];
    Matf eps = fn(x, t);
    x0 = (x - static_cast<float>(std::sqrt(1.0 - ab)) * eps) /
         static_cast<float>(std::sqrt(ab));
    if (i + 1 < s.ddim_indices.size()) {
      double ab_next = s.alphas_bar[s.ddim_indices[i + 1]];
      x = static_cast<float>(std::sqrt(ab_next)) * x0 +
          static_cast<float>(std::sqrt(1.0 - ab_next)) * eps;
    }
  }
  return x0;
}

inline Matf ddim_denoise(const DenoiserModel& m, const Matf& init_noise,
                         const Matf& hist) {
  if (init_noise.rows() != m.chunk_len())
    throw UsageError("ddim_denoise: init noise must be F x d_x");
  if (hist.rows() != m.hist_len() || hist.cols() != init_noise.cols())
    throw UsageError("ddim_denoise: history shape mismatch");
  return ddim_denoise_fn(m.schedule, init_noise, [&](const Matf& x, int t) {
    return denoiser_forward(m, x, hist, t);
  });
}

// ---------------------------------------------------------------------------
// Chunk sampling

struct ChunkSample {
  Matf z;      // z_dim x k, raw latent units
  Matf feats;  // repr_dim x k, canonical units (anchor frame of the history)
};

inline ChunkSample split_chunk(const DenoiserModel& m, const Vecf& x0, int k) {
  int fd = m.feature_dim(), dx = m.d_x();
  ChunkSample out;
  out.z.resize(m.z_dim, k);
  out.feats.resize(fd, k);
  for (int f = 0; f < k; ++f) {
    Vecf frame = x0.segment(f * dx, dx);
    out.feats.col(f) =
        frame.head(fd).cwiseProduct(m.feat_std) + m.feat_mean;
    out.z.col(f) = frame.tail(m.z_dim).cwiseProduct(m.z_std) + m.z_mean;
  }
  return out;
}

// Builds the F-frame init noise by repeating omega, denoises the full chunk,
// and returns the first k frames. With action_only_noise the state-feature
// rows of each frame are drawn fresh from the rng instead of steered.
inline Matf build_init_noise(const DenoiserModel& m, const Vecf& omega,
                             bool action_only_noise = false,
                             Rng* rng = nullptr) {
  if (omega.size() != m.d_x())
    throw UsageError("sample_chunk: omega length must be d_x");
  if (action_only_noise && rng == nullptr)
    throw UsageError("sample_chunk: action_only_noise needs an rng");
  int fd = m.feature_dim(), dx = m.d_x();
  Matf x(m.chunk_len(), 1);
  for (int f = 0; f < m.F; ++f) {
    x.col(0).segment(f * dx, dx) = omega;
    if (action_only_noise)
      x.col(0).segment(f * dx, fd) = rng->normal_vec<float>(fd);
  }
  return x;
}

inline ChunkSample sample_chunk(const DenoiserModel& m, const Vecf& omega,
                                int k, const HistoryBuffer& hist,
                                const sim::SimConfig& cfg = sim::SimConfig{},
                                bool action_only_noise = false,
                                Rng* rng = nullptr) {
  if (k < 1 || k > m.F)
    throw ConfigError("sample_chunk: k must lie in [1, F]");
  Matf x = build_init_noise(m, omega, action_only_noise, rng);
  Matf hist_cols(m.hist_len(), 1);
  hist_cols.col(0) = hist.features(m, cfg);
  Matf x0 = ddim_denoise(m, x, hist_cols);
  return split_chunk(m, x0.col(0), k);
}

// ---------------------------------------------------------------------------
// Loss-guided baseline sampling

struct NfeCounter {
  long forward = 0;
  long guidance = 0;
};

// Differentiable task objective over the denormalized predicted features of
// the full F-frame chunk (repr_dim x F); gradient has the same shape.
struct GuidanceObjective {
  std::function<double(const Matf&)> loss;
  std::function<Matf(const Matf&)> grad;
};

struct GuidedResult {
  ChunkSample chunk;
  bool guidance_failed = false;  // non-finite gradient; fell back to unguided
};

// At each DDIM step the current x0 estimate takes G descent updates on the
// task loss; every update re-projects through the denoiser (re-noise with the
// current eps, re-evaluate) so the sample stays on the model manifold. Each
// inner iteration therefore costs one denoiser evaluation, counted as one
// guidance-gradient evaluation.
inline GuidedResult guided_sample_chunk(const DenoiserModel& m, int k,
                                        const HistoryBuffer& hist,
                                        const GuidanceObjective& obj,
                                        int guide_steps, double guide_rate,
                                        Rng& rng, NfeCounter& nfe,
                                        const sim::SimConfig& cfg = sim::SimConfig{}) {
  if (k < 1 || k > m.F)
    throw ConfigError("guided_sample_chunk: k must lie in [1, F]");
  if (guide_steps < 0)
    throw ConfigError("guided_sample_chunk: guide_steps >= 0");
  const NoiseSchedule& s = m.schedule;
  int fd = m.feature_dim(), dx = m.d_x();

  Matf hist_cols(m.hist_len(), 1);
  hist_cols.col(0) = hist.features(m, cfg);
  Matf x = Matf::Zero(m.chunk_len(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    x(i, 0) = static_cast<float>(rng.normal());

  GuidedResult res;
  Matf x0;
  for (std::size_t i = 0; i < s.ddim_indices.size(); ++i) {
    int t = s.ddim_indices[i];
    double ab = s.alphas_bar[t];
    float sab = static_cast<float>(std::sqrt(ab));
    float somb = static_cast<float>(std::sqrt(1.0 - ab));
    Matf eps = denoiser_forward(m, x, hist_cols, t);
    ++nfe.forward;
    x0 = (x - somb * eps) / sab;

    for (int g = 0; g < guide_steps && !res.guidance_failed; ++g) {
      // gradient of the loss wrt normalized x0: scale by feat_std (chain
      // rule through denormalization); z rows are not part of the objective
      Matf feats(fd, m.F);
      for (int f = 0; f < m.F; ++f)
        feats.col(f) = x0.col(0)
                           .segment(f * dx, fd)
                           .cwiseProduct(m.feat_std) +
                       m.feat_mean;
      Matf gfeat = obj.grad(feats);
      if (gfeat.rows() != fd || gfeat.cols() != m.F)
        throw UsageError("guided_sample_chunk: gradient shape mismatch");
      if (!gfeat.allFinite()) {
        res.guidance_failed = true;
        break;
      }
      for (int f = 0; f < m.F; ++f)
        x0.col(0).segment(f * dx, fd) -=
            static_cast<float>(guide_rate) *
            gfeat.col(f).cwiseProduct(m.feat_std);
      // manifold re-projection: re-noise with the current eps, re-evaluate
      x = sab * x0 + somb * eps;
      eps = denoiser_forward(m, x, hist_cols, t);
      ++nfe.guidance;
      x0 = (x - somb * eps) / sab;
    }

    if (i + 1 < s.ddim_indices.size()) {
      double ab_next = s.alphas_bar[s.ddim_indices[i + 1]];
      x = static_cast<float>(std::sqrt(ab_next)) * x0 +
          static_cast<float>(std::sqrt(1.0 - ab_next)) * eps;
    }
  }
  res.chunk = split_chunk(m, x0.col(0), k);
  return res;
}

// ---------------------------------------------------------------------------
// Training

struct PriorConfig {
  int F = 8;
  int h = 4;
  std::vector<int> hidden = {256, 256, 128};
  bool norm_middle = true;
  int step_emb_dim = 16;
  double lr = 1e-3;
  double lr_final_frac = 0.05;
  int batch = 256;
};

struct PriorTrainResult {
  DenoiserModel model;
  std::vector<double> loss_curve;  // per-epoch mean of ||eps - eps_hat||^2 / (F d_x)
};

namespace detail {

// Normalized per-episode (feature, z) columns plus z statistics.
struct EncodedEpisodes {
  std::vector<Matf> feats;  // fd x len, raw canonical units
  std::vector<Matf> zs;     // z_dim x len, raw latent units
  Vecf z_mean, z_std;
};

inline EncodedEpisodes encode_episodes(const data::TrajectoryDataset& d,
                                       const latent::LatentCodec& codec) {
  if (codec.repr != d.repr)
    throw ConfigError("train_prior: codec and dataset repr differ");
  EncodedEpisodes out;
  int fd = d.feature_dim, ad = d.action_dim;
  Vecd zsum = Vecd::Zero(codec.z_dim), zsq = Vecd::Zero(codec.z_dim);
  std::size_t n = 0;
  for (const Matf& e : d.episodes) {
    Matf feats = e.topRows(fd);
    Matf zs(codec.z_dim, e.cols());
    if (codec.identity_mode) {
      zs = e.bottomRows(ad);
    } else {
      Matf enc_in(fd + ad, e.cols());
      for (Eigen::Index c = 0; c < e.cols(); ++c) {
        enc_in.col(c).head(fd) = (e.col(c).head(fd) - codec.feat_mean)
                                     .cwiseQuotient(codec.feat_std);
        enc_in.col(c).tail(ad) = (e.col(c).tail(ad) - codec.act_mean)
                                     .cwiseQuotient(codec.act_std);
      }
      zs = nn::forward(codec.encoder, enc_in);
    }
    for (Eigen::Index c = 0; c < zs.cols(); ++c) {
      Vecd z = zs.col(c).cast<double>();
      zsum += z;
      zsq += z.cwiseProduct(z);
      ++n;
    }
    out.feats.push_back(std::move(feats));
    out.zs.push_back(std::move(zs));
  }
  if (n < 2) throw TrainingError("train_prior: dataset too small");
  Vecd mean = zsum / static_cast<double>(n);
  Vecd var =
      (zsq / static_cast<double>(n) - mean.cwiseProduct(mean)).cwiseMax(1e-10);
  out.z_mean = mean.cast<float>();
  out.z_std = var.cwiseSqrt().cast<float>();
  return out;
}

}  // namespace detail

// Standard denoising objective: minimize ||eps - eps_hat(sqrt(ab) x0 +
// sqrt(1-ab) eps, history, t)||^2 over re-anchored dataset windows.
inline PriorTrainResult train_prior(const data::TrajectoryDataset& d,
                                    const latent::LatentCodec& codec,
                                    const NoiseSchedule& schedule, int epochs,
                                    std::uint64_t seed,
                                    const PriorConfig& cfg = {}) {
  d.validate();
  codec.validate();
  schedule.validate();
  if (epochs < 1) throw UsageError("train_prior: epochs >= 1");
  int fd = d.feature_dim;
  int window = cfg.h + cfg.F;
  for (const Matf& e : d.episodes)
    if (e.cols() < window)
      throw TrainingError("train_prior: episode shorter than h+F window");

  auto enc = detail::encode_episodes(d, codec);
  int zd = codec.z_dim, dx = fd + zd;

  PriorTrainResult res;
  DenoiserModel& m = res.model;
  m.schedule = schedule;
  m.repr = d.repr;
  m.F = cfg.F;
  m.h = cfg.h;
  m.z_dim = zd;
  m.step_emb_dim = cfg.step_emb_dim;
  m.feat_mean = d.mean.head(fd);
  m.feat_std = d.stddev.head(fd);
  m.z_mean = enc.z_mean;
  m.z_std = enc.z_std;

  Rng rng(seed);
  Rng init_rng = rng.derive(0);
  std::vector<int> dims{m.chunk_len() + m.hist_len() + cfg.step_emb_dim};
  for (int hdim : cfg.hidden) dims.push_back(hdim);
  dims.push_back(m.chunk_len());
  m.net = nn::make_mlp<float>(dims, cfg.norm_middle, init_rng);
  m.validate();

  nn::Adam<float> opt(m.net, cfg.lr);
  Rng sample_rng = rng.derive(1);
  int n_eps = static_cast<int>(d.episodes.size());
  long steps_per_epoch = std::max<long>(
      1, static_cast<long>(d.total_frames()) / cfg.batch);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    double frac = epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 0.0;
    opt.set_lr(cfg.lr * (1.0 - (1.0 - cfg.lr_final_frac) * frac));
    double loss_sum = 0.0;
    long loss_n = 0;
    for (long step = 0; step < steps_per_epoch; ++step) {
      int B = cfg.batch;
      Matf x0(m.chunk_len(), B), hist(m.hist_len(), B), noise(m.chunk_len(), B);
      std::vector<int> ts(static_cast<std::size_t>(B));
      for (int col = 0; col < B; ++col) {
        int e = static_cast<int>(sample_rng.uniform_int(0, n_eps - 1));
        const Matf& feats = enc.feats[static_cast<std::size_t>(e)];
        const Matf& zs = enc.zs[static_cast<std::size_t>(e)];
        int start = static_cast<int>(sample_rng.uniform_int(
            0, static_cast<int>(feats.cols()) - window));
        // re-anchor the window to its own first frame
        std::vector<Vecd> wf(static_cast<std::size_t>(window));
        for (int i = 0; i < window; ++i)
          wf[static_cast<std::size_t>(i)] =
              feats.col(start + i).cast<double>();
        data::reanchor_window(wf, d.repr);
        auto norm_frame = [&](int i, Eigen::Ref<Vecf> dst) {
          Vecf f = wf[static_cast<std::size_t>(i)].cast<float>();
          dst.head(fd) = (f - m.feat_mean).cwiseQuotient(m.feat_std);
          dst.tail(zd) = (zs.col(start + i) - m.z_mean).cwiseQuotient(m.z_std);
        };
        for (int i = 0; i < cfg.h; ++i)
          norm_frame(i, hist.col(col).segment(i * dx, dx));
        for (int i = 0; i < cfg.F; ++i)
          norm_frame(cfg.h + i, x0.col(col).segment(i * dx, dx));
        ts[static_cast<std::size_t>(col)] =
            static_cast<int>(sample_rng.uniform_int(0, schedule.T_train - 1));
        for (int i = 0; i < m.chunk_len(); ++i)
          noise(i, col) = static_cast<float>(sample_rng.normal());
      }
      Matf x_noisy(m.chunk_len(), B);
      for (int col = 0; col < B; ++col) {
        double ab = schedule.alphas_bar[ts[static_cast<std::size_t>(col)]];
        x_noisy.col(col) =
            static_cast<float>(std::sqrt(ab)) * x0.col(col) +
            static_cast<float>(std::sqrt(1.0 - ab)) * noise.col(col);
      }
      nn::ForwardCache<float> cache;
      Matf eps_hat = denoiser_forward(m, x_noisy, hist, ts, &cache);
      Matf err = eps_hat - noise;
      double sq = static_cast<double>(err.cast<double>().squaredNorm());
      loss_sum += sq;
      loss_n += static_cast<long>(B) * m.chunk_len();
      Matf up = err * static_cast<float>(
                          2.0 / (static_cast<double>(B) * m.chunk_len()));
      auto grads = nn::zero_grads(m.net);
      nn::backward(m.net, cache, up, grads);
      opt.update(m.net, grads);
    }
    double mse = loss_sum / static_cast<double>(loss_n);
    if (!std::isfinite(mse))
      throw TrainingError("train_prior: loss diverged (non-finite)");
    res.loss_curve.push_back(mse);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoint: NAPM header extension around a core net block.

inline void prior_save(const DenoiserModel& m, const std::string& path) {
  m.validate();
  io::ByteWriter w;
  w.magic("NAPM");
  w.u32(io::kFormatVersion);
  w.u8(static_cast<std::uint8_t>(m.repr));
  w.u32(static_cast<std::uint32_t>(m.F));
  w.u32(static_cast<std::uint32_t>(m.h));
  w.u32(static_cast<std::uint32_t>(m.z_dim));
  w.u32(static_cast<std::uint32_t>(m.step_emb_dim));
  w.u32(static_cast<std::uint32_t>(m.schedule.T_train));
  w.f64(m.schedule.beta_lo);
  w.f64(m.schedule.beta_hi);
  w.u32(static_cast<std::uint32_t>(m.schedule.ddim_indices.size()));
  for (int idx : m.schedule.ddim_indices)
    w.u32(static_cast<std::uint32_t>(idx));
  io::serialize_net(w, m.net);
  w.f32_span(m.feat_mean.data(), static_cast<std::size_t>(m.feat_mean.size()));
  w.f32_span(m.feat_std.data(), static_cast<std::size_t>(m.feat_std.size()));
  w.f32_span(m.z_mean.data(), static_cast<std::size_t>(m.z_mean.size()));
  w.f32_span(m.z_std.data(), static_cast<std::size_t>(m.z_std.size()));
  w.write_file(path);
}

inline DenoiserModel prior_load(const std::string& path) {
  io::ByteReader r = io::ByteReader::from_file(path);
  r.check_trailer();
  r.expect_magic("NAPM");
  std::uint32_t version = r.u32();
  if (version != io::kFormatVersion)
    throw IoError(path + ": unsupported prior version " +
                  std::to_string(version));
  DenoiserModel m;
  std::uint8_t tag = r.u8();
  if (tag > 2) throw IoError(path + ": bad repr tag");
  m.repr = static_cast<data::ReprVariant>(tag);
  m.F = static_cast<int>(r.u32());
  m.h = static_cast<int>(r.u32());
  m.z_dim = static_cast<int>(r.u32());
  m.step_emb_dim = static_cast<int>(r.u32());
  int T = static_cast<int>(r.u32());
  double lo = r.f64(), hi = r.f64();
  std::uint32_t n_ddim = r.u32();
  if (m.F < 1 || m.F > 256 || m.h < 1 || m.h > 256 || m.z_dim < 1 ||
      m.z_dim > 256 || T < 1 || T > 100000 || n_ddim == 0 ||
      n_ddim > static_cast<std::uint32_t>(T))
    throw IoError(path + ": implausible prior header");
  m.schedule = NoiseSchedule::make(T, 1, lo, hi);
  m.schedule.ddim_indices.clear();
  for (std::uint32_t i = 0; i < n_ddim; ++i)
    m.schedule.ddim_indices.push_back(static_cast<int>(r.u32()));
  m.net = io::parse_net<float>(r);
  int fd = data::repr_dim(m.repr);
  m.feat_mean.resize(fd);
  m.feat_std.resize(fd);
  m.z_mean.resize(m.z_dim);
  m.z_std.resize(m.z_dim);
  r.f32_span(m.feat_mean.data(), static_cast<std::size_t>(fd));
  r.f32_span(m.feat_std.data(), static_cast<std::size_t>(fd));
  r.f32_span(m.z_mean.data(), static_cast<std::size_t>(m.z_dim));
  r.f32_span(m.z_std.data(), static_cast<std::size_t>(m.z_std.size()));
  r.finish();
  m.validate();
  return m;
}

}  // namespace nap::prior
