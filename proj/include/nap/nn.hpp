#pragma once

#include "nap/common.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace nap::nn {

// One affine layer, optionally preceded by LayerNorm (pre-LN).
template <class T>
struct Layer {
  Mat<T> W;  // out x in
  Vec<T> b;
  bool pre_norm = false;
  Vec<T> gamma, beta;  // LayerNorm affine, used when pre_norm

  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }
};

// MLP with SiLU on hidden layers; the output layer is linear.
template <class T>
struct DenseNet {
  std::vector<Layer<T>> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  void validate() const {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
      if (layers[i].out_dim() != layers[i + 1].in_dim())
        throw ConfigError("DenseNet: layer dimension chain broken at layer " +
                          std::to_string(i));
    }
  }
};

constexpr double kLayerNormEps = 1e-5;

template <class T>
inline T silu(T x) {
  return x / (T(1) + std::exp(-x));
}

template <class T>
inline T silu_grad(T x) {
  T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

// Uniform +-sqrt(6/(fan_in+fan_out)) init.
template <class T>
DenseNet<T> make_mlp(const std::vector<int>& dims, bool norm_middle, Rng& rng,
                     double out_scale = 1.0) {
  if (dims.size() < 2) throw ConfigError("make_mlp: need at least one layer");
  DenseNet<T> net;
  int n_layers = static_cast<int>(dims.size()) - 1;
  for (int i = 0; i < n_layers; ++i) {
    Layer<T> layer;
    double bound = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
    layer.W.resize(dims[i + 1], dims[i]);
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c)
        layer.W(r, c) = static_cast<T>(rng.uniform(-bound, bound));
    layer.b = Vec<T>::Zero(dims[i + 1]);
    layer.pre_norm = norm_middle && i > 0 && i < n_layers - 1;
    if (layer.pre_norm) {
      layer.gamma = Vec<T>::Ones(dims[i]);
      layer.beta = Vec<T>::Zero(dims[i]);
    }
    if (i == n_layers - 1 && out_scale != 1.0)
      layer.W *= static_cast<T>(out_scale);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <class T>
struct ForwardCache {
  // Per layer: input (pre-norm), normalized input, affine output.
  std::vector<Mat<T>> inputs;
  std::vector<Mat<T>> normed;
  std::vector<Mat<T>> pre_act;
  std::vector<Vec<double>> ln_mean, ln_rstd;  // per column
  bool valid = false;
};

// LayerNorm over the feature axis of each column; statistics in 64-bit.
template <class T>
inline Mat<T> layer_norm(const Layer<T>& layer, const Mat<T>& x,
                         Vec<double>* mean_out, Vec<double>* rstd_out) {
  const Eigen::Index n = x.rows(), batch = x.cols();
  Mat<T> y(n, batch);
  if (mean_out) mean_out->resize(batch);
  if (rstd_out) rstd_out->resize(batch);
  for (Eigen::Index c = 0; c < batch; ++c) {
    double mu = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) mu += static_cast<double>(x(r, c));
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      double d = static_cast<double>(x(r, c)) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    for (Eigen::Index r = 0; r < n; ++r) {
      double xhat = (static_cast<double>(x(r, c)) - mu) * rstd;
      y(r, c) = static_cast<T>(static_cast<double>(layer.gamma[r]) * xhat +
                               static_cast<double>(layer.beta[r]));
    }
    if (mean_out) (*mean_out)[c] = mu;
    if (rstd_out) (*rstd_out)[c] = rstd;
  }
  return y;
}

// Batched forward; columns are batch entries.
template <class T>
Mat<T> forward(const DenseNet<T>& net, const Mat<T>& input,
               ForwardCache<T>* cache = nullptr) {
  if (net.layers.empty()) throw ConfigError("forward: empty network");
  if (input.rows() != net.input_dim())
    throw ConfigError("forward: input dim " + std::to_string(input.rows()) +
                      " != network input dim " +
                      std::to_string(net.input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->normed.clear();
    cache->pre_act.clear();
    cache->ln_mean.clear();
    cache->ln_rstd.clear();
  }
  Mat<T> x = input;
  const int n_layers = static_cast<int>(net.layers.size());
  for (int i = 0; i < n_layers; ++i) {
    const Layer<T>& layer = net.layers[i];
    if (cache) cache->inputs.push_back(x);
    Vec<double> mu, rstd;
    if (layer.pre_norm)
      x = layer_norm(layer, x, cache ? &mu : nullptr, cache ? &rstd : nullptr);
    if (cache) {
      cache->normed.push_back(x);
      cache->ln_mean.push_back(std::move(mu));
      cache->ln_rstd.push_back(std::move(rstd));
    }
    Mat<T> z = (layer.W * x).colwise() + layer.b;
    if (cache) cache->pre_act.push_back(z);
    if (i + 1 < n_layers)
      x = z.unaryExpr([](T v) { return silu(v); });
    else
      x = std::move(z);
  }
  if (cache) cache->valid = true;
  return x;
}

// Gradient container: a shape clone of the network with zeroed arrays.
template <class T>
DenseNet<T> zero_grads(const DenseNet<T>& net) {
  DenseNet<T> g = net;
  for (auto& layer : g.layers) {
    layer.W.setZero();
    layer.b.setZero();
    if (layer.pre_norm) {
      layer.gamma.setZero();
      layer.beta.setZero();
    }
  }
  return g;
}

// Accumulates parameter gradients into `grads` and returns the input gradient.
template <class T>
Mat<T> backward(const DenseNet<T>& net, const ForwardCache<T>& cache,
                const Mat<T>& upstream, DenseNet<T>& grads) {
  if (!cache.valid) throw UsageError("backward: no matching forward recorded");
  const int n_layers = static_cast<int>(net.layers.size());
  if (static_cast<int>(cache.inputs.size()) != n_layers)
    throw UsageError("backward: cache does not match network");
  Mat<T> dy = upstream;
  for (int i = n_layers - 1; i >= 0; --i) {
    const Layer<T>& layer = net.layers[i];
    Layer<T>& g = grads.layers[i];
    Mat<T> dz;
    if (i + 1 < n_layers) {
      dz = dy.cwiseProduct(
          cache.pre_act[i].unaryExpr([](T v) { return silu_grad(v); }));
    } else {
      dz = dy;
    }
    g.W.noalias() += dz * cache.normed[i].transpose();
    g.b += dz.rowwise().sum();
    Mat<T> dx = layer.W.transpose() * dz;
    if (layer.pre_norm) {
      const Eigen::Index n = dx.rows(), batch = dx.cols();
      const Mat<T>& x_in = cache.inputs[i];
      Mat<T> draw(n, batch);
      for (Eigen::Index c = 0; c < batch; ++c) {
        double mu = cache.ln_mean[i][c];
        double rstd = cache.ln_rstd[i][c];
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
          double xhat = (static_cast<double>(x_in(r, c)) - mu) * rstd;
          double dyv = static_cast<double>(dx(r, c));
          g.gamma[r] += static_cast<T>(dyv * xhat);
          g.beta[r] += static_cast<T>(dyv);
          double dxhat = dyv * static_cast<double>(layer.gamma[r]);
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        double inv_n = 1.0 / static_cast<double>(n);
        for (Eigen::Index r = 0; r < n; ++r) {
          double xhat = (static_cast<double>(x_in(r, c)) - mu) * rstd;
          double dxhat = static_cast<double>(dx(r, c)) *
                         static_cast<double>(layer.gamma[r]);
          draw(r, c) = static_cast<T>(
              rstd * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat));
        }
      }
      dx = std::move(draw);
    }
    dy = std::move(dx);
  }
  return dy;
}

// Named flat views over every parameter array, used by the optimizer,
// serialization, and gradient checks.
template <class T>
struct ParamView {
  std::string name;
  T* data;
  Eigen::Index size;
};

template <class T>
std::vector<ParamView<T>> param_views(DenseNet<T>& net) {
  std::vector<ParamView<T>> views;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& layer = net.layers[i];
    std::string prefix = "layer" + std::to_string(i);
    views.push_back({prefix + ".W", layer.W.data(), layer.W.size()});
    views.push_back({prefix + ".b", layer.b.data(), layer.b.size()});
    if (layer.pre_norm) {
      views.push_back({prefix + ".gamma", layer.gamma.data(), layer.gamma.size()});
      views.push_back({prefix + ".beta", layer.beta.data(), layer.beta.size()});
    }
  }
  return views;
}

template <class T>
Eigen::Index param_count(const DenseNet<T>& net) {
  Eigen::Index n = 0;
  for (const auto& layer : net.layers) {
    n += layer.W.size() + layer.b.size();
    if (layer.pre_norm) n += layer.gamma.size() + layer.beta.size();
  }
  return n;
}

// Adaptive-moment optimizer (decay 0.9/0.999, eps 1e-8).
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(const DenseNet<T>& net, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        m_(zero_grads(net)), v_(zero_grads(net)) {
    if (lr <= 0) throw ConfigError("Adam: learning rate must be positive");
  }

  long step_count() const { return step_; }
  void set_lr(double lr) {
    if (lr <= 0) throw ConfigError("Adam: learning rate must be positive");
    lr_ = lr;
  }

  void update(DenseNet<T>& net, DenseNet<T>& grads) {
    ++step_;
    double bc1 = 1.0 - std::pow(beta1_, step_);
    double bc2 = 1.0 - std::pow(beta2_, step_);
    auto p = param_views(net);
    auto g = param_views(grads);
    auto m = param_views(m_);
    auto v = param_views(v_);
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (Eigen::Index j = 0; j < p[k].size; ++j) {
        double gj = static_cast<double>(g[k].data[j]);
        if (!std::isfinite(gj))
          throw TrainingError("Adam: non-finite gradient at " + p[k].name);
        double mj = beta1_ * static_cast<double>(m[k].data[j]) + (1 - beta1_) * gj;
        double vj =
            beta2_ * static_cast<double>(v[k].data[j]) + (1 - beta2_) * gj * gj;
        m[k].data[j] = static_cast<T>(mj);
        v[k].data[j] = static_cast<T>(vj);
        double update = lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
        p[k].data[j] = static_cast<T>(static_cast<double>(p[k].data[j]) - update);
      }
    }
  }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long step_ = 0;
  DenseNet<T> m_, v_;
};

// Same update rule for a free parameter vector (e.g. log-std).
template <class T>
class AdamVec {
 public:
  AdamVec() = default;
  AdamVec(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        m_(Vec<T>::Zero(n)), v_(Vec<T>::Zero(n)) {}

  void set_lr(double lr) {
    if (lr <= 0) throw ConfigError("AdamVec: learning rate must be positive");
    lr_ = lr;
  }

  void update(Vec<T>& params, const Vec<T>& grads) {
    ++step_;
    double bc1 = 1.0 - std::pow(beta1_, step_);
    double bc2 = 1.0 - std::pow(beta2_, step_);
    for (Eigen::Index j = 0; j < params.size(); ++j) {
      double gj = static_cast<double>(grads[j]);
      if (!std::isfinite(gj))
        throw TrainingError("AdamVec: non-finite gradient at index " +
                            std::to_string(j));
      double mj = beta1_ * static_cast<double>(m_[j]) + (1 - beta1_) * gj;
      double vj = beta2_ * static_cast<double>(v_[j]) + (1 - beta2_) * gj * gj;
      m_[j] = static_cast<T>(mj);
      v_[j] = static_cast<T>(vj);
      params[j] = static_cast<T>(static_cast<double>(params[j]) -
                                 lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
    }
  }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long step_ = 0;
  Vec<T> m_, v_;
};

}  // namespace nap::nn
