#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rng.hpp"

namespace pursuit::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

class ShapeError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Fully connected network: tanh on hidden layers, linear output. Parameters live in one
/// flat buffer, per layer the weight matrix (out x in, column-major) followed by the bias.
/// Inputs and outputs are batched column-wise (one sample per column).
template <typename S>
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix<S>> activations;  // [0] is the input, [l + 1] the output of layer l
  };

  Mlp() = default;

  explicit Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ShapeError("an MLP needs at least input and output dims");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      if (dims_[l] <= 0 || dims_[l + 1] <= 0) throw ShapeError("MLP dims must be positive");
      offsets_.push_back(n);
      n += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
    }
    params_.assign(n, S(0));
  }

  /// Weights ~ N(0, 1) / sqrt(fan_in), zero biases; the last layer is further scaled.
  static Mlp initialized(std::vector<int> dims, Rng& rng, double last_layer_scale = 1.0) {
    Mlp m(std::move(dims));
    for (int l = 0; l < m.num_layers(); ++l) {
      auto w = m.weight(l);
      const double scale =
          (l + 1 == m.num_layers() ? last_layer_scale : 1.0) / std::sqrt(double(m.dims_[l]));
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<S>(rng.normal() * scale);
    }
    return m;
  }

  int num_layers() const { return static_cast<int>(offsets_.size()); }
  int input_size() const { return dims_.front(); }
  int output_size() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<S> params() { return params_; }
  std::span<const S> params() const { return params_; }

  Eigen::Map<Matrix<S>> weight(int l) {
    return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
  }
  Eigen::Map<const Matrix<S>> weight(int l) const {
    return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
  }
  Eigen::Map<Vector<S>> bias(int l) {
    return {params_.data() + offsets_[l] + std::size_t(dims_[l + 1]) * dims_[l], dims_[l + 1]};
  }
  Eigen::Map<const Vector<S>> bias(int l) const {
    return {params_.data() + offsets_[l] + std::size_t(dims_[l + 1]) * dims_[l], dims_[l + 1]};
  }

  Matrix<S> forward(const Matrix<S>& x, Cache* cache = nullptr) const {
    if (x.rows() != input_size())
      throw ShapeError("MLP input has " + std::to_string(x.rows()) + " rows, expected " +
                       std::to_string(input_size()));
    if (cache) {
      cache->activations.resize(num_layers() + 1);
      cache->activations[0] = x;
    }
    Matrix<S> h = x;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix<S> z = weight(l) * h;
      z.colwise() += bias(l);
      if (l + 1 < num_layers()) z = z.array().tanh().matrix();
      h = std::move(z);
      if (cache) cache->activations[l + 1] = h;
    }
    return h;
  }

  /// Reverse pass. Adds parameter gradients into `grad` (same layout as params()) and
  /// returns the gradient with respect to the input.
  Matrix<S> backward(const Cache& cache, const Matrix<S>& dy, std::span<S> grad) const {
    if (cache.activations.size() != std::size_t(num_layers()) + 1)
      throw ShapeError("MLP cache does not match this network");
    if (grad.size() != params_.size()) throw ShapeError("gradient buffer size mismatch");
    if (dy.rows() != output_size() || dy.cols() != cache.activations[0].cols())
      throw ShapeError("output gradient shape mismatch");
    Matrix<S> dz = dy;
    for (int l = num_layers() - 1; l >= 0; --l) {
      if (l + 1 < num_layers()) {
        const auto& h = cache.activations[l + 1];
        dz = (dz.array() * (S(1) - h.array().square())).matrix();
      }
      const auto& in = cache.activations[l];
      Eigen::Map<Matrix<S>> gw(grad.data() + offsets_[l], dims_[l + 1], dims_[l]);
      Eigen::Map<Vector<S>> gb(grad.data() + offsets_[l] + std::size_t(dims_[l + 1]) * dims_[l],
                               dims_[l + 1]);
      const Matrix<S> dw = dz * in.transpose();
      const Vector<S> db = dz.rowwise().sum();
      gw += dw;
      gb += db;
      dz = (weight(l).transpose() * dz).eval();
    }
    return dz;
  }

  template <typename T>
  Mlp<T> cast() const {
    Mlp<T> out(dims_);
    auto dst = out.params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<T>(params_[i]);
    return out;
  }

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<int> dims_;
  std::vector<S, Eigen::aligned_allocator<S>> params_;
  std::vector<std::size_t> offsets_;
};

// ---------------------------------------------------------------------------
// Diagonal Gaussian with a state-independent log standard deviation.

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

template <typename S>
S clamp_log_std(S v) {
  return std::clamp(v, S(kLogStdMin), S(kLogStdMax));
}

template <typename S>
S gaussian_log_prob(std::span<const S> mean, std::span<const S> log_std, std::span<const S> action) {
  S lp = 0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const S z = (action[i] - mean[i]) / std::exp(log_std[i]);
    lp += S(-0.5) * z * z - log_std[i] - S(kHalfLog2Pi);
  }
  return lp;
}

/// d log_prob / d mean and d log_prob / d log_std.
template <typename S>
void gaussian_log_prob_grad(std::span<const S> mean, std::span<const S> log_std,
                            std::span<const S> action, std::span<S> d_mean, std::span<S> d_log_std) {
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const S var = std::exp(S(2) * log_std[i]);
    const S diff = action[i] - mean[i];
    d_mean[i] = diff / var;
    d_log_std[i] = diff * diff / var - S(1);
  }
}

/// Entropy; its derivative with respect to each log_std entry is 1.
template <typename S>
S gaussian_entropy(std::span<const S> log_std) {
  S h = 0;
  for (S ls : log_std) h += S(0.5) + S(kHalfLog2Pi) + ls;
  return h;
}

template <typename S>
void gaussian_sample(std::span<const S> mean, std::span<const S> log_std, Rng& rng, std::span<S> out) {
  for (std::size_t i = 0; i < mean.size(); ++i)
    out[i] = mean[i] + std::exp(log_std[i]) * static_cast<S>(rng.normal());
}

/// KL(p || q) for diagonal Gaussians.
template <typename S>
S gaussian_kl(std::span<const S> p_mean, std::span<const S> p_log_std, std::span<const S> q_mean,
              std::span<const S> q_log_std) {
  if (p_mean.size() != q_mean.size()) throw ShapeError("KL between Gaussians of different size");
  S kl = 0;
  for (std::size_t i = 0; i < p_mean.size(); ++i) {
    const S vp = std::exp(S(2) * p_log_std[i]);
    const S vq = std::exp(S(2) * q_log_std[i]);
    const S diff = p_mean[i] - q_mean[i];
    kl += q_log_std[i] - p_log_std[i] + (vp + diff * diff) / (S(2) * vq) - S(0.5);
  }
  return kl;
}

/// Gradients of KL(p || q) with respect to every argument.
template <typename S>
struct KlGrad {
  std::vector<S> p_mean, p_log_std, q_mean, q_log_std;
};

template <typename S>
KlGrad<S> gaussian_kl_grad(std::span<const S> p_mean, std::span<const S> p_log_std,
                           std::span<const S> q_mean, std::span<const S> q_log_std) {
  const std::size_t n = p_mean.size();
  KlGrad<S> g{std::vector<S>(n), std::vector<S>(n), std::vector<S>(n), std::vector<S>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const S vp = std::exp(S(2) * p_log_std[i]);
    const S vq = std::exp(S(2) * q_log_std[i]);
    const S diff = p_mean[i] - q_mean[i];
    g.p_mean[i] = diff / vq;
    g.q_mean[i] = -diff / vq;
    g.p_log_std[i] = -S(1) + vp / vq;
    g.q_log_std[i] = S(1) - (vp + diff * diff) / vq;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam.

template <typename S>
struct OptimizerState {
  std::vector<S> m;
  std::vector<S> v;
  long step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  OptimizerState() = default;
  explicit OptimizerState(std::size_t n, double learning_rate = 3e-4)
      : m(n, S(0)), v(n, S(0)), lr(learning_rate) {}

  bool operator==(const OptimizerState&) const = default;
};

class NonFiniteGradient : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bias-corrected adaptive-moment update in place.
template <typename S>
void optimizer_step(OptimizerState<S>& opt, std::span<S> params, std::span<const S> grad) {
  if (params.size() != grad.size() || opt.m.size() != params.size() || opt.v.size() != params.size())
    throw ShapeError("optimizer/parameter/gradient size mismatch");
  for (S g : grad)
    if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient");
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, double(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, double(opt.step));
  const S b1 = S(opt.beta1), b2 = S(opt.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = b1 * opt.m[i] + (S(1) - b1) * grad[i];
    opt.v[i] = b2 * opt.v[i] + (S(1) - b2) * grad[i] * grad[i];
    const double mhat = double(opt.m[i]) / c1;
    const double vhat = double(opt.v[i]) / c2;
    params[i] -= static_cast<S>(opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
  }
}

/// Scales all gradient buffers so their joint L2 norm is at most max_norm. Returns the
/// norm before scaling.
template <typename S>
double clip_global_norm(std::span<const std::span<S>> grads, double max_norm) {
  double sq = 0.0;
  for (auto g : grads)
    for (S x : g) sq += double(x) * double(x);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / (norm + 1e-12));
    for (auto g : grads)
      for (S& x : g) x *= scale;
  }
  return norm;
}

}  // namespace pursuit::nn
