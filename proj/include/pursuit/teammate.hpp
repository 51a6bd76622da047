#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <span>
#include <vector>

#include "nn.hpp"
#include "sim.hpp"

namespace pursuit::naht {

using nn::Matrix;
using nn::Mlp;
using nn::Vector;

/// Flattened window of the last k steps, oldest first, zero-padded before k steps
/// have elapsed. Each step holds three blocks:
///   evaders   num_e x [distance, bearing, visible]
///   self      [x, y, cos h, sin h, obstacle distance, obstacle bearing, obstacle visible, previous own action]
///   relative  num_teammates x [distance, bearing, visible]
struct HistoryLayout {
  int num_e = 0;
  int num_teammates = 0;
  int length = 1;

  static constexpr int kSelfBlock = ObservationLayout::kSelf + ObservationLayout::kEntity + 1;

  HistoryLayout() = default;
  HistoryLayout(int num_e_, int num_teammates_, int k)
      : num_e(num_e_), num_teammates(num_teammates_), length(k) {}
  HistoryLayout(const EnvConfig& cfg, int k)
      : HistoryLayout(cfg.players.num_e, cfg.players.num_p - 1, k) {}

  int evader_block() const { return 3 * num_e; }
  int relative_block() const { return 3 * num_teammates; }
  int step_size() const { return evader_block() + kSelfBlock + relative_block(); }
  int size() const { return length * step_size(); }
};

/// Packs one step of the window from an observation and the previous own action.
inline std::vector<double> history_entry(const HistoryLayout& h, std::span<const double> obs,
                                         double prev_action) {
  const int ev = ObservationLayout::kSelf;
  const int ob = ev + 3 * h.num_e;
  const int tm = ob + 3;
  std::vector<double> out;
  out.reserve(h.step_size());
  out.insert(out.end(), obs.begin() + ev, obs.begin() + ob);
  out.insert(out.end(), obs.begin(), obs.begin() + ev);
  out.insert(out.end(), obs.begin() + ob, obs.begin() + tm);
  out.push_back(prev_action);
  out.insert(out.end(), obs.begin() + tm, obs.begin() + tm + 3 * h.num_teammates);
  return out;
}

/// Rolling window for one agent over one episode.
class HistoryTracker {
 public:
  HistoryTracker() = default;
  explicit HistoryTracker(HistoryLayout layout) : layout_(layout) {}

  void reset() {
    entries_.clear();
    prev_action_ = 0.0;
  }

  /// Appends the current step and returns the flattened window.
  std::vector<double> push(std::span<const double> obs) {
    entries_.push_back(history_entry(layout_, obs, prev_action_));
    while (static_cast<int>(entries_.size()) > layout_.length) entries_.pop_front();
    std::vector<double> window(layout_.size(), 0.0);
    const int pad = layout_.length - static_cast<int>(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i)
      std::copy(entries_[i].begin(), entries_[i].end(),
                window.begin() + (pad + static_cast<int>(i)) * layout_.step_size());
    return window;
  }

  void record_action(double a) { prev_action_ = a; }
  const HistoryLayout& layout() const { return layout_; }

 private:
  HistoryLayout layout_;
  std::deque<std::vector<double>> entries_;
  double prev_action_ = 0.0;
};

/// Encoder: one MLP per input block, the relative-position branch applied per teammate
/// row and mean-pooled, outputs mixed by softmax weights over three learned logits.
template <typename S>
struct TeamEncoder {
  HistoryLayout layout;
  int embedding = 16;
  Mlp<S> evader_branch;
  Mlp<S> self_branch;
  Mlp<S> relative_branch;
  std::vector<S> mix_logits = std::vector<S>(3, S(0));

  struct Cache {
    typename Mlp<S>::Cache evader, self, relative;
    Matrix<S> out_evader, out_self, out_relative, embedding;
    Vector<S> weights;
    bool zeroed = false;
  };

  TeamEncoder() = default;
  TeamEncoder(HistoryLayout l, int embed, int hidden, Rng& rng) : layout(l), embedding(embed) {
    evader_branch = Mlp<S>::initialized({l.length * l.evader_block(), hidden, embed}, rng);
    self_branch = Mlp<S>::initialized({l.length * HistoryLayout::kSelfBlock, hidden, embed}, rng);
    relative_branch = Mlp<S>::initialized({l.length * 3, hidden, embed}, rng);
  }

  Vector<S> mix_weights() const {
    Vector<S> w(3);
    const S mx = *std::max_element(mix_logits.begin(), mix_logits.end());
    for (int b = 0; b < 3; ++b) w[b] = std::exp(mix_logits[b] - mx);
    return w / w.sum();
  }

  /// windows: (layout.size() x B). Returns (embedding x B).
  Matrix<S> forward(const Matrix<S>& windows, Cache* cache = nullptr) const {
    if (windows.rows() != layout.size()) throw nn::ShapeError("history window size mismatch");
    const Eigen::Index batch = windows.cols();
    const int k = layout.length, step = layout.step_size(), t = layout.num_teammates;
    const int ev = layout.evader_block(), sb = HistoryLayout::kSelfBlock;

    Matrix<S> xe(k * ev, batch), xs(k * sb, batch), xr(k * 3, batch * std::max(t, 1));
    xr.setZero();
    for (int s = 0; s < k; ++s) {
      const int base = s * step;
      xe.middleRows(s * ev, ev) = windows.middleRows(base, ev);
      xs.middleRows(s * sb, sb) = windows.middleRows(base + ev, sb);
      for (Eigen::Index b = 0; b < batch; ++b)
        for (int j = 0; j < t; ++j)
          xr.block(s * 3, b * t + j, 3, 1) = windows.block(base + ev + sb + 3 * j, b, 3, 1);
    }

    Cache local;
    Cache& c = cache ? *cache : local;
    c.out_evader = evader_branch.forward(xe, &c.evader);
    c.out_self = self_branch.forward(xs, &c.self);
    Matrix<S> rows = relative_branch.forward(xr, &c.relative);
    c.out_relative = Matrix<S>::Zero(embedding, batch);
    if (t > 0)
      for (Eigen::Index b = 0; b < batch; ++b)
        c.out_relative.col(b) = rows.middleCols(b * t, t).rowwise().sum() / S(t);
    c.weights = mix_weights();
    c.embedding = c.weights[0] * c.out_evader + c.weights[1] * c.out_self + c.weights[2] * c.out_relative;
    return c.embedding;
  }

  struct Grad {
    std::vector<S> evader, self, relative, logits;
  };

  Grad zero_grad() const {
    return {std::vector<S>(evader_branch.param_count(), S(0)),
            std::vector<S>(self_branch.param_count(), S(0)),
            std::vector<S>(relative_branch.param_count(), S(0)), std::vector<S>(3, S(0))};
  }

  /// Accumulates parameter gradients for d(loss)/d(embedding) = d_emb.
  void backward(const Cache& c, const Matrix<S>& d_emb, Grad& g) const {
    const Eigen::Index batch = d_emb.cols();
    const int t = layout.num_teammates;
    const Matrix<S>* outs[3] = {&c.out_evader, &c.out_self, &c.out_relative};
    for (int b = 0; b < 3; ++b)
      g.logits[b] += c.weights[b] * (d_emb.array() * (outs[b]->array() - c.embedding.array())).sum();
    evader_branch.backward(c.evader, c.weights[0] * d_emb, g.evader);
    self_branch.backward(c.self, c.weights[1] * d_emb, g.self);
    if (t > 0) {
      Matrix<S> d_rows(embedding, batch * t);
      for (Eigen::Index b = 0; b < batch; ++b)
        for (int j = 0; j < t; ++j) d_rows.col(b * t + j) = d_emb.col(b) * (c.weights[2] / S(t));
      relative_branch.backward(c.relative, d_rows, g.relative);
    }
  }

  std::vector<std::span<S>> blocks() {
    return {evader_branch.params(), self_branch.params(), relative_branch.params(), mix_logits};
  }
};

/// Reconstruction target: a Gaussian centered on each observed teammate action.
inline constexpr double kTargetStd = 0.1;

/// Decoder: one head shared by all uncontrolled teammates, fed the embedding plus that
/// teammate's current relative-position row; outputs (mean, log_std) of its action.
template <typename S>
struct TeamDecoder {
  int embedding = 16;
  Mlp<S> head;

  struct Cache {
    typename Mlp<S>::Cache head;
    Matrix<S> out;
    int teammates = 0;
  };

  TeamDecoder() = default;
  TeamDecoder(int embed, int hidden, Rng& rng)
      : embedding(embed), head(Mlp<S>::initialized({embed + 3, hidden, 2}, rng, 0.01)) {}

  /// emb: (E x B); rows: (3 x B*M) current rows of the M uncontrolled teammates.
  /// Returns (2 x B*M): mean and clamped log_std per teammate.
  Matrix<S> forward(const Matrix<S>& emb, const Matrix<S>& rows, int teammates, Cache* cache = nullptr) const {
    const Eigen::Index batch = emb.cols();
    Matrix<S> in(embedding + 3, batch * teammates);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int u = 0; u < teammates; ++u) {
        in.block(0, b * teammates + u, embedding, 1) = emb.col(b);
        in.block(embedding, b * teammates + u, 3, 1) = rows.col(b * teammates + u);
      }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.teammates = teammates;
    c.out = head.forward(in, &c.head);
    Matrix<S> out = c.out;
    for (Eigen::Index i = 0; i < out.cols(); ++i) out(1, i) = nn::clamp_log_std(out(1, i));
    return out;
  }
};

/// Mean over batch and teammates of KL(target || predicted). `actions` is (M x B).
/// Fills d_pred (2 x B*M) with the gradient with respect to the decoder's raw outputs.
template <typename S>
S reconstruction_loss(const Matrix<S>& raw_pred, const Matrix<S>& actions, Matrix<S>* d_pred = nullptr,
                      S target_std = S(kTargetStd)) {
  const Eigen::Index m = actions.rows(), batch = actions.cols();
  const S target_ls = std::log(target_std);
  const S norm = S(1) / S(std::max<Eigen::Index>(m * batch, 1));
  if (d_pred) d_pred->setZero(2, m * batch);
  S loss = 0;
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index u = 0; u < m; ++u) {
      const Eigen::Index col = b * m + u;
      const S mu = raw_pred(0, col);
      const S raw_ls = raw_pred(1, col);
      const S ls = nn::clamp_log_std(raw_ls);
      const S a = actions(u, b);
      loss += nn::gaussian_kl<S>(std::span<const S>(&a, 1), std::span<const S>(&target_ls, 1),
                                 std::span<const S>(&mu, 1), std::span<const S>(&ls, 1));
      if (d_pred) {
        auto g = nn::gaussian_kl_grad<S>(std::span<const S>(&a, 1), std::span<const S>(&target_ls, 1),
                                         std::span<const S>(&mu, 1), std::span<const S>(&ls, 1));
        (*d_pred)(0, col) = g.q_mean[0] * norm;
        const bool inside = raw_ls > S(nn::kLogStdMin) && raw_ls < S(nn::kLogStdMax);
        (*d_pred)(1, col) = inside ? g.q_log_std[0] * norm : S(0);
      }
    }
  return loss * norm;
}

/// Current relative rows (3 x B*M) of the last M teammate rows of each window.
template <typename S>
Matrix<S> uncontrolled_rows(const HistoryLayout& h, const Matrix<S>& windows, int teammates) {
  const Eigen::Index batch = windows.cols();
  Matrix<S> rows(3, batch * teammates);
  const int newest = (h.length - 1) * h.step_size();
  const int rel = newest + h.evader_block() + HistoryLayout::kSelfBlock;
  const int first = h.num_teammates - teammates;
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int u = 0; u < teammates; ++u)
      rows.col(b * teammates + u) = windows.block(rel + 3 * (first + u), b, 3, 1);
  return rows;
}

/// Splits d(loss)/d(decoder input) into the embedding gradient (E x B).
template <typename S>
Matrix<S> decoder_backward(const TeamDecoder<S>& dec, const typename TeamDecoder<S>::Cache& c,
                           const Matrix<S>& d_pred, std::span<S> grad) {
  Matrix<S> d_in = dec.head.backward(c.head, d_pred, grad);
  const int m = c.teammates;
  const Eigen::Index batch = d_in.cols() / std::max(m, 1);
  Matrix<S> d_emb = Matrix<S>::Zero(dec.embedding, batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int u = 0; u < m; ++u) d_emb.col(b) += d_in.block(0, b * m + u, dec.embedding, 1);
  return d_emb;
}

}  // namespace pursuit::naht
