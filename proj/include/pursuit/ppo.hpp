#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "model.hpp"

namespace pursuit::rl {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr = 3e-4;
  double clip_ratio = 0.2;
  double value_coef = 1.0;
  double entropy_coef = 0.01;
  int epochs = 20;
  int batch = 1024;
  int minibatch = 256;
  long total_steps = 1'000'000;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  double recon_coef = 0.1;     // weight of the teammate reconstruction term
  double target_kl = 0.02;     // stop the epoch loop once a minibatch exceeds 1.5x this; <= 0 never stops

  void validate() const {
    if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("gamma must be in (0, 1]");
    if (!(gae_lambda > 0 && gae_lambda <= 1)) throw std::invalid_argument("gae_lambda must be in (0, 1]");
    if (batch <= 0 || minibatch <= 0 || batch % minibatch != 0)
      throw std::invalid_argument("minibatch must divide batch");
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  }
};

inline Json to_json(const PpoConfig& c) {
  return Json{{"gamma", c.gamma},           {"gae_lambda", c.gae_lambda},
              {"lr", c.lr},                 {"clip_ratio", c.clip_ratio},
              {"value_coef", c.value_coef}, {"entropy_coef", c.entropy_coef},
              {"epochs", c.epochs},         {"batch", c.batch},
              {"minibatch", c.minibatch},   {"total_steps", c.total_steps},
              {"max_grad_norm", c.max_grad_norm}, {"recon_coef", c.recon_coef},
              {"target_kl", c.target_kl}};
}

// -- advantages -------------------------------------------------------------------

template <typename S>
struct GaeResult {
  std::vector<S> advantages;
  std::vector<S> returns;
};

/// Generalized advantage estimation over one stream. terminals[t] marks that the episode
/// ended after step t; `bootstrap` is V of the state following the last step and is
/// ignored when that step is terminal.
template <typename S>
GaeResult<S> compute_gae(std::span<const S> rewards, std::span<const S> values,
                         std::span<const std::uint8_t> terminals, S bootstrap, S gamma, S lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || terminals.size() != n) throw std::invalid_argument("GAE inputs differ in length");
  GaeResult<S> out{std::vector<S>(n), std::vector<S>(n)};
  S next_value = bootstrap;
  S next_adv = 0;
  for (std::size_t i = n; i-- > 0;) {
    const S live = terminals[i] ? S(0) : S(1);
    const S delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

/// In place: mean 0, standard deviation 1 (population std). Constant input becomes zeros.
template <typename S>
void normalize_advantages(std::span<S> adv) {
  if (adv.empty()) return;
  double mean = 0;
  for (S a : adv) mean += a;
  mean /= double(adv.size());
  double var = 0;
  for (S a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / double(adv.size()));
  for (S& a : adv) a = static_cast<S>(sd > 1e-12 ? (a - mean) / sd : 0.0);
}

// -- batches ----------------------------------------------------------------------

/// Flattened learner transitions, one column per sample.
template <typename S>
struct PpoBatch {
  Matrix<S> obs;               // obs_size x B
  Matrix<S> history;           // window size x B, empty without an encoder
  Matrix<S> critic_in;         // critic_input x B
  Matrix<S> teammate_actions;  // num_unctrl x B
  std::vector<S> actions, log_probs, values, advantages, returns;

  int size() const { return static_cast<int>(actions.size()); }

  PpoBatch select(std::span<const int> idx) const {
    PpoBatch b;
    auto cols = [&](const Matrix<S>& m) {
      Matrix<S> out(m.rows(), m.rows() ? Eigen::Index(idx.size()) : 0);
      if (m.rows())
        for (std::size_t i = 0; i < idx.size(); ++i) out.col(i) = m.col(idx[i]);
      return out;
    };
    auto pick = [&](const std::vector<S>& v) {
      std::vector<S> out(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
      return out;
    };
    b.obs = cols(obs);
    b.history = cols(history);
    b.critic_in = cols(critic_in);
    b.teammate_actions = cols(teammate_actions);
    b.actions = pick(actions);
    b.log_probs = pick(log_probs);
    b.values = pick(values);
    b.advantages = pick(advantages);
    b.returns = pick(returns);
    return b;
  }
};

// -- loss -------------------------------------------------------------------------

struct LossStats {
  double total = 0, policy = 0, value = 0, entropy = 0, recon = 0, approx_kl = 0, clip_frac = 0;
  double grad_norm = 0;
  int minibatch_steps = 0;

  LossStats& operator+=(const LossStats& o) {
    total += o.total, policy += o.policy, value += o.value, entropy += o.entropy;
    recon += o.recon, approx_kl += o.approx_kl, clip_frac += o.clip_frac, grad_norm += o.grad_norm;
    return *this;
  }
  LossStats scaled(double f) const {
    LossStats s = *this;
    s.total *= f, s.policy *= f, s.value *= f, s.entropy *= f;
    s.recon *= f, s.approx_kl *= f, s.clip_frac *= f, s.grad_norm *= f;
    return s;
  }
};

/// Clipped-surrogate loss on one minibatch:
///   -mean(min(r A, clip(r) A)) + value_coef mean((V - R)^2) - entropy_coef H + recon_coef KL_recon
/// Adds gradients into `grads` (layout of model.blocks()) when non-null.
template <typename S>
LossStats ppo_loss(const AgentModel<S>& model, const PpoBatch<S>& mb, const PpoConfig& cfg,
                   std::vector<std::vector<S>>* grads = nullptr) {
  const int n = mb.size();
  if (n == 0) throw std::invalid_argument("empty minibatch");
  if (model.spec.action_dim != 1) throw nn::ShapeError("the loss assumes a scalar action");
  typename AgentModel<S>::Cache cache;
  const Matrix<S> mean = model.action_mean(mb.obs, mb.history, &cache);
  const Matrix<S> value = model.value(mb.critic_in, &cache);
  const S raw_ls = model.log_std[0];
  const S ls = nn::clamp_log_std(raw_ls);
  const S var = std::exp(S(2) * ls);

  LossStats st;
  Matrix<S> d_mean(1, n), d_value(1, n);
  S d_ls = 0;
  const S inv_n = S(1) / S(n);
  for (int i = 0; i < n; ++i) {
    const S diff = mb.actions[i] - mean(0, i);
    const S lp = S(-0.5) * diff * diff / var - ls - S(nn::kHalfLog2Pi);
    const S log_ratio = lp - mb.log_probs[i];
    const S ratio = std::exp(log_ratio);
    const S adv = mb.advantages[i];
    const S clipped = std::clamp(ratio, S(1 - cfg.clip_ratio), S(1 + cfg.clip_ratio));
    const bool unclipped_active = ratio * adv <= clipped * adv;
    st.policy -= double(std::min(ratio * adv, clipped * adv)) * inv_n;
    st.clip_frac += (std::abs(double(ratio) - 1.0) > cfg.clip_ratio) ? inv_n : 0.0;
    st.approx_kl += double((ratio - S(1)) - log_ratio) * inv_n;
    const S d_lp = unclipped_active ? -ratio * adv * inv_n : S(0);
    d_mean(0, i) = d_lp * diff / var;
    d_ls += d_lp * (diff * diff / var - S(1));

    const S verr = value(0, i) - mb.returns[i];
    st.value += double(verr * verr) * inv_n;
    d_value(0, i) = S(cfg.value_coef) * S(2) * verr * inv_n;
  }
  st.entropy = double(nn::gaussian_entropy<S>(std::span<const S>(&ls, 1)));
  d_ls -= S(cfg.entropy_coef);

  Matrix<S> d_pred;
  typename naht::TeamDecoder<S>::Cache dec_cache;
  const bool use_recon = model.decoder && cfg.recon_coef > 0 && model.spec.num_unctrl > 0 &&
                         !model.spec.zero_embedding;
  if (use_recon) {
    const int m = model.spec.num_unctrl;
    const Matrix<S> rows = naht::uncontrolled_rows(model.spec.history_layout(), mb.history, m);
    model.decoder->forward(cache.embedding, rows, m, &dec_cache);
    st.recon = double(naht::reconstruction_loss<S>(dec_cache.out, mb.teammate_actions, grads ? &d_pred : nullptr));
  }
  st.total = st.policy + cfg.value_coef * st.value - cfg.entropy_coef * st.entropy + cfg.recon_coef * st.recon;
  if (!std::isfinite(st.total)) throw nn::NonFiniteGradient("non-finite PPO loss");
  if (!grads) return st;

  auto& g = *grads;
  const Matrix<S> d_in = model.actor.backward(cache.actor, d_mean, g[0]);
  const bool inside = raw_ls > S(nn::kLogStdMin) && raw_ls < S(nn::kLogStdMax);
  if (inside) g[1][0] += d_ls;
  model.critic.backward(cache.critic, d_value, g[2]);

  if (model.encoder && !model.spec.zero_embedding) {
    Matrix<S> d_emb = d_in.bottomRows(model.spec.embedding);
    if (use_recon) {
      d_pred *= S(cfg.recon_coef);
      d_emb += naht::decoder_backward(*model.decoder, dec_cache, d_pred, std::span<S>(g[7]));
    }
    typename naht::TeamEncoder<S>::Grad eg{std::move(g[3]), std::move(g[4]), std::move(g[5]), std::move(g[6])};
    model.encoder->backward(cache.encoder, d_emb, eg);
    g[3] = std::move(eg.evader), g[4] = std::move(eg.self), g[5] = std::move(eg.relative), g[6] = std::move(eg.logits);
  }
  return st;
}

// -- update -----------------------------------------------------------------------

template <typename S>
struct AgentOptimizer {
  std::vector<nn::OptimizerState<S>> blocks;

  AgentOptimizer() = default;
  AgentOptimizer(const AgentModel<S>& m, double lr) {
    for (auto b : m.blocks()) blocks.emplace_back(b.size(), lr);
  }
  void set_lr(double lr) {
    for (auto& b : blocks) b.lr = lr;
  }
  double lr() const { return blocks.empty() ? 0.0 : blocks.front().lr; }
  bool operator==(const AgentOptimizer&) const = default;
};

/// Normalizes advantages over the whole batch, then runs up to cfg.epochs passes of
/// shuffled minibatches. Returns loss statistics averaged over the minibatch steps taken.
template <typename S>
LossStats ppo_update(AgentModel<S>& model, AgentOptimizer<S>& opt, PpoBatch<S> batch, const PpoConfig& cfg,
                     Rng& rng) {
  cfg.validate();
  if (batch.size() != cfg.batch)
    throw std::invalid_argument("batch has " + std::to_string(batch.size()) + " samples, expected " +
                                std::to_string(cfg.batch));
  normalize_advantages<S>(batch.advantages);
  std::vector<int> order(batch.size());
  LossStats acc;
  int steps = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (int i = batch.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (int start = 0; start < batch.size(); start += cfg.minibatch) {
      const auto mb = batch.select(std::span<const int>(order).subspan(start, cfg.minibatch));
      auto grads = model.zero_grads();
      LossStats st = ppo_loss(model, mb, cfg, &grads);
      std::vector<std::span<S>> gspans(grads.begin(), grads.end());
      st.grad_norm = nn::clip_global_norm<S>(gspans, cfg.max_grad_norm);
      auto params = model.blocks();
      for (std::size_t b = 0; b < params.size(); ++b)
        nn::optimizer_step<S>(opt.blocks[b], params[b], grads[b]);
      for (auto& v : model.log_std) v = nn::clamp_log_std(v);
      acc += st;
      ++steps;
      if (cfg.target_kl > 0 && st.approx_kl > 1.5 * cfg.target_kl) {
        stop = true;
        break;
      }
    }
  }
  LossStats out = steps ? acc.scaled(1.0 / steps) : acc;
  out.minibatch_steps = steps;
  return out;
}

}  // namespace pursuit::rl
