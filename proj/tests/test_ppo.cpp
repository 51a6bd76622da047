#include <gtest/gtest.h>

#include <cmath>

#include "pursuit/ppo.hpp"

using namespace pursuit;
using namespace pursuit::rl;

namespace {

ModelSpec tiny_spec(bool encoder, bool decoder) {
  ModelSpec s;
  s.obs_size = 4 + 3 * 2 + 3 + 3 * 3;
  s.critic_input = 7;
  s.hidden = 6;
  s.num_e = 2;
  s.num_teammates = 3;
  s.num_unctrl = 2;
  if (encoder) {
    s.embedding = 4;
    s.history = 2;
    s.decoder = decoder;
  }
  return s;
}

PpoBatch<double> random_batch(const ModelSpec& s, int n, Rng& rng) {
  PpoBatch<double> b;
  auto fill = [&](Matrix<double>& m, int rows) {
    m.resize(rows, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform(-1, 1);
  };
  fill(b.obs, s.obs_size);
  fill(b.history, s.has_encoder() ? s.history_layout().size() : 0);
  fill(b.critic_in, s.critic_input);
  fill(b.teammate_actions, s.num_unctrl);
  for (int i = 0; i < n; ++i) {
    b.actions.push_back(rng.uniform(-1, 1));
    b.log_probs.push_back(rng.uniform(-1.5, 0.0));
    b.values.push_back(rng.uniform(-1, 1));
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  return b;
}

double max_rel_error(AgentModel<double>& m, const PpoBatch<double>& b, const PpoConfig& cfg) {
  auto grads = m.zero_grads();
  ppo_loss(m, b, cfg, &grads);
  auto blocks = m.blocks();
  double worst = 0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < blocks.size(); ++k)
    for (std::size_t i = 0; i < blocks[k].size(); ++i) {
      const double keep = blocks[k][i];
      blocks[k][i] = keep + h;
      const double up = ppo_loss(m, b, cfg).total;
      blocks[k][i] = keep - h;
      const double down = ppo_loss(m, b, cfg).total;
      blocks[k][i] = keep;
      const double fd = (up - down) / (2 * h);
      const double err = std::abs(fd - grads[k][i]) / std::max(1e-6, std::abs(fd) + std::abs(grads[k][i]));
      worst = std::max(worst, err);
    }
  return worst;
}

}  // namespace

TEST(PpoLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  auto spec = tiny_spec(false, false);
  auto m = AgentModel<double>::create(spec, rng);
  m.actor = nn::Mlp<double>::initialized(spec.dims(spec.actor_input(), 1), rng, 1.0);
  auto b = random_batch(spec, 16, rng);
  PpoConfig cfg;
  EXPECT_LT(max_rel_error(m, b, cfg), 1e-4);
}

TEST(PpoLoss, JointLossWithEncoderAndDecoderMatchesFiniteDifferences) {
  Rng rng(4);
  auto spec = tiny_spec(true, true);
  auto m = AgentModel<double>::create(spec, rng);
  m.actor = nn::Mlp<double>::initialized(spec.dims(spec.actor_input(), 1), rng, 1.0);
  m.decoder->head = nn::Mlp<double>::initialized({spec.embedding + 3, spec.hidden, 2}, rng, 1.0);
  m.encoder->mix_logits = {0.3, -0.2, 0.1};
  auto b = random_batch(spec, 12, rng);
  PpoConfig cfg;
  EXPECT_LT(max_rel_error(m, b, cfg), 1e-3);
}

namespace {

// A_t = sum_l (gamma lambda)^l delta_{t+l}, stopping after the first terminal at or after t.
std::vector<double> brute_force_gae(const std::vector<double>& r, const std::vector<double>& v,
                                    const std::vector<std::uint8_t>& done, double boot, double g, double l) {
  const std::size_t n = r.size();
  std::vector<double> adv(n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0, w = 1;
    for (std::size_t k = t; k < n; ++k) {
      const double next = done[k] ? 0.0 : (k + 1 < n ? v[k + 1] : boot);
      sum += w * (r[k] + g * next - v[k]);
      if (done[k]) break;
      w *= g * l;
    }
    adv[t] = sum;
  }
  return adv;
}

}  // namespace

TEST(Gae, MatchesBruteForce) {
  Rng rng(8);
  for (int seq = 0; seq < 100; ++seq) {
    const int n = 1 + static_cast<int>(rng.below(200));
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> done(n);
    for (int i = 0; i < n; ++i) {
      r[i] = rng.uniform(-10, 10);
      v[i] = rng.uniform(-5, 5);
      done[i] = rng.uniform() < 0.05;
    }
    const double boot = rng.uniform(-5, 5), g = rng.uniform(0.9, 1.0), l = rng.uniform(0.5, 1.0);
    const auto got = compute_gae<double>(r, v, done, boot, g, l);
    const auto want = brute_force_gae(r, v, done, boot, g, l);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(got.advantages[i], want[i], 1e-6);
      EXPECT_NEAR(got.returns[i], want[i] + v[i], 1e-6);
    }
  }
}

TEST(Gae, TerminalBlocksBootstrap) {
  const std::vector<double> r{1, 2}, v{0.5, 0.5};
  const std::vector<std::uint8_t> done{0, 1};
  const auto out = compute_gae<double>(r, v, done, 100.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(out.returns[1], 2.0);
  EXPECT_DOUBLE_EQ(out.returns[0], 3.0);
  EXPECT_THROW(compute_gae<double>(r, std::vector<double>{1.0}, done, 0.0, 1.0, 1.0), std::invalid_argument);
}

TEST(Advantages, NormalizedToZeroMeanUnitStd) {
  Rng rng(9);
  std::vector<double> a(1000);
  for (auto& x : a) x = rng.uniform(-3, 7);
  normalize_advantages<double>(a);
  double mean = 0, sq = 0;
  for (double x : a) mean += x;
  mean /= a.size();
  for (double x : a) sq += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(sq / a.size()), 1.0, 1e-6);
}

TEST(PpoLoss, RatioIsOneBeforeAnyUpdate) {
  Rng rng(10);
  auto spec = tiny_spec(false, false);
  auto m = AgentModel<double>::create(spec, rng);
  auto b = random_batch(spec, 32, rng);
  const auto mean = m.action_mean(b.obs, b.history);
  const auto ls = m.clamped_log_std();
  for (int i = 0; i < b.size(); ++i) {
    const double mu = mean(0, i), a = b.actions[i];
    b.log_probs[i] = nn::gaussian_log_prob<double>(std::span<const double>(&mu, 1), ls, std::span<const double>(&a, 1));
  }
  const auto st = ppo_loss(m, b, PpoConfig{});
  EXPECT_NEAR(st.approx_kl, 0.0, 1e-12);
  EXPECT_EQ(st.clip_frac, 0.0);
  double expect_policy = 0;
  for (double a : b.advantages) expect_policy -= a;
  EXPECT_NEAR(st.policy, expect_policy / b.size(), 1e-12);
}

TEST(PpoUpdate, ImprovesSurrogateAndChecksBatch) {
  Rng rng(11);
  auto spec = tiny_spec(false, false);
  auto m = AgentModel<double>::create(spec, rng);
  PpoConfig cfg;
  cfg.batch = 64;
  cfg.minibatch = 16;
  cfg.epochs = 4;
  cfg.lr = 1e-3;
  auto b = random_batch(spec, 64, rng);
  const auto mean = m.action_mean(b.obs, b.history);
  const auto ls = m.clamped_log_std();
  for (int i = 0; i < b.size(); ++i) {
    const double mu = mean(0, i), a = b.actions[i];
    b.log_probs[i] = nn::gaussian_log_prob<double>(std::span<const double>(&mu, 1), ls, std::span<const double>(&a, 1));
  }
  AgentOptimizer<double> opt(m, cfg.lr);
  auto normalized = b;
  normalize_advantages<double>(normalized.advantages);
  const double before = ppo_loss(m, normalized, cfg).total;
  const auto st = ppo_update(m, opt, b, cfg, rng);
  EXPECT_GT(st.minibatch_steps, 0);
  EXPECT_LE(st.minibatch_steps, 16);
  EXPECT_LT(ppo_loss(m, normalized, cfg).total, before);
  cfg.batch = 128;
  EXPECT_THROW(ppo_update(m, opt, b, cfg, rng), std::invalid_argument);
}

TEST(PpoConfig, DefaultsAndValidation) {
  const PpoConfig c;
  EXPECT_EQ(c.gamma, 0.99);
  EXPECT_EQ(c.gae_lambda, 0.95);
  EXPECT_EQ(c.lr, 3e-4);
  EXPECT_EQ(c.clip_ratio, 0.2);
  EXPECT_EQ(c.value_coef, 1.0);
  EXPECT_EQ(c.entropy_coef, 0.01);
  EXPECT_EQ(c.epochs, 20);
  EXPECT_EQ(c.batch, 1024);
  EXPECT_EQ(c.minibatch, 256);
  EXPECT_EQ(c.total_steps, 1'000'000);
  PpoConfig bad;
  bad.minibatch = 300;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
