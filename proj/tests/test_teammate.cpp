#include <gtest/gtest.h>

#include <cmath>

#include "pursuit/ppo.hpp"

using namespace pursuit;
using namespace pursuit::naht;
using nn::Matrix;

namespace {

double rel_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(a) + std::abs(b)); }

Matrix<double> random_matrix(Rng& rng, int rows, int cols) {
  Matrix<double> m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform(-1, 1);
  return m;
}

// Max relative error between analytic parameter gradients and central differences of f.
double check_blocks(std::vector<std::span<double>> blocks, const std::vector<std::vector<double>>& grads,
                    const std::function<double()>& f) {
  double worst = 0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < blocks.size(); ++k)
    for (std::size_t i = 0; i < blocks[k].size(); ++i) {
      const double keep = blocks[k][i];
      blocks[k][i] = keep + h;
      const double up = f();
      blocks[k][i] = keep - h;
      const double down = f();
      blocks[k][i] = keep;
      worst = std::max(worst, rel_error(grads[k][i], (up - down) / (2 * h)));
    }
  return worst;
}

}  // namespace

TEST(History, EntryLayoutAndPadding) {
  const EnvConfig cfg = builtin_env("4p2e3o");
  const HistoryLayout h(cfg, 3);
  EXPECT_EQ(h.step_size(), 6 + 8 + 9);
  EXPECT_EQ(h.size(), 3 * 23);
  Observation obs(ObservationLayout(cfg).size());
  for (std::size_t i = 0; i < obs.size(); ++i) obs[i] = 0.01 * (i + 1);

  const auto e = history_entry(h, obs, 0.7);
  // evaders, then self + obstacle + previous action, then teammates
  for (int i = 0; i < 6; ++i) EXPECT_EQ(e[i], obs[4 + i]);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(e[6 + i], obs[i]);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(e[10 + i], obs[10 + i]);
  EXPECT_EQ(e[13], 0.7);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(e[14 + i], obs[13 + i]);

  HistoryTracker t(h);
  auto w = t.push(obs);
  for (int i = 0; i < 2 * 23; ++i) EXPECT_EQ(w[i], 0.0);
  EXPECT_EQ(w[2 * 23 + 13], 0.0);
  t.record_action(0.5);
  w = t.push(obs);
  EXPECT_EQ(w[23 + 13], 0.0);
  EXPECT_EQ(w[2 * 23 + 13], 0.5);
  t.push(obs);
  t.record_action(-0.25);
  w = t.push(obs);
  EXPECT_EQ(w[13], 0.5);
  EXPECT_EQ(w[2 * 23 + 13], -0.25);
  t.reset();
  w = t.push(obs);
  EXPECT_EQ(w[2 * 23 + 13], 0.0);
  EXPECT_EQ(w[0], 0.0);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  const HistoryLayout h(2, 3, 2);
  TeamEncoder<double> enc(h, 5, 7, rng);
  enc.mix_logits = {0.3, -0.2, 0.5};
  const Matrix<double> x = random_matrix(rng, h.size(), 4);
  const Matrix<double> w = random_matrix(rng, 5, 4);
  auto f = [&] { return (enc.forward(x).array() * w.array()).sum(); };
  typename TeamEncoder<double>::Cache c;
  enc.forward(x, &c);
  auto g = enc.zero_grad();
  enc.backward(c, w, g);
  EXPECT_LT(check_blocks(enc.blocks(), {g.evader, g.self, g.relative, g.logits}, f), 1e-4);
}

TEST(Encoder, RelativeBranchIsPermutationInvariant) {
  Rng rng(2);
  const HistoryLayout h(2, 3, 2);
  TeamEncoder<double> enc(h, 5, 7, rng);
  Matrix<double> x = random_matrix(rng, h.size(), 1);
  Matrix<double> y = x;
  for (int s = 0; s < h.length; ++s) {
    const int rel = s * h.step_size() + h.evader_block() + HistoryLayout::kSelfBlock;
    // rotate teammate rows 0 -> 1 -> 2 -> 0 in every step
    for (int j = 0; j < 3; ++j) y.block(rel + 3 * ((j + 1) % 3), 0, 3, 1) = x.block(rel + 3 * j, 0, 3, 1);
  }
  EXPECT_LT((enc.forward(x) - enc.forward(y)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decoder, KlFixture) {
  Matrix<double> pred(2, 1);
  pred << 0.5, std::log(0.1);
  Matrix<double> act(1, 1);
  act << 0.0;
  EXPECT_NEAR(reconstruction_loss<double>(pred, act), 12.5, 1e-9);
  pred(0, 0) = 0.0;
  EXPECT_NEAR(reconstruction_loss<double>(pred, act), 0.0, 1e-12);
}

TEST(Decoder, SaturatedLogStdHasNoGradient) {
  Matrix<double> pred(2, 2);
  pred << 0.1, -0.2, 3.0, -7.0;
  Matrix<double> act(2, 1);
  act << 0.3, 0.0;
  Matrix<double> d;
  reconstruction_loss<double>(pred, act, &d);
  EXPECT_EQ(d(1, 0), 0.0);
  EXPECT_EQ(d(1, 1), 0.0);
  EXPECT_NE(d(0, 0), 0.0);
}

TEST(Decoder, LossAndEmbeddingGradientsMatchFiniteDifferences) {
  Rng rng(3);
  const int E = 4, B = 3, M = 2;
  TeamDecoder<double> dec(E, 6, rng);
  for (auto& p : dec.head.params()) p *= 50;  // leave the near-zero initialization
  Matrix<double> emb = random_matrix(rng, E, B);
  const Matrix<double> rows = random_matrix(rng, 3, B * M);
  Matrix<double> act = random_matrix(rng, M, B);
  auto f = [&] {
    typename TeamDecoder<double>::Cache c;
    dec.forward(emb, rows, M, &c);
    return reconstruction_loss<double>(c.out, act);
  };
  typename TeamDecoder<double>::Cache c;
  dec.forward(emb, rows, M, &c);
  Matrix<double> d;
  reconstruction_loss<double>(c.out, act, &d);
  std::vector<double> g(dec.head.param_count(), 0.0);
  const Matrix<double> d_emb = decoder_backward(dec, c, d, std::span<double>(g));
  EXPECT_LT(check_blocks({dec.head.params()}, {g}, f), 1e-4);
  std::vector<double> ed(d_emb.data(), d_emb.data() + d_emb.size());
  EXPECT_LT(check_blocks({std::span<double>(emb.data(), emb.size())}, {ed}, f), 1e-4);
}

TEST(Decoder, UncontrolledRowsAreTheLastTeammates) {
  const HistoryLayout h(2, 3, 2);
  Matrix<double> w(h.size(), 1);
  for (int i = 0; i < h.size(); ++i) w(i, 0) = i;
  const auto rows = uncontrolled_rows<double>(h, w, 2);
  const int rel = h.step_size() + h.evader_block() + HistoryLayout::kSelfBlock;
  for (int u = 0; u < 2; ++u)
    for (int k = 0; k < 3; ++k) EXPECT_EQ(rows(k, u), rel + 3 * (1 + u) + k);
}

// With beta = 0 and a zeroed embedding, the encoder-augmented agent computes exactly the
// centralized-critic PPO loss of a plain agent sharing its actor weights.
TEST(Naht, ZeroEmbeddingWithoutReconstructionEqualsCentralCritic) {
  using namespace pursuit::rl;
  const EnvConfig env = builtin_env("4p2e3o");
  ModelSpec plain = base_spec(env);
  plain.hidden = 8;
  plain.critic_input = central_critic_size(env, 2);
  plain.central_critic = true;
  ModelSpec aug = plain;
  aug.embedding = 16;
  aug.decoder = true;
  aug.zero_embedding = true;
  Rng rng(7);
  auto a = AgentModel<double>::create(aug, rng);
  auto p = AgentModel<double>::create(plain, rng);
  p.critic = a.critic;
  p.log_std = a.log_std;
  for (int l = 0; l < a.actor.num_layers(); ++l) {
    p.actor.bias(l) = a.actor.bias(l);
    p.actor.weight(l) = l == 0 ? Matrix<double>(a.actor.weight(0).leftCols(plain.obs_size)) : Matrix<double>(a.actor.weight(l));
  }

  const int n = 16;
  PpoBatch<double> b;
  b.obs = random_matrix(rng, plain.obs_size, n);
  b.history = random_matrix(rng, aug.history_layout().size(), n);
  b.critic_in = random_matrix(rng, plain.critic_input, n);
  b.teammate_actions = random_matrix(rng, aug.num_unctrl, n);
  for (int i = 0; i < n; ++i) {
    b.actions.push_back(rng.uniform(-1, 1));
    b.log_probs.push_back(rng.uniform(-1, 0));
    b.values.push_back(rng.uniform(-1, 1));
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  PpoConfig cfg;
  cfg.recon_coef = 0.0;
  auto ga = a.zero_grads();
  auto gp = p.zero_grads();
  const auto la = ppo_loss(a, b, cfg, &ga);
  const auto lp = ppo_loss(p, b, cfg, &gp);
  EXPECT_NEAR(la.total, lp.total, 1e-12);
  EXPECT_EQ(la.recon, 0.0);
  for (std::size_t k = 1; k < 3; ++k)
    for (std::size_t i = 0; i < gp[k].size(); ++i) EXPECT_NEAR(ga[k][i], gp[k][i], 1e-12);
  for (std::size_t k = 3; k < ga.size(); ++k)
    for (double v : ga[k]) EXPECT_EQ(v, 0.0);
}
