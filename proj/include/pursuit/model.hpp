#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "nn.hpp"
#include "teammate.hpp"

namespace pursuit::rl {

using nn::Matrix;
using nn::Mlp;
using nn::Vector;

/// Architecture of one actor-critic agent. `embedding > 0` adds the history encoder whose
/// output is appended to the actor input; `decoder` adds the teammate action decoder.
struct ModelSpec {
  int obs_size = 0;
  int critic_input = 0;
  int hidden = 128;
  int hidden_layers = 2;
  int action_dim = 1;
  double init_std = 0.5;

  int embedding = 0;
  int history = 1;
  int num_e = 0;
  int num_teammates = 0;
  int num_unctrl = 0;
  bool decoder = false;
  bool zero_embedding = false;  // feed zeros in place of the embedding

  bool central_critic = false;

  naht::HistoryLayout history_layout() const { return {num_e, num_teammates, history}; }
  int actor_input() const { return obs_size + embedding; }
  bool has_encoder() const { return embedding > 0; }

  std::vector<int> dims(int in, int out) const {
    std::vector<int> d{in};
    for (int i = 0; i < hidden_layers; ++i) d.push_back(hidden);
    d.push_back(out);
    return d;
  }

  bool operator==(const ModelSpec&) const = default;
};

inline Json to_json(const ModelSpec& s) {
  return Json{{"obs_size", s.obs_size},   {"critic_input", s.critic_input},
              {"hidden", s.hidden},       {"hidden_layers", s.hidden_layers},
              {"action_dim", s.action_dim}, {"init_std", s.init_std},
              {"embedding", s.embedding}, {"history", s.history},
              {"num_e", s.num_e},         {"num_teammates", s.num_teammates},
              {"num_unctrl", s.num_unctrl}, {"decoder", s.decoder},
              {"zero_embedding", s.zero_embedding}, {"central_critic", s.central_critic}};
}

inline ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec s;
  s.obs_size = j.at("obs_size");
  s.critic_input = j.at("critic_input");
  s.hidden = j.at("hidden");
  s.hidden_layers = j.at("hidden_layers");
  s.action_dim = j.at("action_dim");
  s.init_std = j.at("init_std");
  s.embedding = j.at("embedding");
  s.history = j.at("history");
  s.num_e = j.at("num_e");
  s.num_teammates = j.at("num_teammates");
  s.num_unctrl = j.at("num_unctrl");
  s.decoder = j.at("decoder");
  s.zero_embedding = j.at("zero_embedding");
  s.central_critic = j.at("central_critic");
  return s;
}

/// Length of the centralized critic input: every learner observation plus the evader
/// positions (normalized like the self block).
inline int central_critic_size(const EnvConfig& cfg, int num_learners) {
  return num_learners * ObservationLayout(cfg).size() + 2 * cfg.players.num_e;
}

/// Spec for a plain actor-critic on `cfg`.
inline ModelSpec base_spec(const EnvConfig& cfg) {
  ModelSpec s;
  s.obs_size = ObservationLayout(cfg).size();
  s.critic_input = s.obs_size;
  s.num_e = cfg.players.num_e;
  s.num_teammates = cfg.players.num_p - 1;
  s.num_unctrl = cfg.players.num_unctrl;
  return s;
}

template <typename S>
struct AgentModel {
  ModelSpec spec;
  Mlp<S> actor;
  std::vector<S> log_std;
  Mlp<S> critic;
  std::optional<naht::TeamEncoder<S>> encoder;
  std::optional<naht::TeamDecoder<S>> decoder;

  static AgentModel create(const ModelSpec& spec, Rng& rng) {
    AgentModel m;
    m.spec = spec;
    m.actor = Mlp<S>::initialized(spec.dims(spec.actor_input(), spec.action_dim), rng, 0.01);
    m.log_std.assign(spec.action_dim, static_cast<S>(std::log(spec.init_std)));
    m.critic = Mlp<S>::initialized(spec.dims(spec.critic_input, 1), rng);
    if (spec.has_encoder()) {
      m.encoder.emplace(spec.history_layout(), spec.embedding, spec.hidden, rng);
      if (spec.decoder) m.decoder.emplace(spec.embedding, spec.hidden, rng);
    }
    return m;
  }

  /// Parameter blocks in a fixed order; gradients and optimizer states use the same order.
  std::vector<std::span<S>> blocks() {
    std::vector<std::span<S>> b{actor.params(), std::span<S>(log_std), critic.params()};
    if (encoder)
      for (auto s : encoder->blocks()) b.push_back(s);
    if (decoder) b.push_back(decoder->head.params());
    return b;
  }
  std::vector<std::span<const S>> blocks() const {
    std::vector<std::span<const S>> out;
    for (auto s : const_cast<AgentModel*>(this)->blocks()) out.emplace_back(s.data(), s.size());
    return out;
  }

  std::vector<std::string> block_names() const {
    std::vector<std::string> n{"actor", "log_std", "critic"};
    if (encoder) n.insert(n.end(), {"encoder.evader", "encoder.self", "encoder.relative", "encoder.mix"});
    if (decoder) n.push_back("decoder");
    return n;
  }

  std::vector<std::vector<S>> zero_grads() const {
    std::vector<std::vector<S>> g;
    for (auto b : blocks()) g.emplace_back(b.size(), S(0));
    return g;
  }

  template <typename T>
  AgentModel<T> cast() const {
    Rng rng(0);
    AgentModel<T> out = AgentModel<T>::create(spec, rng);
    auto src = blocks();
    auto dst = out.blocks();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::size_t j = 0; j < src[i].size(); ++j) dst[i][j] = static_cast<T>(src[i][j]);
    return out;
  }

  bool same_params(const AgentModel& o) const {
    auto a = blocks();
    auto b = o.blocks();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!std::equal(a[i].begin(), a[i].end(), b[i].begin(), b[i].end())) return false;
    return true;
  }

  // -- batched inference -------------------------------------------------------------

  struct Cache {
    typename naht::TeamEncoder<S>::Cache encoder;
    typename Mlp<S>::Cache actor, critic;
    Matrix<S> embedding;
  };

  /// (embedding x B); zeros when the model has no encoder or the embedding is zeroed.
  Matrix<S> embed(const Matrix<S>& history, Cache* cache = nullptr) const {
    const Eigen::Index batch = history.cols();
    if (!encoder || spec.zero_embedding) return Matrix<S>::Zero(spec.embedding, batch);
    return encoder->forward(history, cache ? &cache->encoder : nullptr);
  }

  /// Action means (action_dim x B). `history` is ignored without an encoder.
  Matrix<S> action_mean(const Matrix<S>& obs, const Matrix<S>& history, Cache* cache = nullptr) const {
    if (spec.embedding == 0) return actor.forward(obs, cache ? &cache->actor : nullptr);
    Matrix<S> emb = embed(history, cache);
    Matrix<S> in(spec.actor_input(), obs.cols());
    in.topRows(spec.obs_size) = obs;
    in.bottomRows(spec.embedding) = emb;
    if (cache) cache->embedding = emb;
    return actor.forward(in, cache ? &cache->actor : nullptr);
  }

  Matrix<S> value(const Matrix<S>& critic_in, Cache* cache = nullptr) const {
    return critic.forward(critic_in, cache ? &cache->critic : nullptr);
  }

  std::vector<S> clamped_log_std() const {
    std::vector<S> out(log_std);
    for (auto& v : out) v = nn::clamp_log_std(v);
    return out;
  }
};

// -- checkpoint io -----------------------------------------------------------------

template <typename S>
Archive to_archive(const AgentModel<S>& m, Json meta = Json::object()) {
  Archive a;
  a.meta = std::move(meta);
  a.meta["kind"] = "agent";
  a.meta["spec"] = to_json(m.spec);
  auto names = m.block_names();
  auto blocks = m.blocks();
  auto mlp_dims = [&](const std::string& name) -> const Mlp<S>* {
    if (name == "actor") return &m.actor;
    if (name == "critic") return &m.critic;
    if (name == "encoder.evader") return &m.encoder->evader_branch;
    if (name == "encoder.self") return &m.encoder->self_branch;
    if (name == "encoder.relative") return &m.encoder->relative_branch;
    if (name == "decoder") return &m.decoder->head;
    return nullptr;
  };
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ArchiveComponent c;
    c.name = names[i];
    if (const auto* mlp = mlp_dims(names[i])) {
      c.kind = "mlp";
      c.shape = mlp->dims();
    } else {
      c.kind = "vector";
      c.shape = Json::array({blocks[i].size()});
    }
    c.data.assign(blocks[i].begin(), blocks[i].end());
    a.components.push_back(std::move(c));
  }
  return a;
}

template <typename S>
AgentModel<S> from_archive(const Archive& a) {
  if (!a.meta.contains("kind") || a.meta.at("kind") != "agent")
    throw CheckpointError("checkpoint does not hold an agent model");
  const ModelSpec spec = model_spec_from_json(a.meta.at("spec"));
  Rng rng(0);
  auto m = AgentModel<S>::create(spec, rng);
  auto names = m.block_names();
  auto blocks = m.blocks();
  if (a.components.size() != blocks.size()) throw CheckpointError("checkpoint component count mismatch");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& c = a.at(names[i]);
    if (c.data.size() != blocks[i].size())
      throw CheckpointError("component '" + names[i] + "' has " + std::to_string(c.data.size()) +
                            " values, expected " + std::to_string(blocks[i].size()));
    for (std::size_t j = 0; j < c.data.size(); ++j) blocks[i][j] = static_cast<S>(c.data[j]);
  }
  return m;
}

template <typename S>
void save_model(const std::filesystem::path& path, const AgentModel<S>& m, Json meta = Json::object()) {
  write_archive(path, to_archive(m, std::move(meta)));
}

template <typename S = float>
AgentModel<S> load_model(const std::filesystem::path& path) {
  return from_archive<S>(read_archive(path));
}

}  // namespace pursuit::rl
