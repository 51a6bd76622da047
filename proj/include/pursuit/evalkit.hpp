#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "episode.hpp"

namespace pursuit::eval {

using rl::EpisodeRecord;
using rl::PolicyRef;

// -- zoos -------------------------------------------------------------------------------

/// Self-play checkpoints available for zoo construction, each with its measured SUC.
struct ZooAssets {
  std::vector<PolicyRef> self_play;
  std::vector<double> self_play_suc;
};

struct ZooSpec {
  std::string id;
  std::vector<PolicyRef> members;
  std::vector<double> member_suc;  // measured SUC of self-play members; NaN for scripted
};

class ZooError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline ZooSpec zoo1() { return {"zoo1", {PolicyRef::scripted("greedy")}, {NAN}}; }

/// The pair of self-play checkpoints whose SUCs are furthest apart, stronger first.
inline ZooSpec zoo2(const ZooAssets& a) {
  if (a.self_play.size() < 2) throw ZooError("zoo2 needs at least two self-play checkpoints");
  if (a.self_play.size() != a.self_play_suc.size()) throw ZooError("every self-play checkpoint needs a measured SUC");
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < a.self_play.size(); ++i) {
    if (a.self_play_suc[i] < a.self_play_suc[lo]) lo = i;
    if (a.self_play_suc[i] > a.self_play_suc[hi]) hi = i;
  }
  if (lo == hi) hi = lo == 0 ? 1 : 0;
  return {"zoo2", {a.self_play[hi], a.self_play[lo]}, {a.self_play_suc[hi], a.self_play_suc[lo]}};
}

inline ZooSpec build_zoo(const std::string& id, const ZooAssets& a) {
  if (id == "zoo1" || id == "1") return zoo1();
  if (id == "zoo2" || id == "2") return zoo2(a);
  if (id == "zoo3" || id == "3") {
    ZooSpec z1 = zoo1(), z2 = zoo2(a);
    ZooSpec z{"zoo3", z1.members, z1.member_suc};
    z.members.insert(z.members.end(), z2.members.begin(), z2.members.end());
    z.member_suc.insert(z.member_suc.end(), z2.member_suc.begin(), z2.member_suc.end());
    return z;
  }
  throw ZooError("unknown zoo '" + id + "'");
}

/// Asset directory layout: manifest.json {"self_play": [{"id", "checkpoint", "suc"}...]}
/// with checkpoint paths relative to the directory.
inline ZooAssets load_zoo_assets(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw ZooError("missing zoo manifest in " + dir.string());
  Json m;
  try {
    m = Json::parse(f);
  } catch (const std::exception& e) {
    throw ZooError(std::string("malformed zoo manifest: ") + e.what());
  }
  ZooAssets a;
  for (const auto& e : m.at("self_play")) {
    auto model = std::make_shared<rl::AgentModel<float>>(rl::load_model<float>(dir / e.at("checkpoint").get<std::string>()));
    a.self_play.push_back(PolicyRef::learned(e.at("id"), model));
    a.self_play_suc.push_back(e.at("suc"));
  }
  return a;
}

// -- metrics -------------------------------------------------------------------------------

struct Metrics {
  int n_episodes = 0;
  double suc = 0.0;      // percent of episodes ending in success
  int col = 0;           // collision-terminated episodes
  double col_pct = 0.0;  // the same as a percentage
  int timeouts = 0;
  std::optional<double> ast;  // mean steps of successful episodes
  double rew = 0.0;           // mean episode return
};

inline Metrics compute_metrics(const std::vector<EpisodeRecord>& recs) {
  if (recs.empty()) throw std::invalid_argument("no episode records");
  Metrics m;
  m.n_episodes = static_cast<int>(recs.size());
  int successes = 0;
  double steps = 0.0;
  for (const auto& r : recs) {
    if (r.terminal == Terminal::success) {
      ++successes;
      steps += r.steps;
    }
    m.col += r.terminal == Terminal::collision;
    m.timeouts += r.terminal == Terminal::timeout;
    m.rew += r.ret;
  }
  const double n = double(recs.size());
  m.suc = 100.0 * successes / n;
  m.col_pct = 100.0 * m.col / n;
  if (successes > 0) m.ast = steps / successes;
  m.rew /= n;
  return m;
}

struct Dispersion {
  double suc = 0.0, col = 0.0, rew = 0.0;
  std::optional<double> ast;
};

struct EvalReport {
  std::string env;
  std::string zoo;
  std::vector<std::string> learners;
  std::uint64_t seed = 0;
  int seed_blocks = 5;
  Metrics overall;
  std::vector<Metrics> blocks;
  Dispersion dispersion;  // population std over seed blocks
  std::vector<EpisodeRecord> episodes;
};

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const Metrics& m) {
  return Json{{"n_episodes", m.n_episodes}, {"SUC", m.suc}, {"COL", m.col}, {"COL_pct", m.col_pct},
              {"timeouts", m.timeouts},     {"AST", optional_json(m.ast)}, {"REW", m.rew}};
}

inline Json to_json(const EvalReport& r) {
  Json j{{"env", r.env}, {"zoo", r.zoo}, {"learners", r.learners}, {"seed", r.seed}, {"seed_blocks", r.seed_blocks}};
  j["metrics"] = to_json(r.overall);
  j["dispersion"] = {{"SUC", r.dispersion.suc}, {"COL", r.dispersion.col}, {"AST", optional_json(r.dispersion.ast)},
                     {"REW", r.dispersion.rew}};
  j["blocks"] = Json::array();
  for (const auto& b : r.blocks) j["blocks"].push_back(to_json(b));
  j["episodes"] = Json::array();
  for (const auto& e : r.episodes)
    j["episodes"].push_back({{"terminal", std::string(to_string(e.terminal))}, {"steps", e.steps}, {"return", e.ret},
                             {"team", e.teammates}});
  return j;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// One header line and one row per seed block plus an "all" row.
inline std::string to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "block,n_episodes,SUC,COL,COL_pct,timeouts,AST,REW\n";
  auto row = [&](const std::string& name, const Metrics& m) {
    out << name << "," << m.n_episodes << "," << fmt(m.suc) << "," << m.col << "," << fmt(m.col_pct) << ","
        << m.timeouts << "," << (m.ast ? fmt(*m.ast) : "") << "," << fmt(m.rew) << "\n";
  };
  for (std::size_t b = 0; b < r.blocks.size(); ++b) row(std::to_string(b), r.blocks[b]);
  row("all", r.overall);
  return out.str();
}

inline double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / double(v.size()));
}

// -- evaluation protocol --------------------------------------------------------------------

/// Block index of each episode: n episodes split into `blocks` contiguous blocks, the
/// remainder going to the last block.
inline int block_of(int episode, int n, int blocks) {
  const int size = n / blocks;
  return std::min(episode / size, blocks - 1);
}

/// Seed of an episode and the zoo members filling the uncontrolled slots.
inline std::uint64_t episode_seed(std::uint64_t seed, int block, int episode) {
  return derive_seed(derive_seed(seed, "eval-block", block), "episode", episode);
}

inline std::vector<PolicyRef> sample_zoo(const ZooSpec& zoo, int slots, Rng& rng) {
  if (zoo.members.empty()) throw ZooError("zoo '" + zoo.id + "' has no members");
  std::vector<PolicyRef> out;
  for (int i = 0; i < slots; ++i) out.push_back(zoo.members[rng.below(zoo.members.size())]);
  return out;
}

/// Learners fill slots [0, N) in order (a single learner is repeated across all N);
/// zoo members drawn per episode fill [N, num_p).
inline EvalReport run_evaluation(const std::vector<PolicyRef>& learners, const ZooSpec& zoo, const EnvConfig& cfg,
                                 int n_episodes = 250, std::uint64_t seed = 0, int seed_blocks = 5, int jobs = 1) {
  if (n_episodes <= 0) throw std::invalid_argument("n_episodes must be positive");
  if (learners.empty()) throw std::invalid_argument("at least one learner policy is required");
  const int n = cfg.players.num_ctrl, m = cfg.players.num_p - n;
  if (learners.size() != 1 && static_cast<int>(learners.size()) != n)
    throw std::invalid_argument("expected 1 or " + std::to_string(n) + " learner policies");
  for (const auto& l : learners)
    if (l.model && l.model->spec.obs_size != ObservationLayout(cfg).size())
      throw nn::ShapeError("policy '" + l.id + "' expects " + std::to_string(l.model->spec.obs_size) +
                           "-dim observations; environment provides " + std::to_string(ObservationLayout(cfg).size()));
  const int blocks = std::max(1, std::min(seed_blocks, n_episodes));

  EvalReport rep;
  rep.env = cfg.task.task_name;
  rep.zoo = zoo.id;
  for (const auto& l : learners) rep.learners.push_back(l.id);
  rep.seed = seed;
  rep.seed_blocks = blocks;
  rep.episodes.resize(n_episodes);

  auto work = [&](int worker, int stride) {
    for (int ep = worker; ep < n_episodes; ep += stride) {
      const std::uint64_t s = episode_seed(seed, block_of(ep, n_episodes, blocks), ep);
      Rng rng(s, "zoo");
      std::vector<PolicyRef> team;
      for (int i = 0; i < n; ++i) team.push_back(learners.size() == 1 ? learners[0] : learners[i]);
      for (auto& r : sample_zoo(zoo, m, rng)) team.push_back(r);
      rep.episodes[ep] = run_episode(cfg, team, s);
    }
  };
  jobs = std::max(1, std::min(jobs, n_episodes));
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(work, w, jobs);
    for (auto& t : pool) t.join();
  }

  rep.overall = compute_metrics(rep.episodes);
  std::vector<std::vector<EpisodeRecord>> per(blocks);
  for (int ep = 0; ep < n_episodes; ++ep) per[block_of(ep, n_episodes, blocks)].push_back(rep.episodes[ep]);
  std::vector<double> suc, col, rew, ast;
  for (const auto& b : per) {
    rep.blocks.push_back(compute_metrics(b));
    suc.push_back(rep.blocks.back().suc);
    col.push_back(rep.blocks.back().col);
    rew.push_back(rep.blocks.back().rew);
    if (rep.blocks.back().ast) ast.push_back(*rep.blocks.back().ast);
  }
  rep.dispersion = {population_std(suc), population_std(col), population_std(rew), std::nullopt};
  if (!ast.empty()) rep.dispersion.ast = population_std(ast);
  return rep;
}

// -- rendering ---------------------------------------------------------------------------

namespace detail {

struct SvgFrame {
  double scale = 100.0;  // pixels per meter
  double margin = 20.0;
  double height_m = 0.0;
  double x(double v) const { return margin + v * scale; }
  double y(double v) const { return margin + (height_m - v) * scale; }
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// Top-down SVG of an episode: arena, obstacles, trails, start and final markers, and
/// capture / collision markers. Byte-stable for a given trajectory.
inline std::string render_episode(const Trajectory& t) {
  const auto& cfg = t.config;
  detail::SvgFrame f;
  f.height_m = cfg.site.boundary_height;
  const double w = cfg.site.boundary_width * f.scale + 2 * f.margin;
  const double h = cfg.site.boundary_height * f.scale + 2 * f.margin;
  using detail::num;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
    << "\" viewBox=\"0 0 " << num(w) << " " << num(h) << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << num(w) << "\" height=\"" << num(h) << "\" fill=\"white\"/>\n";
  o << "<rect x=\"" << num(f.x(0)) << "\" y=\"" << num(f.y(cfg.site.boundary_height)) << "\" width=\""
    << num(cfg.site.boundary_width * f.scale) << "\" height=\"" << num(cfg.site.boundary_height * f.scale)
    << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  for (const auto& ob : cfg.site.obstacles) {
    const auto& s = ob.shape;
    if (s.kind == ShapeKind::circle) {
      o << "<circle cx=\"" << num(f.x(s.center.x)) << "\" cy=\"" << num(f.y(s.center.y)) << "\" r=\""
        << num(s.radius * f.scale) << "\" fill=\"#888888\"/>\n";
    } else {
      o << "<rect x=\"" << num(f.x(s.center.x - s.half_extents.x)) << "\" y=\""
        << num(f.y(s.center.y + s.half_extents.y)) << "\" width=\"" << num(2 * s.half_extents.x * f.scale)
        << "\" height=\"" << num(2 * s.half_extents.y * f.scale) << "\" fill=\"#888888\"/>\n";
    }
  }
  if (t.steps.empty()) {
    o << "</svg>\n";
    return o.str();
  }

  auto trail = [&](auto pose_of, std::size_t count, const char* color) {
    for (std::size_t i = 0; i < count; ++i) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      const Pose& p0 = pose_of(t.initial, i);
      o << num(f.x(p0.x)) << "," << num(f.y(p0.y));
      for (const auto& s : t.steps) {
        const Pose& p = pose_of(s.state, i);
        o << " " << num(f.x(p.x)) << "," << num(f.y(p.y));
      }
      o << "\"/>\n";
    }
  };
  auto pursuer = [](const WorldState& s, std::size_t i) -> const Pose& { return s.pursuers[i]; };
  auto evader = [](const WorldState& s, std::size_t i) -> const Pose& { return s.evaders[i]; };
  trail(pursuer, t.initial.pursuers.size(), "#d62728");
  trail(evader, t.initial.evaders.size(), "#1f77b4");

  const WorldState& last = t.steps.back().state;
  for (const auto& p : t.initial.pursuers)
    o << "<circle cx=\"" << num(f.x(p.x)) << "\" cy=\"" << num(f.y(p.y)) << "\" r=\"3\" fill=\"none\" stroke=\"#d62728\"/>\n";
  for (const auto& p : last.pursuers)
    o << "<circle cx=\"" << num(f.x(p.x)) << "\" cy=\"" << num(f.y(p.y)) << "\" r=\"6\" fill=\"#d62728\"/>\n";
  for (std::size_t e = 0; e < last.evaders.size(); ++e) {
    const Pose& p = last.evaders[e];
    o << "<circle cx=\"" << num(f.x(p.x)) << "\" cy=\"" << num(f.y(p.y)) << "\" r=\"6\" fill=\"#1f77b4\"/>\n";
  }
  for (const auto& s : t.steps) {
    for (const auto& c : s.events.captures) {
      const Pose& p = s.state.evaders[c.evader];
      const double cx = f.x(p.x), cy = f.y(p.y);
      o << "<path d=\"M" << num(cx - 8) << "," << num(cy - 8) << " L" << num(cx + 8) << "," << num(cy + 8) << " M"
        << num(cx - 8) << "," << num(cy + 8) << " L" << num(cx + 8) << "," << num(cy - 8)
        << "\" stroke=\"#2ca02c\" stroke-width=\"3\"/>\n";
    }
    for (const auto& c : s.events.collisions) {
      const Pose& p = s.state.pursuers[c.a];
      o << "<circle cx=\"" << num(f.x(p.x)) << "\" cy=\"" << num(f.y(p.y))
        << "\" r=\"10\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"3\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace pursuit::eval
