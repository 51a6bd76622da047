#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pursuit/evalkit.hpp"

using namespace pursuit;
using namespace pursuit::eval;

namespace {

rl::EpisodeRecord rec(Terminal t, int steps, double ret = 0.0) {
  rl::EpisodeRecord r;
  r.terminal = t;
  r.steps = steps;
  r.ret = ret;
  return r;
}

PolicyRef tiny_policy(const std::string& id, std::uint64_t seed) {
  const EnvConfig env = builtin_env("4p2e3o");
  rl::ModelSpec s = rl::base_spec(env);
  s.hidden = 8;
  Rng rng(seed);
  return PolicyRef::learned(id, std::make_shared<rl::AgentModel<float>>(rl::AgentModel<float>::create(s, rng)));
}

ZooAssets three_checkpoints() {
  ZooAssets a;
  a.self_play = {tiny_policy("sp-a", 1), tiny_policy("sp-b", 2), tiny_policy("sp-c", 3)};
  a.self_play_suc = {40.0, 90.0, 10.0};
  return a;
}

}  // namespace

TEST(Metrics, MixedOutcomesFixture) {
  // Three successes at 100/200/300 steps, one collision, one timeout.
  const std::vector<rl::EpisodeRecord> recs = {rec(Terminal::success, 100, 1.0), rec(Terminal::success, 200, 2.0),
                                               rec(Terminal::success, 300, 3.0), rec(Terminal::collision, 50, -4.0),
                                               rec(Terminal::timeout, 1000, -2.0)};
  const Metrics m = compute_metrics(recs);
  EXPECT_EQ(m.n_episodes, 5);
  EXPECT_EQ(m.suc, 60.0);
  EXPECT_EQ(m.col, 1);
  EXPECT_EQ(m.col_pct, 20.0);
  EXPECT_EQ(m.timeouts, 1);
  ASSERT_TRUE(m.ast.has_value());
  EXPECT_EQ(*m.ast, 200.0);
  EXPECT_EQ(m.rew, 0.0);
}

TEST(Metrics, NoSuccessLeavesAstUndefined) {
  const Metrics m = compute_metrics({rec(Terminal::timeout, 1000), rec(Terminal::collision, 3)});
  EXPECT_EQ(m.suc, 0.0);
  EXPECT_FALSE(m.ast.has_value());
  EXPECT_TRUE(to_json(m)["AST"].is_null());
  EXPECT_THROW(compute_metrics({}), std::invalid_argument);
}

TEST(Metrics, PopulationStd) {
  EXPECT_EQ(population_std({}), 0.0);
  EXPECT_EQ(population_std({5.0, 5.0, 5.0}), 0.0);
  EXPECT_DOUBLE_EQ(population_std({2, 4, 4, 4, 5, 5, 7, 9}), 2.0);
}

TEST(Metrics, CsvHasOneRowPerBlockAndTotal) {
  EvalReport r;
  r.blocks = {compute_metrics({rec(Terminal::success, 10)}), compute_metrics({rec(Terminal::timeout, 1000)})};
  r.overall = compute_metrics({rec(Terminal::success, 10), rec(Terminal::timeout, 1000)});
  const std::string csv = to_csv(r);
  EXPECT_EQ(csv,
            "block,n_episodes,SUC,COL,COL_pct,timeouts,AST,REW\n"
            "0,1,100,0,0,0,10,0\n"
            "1,1,0,0,0,1,,0\n"
            "all,2,50,0,0,1,10,0\n");
}

TEST(Protocol, BlocksAreContiguousWithRemainderLast) {
  std::vector<int> counts(5, 0);
  for (int ep = 0; ep < 250; ++ep) ++counts[block_of(ep, 250, 5)];
  EXPECT_EQ(counts, std::vector<int>(5, 50));
  std::vector<int> odd(3, 0);
  for (int ep = 0; ep < 11; ++ep) ++odd[block_of(ep, 11, 3)];
  EXPECT_EQ(odd, (std::vector<int>{3, 3, 5}));
  EXPECT_NE(episode_seed(0, 0, 0), episode_seed(0, 0, 1));
  EXPECT_NE(episode_seed(0, 0, 0), episode_seed(0, 1, 0));
  EXPECT_EQ(episode_seed(7, 2, 3), episode_seed(7, 2, 3));
}

TEST(Zoo, FirstZooIsGreedy) {
  const ZooSpec z = zoo1();
  ASSERT_EQ(z.members.size(), 1u);
  EXPECT_EQ(z.members[0].id, "greedy");
  EXPECT_FALSE(z.members[0].is_learned());
}

TEST(Zoo, SecondZooPicksExtremes) {
  const ZooSpec z = zoo2(three_checkpoints());
  ASSERT_EQ(z.members.size(), 2u);
  EXPECT_EQ(z.members[0].id, "sp-b");
  EXPECT_EQ(z.members[1].id, "sp-c");
  EXPECT_EQ(z.member_suc, (std::vector<double>{90.0, 10.0}));
}

TEST(Zoo, ThirdZooIsUnion) {
  const ZooAssets a = three_checkpoints();
  const ZooSpec z = build_zoo("zoo3", a);
  ASSERT_EQ(z.members.size(), 3u);
  EXPECT_EQ(z.members[0].id, "greedy");
  EXPECT_EQ(z.members[1].id, "sp-b");
  EXPECT_EQ(z.members[2].id, "sp-c");
  EXPECT_EQ(build_zoo("1", a).id, "zoo1");
  EXPECT_EQ(build_zoo("2", a).id, "zoo2");
}

TEST(Zoo, Errors) {
  ZooAssets one;
  one.self_play = {tiny_policy("only", 1)};
  one.self_play_suc = {50.0};
  EXPECT_THROW(zoo2(one), ZooError);
  EXPECT_THROW(build_zoo("zoo3", one), ZooError);
  EXPECT_THROW(build_zoo("zoo4", three_checkpoints()), ZooError);
  ZooAssets mismatched = three_checkpoints();
  mismatched.self_play_suc.pop_back();
  EXPECT_THROW(zoo2(mismatched), ZooError);
  Rng rng(0);
  EXPECT_THROW(sample_zoo(ZooSpec{"empty", {}, {}}, 2, rng), ZooError);
  EXPECT_THROW(load_zoo_assets("/nonexistent/zoo"), ZooError);
}

TEST(Zoo, AssetsRoundTripThroughManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "pursuit_zoo_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const ZooAssets a = three_checkpoints();
  Json m{{"self_play", Json::array()}};
  for (std::size_t i = 0; i < a.self_play.size(); ++i) {
    const std::string file = a.self_play[i].id + ".ckpt";
    rl::save_model(dir / file, *a.self_play[i].model);
    m["self_play"].push_back({{"id", a.self_play[i].id}, {"checkpoint", file}, {"suc", a.self_play_suc[i]}});
  }
  std::ofstream(dir / "manifest.json") << m.dump(2);
  const ZooAssets b = load_zoo_assets(dir);
  ASSERT_EQ(b.self_play.size(), 3u);
  EXPECT_EQ(b.self_play_suc, a.self_play_suc);
  EXPECT_EQ(b.self_play[1].id, "sp-b");
  const auto pa = a.self_play[1].model->actor.params(), pb = b.self_play[1].model->actor.params();
  EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()));

  std::ofstream(dir / "manifest.json") << "{not json";
  EXPECT_THROW(load_zoo_assets(dir), ZooError);
  std::filesystem::remove_all(dir);
}

TEST(Zoo, SamplingIsUniformWithinTwoPercent) {
  const ZooSpec z = build_zoo("zoo3", three_checkpoints());
  Rng rng(11);
  std::map<std::string, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    for (const auto& p : sample_zoo(z, 1, rng)) ++counts[p.id];
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [id, c] : counts) EXPECT_NEAR(double(c) / draws, 1.0 / 3.0, 0.02) << id;
}

TEST(Evaluation, GreedyWithGreedyZoo) {
  EnvConfig env = builtin_env("4p2e3o");
  env.task.task_horizon = 200;
  const EvalReport r = run_evaluation({PolicyRef::scripted("greedy")}, zoo1(), env, 20, 3, 5);
  EXPECT_EQ(r.overall.n_episodes, 20);
  ASSERT_EQ(r.blocks.size(), 5u);
  for (const auto& b : r.blocks) EXPECT_EQ(b.n_episodes, 4);
  for (const auto& e : r.episodes) {
    ASSERT_EQ(e.teammates.size(), 4u);
    for (const auto& id : e.teammates) EXPECT_EQ(id, "greedy");
  }
  EXPECT_EQ(r.zoo, "zoo1");
  EXPECT_EQ(r.learners, std::vector<std::string>{"greedy"});
  const Json j = to_json(r);
  EXPECT_EQ(j["episodes"].size(), 20u);
  EXPECT_EQ(j["blocks"].size(), 5u);
}

TEST(Evaluation, DeterministicAndThreadIndependent) {
  EnvConfig env = builtin_env("4p2e3o");
  env.task.task_horizon = 150;
  const ZooSpec z = build_zoo("zoo3", three_checkpoints());
  const PolicyRef learner = tiny_policy("learner", 9);
  const EvalReport a = run_evaluation({learner}, z, env, 12, 5, 3, 1);
  const EvalReport b = run_evaluation({learner}, z, env, 12, 5, 3, 3);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  const EvalReport c = run_evaluation({learner}, z, env, 12, 6, 3, 1);
  EXPECT_NE(to_json(a)["episodes"].dump(), to_json(c)["episodes"].dump());
  // Uncontrolled slots draw from the whole zoo.
  std::set<std::string> seen;
  for (const auto& e : a.episodes)
    for (std::size_t i = 2; i < e.teammates.size(); ++i) seen.insert(e.teammates[i]);
  EXPECT_GE(seen.size(), 2u);
}

TEST(Evaluation, RejectsBadInputs) {
  const EnvConfig env = builtin_env("4p2e3o");
  EXPECT_THROW(run_evaluation({}, zoo1(), env, 5), std::invalid_argument);
  EXPECT_THROW(run_evaluation({PolicyRef::scripted("greedy")}, zoo1(), env, 0), std::invalid_argument);
  const PolicyRef g = PolicyRef::scripted("greedy");
  EXPECT_THROW(run_evaluation({g, g, g}, zoo1(), env, 5), std::invalid_argument);
  const EnvConfig other = builtin_env("4p3e5o");
  EXPECT_THROW(run_evaluation({tiny_policy("x", 1)}, zoo1(), other, 5), nn::ShapeError);
}

TEST(Render, MatchesGoldenSvg) {
  EnvConfig env = builtin_env("4p2e1o");
  env.task.task_horizon = 40;
  std::ostringstream log;
  TrajectoryWriter w(log);
  run_episode(env, std::vector<PolicyRef>(4, PolicyRef::scripted("greedy")), 5, &w);
  std::istringstream in(log.str());
  const std::string svg = render_episode(read_trajectory(in));

  const auto golden = std::filesystem::path(PURSUIT_TEST_DATA_DIR) / "render_golden.svg";
  if (std::getenv("PURSUIT_UPDATE_GOLDEN")) std::ofstream(golden) << svg;
  std::ifstream f(golden);
  ASSERT_TRUE(f) << golden;
  std::stringstream expected;
  expected << f.rdbuf();
  EXPECT_EQ(svg, expected.str());
}

TEST(Render, MarksCapturesAndCollisions) {
  Trajectory t;
  t.config = builtin_env("4p2e3o");
  t.initial.pursuers = {{1, 1, 0}, {2, 1, 0}, {3, 1, 0}, {1.5, 1, 0}};
  t.initial.evaders = {{1, 4, 0}, {2, 4, 0}};
  t.initial.captured = {0, 0};
  TrajectoryStep s;
  s.state = t.initial;
  s.events.captures.push_back({0, 1});
  s.events.collisions.push_back({CollisionType::drone_drone, 0, 3});
  t.steps.push_back(s);
  const std::string svg = render_episode(t);
  EXPECT_NE(svg.find("stroke=\"#2ca02c\""), std::string::npos);
  EXPECT_NE(svg.find("stroke=\"#ff7f0e\""), std::string::npos);
  EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}
