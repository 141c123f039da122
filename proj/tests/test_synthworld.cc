#include <gtest/gtest.h>

#include <cmath>

#include "activead/error.h"
#include "activead/io.h"
#include "activead/synthworld.h"
#include "test_util.h"

namespace activead::synth {
namespace {

using testing::TempDir;

WorldConfig small_world(std::size_t n, std::uint64_t seed) {
  WorldConfig c;
  c.clips = n;
  c.seed = seed;
  return c;
}

TEST(WorldConfig, Validation) {
  WorldConfig c;
  EXPECT_NO_THROW(c.validate());
  c.bucket_probs = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.maneuver_probs = {1.2, -0.2, 0, 0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.clips = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.min_speed = 5;
  c.max_speed = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(GeneratePool, ByteIdenticalPerSeed) {
  TempDir dir;
  const auto config = small_world(200, 7);
  generate_pool(config, dir / "p1.jsonl", dir / "t1.jsonl");
  generate_pool(config, dir / "p2.jsonl", dir / "t2.jsonl");
  EXPECT_EQ(io::read_file(dir / "p1.jsonl"), io::read_file(dir / "p2.jsonl"));
  EXPECT_EQ(io::read_file(dir / "t1.jsonl"), io::read_file(dir / "t2.jsonl"));
  generate_pool(small_world(200, 8), dir / "p3.jsonl", dir / "t3.jsonl");
  EXPECT_NE(io::read_file(dir / "p1.jsonl"), io::read_file(dir / "p3.jsonl"));
}

TEST(GeneratePool, InvalidConfigWritesNothing) {
  TempDir dir;
  auto config = small_world(10, 1);
  config.bucket_probs = {1, 1, 0, 0};
  EXPECT_THROW(generate_pool(config, dir / "p.jsonl", dir / "t.jsonl"), ConfigError);
  EXPECT_FALSE(std::filesystem::exists(dir / "p.jsonl"));
  EXPECT_FALSE(std::filesystem::exists(dir / "t.jsonl"));
}

TEST(GeneratePool, PrefixIsStable) {
  const auto a = generate_world(small_world(50, 3));
  const auto b = generate_world(small_world(80, 3));
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(serialize_clip(a.pool.clips()[i]), serialize_clip(b.pool.clips()[i]));
  }
}

TEST(GeneratePool, TruthRoundTrip) {
  TempDir dir;
  const auto world = generate_world(small_world(30, 2));
  generate_pool(small_world(30, 2), dir / "p.jsonl", dir / "t.jsonl");
  const auto truth = load_truth(dir / "t.jsonl");
  ASSERT_EQ(truth.clips().size(), 30u);
  for (const auto& t : world.truth.clips()) {
    EXPECT_EQ(serialize_truth(truth.at(t.clip_id)), serialize_truth(t));
  }
  EXPECT_EQ(load_pool(dir / "p.jsonl").size(), 30u);
}

TEST(GeneratePool, BucketFrequenciesMatchConfig) {
  const WorldConfig config = small_world(10000, 11);
  const auto world = generate_world(config);
  std::array<double, 4> counts{};
  for (const auto& clip : world.pool.clips()) {
    counts[static_cast<std::size_t>(weather_lighting_bucket(clip))] += 1.0;
  }
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_NEAR(counts[b] / 10000.0, config.bucket_probs[b], 0.02);
  }
}

TEST(GeneratePool, ManeuverLabelsMatchCommands) {
  const auto world = generate_world(small_world(3000, 5));
  std::size_t left = 0;
  for (const auto& t : world.truth.clips()) {
    const auto& clip = world.pool.at(t.clip_id);
    EXPECT_EQ(classify_command(clip, 4), t.maneuver) << t.clip_id;
    left += t.maneuver == ManeuverClass::kLeft ? 1 : 0;
  }
  EXPECT_GT(left, 0u);
}

TEST(GeneratePool, TurnsCurveTheRightWay) {
  const auto world = generate_world(small_world(500, 6));
  for (const auto& t : world.truth.clips()) {
    const double end_y = t.ego_future.back().y;
    if (t.maneuver == ManeuverClass::kLeft) EXPECT_GT(end_y, 0.0);
    if (t.maneuver == ManeuverClass::kRight) EXPECT_LT(end_y, 0.0);
    if (t.maneuver == ManeuverClass::kOvertake) EXPECT_GT(end_y, 1.5);
  }
}

TEST(GeneratePool, TruthIsConsistent) {
  const auto config = small_world(300, 4);
  const auto world = generate_world(config);
  for (const auto& t : world.truth.clips()) {
    EXPECT_EQ(t.ego_future.size(), config.horizon);
    EXPECT_EQ(t.ego_future, world.pool.at(t.clip_id).gt_future);
    for (const auto& a : t.agents) {
      EXPECT_EQ(a.track.size(), config.horizon);
      for (const auto& p : a.track) EXPECT_TRUE(is_finite(p));
    }
  }
}

TEST(ToyPlanner, UntrainedFallsBackToConstantVelocity) {
  const WorldTruth truth;
  ToyPlanner planner(truth);
  EXPECT_FALSE(planner.trained());
  auto clip = testing::make_clip("a", Weather::kSunny, Lighting::kDay, 0, 0, 10.0);
  const auto plan = planner.plan(clip, 6);
  ASSERT_EQ(plan.size(), 6u);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_NEAR(plan[k].x, 5.0 * static_cast<double>(k + 1), 1e-12);
    EXPECT_EQ(plan[k].y, 0.0);
  }
}

TEST(ToyPlanner, StoresExemplars) {
  const auto world = generate_world(small_world(20, 1));
  ToyPlanner planner(world.truth);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 5; ++i) ids.push_back(world.pool.clips()[i].id);
  planner.fit(world.pool, ids);
  EXPECT_EQ(planner.exemplar_count(), 5u);
  EXPECT_TRUE(planner.has_exemplar(ids[2]));
  ids.push_back(ids[0]);
  EXPECT_THROW(planner.fit(world.pool, ids), DataError);
}

TEST(ToyPlanner, PlanAveragesNearestExemplars) {
  const auto world = generate_world(small_world(40, 1));
  ToyPlanner planner(world.truth, PlannerParams{.neighbors = 1});
  const std::string id = world.pool.clips()[0].id;
  const std::vector<std::string> ids = {id};
  planner.fit(world.pool, ids);
  // A single exemplar is its own nearest neighbor.
  EXPECT_EQ(planner.plan(world.pool.at(id), 6), world.truth.at(id).ego_future);
}

TEST(ForecastAgents, ExactCourseGetsTopProbability) {
  ClipTruth truth;
  truth.clip_id = "a";
  truth.ego_future = testing::straight_line(5.0);
  AgentTruth agent;
  agent.agent_id = "x";
  agent.start = {10.0, 3.0};
  for (int k = 1; k <= 6; ++k) agent.track.push_back({10.0 + 2.0 * k * 0.5, 3.0});
  truth.agents.push_back(agent);
  AgentTruth far = agent;
  far.agent_id = "far";
  far.start = {40.0, 0.0};
  truth.agents.push_back(far);

  const auto forecasts = forecast_agents(truth, 6, {});
  ASSERT_EQ(forecasts.size(), 1u);
  const auto& f = forecasts[0];
  EXPECT_NEAR(f.confidence, std::exp(-std::hypot(10.0, 3.0) / 30.0), 1e-12);
  ASSERT_EQ(f.modality_probs.size(), 3u);
  EXPECT_GT(f.modality_probs[1], f.modality_probs[0]);
  EXPECT_GT(f.modality_probs[1], f.modality_probs[2]);
  EXPECT_NEAR(f.modality_probs[0] + f.modality_probs[1] + f.modality_probs[2], 1.0, 1e-12);
  EXPECT_NO_THROW(validate_forecast(f, 6));
}

TEST(ForecastAgents, NoNearbyAgents) {
  ClipTruth truth;
  truth.clip_id = "a";
  truth.ego_future = testing::straight_line(5.0);
  AgentTruth far{"far", {0.0, 31.0}, testing::constant_track({0.0, 31.0})};
  truth.agents.push_back(far);
  EXPECT_TRUE(forecast_agents(truth, 6, {}).empty());
}

TEST(HeldoutEval, ConstantOffsetNoAgents) {
  ClipRecord clip = testing::make_clip("eval-0", Weather::kSunny, Lighting::kDay, 0, 0, 10.0);
  for (auto& p : clip.gt_future) p.y += 1.0;
  const Pool heldout({clip});
  const WorldTruth truth({ClipTruth{"eval-0", clip.gt_future, {}, ManeuverClass::kStraight}});
  const WorldTruth train_truth;
  const ToyPlanner planner(train_truth);
  const auto result = heldout_eval(planner, heldout, truth);
  EXPECT_NEAR(result.avg_de, 1.0, 1e-12);
  EXPECT_EQ(result.collision_rate, 0.0);
  ASSERT_EQ(result.mean_step_errors.size(), 6u);
}

TEST(HeldoutEval, ReplayingTruthAndOverlapCheck) {
  const auto world = generate_world(small_world(60, 3));
  ToyPlanner planner(world.truth, PlannerParams{.neighbors = 1});
  std::vector<std::string> ids = {world.pool.clips()[0].id};
  planner.fit(world.pool, ids);
  EXPECT_THROW(heldout_eval(planner, world.pool, world.truth), DataError);

  const Pool single({world.pool.clips()[0]});
  // Same clip but under a fresh id: the planner replays its exemplar exactly.
  ClipRecord copy = world.pool.clips()[0];
  copy.id = "eval-copy";
  ClipTruth copy_truth = world.truth.at(ids[0]);
  copy_truth.clip_id = copy.id;
  const WorldTruth eval_truth({copy_truth});
  const auto result = heldout_eval(planner, Pool({copy}), eval_truth);
  EXPECT_NEAR(result.avg_de, 0.0, 1e-12);
}

TEST(HeldoutEval, Deterministic) {
  const auto world = generate_world(small_world(300, 21));
  const auto eval = generate_world(small_world(100, 22), "eval-");
  ToyPlanner planner(world.truth);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 90; ++i) ids.push_back(world.pool.clips()[i].id);
  planner.fit(world.pool, ids);
  const auto a = heldout_eval(planner, eval.pool, eval.truth);
  const auto b = heldout_eval(planner, eval.pool, eval.truth);
  EXPECT_EQ(a.avg_de, b.avg_de);
  EXPECT_EQ(a.collision_rate, b.collision_rate);
}

TEST(ToyPlanner, LearnsOverSeeds) {
  double trained = 0.0;
  double untrained = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto world = generate_world(small_world(600, seed));
    const auto eval = generate_world(small_world(200, seed + 100), "eval-");
    ToyPlanner planner(world.truth);
    untrained += heldout_eval(planner, eval.pool, eval.truth).avg_de;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < 180; ++i) ids.push_back(world.pool.clips()[i].id);
    planner.fit(world.pool, ids);
    trained += heldout_eval(planner, eval.pool, eval.truth).avg_de;
  }
  EXPECT_LT(trained, untrained);
}

TEST(ToyPlanner, PredictionsAreValid) {
  const auto world = generate_world(small_world(100, 9));
  ToyPlanner planner(world.truth);
  std::vector<std::string> labeled, unlabeled;
  for (const auto& c : world.pool.clips()) (labeled.size() < 30 ? labeled : unlabeled).push_back(c.id);
  planner.train(world.pool, labeled, 1);
  const auto preds = planner.predict(world.pool, unlabeled);
  ASSERT_EQ(preds.size(), unlabeled.size());
  for (const auto& p : preds) EXPECT_NO_THROW(validate_prediction(p, 6));
}

}  // namespace
}  // namespace activead::synth
