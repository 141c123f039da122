#include <gtest/gtest.h>

#include <set>

#include "activead/error.h"
#include "activead/loop.h"
#include "test_util.h"

namespace activead {
namespace {

using testing::make_clip;
using testing::numbered_id;
using testing::TempDir;

// Predicts the ground truth shifted sideways by a fixed per-clip offset.
class OffsetProvider : public PredictionProvider {
 public:
  explicit OffsetProvider(std::map<std::string, double> offsets = {}) : offsets_(std::move(offsets)) {}

  void train(const Pool&, std::span<const std::string> labeled, std::size_t round) override {
    trained_on.push_back(labeled.size());
    rounds.push_back(round);
  }

  std::vector<ClipPrediction> predict(const Pool& pool,
                                      std::span<const std::string> ids) const override {
    std::vector<ClipPrediction> out;
    for (const auto& id : ids) {
      ClipPrediction p{id, pool.at(id).gt_future, {}};
      auto it = offsets_.find(id);
      const double dy = it == offsets_.end() ? 0.0 : it->second;
      for (auto& w : p.ego_plan) w.y += dy;
      out.push_back(std::move(p));
    }
    return out;
  }

  std::vector<std::size_t> trained_on;
  std::vector<std::size_t> rounds;

 private:
  std::map<std::string, double> offsets_;
};

class FailingProvider : public PredictionProvider {
 public:
  void train(const Pool&, std::span<const std::string>, std::size_t) override {}
  std::vector<ClipPrediction> predict(const Pool&, std::span<const std::string>) const override {
    throw DataError("model crashed");
  }
};

class DuplicatingProvider : public OffsetProvider {
 public:
  std::vector<ClipPrediction> predict(const Pool& pool,
                                      std::span<const std::string> ids) const override {
    auto out = OffsetProvider::predict(pool, ids);
    out.push_back(out.front());
    return out;
  }
};

Pool numbered_pool(std::size_t n) {
  std::vector<ClipRecord> clips;
  for (std::size_t i = 0; i < n; ++i) {
    clips.push_back(make_clip(numbered_id(i), i % 3 ? Weather::kSunny : Weather::kRainy,
                              i % 4 ? Lighting::kDay : Lighting::kNight, (i % 5) * 2, 0,
                              1.0 + static_cast<double>(i % 11)));
  }
  return Pool(std::move(clips));
}

ActiveConfig config_of(std::size_t n0, std::size_t rounds, std::size_t n_itr) {
  ActiveConfig c;
  c.initial_count = n0;
  c.rounds = rounds;
  c.per_round = n_itr;
  return c;
}

TEST(RandomInit, WholePoolAndDeterminism) {
  const Pool pool = numbered_pool(100);
  const auto all = random_init(pool, 100, 1);
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(random_init(pool, 10, 42), random_init(pool, 10, 42));
  EXPECT_THROW(random_init(pool, 101, 1), ConfigError);
}

TEST(RunRound, IdenticalPredictionsFallToIdOrder) {
  const Pool pool = numbered_pool(10);
  SelectionState state(pool);
  state.add_round({"c005"});
  OffsetProvider provider;
  const auto outcome = run_round(state, pool, provider, config_of(1, 1, 3), 1);
  EXPECT_EQ(outcome.summary.selected, (std::vector<std::string>{"c000", "c001", "c002"}));
}

TEST(RunRound, LargerDisplacementWins) {
  const Pool pool({make_clip("l"), make_clip("u"), make_clip("v")});
  SelectionState state(pool);
  state.add_round({"l"});
  OffsetProvider provider({{"u", 1.0}, {"v", 0.0}});
  const auto outcome = run_round(state, pool, provider, config_of(1, 1, 1), 1);
  EXPECT_EQ(outcome.summary.selected, (std::vector<std::string>{"u"}));
  EXPECT_EQ(outcome.summary.scored, 2u);
}

TEST(RunRound, TakesEverythingLeft) {
  const Pool pool = numbered_pool(6);
  SelectionState state(pool);
  state.add_round({"c000", "c001"});
  OffsetProvider provider;
  const auto outcome = run_round(state, pool, provider, config_of(2, 1, 4), 1);
  EXPECT_TRUE(outcome.state.unlabeled().empty());
  EXPECT_EQ(outcome.state.labeled_count(), 6u);
  // Short final round.
  SelectionState almost(pool);
  almost.add_round({"c000", "c001", "c002", "c003", "c004"});
  EXPECT_EQ(run_round(almost, pool, provider, config_of(5, 1, 4), 1).summary.selected.size(), 1u);
}

TEST(RunRound, ProviderFailureLeavesStateAlone) {
  const Pool pool = numbered_pool(6);
  SelectionState state(pool);
  state.add_round({"c000"});
  const SelectionState before = state;
  FailingProvider failing;
  EXPECT_THROW(run_round(state, pool, failing, config_of(1, 1, 2), 1), DataError);
  DuplicatingProvider duplicating;
  EXPECT_THROW(run_round(state, pool, duplicating, config_of(1, 1, 2), 1), DataError);
  EXPECT_EQ(state, before);
}

TEST(RunRound, ProviderSeesLabeledSet) {
  const Pool pool = numbered_pool(20);
  OffsetProvider provider;
  run(pool, provider, config_of(4, 3, 2));
  EXPECT_EQ(provider.trained_on, (std::vector<std::size_t>{4, 6, 8}));
  EXPECT_EQ(provider.rounds, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(RunRound, CriterionPicksForAllViews) {
  const Pool pool = numbered_pool(12);
  SelectionState state(pool);
  state.add_round({"c000"});
  OffsetProvider provider({{"c004", 2.0}, {"c007", 1.0}});
  auto config = config_of(1, 1, 2);
  config.rule = SelectionRule::kDisplacement;
  const auto outcome = run_round(state, pool, provider, config, 1);
  ASSERT_EQ(outcome.summary.criterion_picks.size(), 4u);
  EXPECT_EQ(outcome.summary.selected, (std::vector<std::string>{"c004", "c007"}));
  EXPECT_EQ(outcome.summary.criterion_picks.at(Criterion::kDisplacement), outcome.summary.selected);
  EXPECT_EQ(outcome.summary.criterion_picks.at(Criterion::kMixture), outcome.summary.selected);
}

TEST(Run, NoRounds) {
  const Pool pool = numbered_pool(30);
  OffsetProvider provider;
  const auto result = run(pool, provider, config_of(7, 0, 0));
  EXPECT_EQ(result.state.labeled_count(), 7u);
  EXPECT_TRUE(provider.trained_on.empty());
}

TEST(Run, ScaledDefaultSchedule) {
  const Pool pool = numbered_pool(100);
  OffsetProvider provider;
  const auto config = ActiveConfig::default_schedule(100);
  EXPECT_EQ(config.initial_count, 10u);
  EXPECT_EQ(config.per_round, 10u);
  EXPECT_EQ(config.rounds, 2u);
  const auto result = run(pool, provider, config);
  EXPECT_EQ(result.state.labeled_count(), 30u);
  ASSERT_EQ(result.state.rounds().size(), 3u);
  std::set<std::string> seen;
  for (const auto& r : result.state.rounds()) {
    EXPECT_EQ(r.ids.size(), 10u);
    for (const auto& id : r.ids) EXPECT_TRUE(seen.insert(id).second);
  }
}

TEST(Run, Deterministic) {
  const Pool pool = numbered_pool(50);
  for (auto mode : {InitMode::kRandom, InitMode::kEgoDiversity}) {
    for (auto rule : {SelectionRule::kMixture, SelectionRule::kRandom}) {
      auto config = config_of(5, 2, 5);
      config.init_mode = mode;
      config.rule = rule;
      config.seed = 9;
      OffsetProvider a, b;
      const auto ra = run(pool, a, config);
      const auto rb = run(pool, b, config);
      EXPECT_EQ(ra.state, rb.state);
      EXPECT_EQ(manifest_json(ra).dump(), manifest_json(rb).dump());
    }
  }
}

TEST(Run, ObserverSeesEveryStage) {
  const Pool pool = numbered_pool(40);
  OffsetProvider provider;
  std::vector<std::size_t> labeled;
  run(pool, provider, config_of(4, 2, 3),
      [&](std::size_t stage, const SelectionState& s) {
        EXPECT_EQ(stage, labeled.size());
        labeled.push_back(s.labeled_count());
      });
  EXPECT_EQ(labeled, (std::vector<std::size_t>{4, 7, 10}));
}

TEST(ActiveConfig, Validation) {
  EXPECT_THROW(config_of(0, 1, 1).validate(10), ConfigError);
  EXPECT_THROW(config_of(1, 1, 0).validate(10), ConfigError);
  EXPECT_THROW(config_of(5, 2, 3).validate(10), ConfigError);
  EXPECT_NO_THROW(config_of(4, 2, 3).validate(10));
  auto c = config_of(1, 0, 0);
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(10), ConfigError);
  c.gamma = 0.5;
  c.command_threshold = 0;
  EXPECT_THROW(c.validate(10), ConfigError);
}

TEST(ActiveConfig, Names) {
  EXPECT_EQ(parse_init_mode("random"), InitMode::kRandom);
  EXPECT_EQ(parse_init_mode("ego-diversity"), InitMode::kEgoDiversity);
  EXPECT_EQ(parse_selection_rule("AU"), SelectionRule::kAgentUncertainty);
  EXPECT_EQ(parse_selection_rule("random"), SelectionRule::kRandom);
  EXPECT_THROW(parse_init_mode("kmeans"), ConfigError);
  EXPECT_THROW(parse_selection_rule("coreset"), ConfigError);
}

TEST(FileProvider, ReadsRoundFiles) {
  TempDir dir;
  const Pool pool({make_clip("l"), make_clip("u"), make_clip("v")});
  std::vector<ClipPrediction> preds = {{"u", pool.at("u").gt_future, {}},
                                       {"v", pool.at("v").gt_future, {}}};
  for (auto& w : preds[1].ego_plan) w.x += 2.0;
  write_predictions(preds, FileProvider::round_file(dir.path(), 1));
  EXPECT_EQ(FileProvider::round_file(dir.path(), 1).filename(), "predictions_round_1.jsonl");

  FileProvider provider(dir.path());
  SelectionState state(pool);
  state.add_round({"l"});
  const auto outcome = run_round(state, pool, provider, config_of(1, 1, 1), 1);
  EXPECT_EQ(outcome.summary.selected, (std::vector<std::string>{"v"}));
  EXPECT_THROW(run_round(state, pool, provider, config_of(1, 1, 1), 2), IoError);
}

TEST(Manifest, Shape) {
  const Pool pool = numbered_pool(30);
  OffsetProvider provider;
  const auto result = run(pool, provider, config_of(3, 2, 3));
  const auto j = manifest_json(result);
  EXPECT_EQ(j.at("schema"), kManifestSchema);
  EXPECT_EQ(j.at("config").at("budget"), 9);
  EXPECT_EQ(j.at("init").at("allocations").size(), 16u);
  EXPECT_EQ(j.at("rounds").size(), 2u);
  EXPECT_EQ(j.at("selection").at("rounds").size(), 3u);
  EXPECT_TRUE(j.at("rounds")[0].at("criterion_picks").contains("SC"));
}

}  // namespace
}  // namespace activead
