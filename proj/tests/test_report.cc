#include <gtest/gtest.h>

#include "activead/error.h"
#include "activead/io.h"
#include "activead/loop.h"
#include "activead/report.h"
#include "test_util.h"

namespace activead::report {
namespace {

using testing::TempDir;

constexpr StepErrors kRamp = {1, 2, 3, 4, 5, 6};

TEST(L2, UniadConvention) {
  EXPECT_EQ(l2_at_k_uniad(kRamp, 1), 2.0);
  EXPECT_EQ(l2_at_k_uniad(kRamp, 2), 4.0);
  EXPECT_EQ(l2_at_k_uniad(kRamp, 3), 6.0);
}

TEST(L2, VadConvention) {
  EXPECT_EQ(l2_at_k_vad(kRamp, 1), 1.5);
  EXPECT_EQ(l2_at_k_vad(kRamp, 2), 2.5);
  EXPECT_EQ(l2_at_k_vad(kRamp, 3), 3.5);
}

TEST(L2, ConstantErrorsAgree) {
  const StepErrors flat = {0.7, 0.7, 0.7, 0.7, 0.7, 0.7};
  for (int k = 1; k <= 3; ++k) {
    EXPECT_DOUBLE_EQ(l2_at_k_uniad(flat, k), 0.7);
    EXPECT_DOUBLE_EQ(l2_at_k_vad(flat, k), 0.7);
  }
}

TEST(L2, BadHorizon) {
  EXPECT_THROW(l2_at_k_uniad(kRamp, 0), ConfigError);
  EXPECT_THROW(l2_at_k_vad(kRamp, 4), ConfigError);
}

TEST(StepErrors, Validation) {
  const std::vector<double> five = {1, 2, 3, 4, 5};
  EXPECT_THROW(step_errors(five), DataError);
  const std::vector<double> negative = {1, 2, 3, 4, 5, -1};
  EXPECT_THROW(step_errors(negative), DataError);
  const std::vector<double> ok = {1, 2, 3, 4, 5, 6};
  EXPECT_EQ(step_errors(ok), kRamp);
}

std::vector<std::string> ids(std::initializer_list<const char*> list) {
  return {list.begin(), list.end()};
}

TEST(Overlap, Examples) {
  EXPECT_EQ(overlap_rate(ids({"a", "b"}), ids({"b", "a"})), 1.0);
  EXPECT_EQ(overlap_rate(ids({"a", "b"}), ids({"c", "d"})), 0.0);
  EXPECT_EQ(overlap_rate(ids({"1", "2", "3", "4"}), ids({"3", "4", "5", "6"})), 0.5);
  EXPECT_THROW(overlap_rate({}, ids({"a"})), DataError);
}

TEST(Overlap, MatrixHasUnitDiagonal) {
  const std::vector<std::string> labels = {"DE", "SC", "AU"};
  const std::vector<std::vector<std::string>> sets = {ids({"a", "b"}), ids({"b", "c"}), ids({"d", "e"})};
  const auto m = overlap_matrix(labels, sets);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(m.rates[i][i], 1.0);
  EXPECT_EQ(m.rates[0][1], 0.5);
  EXPECT_EQ(m.rates[1][0], 0.5);
  EXPECT_EQ(m.rates[0][2], 0.0);
}

TaggedResult tagged(std::string id, Weather w, Lighting l, ManeuverClass c, double de, bool hit) {
  return {std::move(id), w, l, c, de, hit};
}

TEST(Stratified, EmptyStrataAreAbsent) {
  const std::vector<TaggedResult> results = {
      tagged("a", Weather::kSunny, Lighting::kDay, ManeuverClass::kStraight, 1.0, false),
      tagged("b", Weather::kSunny, Lighting::kDay, ManeuverClass::kStraight, 3.0, true)};
  const auto rows = stratified_metrics(results);
  std::vector<std::string> keys;
  for (const auto& r : rows) keys.push_back(r.key);
  EXPECT_EQ(keys, (std::vector<std::string>{"Day", "Sunny", "S", "All"}));
  EXPECT_DOUBLE_EQ(rows[0].avg_de, 2.0);
  EXPECT_DOUBLE_EQ(rows[0].collision_rate, 50.0);
}

TEST(Stratified, AllRowIsPoolWide) {
  const std::vector<TaggedResult> results = {
      tagged("a", Weather::kRainy, Lighting::kNight, ManeuverClass::kLeft, 1.0, true),
      tagged("b", Weather::kSunny, Lighting::kDay, ManeuverClass::kOvertake, 2.0, false),
      tagged("c", Weather::kSunny, Lighting::kNight, ManeuverClass::kRight, 6.0, false)};
  const auto rows = stratified_metrics(results);
  ASSERT_EQ(rows.back().key, "All");
  EXPECT_EQ(rows.back().count, 3u);
  EXPECT_DOUBLE_EQ(rows.back().avg_de, 3.0);
  std::vector<std::string> keys;
  for (const auto& r : rows) keys.push_back(r.key);
  EXPECT_EQ(keys, (std::vector<std::string>{"Day", "Night", "Sunny", "Rainy", "L", "R", "O", "All"}));
}

TEST(Stratified, FromPool) {
  const Pool pool({testing::make_clip("a", Weather::kRainy, Lighting::kNight, 5, 0),
                   testing::make_clip("b")});
  const std::vector<synth::ClipEval> evals = {{"a", 1.0, false, {}}, {"b", 2.0, true, {}}};
  const auto rows = stratified_metrics(evals, pool, 4);
  EXPECT_EQ(rows.front().key, "Day");
  bool has_left = false;
  for (const auto& r : rows) has_left |= r.key == "L";
  EXPECT_TRUE(has_left);
}

TEST(StageEval, BothConventions) {
  synth::HeldoutResult r;
  r.avg_de = 3.5;
  r.collision_rate = 2.0;
  r.mean_step_errors = {1, 2, 3, 4, 5, 6};
  const auto s = make_stage_eval(1, 10, r);
  ASSERT_TRUE(s.l2_uniad && s.l2_vad);
  EXPECT_EQ(*s.l2_uniad, (std::array<double, 3>{2, 4, 6}));
  EXPECT_EQ(*s.l2_vad, (std::array<double, 3>{1.5, 2.5, 3.5}));
  r.mean_step_errors = {1, 2, 3, 4};
  EXPECT_FALSE(make_stage_eval(1, 10, r).l2_uniad.has_value());
}

nlohmann::json sample_manifest(std::size_t rounds) {
  std::vector<ClipRecord> clips;
  for (int i = 0; i < 40; ++i) {
    clips.push_back(testing::make_clip(testing::numbered_id(i), i % 2 ? Weather::kSunny : Weather::kRainy,
                                       Lighting::kDay, i % 3 == 0 ? 5 : 0, 0, i % 7));
  }
  const Pool pool(std::move(clips));
  struct Shift : PredictionProvider {
    void train(const Pool&, std::span<const std::string>, std::size_t) override {}
    std::vector<ClipPrediction> predict(const Pool& p, std::span<const std::string> ids) const override {
      std::vector<ClipPrediction> out;
      for (const auto& id : ids) {
        ClipPrediction c{id, p.at(id).gt_future, {}};
        c.ego_plan[0].y += static_cast<double>(id.back() - '0');
        c.agents.push_back({"a", 0.9, {0.6, 0.4},
                            {c.ego_plan, testing::constant_track({1, static_cast<double>(id[2] - '0')})}});
        out.push_back(std::move(c));
      }
      return out;
    }
  } provider;
  ActiveConfig config;
  config.initial_count = 4;
  config.rounds = rounds;
  config.per_round = 4;
  const auto result = run(pool, provider, config);
  return nlohmann::json::parse(manifest_json(result).dump());
}

TEST(Summary, FromManifest) {
  const auto summary = summary_from_manifest(sample_manifest(2), "active");
  EXPECT_EQ(summary.name, "active");
  EXPECT_EQ(summary.init_count, 4u);
  EXPECT_EQ(summary.allocations.size(), 16u);
  ASSERT_EQ(summary.rounds.size(), 2u);
  ASSERT_TRUE(summary.rounds[0].criterion_overlap.has_value());
  const auto& m = *summary.rounds[0].criterion_overlap;
  ASSERT_EQ(m.labels.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m.rates[i][i], 1.0);
}

TEST(Summary, SchemaMismatch) {
  auto manifest = sample_manifest(1);
  manifest["schema"] = "activead.manifest/0";
  EXPECT_THROW(summary_from_manifest(manifest), DataError);
  EXPECT_THROW(summary_from_manifest(nlohmann::json::object()), DataError);
  manifest = sample_manifest(1);
  manifest.erase("rounds");
  EXPECT_THROW(summary_from_manifest(manifest), DataError);
}

TEST(Emit, DeterministicBytes) {
  TempDir dir;
  ReportDocument doc;
  doc.runs.push_back(summary_from_manifest(sample_manifest(2), "active"));
  doc.runs.push_back(summary_from_manifest(sample_manifest(1), "other"));
  for (auto format : {ReportFormat::kDelimited, ReportFormat::kStructured}) {
    emit_report(doc, dir / "a", format);
    emit_report(doc, dir / "b", format);
    EXPECT_EQ(io::read_file(dir / "a"), io::read_file(dir / "b"));
  }
}

TEST(Emit, InitOnlyReport) {
  ReportDocument doc;
  doc.runs.push_back(summary_from_manifest(sample_manifest(0), "init"));
  const std::string csv = render_delimited(doc);
  EXPECT_EQ(csv.rfind("section,run,row,col,value\n", 0), 0u);
  EXPECT_NE(csv.find("\ninit,init,count,value,4\n"), std::string::npos);
  EXPECT_EQ(csv.find("\nround,"), std::string::npos);
  EXPECT_TRUE(render_structured(doc).at("runs")[0].at("rounds").empty());
}

TEST(Emit, OverlapDiagonalIsOne) {
  ReportDocument doc;
  const std::vector<std::string> labels = {"DE", "SC"};
  const std::vector<std::vector<std::string>> sets = {ids({"a", "b"}), ids({"b", "c"})};
  doc.selection_overlap = overlap_matrix(labels, sets);
  const std::string csv = render_delimited(doc);
  EXPECT_NE(csv.find("selection_overlap,,DE,DE,1\n"), std::string::npos);
  EXPECT_NE(csv.find("selection_overlap,,SC,SC,1\n"), std::string::npos);
  EXPECT_NE(csv.find("selection_overlap,,DE,SC,0.5\n"), std::string::npos);
}

TEST(Emit, UnwritablePath) {
  EXPECT_THROW(emit_report({}, "/nonexistent/dir/report.csv", ReportFormat::kDelimited), IoError);
}

TEST(Emit, ComparisonNeedsTwoRuns) {
  auto a = summary_from_manifest(sample_manifest(1), "active");
  auto b = summary_from_manifest(sample_manifest(1), "random");
  a.stages.push_back({0, 4, 10, 2.0, 10.0, std::nullopt, std::nullopt});
  b.stages.push_back({0, 4, 10, 2.5, 5.0, std::nullopt, std::nullopt});
  ReportDocument one;
  one.runs = {a};
  EXPECT_FALSE(render_structured(one).contains("comparison"));
  ReportDocument two;
  two.runs = {a, b};
  const auto j = render_structured(two);
  ASSERT_TRUE(j.contains("comparison"));
  EXPECT_EQ(j.at("comparison")[0].at("run"), "random-vs-active");
  EXPECT_DOUBLE_EQ(j.at("comparison")[0].at("avg_de_delta").get<double>(), 0.5);
}

TEST(IncrementalIds, SkipsInitialRound) {
  const std::vector<SelectionRound> rounds = {{0, {"a"}}, {1, {"b"}}, {2, {"c"}}};
  EXPECT_EQ(incremental_ids(rounds), ids({"b", "c"}));
  const std::vector<SelectionRound> init_only = {{0, {"a"}}};
  EXPECT_EQ(incremental_ids(init_only), ids({"a"}));
}

}  // namespace
}  // namespace activead::report
