#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "activead/pool.h"
#include "activead/synthworld.h"
#include "json.hpp"

namespace activead::report {

inline constexpr std::size_t kStepCount = 6;  // 3 s horizon at 0.5 s spacing

using StepErrors = std::array<double, kStepCount>;

// Throws DataError unless there are exactly six finite, non-negative entries.
StepErrors step_errors(std::span<const double> values);

// Error at the exact step 2k (1-based). k must be 1, 2 or 3.
double l2_at_k_uniad(const StepErrors& errors, int k);
// Mean of the first 2k errors. k must be 1, 2 or 3.
double l2_at_k_vad(const StepErrors& errors, int k);

// |A ∩ B| / |A| over distinct ids. Empty A raises DataError.
double overlap_rate(std::span<const std::string> a, std::span<const std::string> b);

struct OverlapMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rates;  // rates[i][j] = overlap_rate(set i, set j)
};

OverlapMatrix overlap_matrix(std::span<const std::string> labels,
                             std::span<const std::vector<std::string>> sets);

// Evaluation record carrying the scenario tags it is stratified by.
struct TaggedResult {
  std::string clip_id;
  Weather weather = Weather::kSunny;
  Lighting lighting = Lighting::kDay;
  ManeuverClass command = ManeuverClass::kStraight;
  double de = 0.0;
  bool collided = false;
};

std::vector<TaggedResult> tag_results(std::span<const synth::ClipEval> results, const Pool& pool,
                                      int command_threshold);

struct StratumMetrics {
  std::string key;
  std::size_t count = 0;
  double avg_de = 0.0;
  double collision_rate = 0.0;  // percent, distance proxy
};

// Rows in the order Day, Night, Sunny, Rainy, S, L, R, O, All. Strata with no
// members are left out.
std::vector<StratumMetrics> stratified_metrics(std::span<const TaggedResult> results);
std::vector<StratumMetrics> stratified_metrics(std::span<const synth::ClipEval> results,
                                               const Pool& pool, int command_threshold);

// Held-out evaluation after one stage of the loop.
struct StageEval {
  std::size_t stage = 0;
  std::size_t labeled = 0;
  std::size_t heldout = 0;
  double avg_de = 0.0;
  double collision_rate = 0.0;
  // At 1, 2, 3 s. Absent unless the horizon is six steps.
  std::optional<std::array<double, 3>> l2_uniad;
  std::optional<std::array<double, 3>> l2_vad;
};

StageEval make_stage_eval(std::size_t stage, std::size_t labeled,
                          const synth::HeldoutResult& result);

// Manifest "evaluation" section: per-stage metrics plus the final stage's
// per-clip results.
nlohmann::ordered_json evaluation_json(std::span<const StageEval> stages,
                                       std::span<const TaggedResult> final_results);

struct AllocationRow {
  std::string bucket;
  std::string command;
  std::size_t available = 0;
  double share = 0.0;
  std::size_t allocated = 0;
};

struct RoundRow {
  std::size_t round = 0;
  std::size_t selected = 0;
  std::size_t scored = 0;
  double de_mean = 0.0;
  double sc_mean = 0.0;
  double au_mean = 0.0;
  double overall_mean = 0.0;
  double overall_max = 0.0;
  // Overlap of the DE/SC/AU/MX top picks on this round's scores.
  std::optional<OverlapMatrix> criterion_overlap;
};

struct RunSummary {
  std::string name;
  nlohmann::ordered_json config;
  std::size_t pool_size = 0;
  std::string init_mode;
  std::size_t init_count = 0;
  std::vector<AllocationRow> allocations;
  std::vector<RoundRow> rounds;
  std::vector<StageEval> stages;
  std::vector<StratumMetrics> strata;
};

// Throws DataError on a schema mismatch or malformed manifest. A non-empty
// `name` overrides the manifest's own run name.
RunSummary summary_from_manifest(const nlohmann::json& manifest, const std::string& name = {});
RunSummary load_summary(const std::filesystem::path& path);

// Ids added after initialization, or every id when there were no rounds.
std::vector<std::string> incremental_ids(std::span<const SelectionRound> rounds);

struct ReportDocument {
  std::vector<RunSummary> runs;
  std::optional<OverlapMatrix> selection_overlap;
};

enum class ReportFormat { kDelimited, kStructured };

ReportFormat parse_report_format(std::string_view s);  // "delimited", "structured"

// Long table with header section,run,row,col,value.
std::string render_delimited(const ReportDocument& doc);
nlohmann::ordered_json render_structured(const ReportDocument& doc);
std::string render(const ReportDocument& doc, ReportFormat format);
void emit_report(const ReportDocument& doc, const std::filesystem::path& path,
                 ReportFormat format);

}  // namespace activead::report
