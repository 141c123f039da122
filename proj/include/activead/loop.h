#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "activead/criteria.h"
#include "activead/diversity.h"
#include "activead/pool.h"
#include "json.hpp"

namespace activead {

enum class InitMode { kRandom, kEgoDiversity };

// How each incremental round picks clips. kRandom is the random-selection
// comparator; the others rank by a criterion view of the scores.
enum class SelectionRule { kDisplacement, kSoftCollision, kAgentUncertainty, kMixture, kRandom };

std::string_view to_string(InitMode m);  // "random", "ego-diversity"
InitMode parse_init_mode(std::string_view s);
std::string_view to_string(SelectionRule r);  // "DE", "SC", "AU", "MX", "random"
SelectionRule parse_selection_rule(std::string_view s);

struct ActiveConfig {
  std::size_t initial_count = 0;  // n0
  std::size_t rounds = 2;         // M
  std::size_t per_round = 0;      // n_itr
  ScoringParams scoring;
  double gamma = 0.5;
  int command_threshold = 4;
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::kEgoDiversity;
  SelectionRule rule = SelectionRule::kMixture;

  std::size_t budget() const { return initial_count + rounds * per_round; }

  // Throws ConfigError unless every field is in range and budget <= pool_size.
  void validate(std::size_t pool_size) const;

  // 10% initial selection followed by two rounds of 10% each.
  static ActiveConfig default_schedule(std::size_t pool_size);
};

nlohmann::ordered_json to_json(const ActiveConfig& config);

// Stand-in for the planning model: trained on the labeled set, then asked for
// predictions on unlabeled clips. predict must be deterministic for a given
// training state and cover each requested id exactly once.
class PredictionProvider {
 public:
  virtual ~PredictionProvider() = default;

  // `round` is the 1-based index of the selection round about to run.
  virtual void train(const Pool& pool, std::span<const std::string> labeled_ids,
                     std::size_t round) = 0;
  virtual std::vector<ClipPrediction> predict(const Pool& pool,
                                              std::span<const std::string> ids) const = 0;
};

// Reads `<dir>/predictions_round_<k>.jsonl` when trained for round k. Lets
// externally trained models drive the loop.
class FileProvider : public PredictionProvider {
 public:
  explicit FileProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::filesystem::path round_file(const std::filesystem::path& dir, std::size_t round);

  void train(const Pool& pool, std::span<const std::string> labeled_ids,
             std::size_t round) override;
  std::vector<ClipPrediction> predict(const Pool& pool,
                                      std::span<const std::string> ids) const override;

 private:
  std::filesystem::path dir_;
  PredictionSet current_;
};

// Uniform sample without replacement, returned in pool order.
std::vector<std::string> random_init(const Pool& pool, std::size_t count, std::uint64_t seed);

struct RoundSummary {
  std::size_t round = 0;
  std::vector<std::string> selected;
  std::size_t scored = 0;
  double de_mean = 0.0;
  double sc_mean = 0.0;
  double au_mean = 0.0;
  double overall_mean = 0.0;
  double overall_max = 0.0;
  // Top picks each single criterion and the mixture would have made on the
  // same scores. Empty for the random rule.
  std::map<Criterion, std::vector<std::string>> criterion_picks;
};

struct RoundOutcome {
  SelectionState state;
  RoundSummary summary;
};

// One train -> predict -> score -> select cycle. The input state is never
// modified; a provider failure propagates with nothing committed.
RoundOutcome run_round(const SelectionState& state, const Pool& pool,
                       PredictionProvider& provider, const ActiveConfig& config,
                       std::size_t round);

struct RunResult {
  ActiveConfig config;
  std::size_t pool_size = 0;
  SelectionState state;
  std::vector<StratumAllocation> allocations;  // empty for random init
  std::vector<RoundSummary> rounds;
};

// Called with the stage index (0 = after initialization) and the state.
using StageObserver = std::function<void(std::size_t stage, const SelectionState& state)>;

RunResult run(const Pool& pool, PredictionProvider& provider, const ActiveConfig& config,
              const StageObserver& observer = {});

inline constexpr std::string_view kManifestSchema = "activead.manifest/1";

nlohmann::ordered_json manifest_json(const RunResult& result);

}  // namespace activead
