#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "activead/geometry.h"
#include "activead/pool.h"

namespace activead {

struct AgentForecast {
  std::string agent_id;
  double confidence = 0.0;
  std::vector<double> modality_probs;
  std::vector<Trajectory> modality_trajs;
};

struct ClipPrediction {
  std::string clip_id;
  Trajectory ego_plan;
  std::vector<AgentForecast> agents;
};

using PredictionSet = std::map<std::string, ClipPrediction, std::less<>>;

inline constexpr double kProbabilitySumTolerance = 1e-6;

// Throws DataError when the forecast or prediction breaks its invariants.
void validate_forecast(const AgentForecast& agent, std::size_t horizon);
void validate_prediction(const ClipPrediction& prediction, std::size_t horizon);

// Highest-probability modality; the lowest index wins ties.
std::size_t representative_modality(const AgentForecast& agent);

// Mean Euclidean distance between matching waypoints.
double displacement_error(std::span<const Point2> plan, std::span<const Point2> reference);

// Sum over timesteps of exp(-closest distance) to agents whose confidence is
// at least `min_confidence`.
double soft_collision(const ClipPrediction& prediction, double min_confidence);

// -sum p ln p with 0 ln 0 = 0.
double modality_entropy(std::span<const double> probs);

// Sum of exp(threshold - d_a) * entropy over agents whose closest approach d_a
// is within `distance_threshold`.
double agent_uncertainty(const ClipPrediction& prediction, double distance_threshold);

// (v - min) / (max - min); all zeros when max == min.
std::vector<double> min_max_normalize(std::span<const double> values);

double overall_loss(double de_norm, double sc_norm, double au_norm, double alpha, double beta);

struct ScoringParams {
  double alpha = 1.0;
  double beta = 1.0;
  double min_confidence = 0.5;      // agents below this are ignored by SC
  double distance_threshold = 3.0;  // meters, AU proximity filter

  void validate() const;
};

struct CriterionScores {
  std::string clip_id;
  double de_raw = 0.0;
  double sc_raw = 0.0;
  double au_raw = 0.0;
  double de_norm = 0.0;
  double sc_norm = 0.0;
  double au_norm = 0.0;
  double overall = 0.0;
};

// Scores every id in `ids` (kept in that order). Normalization runs over
// exactly this population. A missing prediction raises DataError naming it.
std::vector<CriterionScores> score_clips(const Pool& pool, std::span<const std::string> ids,
                                         const PredictionSet& predictions,
                                         const ScoringParams& params);

struct IdScore {
  std::string id;
  double score = 0.0;
};

// Ids of the n highest scores, descending, ties by ascending id.
std::vector<std::string> rank_and_take(std::span<const IdScore> scores, std::size_t n);

enum class Criterion { kDisplacement, kSoftCollision, kAgentUncertainty, kMixture };

inline constexpr std::array<Criterion, 4> kAllCriteria = {
    Criterion::kDisplacement, Criterion::kSoftCollision, Criterion::kAgentUncertainty,
    Criterion::kMixture};

std::string_view to_string(Criterion c);  // "DE", "SC", "AU", "MX"
Criterion parse_criterion(std::string_view s);

// The ranking key a criterion uses: a normalized single criterion or the
// overall mixture.
std::vector<IdScore> ranking_view(std::span<const CriterionScores> scores, Criterion criterion);

// Line-delimited predictions file, one ClipPrediction per line.
PredictionSet read_predictions(const std::filesystem::path& path);
PredictionSet parse_predictions(std::string_view text);
std::string serialize_prediction(const ClipPrediction& prediction);
void write_predictions(std::span<const ClipPrediction> predictions,
                       const std::filesystem::path& path);

// Comma-separated scores table with a fixed header:
// clip_id,de_raw,sc_raw,au_raw,de_norm,sc_norm,au_norm,overall
std::string scores_to_csv(std::span<const CriterionScores> scores);
std::vector<CriterionScores> scores_from_csv(std::string_view text);
void write_scores(std::span<const CriterionScores> scores, const std::filesystem::path& path);
std::vector<CriterionScores> read_scores(const std::filesystem::path& path);

}  // namespace activead
