#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activead/criteria.h"
#include "activead/loop.h"
#include "activead/pool.h"
#include "json.hpp"

// Synthetic long-tail driving world and a nearest-neighbor toy planner.
//
// Clips are generated in an ego-centered frame: the planning query sits at the
// origin heading +x, and waypoints are spaced `dt` seconds apart. The planner
// is deliberately privileged: it reads the true agent states when it forms
// forecasts, so the selection criteria have something informative to score.
// It is a test harness for the selection engine, not a perception model.
namespace activead::synth {

struct WorldConfig {
  std::size_t clips = 2000;
  // DS, DR, NS, NR
  std::array<double, 4> bucket_probs = {491.0 / 700, 125.0 / 700, 71.0 / 700, 13.0 / 700};
  // L, R, O, S
  std::array<double, 4> maneuver_probs = {112.0 / 700, 132.0 / 700, 33.0 / 700, 423.0 / 700};
  std::size_t horizon = kDefaultHorizon;
  std::size_t frames = 40;  // 20 s at 2 Hz
  double dt = 0.5;          // seconds between waypoints and frames
  double agent_rate = 3.0;  // mean background agents per clip
  double noise_scale = 0.15;  // meters, doubled for rain and again for night
  double min_speed = 2.0;
  double max_speed = 14.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const WorldConfig& config);

struct AgentTruth {
  std::string agent_id;
  Point2 start;      // position at the query time
  Trajectory track;  // positions at the horizon steps
};

struct ClipTruth {
  std::string clip_id;
  Trajectory ego_future;
  std::vector<AgentTruth> agents;
  ManeuverClass maneuver = ManeuverClass::kStraight;  // generator label
};

class WorldTruth {
 public:
  WorldTruth() = default;
  explicit WorldTruth(std::vector<ClipTruth> clips);

  const ClipTruth& at(std::string_view clip_id) const;
  bool contains(std::string_view clip_id) const;
  std::span<const ClipTruth> clips() const { return clips_; }

 private:
  std::vector<ClipTruth> clips_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct World {
  Pool pool;
  WorldTruth truth;
};

// Deterministic for a given (config, id_prefix). Each clip draws from its
// own seeded stream, so clip i does not depend on how many clips follow it.
World generate_world(const WorldConfig& config, const std::string& id_prefix = "clip-");

std::string serialize_truth(const ClipTruth& truth);
void save_truth(const WorldTruth& truth, const std::filesystem::path& path);
WorldTruth load_truth(const std::filesystem::path& path);

// Writes pool and truth files. Nothing is written if the config is invalid.
void generate_pool(const WorldConfig& config, const std::filesystem::path& pool_path,
                   const std::filesystem::path& truth_path,
                   const std::string& id_prefix = "clip-");

struct PlannerParams {
  std::size_t neighbors = 5;
  double agent_radius = 30.0;        // meters; farther agents get no forecast
  double softmax_temperature = 5.0;  // meters
  double collision_threshold = 0.5;  // meters, evaluation proxy
  int command_threshold = 4;
  double dt = 0.5;
  double speed_scale = 15.0;  // m/s, feature normalizer

  void validate() const;
};

using Feature = std::array<double, 9>;

Feature clip_feature(const ClipRecord& clip, const PlannerParams& params);

// Constant-velocity straight plan at the clip's mean speed.
Trajectory constant_velocity_plan(const ClipRecord& clip, std::size_t horizon, double dt);

// Three-modality forecasts for every true agent within the agent radius.
std::vector<AgentForecast> forecast_agents(const ClipTruth& truth, std::size_t horizon,
                                           const PlannerParams& params);

// k-nearest-neighbor planner over labeled exemplars.
class ToyPlanner : public PredictionProvider {
 public:
  ToyPlanner(const WorldTruth& truth, PlannerParams params = {});

  // Stores one exemplar per id. Duplicate ids raise DataError.
  void fit(const Pool& pool, std::span<const std::string> ids);

  bool trained() const { return !exemplars_.empty(); }
  std::size_t exemplar_count() const { return exemplars_.size(); }
  bool has_exemplar(std::string_view id) const;
  const PlannerParams& params() const { return params_; }

  Trajectory plan(const ClipRecord& clip, std::size_t horizon) const;
  ClipPrediction predict_clip(const ClipRecord& clip, const ClipTruth& truth,
                              std::size_t horizon) const;

  void train(const Pool& pool, std::span<const std::string> labeled_ids,
             std::size_t round) override;
  std::vector<ClipPrediction> predict(const Pool& pool,
                                      std::span<const std::string> ids) const override;

 private:
  struct Exemplar {
    std::string id;
    Feature feature;
    Trajectory future;
  };

  const WorldTruth* truth_;
  PlannerParams params_;
  std::vector<Exemplar> exemplars_;
};

struct ClipEval {
  std::string clip_id;
  double de = 0.0;
  bool collided = false;
  std::vector<double> step_errors;
};

struct HeldoutResult {
  double avg_de = 0.0;
  double collision_rate = 0.0;  // percent of clips
  std::vector<ClipEval> clips;
  std::vector<double> mean_step_errors;
};

// Plans every held-out clip and compares against its truth. Held-out ids must
// not be among the planner's exemplars.
HeldoutResult heldout_eval(const ToyPlanner& planner, const Pool& heldout,
                           const WorldTruth& truth);

}  // namespace activead::synth
