#include "activead/synthworld.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "activead/error.h"
#include "activead/io.h"

namespace activead::synth {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kSpeedJitter = 0.3;       // m/s per-frame speed noise
constexpr double kMinTurnRate = 0.25;      // rad/s
constexpr double kMaxTurnRate = 0.5;       // rad/s
constexpr double kStraightDrift = 0.01;    // rad/s, std of curvature on straight clips
constexpr double kMinLaneOffset = 3.0;     // meters, overtake lateral shift
constexpr double kMaxLaneOffset = 4.0;
constexpr std::size_t kManeuverMinFrames = 4;
constexpr std::size_t kManeuverMaxFrames = 8;
constexpr std::size_t kMaxSpuriousCommands = 2;
constexpr double kModalityAngle = 15.0 * std::numbers::pi / 180.0;

void check_probs(const std::array<double, 4>& probs, const char* what) {
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw ConfigError(std::string(what) + " entries must be finite and >= 0");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError(std::string(what) + " must sum to 1");
}

Point2 rotate(const Point2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Clean ego position and heading t seconds after the query.
struct Pose {
  Point2 position;
  double heading;
};

Pose maneuver_pose(ManeuverClass maneuver, double speed, double turn_rate, double lane_offset,
                   double t, double horizon_time) {
  if (maneuver == ManeuverClass::kOvertake) {
    const double phase = std::numbers::pi * t / horizon_time;
    const double y = lane_offset * (1.0 - std::cos(phase)) / 2.0;
    const double dy = lane_offset * std::numbers::pi / (2.0 * horizon_time) * std::sin(phase);
    return {{speed * t, y}, std::atan2(dy, speed)};
  }
  if (std::abs(turn_rate) < 1e-9) return {{speed * t, 0.0}, 0.0};
  const double a = turn_rate * t;
  return {{speed * std::sin(a) / turn_rate, speed * (1.0 - std::cos(a)) / turn_rate}, a};
}

std::string padded_id(const std::string& prefix, std::size_t index, std::size_t count) {
  std::string digits = std::to_string(index);
  const std::size_t width = std::max<std::size_t>(5, std::to_string(count).size());
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

Point2 parse_point(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("waypoint must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

ordered_json point_json(const Point2& p) { return ordered_json::array({p.x, p.y}); }

ordered_json trajectory_json(const Trajectory& traj) {
  ordered_json out = ordered_json::array();
  for (const auto& p : traj) out.push_back(point_json(p));
  return out;
}

struct GeneratedClip {
  ClipRecord record;
  ClipTruth truth;
};

GeneratedClip generate_clip(const WorldConfig& config, std::size_t index, std::string id) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto uniform_count = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto bucket = static_cast<Bucket>(
      std::discrete_distribution<int>(config.bucket_probs.begin(), config.bucket_probs.end())(rng));
  const auto maneuver = static_cast<ManeuverClass>(std::discrete_distribution<int>(
      config.maneuver_probs.begin(), config.maneuver_probs.end())(rng));

  GeneratedClip out;
  ClipRecord& clip = out.record;
  clip.id = std::move(id);
  const bool rainy = bucket == Bucket::kDR || bucket == Bucket::kNR;
  const bool night = bucket == Bucket::kNS || bucket == Bucket::kNR;
  clip.weather = rainy ? Weather::kRainy : Weather::kSunny;
  clip.lighting = night ? Lighting::kNight : Lighting::kDay;

  const double speed = uniform(config.min_speed, config.max_speed);

  // Per-frame commands: a maneuver window plus a few spurious commands that
  // stay below the classification threshold.
  const std::size_t frames = config.frames;
  std::vector<Command> commands(frames, Command::kStraight);
  auto fill = [&](std::size_t start, std::size_t len, Command c) {
    for (std::size_t f = start; f < start + len; ++f) commands[f] = c;
  };
  switch (maneuver) {
    case ManeuverClass::kLeft:
    case ManeuverClass::kRight: {
      const std::size_t len = uniform_count(kManeuverMinFrames, kManeuverMaxFrames);
      const std::size_t start = uniform_count(0, frames - len);
      fill(start, len, maneuver == ManeuverClass::kLeft ? Command::kLeft : Command::kRight);
      break;
    }
    case ManeuverClass::kOvertake: {
      const std::size_t left = uniform_count(kManeuverMinFrames, kManeuverMaxFrames - 2);
      const std::size_t right = uniform_count(kManeuverMinFrames, kManeuverMaxFrames - 2);
      const std::size_t start = uniform_count(0, frames - left - right);
      fill(start, left, Command::kLeft);
      fill(start + left, right, Command::kRight);
      break;
    }
    case ManeuverClass::kStraight:
      break;
  }
  for (Command c : {Command::kLeft, Command::kRight}) {
    const std::size_t n = uniform_count(0, kMaxSpuriousCommands);
    for (std::size_t placed = 0; placed < n;) {
      const std::size_t f = uniform_count(0, frames - 1);
      if (commands[f] != Command::kStraight) continue;
      commands[f] = c;
      ++placed;
    }
  }
  for (std::size_t f = 0; f < frames; ++f) {
    clip.frames.push_back({std::max(0.0, speed + kSpeedJitter * normal(rng)), commands[f]});
  }

  double turn_rate = 0.0;
  double lane_offset = 0.0;
  switch (maneuver) {
    case ManeuverClass::kLeft: turn_rate = uniform(kMinTurnRate, kMaxTurnRate); break;
    case ManeuverClass::kRight: turn_rate = -uniform(kMinTurnRate, kMaxTurnRate); break;
    case ManeuverClass::kOvertake: lane_offset = uniform(kMinLaneOffset, kMaxLaneOffset); break;
    case ManeuverClass::kStraight: turn_rate = kStraightDrift * normal(rng); break;
  }

  const std::size_t horizon = config.horizon;
  const double horizon_time = static_cast<double>(horizon) * config.dt;
  std::vector<Pose> clean;
  for (std::size_t k = 1; k <= horizon; ++k) {
    clean.push_back(maneuver_pose(maneuver, speed, turn_rate, lane_offset,
                                  static_cast<double>(k) * config.dt, horizon_time));
  }
  const double sigma = config.noise_scale * (rainy ? 2.0 : 1.0) * (night ? 2.0 : 1.0);
  for (const auto& pose : clean) {
    clip.gt_future.push_back(
        {pose.position.x + sigma * normal(rng), pose.position.y + sigma * normal(rng)});
  }

  ClipTruth& truth = out.truth;
  truth.clip_id = clip.id;
  truth.ego_future = clip.gt_future;
  truth.maneuver = maneuver;

  auto add_agent = [&](Point2 at_step, std::size_t step, Point2 velocity) {
    AgentTruth agent;
    agent.agent_id = "a" + std::to_string(truth.agents.size());
    const double t = static_cast<double>(step) * config.dt;
    agent.start = {at_step.x - velocity.x * t, at_step.y - velocity.y * t};
    for (std::size_t k = 1; k <= horizon; ++k) {
      const double tk = static_cast<double>(k) * config.dt;
      agent.track.push_back({agent.start.x + velocity.x * tk, agent.start.y + velocity.y * tk});
    }
    truth.agents.push_back(std::move(agent));
  };

  // Background traffic: constant-velocity tracks passing beside the ego path.
  const std::size_t background =
      config.agent_rate > 0.0 ? std::poisson_distribution<std::size_t>(config.agent_rate)(rng) : 0;
  for (std::size_t a = 0; a < background; ++a) {
    const std::size_t step = uniform_count(1, horizon);
    const Pose& anchor = clean[step - 1];
    const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
    const Point2 offset = rotate({uniform(-6.0, 6.0), side * uniform(2.0, 8.0)}, anchor.heading);
    const Point2 at_step{anchor.position.x + offset.x, anchor.position.y + offset.y};
    const double kind = unit(rng);
    double heading = anchor.heading;
    double agent_speed = 0.0;
    if (kind < 0.5) {
      heading += 0.05 * normal(rng);
      agent_speed = uniform(0.0, config.max_speed);
    } else if (kind < 0.8) {
      heading += std::numbers::pi + 0.05 * normal(rng);
      agent_speed = uniform(0.0, config.max_speed);
    } else {
      heading += side * std::numbers::pi / 2.0;
      agent_speed = uniform(0.0, 2.0);
    }
    add_agent(at_step, step, rotate({agent_speed, 0.0}, heading));
  }

  // Turns and overtakes have a reason: something sits where driving straight
  // on would take the ego.
  if (maneuver != ManeuverClass::kStraight) {
    const std::size_t step = uniform_count(horizon / 2 + 1, horizon);
    const double t = static_cast<double>(step) * config.dt;
    const Point2 blocked{speed * t, 0.0};
    Point2 velocity{0.0, 0.0};
    if (maneuver == ManeuverClass::kOvertake) velocity.x = speed * uniform(0.3, 0.6);
    add_agent(blocked, step, velocity);
  }
  return out;
}

}  // namespace

void WorldConfig::validate() const {
  if (clips == 0) throw ConfigError("clip count must be >= 1");
  check_probs(bucket_probs, "bucket_probs");
  check_probs(maneuver_probs, "maneuver_probs");
  if (horizon == 0) throw ConfigError("horizon must be >= 1");
  if (frames < 2 * kManeuverMaxFrames) {
    throw ConfigError("frames must be >= " + std::to_string(2 * kManeuverMaxFrames));
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be > 0");
  if (!(agent_rate >= 0.0) || !std::isfinite(agent_rate)) {
    throw ConfigError("agent_rate must be >= 0");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw ConfigError("noise_scale must be >= 0");
  }
  if (!(min_speed >= 0.0) || !(max_speed >= min_speed) || !std::isfinite(max_speed)) {
    throw ConfigError("speed range must satisfy 0 <= min_speed <= max_speed");
  }
}

ordered_json to_json(const WorldConfig& c) {
  ordered_json j;
  j["n"] = c.clips;
  j["bucket_probs"] = c.bucket_probs;
  j["maneuver_probs"] = c.maneuver_probs;
  j["horizon"] = c.horizon;
  j["frames"] = c.frames;
  j["dt"] = c.dt;
  j["agent_rate"] = c.agent_rate;
  j["noise_scale"] = c.noise_scale;
  j["min_speed"] = c.min_speed;
  j["max_speed"] = c.max_speed;
  j["seed"] = c.seed;
  return j;
}

WorldTruth::WorldTruth(std::vector<ClipTruth> clips) : clips_(std::move(clips)) {
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    if (!index_.emplace(clips_[i].clip_id, i).second) {
      throw DataError("duplicate truth record for clip '" + clips_[i].clip_id + "'");
    }
  }
}

const ClipTruth& WorldTruth::at(std::string_view clip_id) const {
  auto it = index_.find(clip_id);
  if (it == index_.end()) throw DataError("no truth for clip '" + std::string(clip_id) + "'");
  return clips_[it->second];
}

bool WorldTruth::contains(std::string_view clip_id) const {
  return index_.find(clip_id) != index_.end();
}

World generate_world(const WorldConfig& config, const std::string& id_prefix) {
  config.validate();
  std::vector<ClipRecord> records;
  std::vector<ClipTruth> truths;
  records.reserve(config.clips);
  truths.reserve(config.clips);
  for (std::size_t i = 0; i < config.clips; ++i) {
    auto clip = generate_clip(config, i, padded_id(id_prefix, i, config.clips));
    records.push_back(std::move(clip.record));
    truths.push_back(std::move(clip.truth));
  }
  return {Pool(std::move(records), config.horizon), WorldTruth(std::move(truths))};
}

std::string serialize_truth(const ClipTruth& truth) {
  ordered_json j;
  j["clip_id"] = truth.clip_id;
  j["maneuver"] = to_string(truth.maneuver);
  j["ego_future"] = trajectory_json(truth.ego_future);
  j["agents"] = ordered_json::array();
  for (const auto& a : truth.agents) {
    j["agents"].push_back({{"agent_id", a.agent_id},
                           {"start", point_json(a.start)},
                           {"track", trajectory_json(a.track)}});
  }
  return j.dump();
}

void save_truth(const WorldTruth& truth, const std::filesystem::path& path) {
  std::string out;
  for (const auto& clip : truth.clips()) {
    out += serialize_truth(clip);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

WorldTruth load_truth(const std::filesystem::path& path) {
  std::vector<ClipTruth> clips;
  io::for_each_line(path, [&](std::size_t line_number, std::string_view line) {
    try {
      const json j = json::parse(line);
      ClipTruth truth;
      truth.clip_id = j.at("clip_id").get<std::string>();
      truth.maneuver = parse_maneuver(j.at("maneuver").get<std::string>());
      for (const auto& p : j.at("ego_future")) truth.ego_future.push_back(parse_point(p));
      for (const auto& a : j.at("agents")) {
        AgentTruth agent;
        agent.agent_id = a.at("agent_id").get<std::string>();
        agent.start = parse_point(a.at("start"));
        for (const auto& p : a.at("track")) agent.track.push_back(parse_point(p));
        truth.agents.push_back(std::move(agent));
      }
      clips.push_back(std::move(truth));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_number) + ": " + e.what());
    }
  });
  return WorldTruth(std::move(clips));
}

void generate_pool(const WorldConfig& config, const std::filesystem::path& pool_path,
                   const std::filesystem::path& truth_path, const std::string& id_prefix) {
  const World world = generate_world(config, id_prefix);
  save_pool(world.pool.clips(), pool_path);
  save_truth(world.truth, truth_path);
}

void PlannerParams::validate() const {
  if (neighbors == 0) throw ConfigError("planner_k must be >= 1");
  if (!(agent_radius > 0.0)) throw ConfigError("agent_radius must be > 0");
  if (!(softmax_temperature > 0.0)) throw ConfigError("softmax_temperature must be > 0");
  if (!(collision_threshold >= 0.0)) throw ConfigError("collision_threshold must be >= 0");
  if (command_threshold < 1) throw ConfigError("tau_c must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(speed_scale > 0.0)) throw ConfigError("speed_scale must be > 0");
}

Feature clip_feature(const ClipRecord& clip, const PlannerParams& params) {
  Feature f{};
  f[static_cast<std::size_t>(weather_lighting_bucket(clip))] = 1.0;
  f[4 + static_cast<std::size_t>(classify_command(clip, params.command_threshold))] = 1.0;
  f[8] = mean_speed(clip) / params.speed_scale;
  return f;
}

Trajectory constant_velocity_plan(const ClipRecord& clip, std::size_t horizon, double dt) {
  const double speed = mean_speed(clip);
  Trajectory plan;
  plan.reserve(horizon);
  for (std::size_t k = 1; k <= horizon; ++k) {
    plan.push_back({speed * static_cast<double>(k) * dt, 0.0});
  }
  return plan;
}

std::vector<AgentForecast> forecast_agents(const ClipTruth& truth, std::size_t horizon,
                                           const PlannerParams& params) {
  std::vector<AgentForecast> out;
  for (const auto& agent : truth.agents) {
    if (agent.track.size() != horizon) {
      throw DataError("agent '" + agent.agent_id + "' of clip '" + truth.clip_id +
                      "' has a track of the wrong length");
    }
    const double d = std::hypot(agent.start.x, agent.start.y);
    if (d > params.agent_radius) continue;

    const Point2 velocity{(agent.track[0].x - agent.start.x) / params.dt,
                          (agent.track[0].y - agent.start.y) / params.dt};
    AgentForecast forecast;
    forecast.agent_id = agent.agent_id;
    forecast.confidence = std::exp(-d / params.agent_radius);
    std::vector<double> logits;
    for (double angle : {-kModalityAngle, 0.0, kModalityAngle}) {
      const Point2 v = rotate(velocity, angle);
      Trajectory traj;
      for (std::size_t k = 1; k <= horizon; ++k) {
        const double t = static_cast<double>(k) * params.dt;
        traj.push_back({agent.start.x + v.x * t, agent.start.y + v.y * t});
      }
      logits.push_back(-distance(traj.back(), agent.track.back()) / params.softmax_temperature);
      forecast.modality_trajs.push_back(std::move(traj));
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double l : logits) {
      forecast.modality_probs.push_back(std::exp(l - top));
      total += forecast.modality_probs.back();
    }
    for (double& p : forecast.modality_probs) p /= total;
    out.push_back(std::move(forecast));
  }
  return out;
}

ToyPlanner::ToyPlanner(const WorldTruth& truth, PlannerParams params)
    : truth_(&truth), params_(params) {
  params_.validate();
}

void ToyPlanner::fit(const Pool& pool, std::span<const std::string> ids) {
  std::vector<Exemplar> exemplars;
  exemplars.reserve(ids.size());
  std::map<std::string_view, int, std::less<>> seen;
  for (const auto& id : ids) {
    if (!seen.emplace(id, 0).second) {
      throw DataError("clip '" + id + "' appears twice in the training set");
    }
    const ClipRecord& clip = pool.at(id);
    exemplars.push_back({id, clip_feature(clip, params_), truth_->at(id).ego_future});
  }
  exemplars_ = std::move(exemplars);
}

bool ToyPlanner::has_exemplar(std::string_view id) const {
  return std::any_of(exemplars_.begin(), exemplars_.end(),
                     [&](const Exemplar& e) { return e.id == id; });
}

Trajectory ToyPlanner::plan(const ClipRecord& clip, std::size_t horizon) const {
  if (exemplars_.empty()) return constant_velocity_plan(clip, horizon, params_.dt);

  const Feature query = clip_feature(clip, params_);
  struct Candidate {
    double dist2;
    const Exemplar* exemplar;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(exemplars_.size());
  for (const auto& e : exemplars_) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) d2 += (query[i] - e.feature[i]) * (query[i] - e.feature[i]);
    candidates.push_back({d2, &e});
  }
  const std::size_t k = std::min(params_.neighbors, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), [](const Candidate& a, const Candidate& b) {
                      if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
                      return a.exemplar->id < b.exemplar->id;
                    });
  Trajectory plan(horizon);
  for (std::size_t n = 0; n < k; ++n) {
    const auto& future = candidates[n].exemplar->future;
    if (future.size() != horizon) throw DataError("exemplar future has the wrong horizon");
    for (std::size_t t = 0; t < horizon; ++t) {
      plan[t].x += future[t].x / static_cast<double>(k);
      plan[t].y += future[t].y / static_cast<double>(k);
    }
  }
  return plan;
}

ClipPrediction ToyPlanner::predict_clip(const ClipRecord& clip, const ClipTruth& truth,
                                        std::size_t horizon) const {
  return {clip.id, plan(clip, horizon), forecast_agents(truth, horizon, params_)};
}

void ToyPlanner::train(const Pool& pool, std::span<const std::string> labeled_ids,
                       std::size_t) {
  fit(pool, labeled_ids);
}

std::vector<ClipPrediction> ToyPlanner::predict(const Pool& pool,
                                                std::span<const std::string> ids) const {
  std::vector<ClipPrediction> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(predict_clip(pool.at(id), truth_->at(id), pool.horizon()));
  return out;
}

HeldoutResult heldout_eval(const ToyPlanner& planner, const Pool& heldout,
                           const WorldTruth& truth) {
  HeldoutResult result;
  if (heldout.empty()) return result;
  const std::size_t horizon = heldout.horizon();
  result.mean_step_errors.assign(horizon, 0.0);
  std::size_t collisions = 0;
  for (const auto& clip : heldout.clips()) {
    if (planner.has_exemplar(clip.id)) {
      throw DataError("held-out clip '" + clip.id + "' is also a training exemplar");
    }
    const ClipTruth& t = truth.at(clip.id);
    const Trajectory plan = planner.plan(clip, horizon);
    ClipEval eval;
    eval.clip_id = clip.id;
    eval.de = displacement_error(plan, t.ego_future);
    for (std::size_t k = 0; k < horizon; ++k) {
      eval.step_errors.push_back(distance(plan[k], t.ego_future[k]));
      result.mean_step_errors[k] += eval.step_errors.back();
    }
    double closest = std::numeric_limits<double>::infinity();
    for (const auto& agent : t.agents) {
      for (std::size_t k = 0; k < horizon && k < agent.track.size(); ++k) {
        closest = std::min(closest, distance(plan[k], agent.track[k]));
      }
    }
    eval.collided = closest < planner.params().collision_threshold;
    collisions += eval.collided ? 1 : 0;
    result.avg_de += eval.de;
    result.clips.push_back(std::move(eval));
  }
  const auto n = static_cast<double>(heldout.size());
  result.avg_de /= n;
  result.collision_rate = 100.0 * static_cast<double>(collisions) / n;
  for (double& e : result.mean_step_errors) e /= n;
  return result;
}

}  // namespace activead::synth
