#include "activead/criteria.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "activead/error.h"
#include "activead/io.h"
#include "json.hpp"

namespace activead {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_trajectory(const Trajectory& traj, std::size_t horizon, const std::string& what) {
  if (traj.size() != horizon) {
    throw DataError(what + " has " + std::to_string(traj.size()) + " waypoints, expected " +
                    std::to_string(horizon));
  }
  for (const auto& p : traj) {
    if (!is_finite(p)) throw DataError(what + " has a non-finite waypoint");
  }
}

void check_probs(const AgentForecast& agent) {
  double sum = 0.0;
  for (double p : agent.modality_probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw DataError("agent '" + agent.agent_id + "' has an invalid modality probability");
    }
    sum += p;
  }
  if (agent.modality_probs.empty() || std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    throw DataError("agent '" + agent.agent_id + "' modality probabilities do not sum to 1");
  }
}

Trajectory parse_trajectory(const json& j) {
  Trajectory out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw DataError("waypoint must be [x, y]");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

ordered_json trajectory_json(const Trajectory& traj) {
  ordered_json out = ordered_json::array();
  for (const auto& p : traj) out.push_back({p.x, p.y});
  return out;
}

}  // namespace

void validate_forecast(const AgentForecast& agent, std::size_t horizon) {
  if (!(agent.confidence >= 0.0 && agent.confidence <= 1.0)) {
    throw DataError("agent '" + agent.agent_id + "' confidence outside [0, 1]");
  }
  check_probs(agent);
  if (agent.modality_trajs.size() != agent.modality_probs.size()) {
    throw DataError("agent '" + agent.agent_id + "' has mismatched modality counts");
  }
  for (const auto& traj : agent.modality_trajs) {
    check_trajectory(traj, horizon, "agent '" + agent.agent_id + "' modality");
  }
}

void validate_prediction(const ClipPrediction& prediction, std::size_t horizon) {
  check_trajectory(prediction.ego_plan, horizon, "ego plan of '" + prediction.clip_id + "'");
  for (const auto& agent : prediction.agents) validate_forecast(agent, horizon);
}

std::size_t representative_modality(const AgentForecast& agent) {
  if (agent.modality_probs.empty()) {
    throw DataError("agent '" + agent.agent_id + "' has no modalities");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < agent.modality_probs.size(); ++i) {
    if (agent.modality_probs[i] > agent.modality_probs[best]) best = i;
  }
  return best;
}

double displacement_error(std::span<const Point2> plan, std::span<const Point2> reference) {
  if (plan.size() != reference.size()) {
    throw DataError("trajectory length mismatch: " + std::to_string(plan.size()) + " vs " +
                    std::to_string(reference.size()));
  }
  if (plan.empty()) throw DataError("cannot compare empty trajectories");
  double sum = 0.0;
  for (std::size_t t = 0; t < plan.size(); ++t) sum += distance(plan[t], reference[t]);
  return sum / static_cast<double>(plan.size());
}

double soft_collision(const ClipPrediction& prediction, double min_confidence) {
  std::vector<const Trajectory*> tracks;
  for (const auto& agent : prediction.agents) {
    if (agent.confidence < min_confidence) continue;
    tracks.push_back(&agent.modality_trajs.at(representative_modality(agent)));
  }
  if (tracks.empty()) return 0.0;

  double score = 0.0;
  for (std::size_t t = 0; t < prediction.ego_plan.size(); ++t) {
    double closest = std::numeric_limits<double>::infinity();
    for (const auto* track : tracks) {
      closest = std::min(closest, distance(prediction.ego_plan[t], track->at(t)));
    }
    score += std::exp(-closest);
  }
  return score;
}

double modality_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double agent_uncertainty(const ClipPrediction& prediction, double distance_threshold) {
  double score = 0.0;
  for (const auto& agent : prediction.agents) {
    check_probs(agent);
    const auto& track = agent.modality_trajs.at(representative_modality(agent));
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < prediction.ego_plan.size(); ++t) {
      closest = std::min(closest, distance(prediction.ego_plan[t], track.at(t)));
    }
    if (closest > distance_threshold) continue;
    score += std::exp(distance_threshold - closest) * modality_entropy(agent.modality_probs);
  }
  return score;
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

double overall_loss(double de_norm, double sc_norm, double au_norm, double alpha, double beta) {
  return de_norm + alpha * sc_norm + beta * au_norm;
}

void ScoringParams::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw ConfigError("alpha and beta must be finite and >= 0");
  }
  if (!(min_confidence >= 0.0 && min_confidence <= 1.0)) {
    throw ConfigError("confidence threshold must lie in [0, 1]");
  }
  if (!(distance_threshold > 0.0) || !std::isfinite(distance_threshold)) {
    throw ConfigError("distance threshold must be finite and > 0");
  }
}

std::vector<CriterionScores> score_clips(const Pool& pool, std::span<const std::string> ids,
                                         const PredictionSet& predictions,
                                         const ScoringParams& params) {
  params.validate();
  std::vector<CriterionScores> scores;
  scores.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = predictions.find(id);
    if (it == predictions.end()) throw DataError("missing prediction for clip '" + id + "'");
    const ClipPrediction& pred = it->second;
    validate_prediction(pred, pool.horizon());
    CriterionScores s;
    s.clip_id = id;
    s.de_raw = displacement_error(pred.ego_plan, pool.at(id).gt_future);
    s.sc_raw = soft_collision(pred, params.min_confidence);
    s.au_raw = agent_uncertainty(pred, params.distance_threshold);
    scores.push_back(std::move(s));
  }

  std::vector<double> de, sc, au;
  for (const auto& s : scores) {
    de.push_back(s.de_raw);
    sc.push_back(s.sc_raw);
    au.push_back(s.au_raw);
  }
  de = min_max_normalize(de);
  sc = min_max_normalize(sc);
  au = min_max_normalize(au);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i].de_norm = de[i];
    scores[i].sc_norm = sc[i];
    scores[i].au_norm = au[i];
    scores[i].overall = overall_loss(de[i], sc[i], au[i], params.alpha, params.beta);
  }
  return scores;
}

std::vector<std::string> rank_and_take(std::span<const IdScore> scores, std::size_t n) {
  if (n > scores.size()) {
    throw ConfigError("cannot take " + std::to_string(n) + " of " +
                      std::to_string(scores.size()) + " scored clips");
  }
  std::vector<const IdScore*> order;
  order.reserve(scores.size());
  for (const auto& s : scores) {
    if (std::isnan(s.score)) throw DataError("score for '" + s.id + "' is NaN");
    order.push_back(&s);
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [](const IdScore* a, const IdScore* b) {
                      if (a->score != b->score) return a->score > b->score;
                      return a->id < b->id;
                    });
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(order[i]->id);
  return out;
}

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::kDisplacement: return "DE";
    case Criterion::kSoftCollision: return "SC";
    case Criterion::kAgentUncertainty: return "AU";
    case Criterion::kMixture: return "MX";
  }
  return "MX";
}

Criterion parse_criterion(std::string_view s) {
  for (auto c : kAllCriteria) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown criterion '" + std::string(s) + "'");
}

std::vector<IdScore> ranking_view(std::span<const CriterionScores> scores, Criterion criterion) {
  std::vector<IdScore> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    double key = s.overall;
    switch (criterion) {
      case Criterion::kDisplacement: key = s.de_norm; break;
      case Criterion::kSoftCollision: key = s.sc_norm; break;
      case Criterion::kAgentUncertainty: key = s.au_norm; break;
      case Criterion::kMixture: break;
    }
    out.push_back({s.clip_id, key});
  }
  return out;
}

PredictionSet parse_predictions(std::string_view text) {
  PredictionSet out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ClipPrediction pred;
    try {
      const json j = json::parse(line);
      pred.clip_id = j.at("clip_id").get<std::string>();
      pred.ego_plan = parse_trajectory(j.at("ego_plan"));
      for (const auto& a : j.at("agents")) {
        AgentForecast agent;
        agent.agent_id = a.at("agent_id").get<std::string>();
        agent.confidence = a.at("confidence").get<double>();
        agent.modality_probs = a.at("modality_probs").get<std::vector<double>>();
        for (const auto& traj : a.at("modality_trajs")) {
          agent.modality_trajs.push_back(parse_trajectory(traj));
        }
        pred.agents.push_back(std::move(agent));
      }
      validate_prediction(pred, pred.ego_plan.size());
    } catch (const json::exception& e) {
      throw DataError("predictions line " + std::to_string(line_number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("predictions line " + std::to_string(line_number) + ": " + e.what());
    }
    const std::string id = pred.clip_id;
    if (!out.emplace(id, std::move(pred)).second) {
      throw DataError("predictions line " + std::to_string(line_number) +
                      ": duplicate prediction for clip '" + id + "'");
    }
  }
  return out;
}

PredictionSet read_predictions(const std::filesystem::path& path) {
  try {
    return parse_predictions(io::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_prediction(const ClipPrediction& prediction) {
  ordered_json j;
  j["clip_id"] = prediction.clip_id;
  j["ego_plan"] = trajectory_json(prediction.ego_plan);
  j["agents"] = ordered_json::array();
  for (const auto& agent : prediction.agents) {
    ordered_json a;
    a["agent_id"] = agent.agent_id;
    a["confidence"] = agent.confidence;
    a["modality_probs"] = agent.modality_probs;
    a["modality_trajs"] = ordered_json::array();
    for (const auto& traj : agent.modality_trajs) a["modality_trajs"].push_back(trajectory_json(traj));
    j["agents"].push_back(std::move(a));
  }
  return j.dump();
}

void write_predictions(std::span<const ClipPrediction> predictions,
                       const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : predictions) {
    out += serialize_prediction(p);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

namespace {
constexpr std::string_view kScoresHeader =
    "clip_id,de_raw,sc_raw,au_raw,de_norm,sc_norm,au_norm,overall";
}

std::string scores_to_csv(std::span<const CriterionScores> scores) {
  std::string out(kScoresHeader);
  out += '\n';
  for (const auto& s : scores) {
    if (s.clip_id.find_first_of(",\n\"") != std::string::npos) {
      throw DataError("clip id '" + s.clip_id + "' cannot be written to a delimited table");
    }
    out += s.clip_id;
    for (double v : {s.de_raw, s.sc_raw, s.au_raw, s.de_norm, s.sc_norm, s.au_norm, s.overall}) {
      out += ',';
      out += io::format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::vector<CriterionScores> scores_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kScoresHeader) {
    throw DataError("scores table must start with header '" + std::string(kScoresHeader) + "'");
  }
  std::vector<CriterionScores> out;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) {
      throw DataError("scores line " + std::to_string(line_number) + ": expected 8 columns");
    }
    CriterionScores s;
    s.clip_id = cells[0];
    double* fields[] = {&s.de_raw, &s.sc_raw, &s.au_raw, &s.de_norm,
                        &s.sc_norm, &s.au_norm, &s.overall};
    for (std::size_t i = 0; i < 7; ++i) {
      try {
        std::size_t used = 0;
        *fields[i] = std::stod(cells[i + 1], &used);
        if (used != cells[i + 1].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw DataError("scores line " + std::to_string(line_number) + ": bad number '" +
                        cells[i + 1] + "'");
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_scores(std::span<const CriterionScores> scores, const std::filesystem::path& path) {
  io::write_file_atomic(path, scores_to_csv(scores));
}

std::vector<CriterionScores> read_scores(const std::filesystem::path& path) {
  return scores_from_csv(io::read_file(path));
}

}  // namespace activead
