#include "activead/loop.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "activead/error.h"

namespace activead {

using nlohmann::ordered_json;

std::string_view to_string(InitMode m) {
  return m == InitMode::kRandom ? "random" : "ego-diversity";
}

InitMode parse_init_mode(std::string_view s) {
  if (s == "random") return InitMode::kRandom;
  if (s == "ego-diversity") return InitMode::kEgoDiversity;
  throw ConfigError("unknown init mode '" + std::string(s) + "'");
}

std::string_view to_string(SelectionRule r) {
  switch (r) {
    case SelectionRule::kDisplacement: return "DE";
    case SelectionRule::kSoftCollision: return "SC";
    case SelectionRule::kAgentUncertainty: return "AU";
    case SelectionRule::kMixture: return "MX";
    case SelectionRule::kRandom: return "random";
  }
  return "MX";
}

SelectionRule parse_selection_rule(std::string_view s) {
  for (auto r : {SelectionRule::kDisplacement, SelectionRule::kSoftCollision,
                 SelectionRule::kAgentUncertainty, SelectionRule::kMixture,
                 SelectionRule::kRandom}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown selection rule '" + std::string(s) + "'");
}

void ActiveConfig::validate(std::size_t pool_size) const {
  if (initial_count == 0) throw ConfigError("n0 must be >= 1");
  if (rounds > 0 && per_round == 0) throw ConfigError("n_itr must be >= 1 when rounds > 0");
  if (budget() > pool_size) {
    throw ConfigError("budget " + std::to_string(budget()) + " exceeds pool size " +
                      std::to_string(pool_size));
  }
  if (!std::isfinite(gamma) || gamma <= 0.0 || gamma > 1.0) {
    throw ConfigError("gamma must lie in (0, 1]");
  }
  if (command_threshold < 1) throw ConfigError("tau_c must be >= 1");
  scoring.validate();
}

ActiveConfig ActiveConfig::default_schedule(std::size_t pool_size) {
  ActiveConfig config;
  config.initial_count = std::max<std::size_t>(1, pool_size / 10);
  config.per_round = std::max<std::size_t>(1, pool_size / 10);
  config.rounds = 2;
  return config;
}

ordered_json to_json(const ActiveConfig& c) {
  ordered_json j;
  j["budget"] = c.budget();
  j["n0"] = c.initial_count;
  j["rounds"] = c.rounds;
  j["n_itr"] = c.per_round;
  j["alpha"] = c.scoring.alpha;
  j["beta"] = c.scoring.beta;
  j["gamma"] = c.gamma;
  j["tau_c"] = c.command_threshold;
  j["eps_a"] = c.scoring.min_confidence;
  j["delta_d"] = c.scoring.distance_threshold;
  j["seed"] = c.seed;
  j["init_mode"] = to_string(c.init_mode);
  j["criterion"] = to_string(c.rule);
  return j;
}

std::filesystem::path FileProvider::round_file(const std::filesystem::path& dir,
                                               std::size_t round) {
  return dir / ("predictions_round_" + std::to_string(round) + ".jsonl");
}

void FileProvider::train(const Pool&, std::span<const std::string>, std::size_t round) {
  current_ = read_predictions(round_file(dir_, round));
}

std::vector<ClipPrediction> FileProvider::predict(const Pool&,
                                                  std::span<const std::string> ids) const {
  std::vector<ClipPrediction> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = current_.find(id);
    if (it == current_.end()) throw DataError("missing prediction for clip '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> random_init(const Pool& pool, std::size_t count, std::uint64_t seed) {
  if (count > pool.size()) {
    throw ConfigError("cannot randomly select " + std::to_string(count) + " of " +
                      std::to_string(pool.size()) + " clips");
  }
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& clip : pool.clips()) ids.push_back(clip.id);
  std::vector<std::string> out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  std::sample(ids.begin(), ids.end(), std::back_inserter(out), count, rng);
  return out;
}

namespace {

std::vector<std::string> random_round_pick(std::span<const std::string> unlabeled,
                                           std::size_t count, std::uint64_t seed,
                                           std::size_t round) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), 0x5e1ec7u};
  std::mt19937_64 rng(seq);
  std::vector<std::string> out;
  out.reserve(count);
  std::sample(unlabeled.begin(), unlabeled.end(), std::back_inserter(out), count, rng);
  return out;
}

Criterion criterion_for(SelectionRule rule) {
  switch (rule) {
    case SelectionRule::kDisplacement: return Criterion::kDisplacement;
    case SelectionRule::kSoftCollision: return Criterion::kSoftCollision;
    case SelectionRule::kAgentUncertainty: return Criterion::kAgentUncertainty;
    default: return Criterion::kMixture;
  }
}

}  // namespace

RoundOutcome run_round(const SelectionState& state, const Pool& pool,
                       PredictionProvider& provider, const ActiveConfig& config,
                       std::size_t round) {
  const auto& unlabeled = state.unlabeled();
  // A short final round takes whatever is left.
  const std::size_t take = std::min(config.per_round, unlabeled.size());

  RoundSummary summary;
  summary.round = round;
  if (config.rule == SelectionRule::kRandom) {
    summary.selected = random_round_pick(unlabeled, take, config.seed, round);
  } else {
    const auto labeled = state.labeled();
    provider.train(pool, labeled, round);
    auto predictions = provider.predict(pool, unlabeled);

    PredictionSet by_id;
    for (auto& p : predictions) {
      const std::string id = p.clip_id;
      if (state.is_labeled(id) || !pool.contains(id)) {
        throw DataError("provider returned a prediction for non-candidate clip '" + id + "'");
      }
      if (!by_id.emplace(id, std::move(p)).second) {
        throw DataError("provider returned two predictions for clip '" + id + "'");
      }
    }
    const auto scores = score_clips(pool, unlabeled, by_id, config.scoring);

    summary.scored = scores.size();
    for (const auto& s : scores) {
      summary.de_mean += s.de_raw;
      summary.sc_mean += s.sc_raw;
      summary.au_mean += s.au_raw;
      summary.overall_mean += s.overall;
      summary.overall_max = std::max(summary.overall_max, s.overall);
    }
    if (!scores.empty()) {
      const auto n = static_cast<double>(scores.size());
      summary.de_mean /= n;
      summary.sc_mean /= n;
      summary.au_mean /= n;
      summary.overall_mean /= n;
    }
    for (auto c : kAllCriteria) {
      summary.criterion_picks[c] = rank_and_take(ranking_view(scores, c), take);
    }
    summary.selected = summary.criterion_picks.at(criterion_for(config.rule));
  }

  RoundOutcome outcome{state, std::move(summary)};
  outcome.state.add_round(outcome.summary.selected);
  return outcome;
}

RunResult run(const Pool& pool, PredictionProvider& provider, const ActiveConfig& config,
              const StageObserver& observer) {
  config.validate(pool.size());

  RunResult result;
  result.config = config;
  result.pool_size = pool.size();
  result.state = SelectionState(pool);

  if (config.init_mode == InitMode::kEgoDiversity) {
    auto init = ego_diversity_init(pool.clips(), config.initial_count, config.gamma,
                                   config.command_threshold);
    result.allocations = std::move(init.strata);
    result.state.add_round(std::move(init.ids));
  } else {
    result.state.add_round(random_init(pool, config.initial_count, config.seed));
  }
  if (observer) observer(0, result.state);

  for (std::size_t round = 1; round <= config.rounds; ++round) {
    auto outcome = run_round(result.state, pool, provider, config, round);
    result.state = std::move(outcome.state);
    result.rounds.push_back(std::move(outcome.summary));
    if (observer) observer(round, result.state);
  }
  return result;
}

ordered_json manifest_json(const RunResult& result) {
  ordered_json j;
  j["schema"] = kManifestSchema;
  j["config"] = to_json(result.config);
  j["pool_size"] = result.pool_size;

  ordered_json init;
  init["mode"] = to_string(result.config.init_mode);
  init["ids"] = result.state.rounds().empty() ? std::vector<std::string>{}
                                              : result.state.rounds().front().ids;
  init["allocations"] = ordered_json::array();
  for (const auto& a : result.allocations) {
    init["allocations"].push_back({{"bucket", to_string(a.bucket)},
                                   {"command", to_string(a.maneuver)},
                                   {"available", a.available},
                                   {"share", a.share},
                                   {"allocated", a.allocated}});
  }
  j["init"] = std::move(init);

  j["rounds"] = ordered_json::array();
  for (const auto& r : result.rounds) {
    ordered_json round;
    round["round"] = r.round;
    round["ids"] = r.selected;
    round["scored"] = r.scored;
    round["de_mean"] = r.de_mean;
    round["sc_mean"] = r.sc_mean;
    round["au_mean"] = r.au_mean;
    round["overall_mean"] = r.overall_mean;
    round["overall_max"] = r.overall_max;
    ordered_json picks = ordered_json::object();
    for (const auto& [criterion, ids] : r.criterion_picks) picks[std::string(to_string(criterion))] = ids;
    round["criterion_picks"] = std::move(picks);
    j["rounds"].push_back(std::move(round));
  }

  ordered_json rounds = ordered_json::array();
  for (const auto& r : result.state.rounds()) rounds.push_back({{"round", r.round}, {"ids", r.ids}});
  j["selection"] = {{"rounds", std::move(rounds)}};
  return j;
}

}  // namespace activead
