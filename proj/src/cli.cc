#include "activead/cli.h"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "activead/criteria.h"
#include "activead/diversity.h"
#include "activead/error.h"
#include "activead/io.h"
#include "activead/loop.h"
#include "activead/pool.h"
#include "activead/report.h"
#include "activead/synthworld.h"

namespace activead::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

ordered_json default_settings() {
  const synth::WorldConfig world;
  const synth::PlannerParams planner;
  const ScoringParams scoring;
  const ActiveConfig active;
  ordered_json s;
  s["seed"] = 0;
  // world
  s["n"] = world.clips;
  s["bucket_probs"] = world.bucket_probs;
  s["maneuver_probs"] = world.maneuver_probs;
  s["horizon"] = world.horizon;
  s["frames"] = world.frames;
  s["dt"] = world.dt;
  s["agent_rate"] = world.agent_rate;
  s["noise_scale"] = world.noise_scale;
  s["min_speed"] = world.min_speed;
  s["max_speed"] = world.max_speed;
  s["heldout_n"] = 0;
  s["heldout_seed"] = nullptr;
  // selection
  s["n0"] = nullptr;
  s["rounds"] = active.rounds;
  s["n_itr"] = nullptr;
  s["alpha"] = scoring.alpha;
  s["beta"] = scoring.beta;
  s["gamma"] = active.gamma;
  s["tau_c"] = active.command_threshold;
  s["eps_a"] = scoring.min_confidence;
  s["delta_d"] = scoring.distance_threshold;
  s["init_mode"] = to_string(active.init_mode);
  s["criterion"] = to_string(active.rule);
  // toy planner
  s["planner_k"] = planner.neighbors;
  s["agent_radius"] = planner.agent_radius;
  s["softmax_temperature"] = planner.softmax_temperature;
  s["collision_threshold"] = planner.collision_threshold;
  return s;
}

void merge_settings(ordered_json& base, const json& overrides) {
  if (!overrides.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    if (!base.contains(key)) throw ConfigError("unknown configuration key '" + key + "'");
    base[key] = value;
  }
}

std::pair<std::string, json> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("expected key=value, got '" + text + "'");
  }
  const std::string value = text.substr(eq + 1);
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  return {text.substr(0, eq), std::move(parsed)};
}

namespace {

// ---- typed access to resolved settings ----

const ordered_json& setting(const ordered_json& s, const std::string& key) {
  if (!s.contains(key)) throw ConfigError("missing configuration key '" + key + "'");
  return s.at(key);
}

std::uint64_t u64_setting(const ordered_json& s, const std::string& key) {
  const auto& v = setting(s, key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw ConfigError(key + " must be a non-negative integer");
}

std::size_t size_setting(const ordered_json& s, const std::string& key) {
  return static_cast<std::size_t>(u64_setting(s, key));
}

std::optional<std::size_t> optional_size(const ordered_json& s, const std::string& key) {
  if (setting(s, key).is_null()) return std::nullopt;
  return size_setting(s, key);
}

int int_setting(const ordered_json& s, const std::string& key) {
  const auto& v = setting(s, key);
  if (!v.is_number_integer()) throw ConfigError(key + " must be an integer");
  const auto i = v.get<std::int64_t>();
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    throw ConfigError(key + " is out of range");
  }
  return static_cast<int>(i);
}

double real_setting(const ordered_json& s, const std::string& key) {
  const auto& v = setting(s, key);
  if (!v.is_number()) throw ConfigError(key + " must be a number");
  return v.get<double>();
}

std::string string_setting(const ordered_json& s, const std::string& key) {
  const auto& v = setting(s, key);
  if (!v.is_string()) throw ConfigError(key + " must be a string");
  return v.get<std::string>();
}

std::array<double, 4> probs_setting(const ordered_json& s, const std::string& key) {
  const auto& v = setting(s, key);
  if (!v.is_array() || v.size() != 4) throw ConfigError(key + " must be an array of 4 numbers");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) throw ConfigError(key + " must be an array of 4 numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

synth::WorldConfig world_config(const ordered_json& s) {
  synth::WorldConfig c;
  c.clips = size_setting(s, "n");
  c.bucket_probs = probs_setting(s, "bucket_probs");
  c.maneuver_probs = probs_setting(s, "maneuver_probs");
  c.horizon = size_setting(s, "horizon");
  c.frames = size_setting(s, "frames");
  c.dt = real_setting(s, "dt");
  c.agent_rate = real_setting(s, "agent_rate");
  c.noise_scale = real_setting(s, "noise_scale");
  c.min_speed = real_setting(s, "min_speed");
  c.max_speed = real_setting(s, "max_speed");
  c.seed = u64_setting(s, "seed");
  c.validate();
  return c;
}

synth::PlannerParams planner_params(const ordered_json& s) {
  synth::PlannerParams p;
  p.neighbors = size_setting(s, "planner_k");
  p.agent_radius = real_setting(s, "agent_radius");
  p.softmax_temperature = real_setting(s, "softmax_temperature");
  p.collision_threshold = real_setting(s, "collision_threshold");
  p.command_threshold = int_setting(s, "tau_c");
  p.dt = real_setting(s, "dt");
  p.validate();
  return p;
}

ScoringParams scoring_params(const ordered_json& s) {
  ScoringParams p;
  p.alpha = real_setting(s, "alpha");
  p.beta = real_setting(s, "beta");
  p.min_confidence = real_setting(s, "eps_a");
  p.distance_threshold = real_setting(s, "delta_d");
  p.validate();
  return p;
}

std::size_t tenth_of(std::size_t n) { return std::max<std::size_t>(1, n / 10); }

// Fills n0 and n_itr from the pool size when unset and writes them back.
ActiveConfig active_config(ordered_json& s, std::size_t pool_size) {
  ActiveConfig c;
  c.initial_count = optional_size(s, "n0").value_or(tenth_of(pool_size));
  c.per_round = optional_size(s, "n_itr").value_or(tenth_of(pool_size));
  s["n0"] = c.initial_count;
  s["n_itr"] = c.per_round;
  c.rounds = size_setting(s, "rounds");
  c.scoring = scoring_params(s);
  c.gamma = real_setting(s, "gamma");
  c.command_threshold = int_setting(s, "tau_c");
  c.seed = u64_setting(s, "seed");
  c.init_mode = parse_init_mode(string_setting(s, "init_mode"));
  c.rule = parse_selection_rule(string_setting(s, "criterion"));
  c.validate(pool_size);
  return c;
}

// ---- option plumbing ----

// Subcommand flags that stand in for configuration keys.
class FlagOverrides {
 public:
  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    apply_.push_back([opt, value, key](json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
  }

  json collect() const {
    json j = json::object();
    for (const auto& f : apply_) f(j);
    return j;
  }

 private:
  std::vector<std::function<void(json&)>> apply_;
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> assignments;
  FlagOverrides flags;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file (default: $" +
                                                  std::string(kConfigEnv) + ")");
    app->add_option("--set", assignments, "Override a config key, key=value");
  }

  // defaults <- config file <- --set <- dedicated flags
  ordered_json resolve() const {
    ordered_json s = default_settings();
    std::string path = config_path;
    if (path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env != nullptr) path = env;
    }
    if (!path.empty()) {
      const std::string text = io::read_file(path);
      const json file = json::parse(text, nullptr, false);
      if (file.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
      merge_settings(s, file);
    }
    json sets = json::object();
    for (const auto& a : assignments) {
      auto [key, value] = parse_assignment(a);
      sets[key] = std::move(value);
    }
    merge_settings(s, sets);
    merge_settings(s, flags.collect());
    return s;
  }
};

void echo_config(std::ostream& out, const ordered_json& settings) {
  out << "config " << settings.dump() << "\n";
}

void write_selection_file(const SelectionState& state, const ordered_json& settings,
                          const fs::path& path) {
  const ordered_json rounds = ordered_json::parse(serialize_selection(state)).at("rounds");
  ordered_json doc;
  doc["config"] = settings;
  doc["rounds"] = rounds;
  io::write_file_atomic(path, doc.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Saves each round's predictions so the run can be replayed from files.
class RecordingProvider : public PredictionProvider {
 public:
  RecordingProvider(PredictionProvider& inner, fs::path dir)
      : inner_(inner), dir_(std::move(dir)) {}

  void train(const Pool& pool, std::span<const std::string> labeled_ids,
             std::size_t round) override {
    round_ = round;
    inner_.train(pool, labeled_ids, round);
  }

  std::vector<ClipPrediction> predict(const Pool& pool,
                                      std::span<const std::string> ids) const override {
    auto predictions = inner_.predict(pool, ids);
    write_predictions(predictions, FileProvider::round_file(dir_, round_));
    return predictions;
  }

 private:
  PredictionProvider& inner_;
  fs::path dir_;
  std::size_t round_ = 0;
};

// ---- subcommands ----

struct GenCommand {
  CommonOptions common;
  std::string out_dir;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--out-dir", out_dir, "Output directory")->required();
    common.flags.add<std::size_t>(app, "--n", "n", "Number of clips");
    common.flags.add<std::uint64_t>(app, "--seed", "seed", "World seed");
    common.flags.add<std::size_t>(app, "--heldout-n", "heldout_n",
                                  "Also write a held-out world of this size");
  }

  int run(std::ostream& out) const {
    ordered_json s = common.resolve();
    const auto world = world_config(s);
    const std::size_t heldout_n = size_setting(s, "heldout_n");
    if (setting(s, "heldout_seed").is_null()) {
      s["heldout_seed"] = world.seed + 0x9e3779b97f4a7c15ULL;
    }
    auto heldout = world;
    heldout.clips = heldout_n;
    heldout.seed = u64_setting(s, "heldout_seed");
    if (heldout_n > 0) heldout.validate();

    // Generate everything before touching the file system.
    const auto main_world = synth::generate_world(world, "clip-");
    std::optional<synth::World> eval_world;
    if (heldout_n > 0) eval_world = synth::generate_world(heldout, "eval-");

    ensure_dir(out_dir);
    const fs::path dir(out_dir);
    save_pool(main_world.pool.clips(), dir / "pool.jsonl");
    synth::save_truth(main_world.truth, dir / "truth.jsonl");
    if (eval_world) {
      save_pool(eval_world->pool.clips(), dir / "heldout_pool.jsonl");
      synth::save_truth(eval_world->truth, dir / "heldout_truth.jsonl");
    }
    io::write_file_atomic(dir / "config.json", s.dump(2) + "\n");
    echo_config(out, s);
    out << "wrote " << world.clips << " clips to " << (dir / "pool.jsonl").string() << "\n";
    if (eval_world) {
      out << "wrote " << heldout_n << " held-out clips to "
          << (dir / "heldout_pool.jsonl").string() << "\n";
    }
    return kExitOk;
  }
};

struct InitCommand {
  CommonOptions common;
  std::string pool_path;
  std::string out_path;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--pool", pool_path, "Pool file")->required();
    app->add_option("--out", out_path, "Selection file to write")->required();
    common.flags.add<std::string>(app, "--mode", "init_mode", "random or ego-diversity");
    common.flags.add<std::size_t>(app, "--n0", "n0", "Initial selection size");
    common.flags.add<double>(app, "--gamma", "gamma", "Smoothing exponent in (0, 1]");
    common.flags.add<int>(app, "--tau-c", "tau_c", "Command count threshold");
    common.flags.add<std::uint64_t>(app, "--seed", "seed", "Seed for random mode");
  }

  int run(std::ostream& out) const {
    ordered_json s = common.resolve();
    const Pool pool = load_pool(pool_path, size_setting(s, "horizon"));
    const std::size_t n0 = optional_size(s, "n0").value_or(tenth_of(pool.size()));
    s["n0"] = n0;
    if (n0 == 0) throw ConfigError("n0 must be >= 1");
    if (n0 > pool.size()) {
      throw ConfigError("n0 = " + std::to_string(n0) + " exceeds pool size " +
                        std::to_string(pool.size()));
    }
    const double gamma = real_setting(s, "gamma");
    const int tau_c = int_setting(s, "tau_c");
    const InitMode mode = parse_init_mode(string_setting(s, "init_mode"));

    SelectionState state(pool);
    std::optional<DiversitySelection> diversity;
    if (mode == InitMode::kEgoDiversity) {
      diversity = ego_diversity_init(pool.clips(), n0, gamma, tau_c);
      state.add_round(diversity->ids);
    } else {
      state.add_round(random_init(pool, n0, u64_setting(s, "seed")));
    }
    write_selection_file(state, s, out_path);
    echo_config(out, s);
    if (diversity) {
      const auto totals = diversity->bucket_totals();
      out << "bucket totals";
      for (auto b : kAllBuckets) out << " " << to_string(b) << "=" << totals[static_cast<std::size_t>(b)];
      out << "\n";
    }
    out << "selected " << n0 << " of " << pool.size() << " clips\n";
    return kExitOk;
  }
};

struct ScoreCommand {
  CommonOptions common;
  std::string pool_path;
  std::string selection_path;
  std::string predictions_path;
  std::string out_path;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--pool", pool_path, "Pool file")->required();
    app->add_option("--selection", selection_path, "Selection file")->required();
    app->add_option("--predictions", predictions_path, "Predictions file")->required();
    app->add_option("--out", out_path, "Scores file to write")->required();
    common.flags.add<double>(app, "--alpha", "alpha", "Soft-collision weight");
    common.flags.add<double>(app, "--beta", "beta", "Agent-uncertainty weight");
    common.flags.add<double>(app, "--eps-a", "eps_a", "Agent confidence threshold");
    common.flags.add<double>(app, "--delta-d", "delta_d", "Agent distance threshold (m)");
  }

  int run(std::ostream& out) const {
    const ordered_json s = common.resolve();
    const auto params = scoring_params(s);
    const Pool pool = load_pool(pool_path, size_setting(s, "horizon"));
    const SelectionState state = load_selection(selection_path, pool);
    const PredictionSet predictions = read_predictions(predictions_path);
    const auto scores = score_clips(pool, state.unlabeled(), predictions, params);
    write_scores(scores, out_path);
    echo_config(out, s);
    out << "scored " << scores.size() << " unlabeled clips\n";
    return kExitOk;
  }
};

struct SelectCommand {
  CommonOptions common;
  std::string pool_path;
  std::string selection_path;
  std::string scores_path;
  std::string out_path;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--pool", pool_path, "Pool file")->required();
    app->add_option("--selection", selection_path, "Selection file")->required();
    app->add_option("--scores", scores_path, "Scores file")->required();
    app->add_option("--out", out_path, "Selection file to write (default: update in place)");
    common.flags.add<std::size_t>(app, "--n-itr", "n_itr", "Clips to add");
    common.flags.add<std::string>(app, "--criterion", "criterion", "DE, SC, AU or MX");
  }

  int run(std::ostream& out) const {
    ordered_json s = common.resolve();
    const Pool pool = load_pool(pool_path, size_setting(s, "horizon"));
    SelectionState state = load_selection(selection_path, pool);
    const std::size_t n_itr = optional_size(s, "n_itr").value_or(tenth_of(pool.size()));
    s["n_itr"] = n_itr;
    const Criterion criterion = parse_criterion(string_setting(s, "criterion"));

    const auto& unlabeled = state.unlabeled();
    if (n_itr > unlabeled.size()) {
      throw ConfigError("n_itr = " + std::to_string(n_itr) + " exceeds the " +
                        std::to_string(unlabeled.size()) + " unlabeled clips");
    }
    const auto scores = read_scores(scores_path);
    std::set<std::string_view> scored;
    for (const auto& row : scores) {
      if (!scored.insert(row.clip_id).second) {
        throw DataError("clip '" + row.clip_id + "' is scored twice");
      }
      if (state.is_labeled(row.clip_id) || !pool.contains(row.clip_id)) {
        throw DataError("scored clip '" + row.clip_id + "' is not an unlabeled pool clip");
      }
    }
    for (const auto& id : unlabeled) {
      if (scored.count(id) == 0) throw DataError("no score for unlabeled clip '" + id + "'");
    }
    state.add_round(rank_and_take(ranking_view(scores, criterion), n_itr));
    write_selection_file(state, s, out_path.empty() ? selection_path : out_path);
    echo_config(out, s);
    out << "round " << state.rounds().back().round << ": selected " << n_itr << " clips\n";
    return kExitOk;
  }
};

struct RunCommand {
  CommonOptions common;
  std::string pool_path;
  std::string truth_path;
  std::string heldout_pool_path;
  std::string heldout_truth_path;
  std::string baseline = "none";
  std::string provider_kind = "toy";
  std::string predictions_dir;
  std::string dump_dir;
  std::string out_dir;
  std::string name;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--pool", pool_path, "Pool file")->required();
    app->add_option("--truth", truth_path, "Truth file for the pool");
    app->add_option("--heldout-pool", heldout_pool_path, "Held-out pool for evaluation");
    app->add_option("--heldout-truth", heldout_truth_path, "Held-out truth for evaluation");
    app->add_option("--baseline", baseline, "none or random")
        ->check(CLI::IsMember({"none", "random"}));
    app->add_option("--provider", provider_kind, "toy or files")
        ->check(CLI::IsMember({"toy", "files"}));
    app->add_option("--predictions-dir", predictions_dir,
                    "Directory of predictions_round_<k>.jsonl files");
    app->add_option("--dump-predictions", dump_dir, "Save each round's predictions here");
    app->add_option("--out-dir", out_dir, "Output directory")->required();
    app->add_option("--name", name, "Run name in the manifest");
    common.flags.add<std::uint64_t>(app, "--seed", "seed", "Seed");
    common.flags.add<std::size_t>(app, "--n0", "n0", "Initial selection size");
    common.flags.add<std::size_t>(app, "--n-itr", "n_itr", "Clips per round");
    common.flags.add<std::size_t>(app, "--rounds", "rounds", "Number of rounds");
    common.flags.add<std::string>(app, "--criterion", "criterion", "DE, SC, AU, MX or random");
  }

  int run(std::ostream& out) const {
    ordered_json s = common.resolve();
    if (baseline == "random") {
      s["init_mode"] = to_string(InitMode::kRandom);
      s["criterion"] = to_string(SelectionRule::kRandom);
    }
    const std::size_t horizon = size_setting(s, "horizon");
    const Pool pool = load_pool(pool_path, horizon);
    const ActiveConfig config = active_config(s, pool.size());
    const auto params = planner_params(s);

    if (heldout_pool_path.empty() != heldout_truth_path.empty()) {
      throw ConfigError("--heldout-pool and --heldout-truth go together");
    }
    const bool evaluate = !heldout_pool_path.empty();
    if ((evaluate || provider_kind == "toy") && truth_path.empty()) {
      throw ConfigError("--truth is required for the toy provider and for evaluation");
    }
    if (provider_kind == "files" && predictions_dir.empty()) {
      throw ConfigError("--provider files needs --predictions-dir");
    }

    const synth::WorldTruth truth =
        truth_path.empty() ? synth::WorldTruth() : synth::load_truth(truth_path);
    std::optional<Pool> heldout;
    synth::WorldTruth heldout_truth;
    if (evaluate) {
      heldout = load_pool(heldout_pool_path, horizon);
      heldout_truth = synth::load_truth(heldout_truth_path);
    }

    std::unique_ptr<PredictionProvider> base;
    if (provider_kind == "toy") {
      base = std::make_unique<synth::ToyPlanner>(truth, params);
    } else {
      base = std::make_unique<FileProvider>(predictions_dir);
    }
    std::unique_ptr<RecordingProvider> recorder;
    PredictionProvider* provider = base.get();
    if (!dump_dir.empty()) {
      ensure_dir(dump_dir);
      recorder = std::make_unique<RecordingProvider>(*base, dump_dir);
      provider = recorder.get();
    }

    std::vector<report::StageEval> stages;
    synth::HeldoutResult last;
    StageObserver observer;
    if (evaluate) {
      observer = [&](std::size_t stage, const SelectionState& state) {
        synth::ToyPlanner planner(truth, params);
        planner.fit(pool, state.labeled());
        last = synth::heldout_eval(planner, *heldout, heldout_truth);
        stages.push_back(report::make_stage_eval(stage, state.labeled_count(), last));
      };
    }
    const RunResult result = activead::run(pool, *provider, config, observer);

    const std::string run_name =
        !name.empty() ? name : (baseline == "random" ? "random" : "active");
    ordered_json manifest;
    const ordered_json core = manifest_json(result);
    manifest["schema"] = core.at("schema");
    manifest["run"] = run_name;
    for (const auto& [key, value] : core.items()) {
      if (key != "schema") manifest[key] = value;
    }
    manifest["settings"] = s;
    if (evaluate) {
      const auto tagged = report::tag_results(last.clips, *heldout, config.command_threshold);
      manifest["evaluation"] = report::evaluation_json(stages, tagged);
    }

    ensure_dir(out_dir);
    const fs::path dir(out_dir);
    io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    write_selection_file(result.state, s, dir / "selection.json");
    report::ReportDocument doc;
    doc.runs.push_back(report::summary_from_manifest(json::parse(manifest.dump())));
    report::emit_report(doc, dir / "report.csv", report::ReportFormat::kDelimited);
    report::emit_report(doc, dir / "report.json", report::ReportFormat::kStructured);

    echo_config(out, s);
    for (const auto& r : result.state.rounds()) {
      out << "round " << r.round << ": " << r.ids.size() << " clips\n";
    }
    for (const auto& st : stages) {
      out << "stage " << st.stage << ": labeled " << st.labeled << " avg_de "
          << io::format_double(st.avg_de) << " collision_rate_proxy "
          << io::format_double(st.collision_rate) << "%\n";
    }
    out << "wrote " << (dir / "manifest.json").string() << "\n";
    return kExitOk;
  }
};

struct ReportCommand {
  std::vector<std::string> manifests;
  std::vector<std::string> selections;
  std::vector<std::string> labels;
  std::string out_dir;
  std::string format = "both";

  void attach(CLI::App* app) {
    app->add_option("--manifest", manifests, "Run manifest (repeatable)");
    app->add_option("--selection", selections, "Selection file for the overlap matrix (repeatable)");
    app->add_option("--label", labels, "Label per selection file");
    app->add_option("--out-dir", out_dir, "Output directory")->required();
    app->add_option("--format", format, "delimited, structured or both")
        ->check(CLI::IsMember({"delimited", "structured", "both"}));
  }

  int run(std::ostream& out) const {
    if (manifests.empty() && selections.empty()) {
      throw ConfigError("report needs at least one --manifest or --selection");
    }
    if (!labels.empty() && labels.size() != selections.size()) {
      throw ConfigError("give one --label per --selection");
    }
    report::ReportDocument doc;
    std::set<std::string> names;
    for (const auto& path : manifests) {
      auto summary = report::load_summary(path);
      std::string unique = summary.name;
      for (int i = 2; names.count(unique) > 0; ++i) unique = summary.name + "-" + std::to_string(i);
      summary.name = unique;
      names.insert(unique);
      doc.runs.push_back(std::move(summary));
    }
    if (!selections.empty()) {
      std::vector<std::string> set_labels;
      std::vector<std::vector<std::string>> sets;
      for (std::size_t i = 0; i < selections.size(); ++i) {
        set_labels.push_back(labels.empty() ? fs::path(selections[i]).stem().string() : labels[i]);
        sets.push_back(report::incremental_ids(load_selection_rounds(selections[i])));
      }
      doc.selection_overlap = report::overlap_matrix(set_labels, sets);
    }

    ensure_dir(out_dir);
    const fs::path dir(out_dir);
    if (format != "structured") {
      report::emit_report(doc, dir / "report.csv", report::ReportFormat::kDelimited);
      out << "wrote " << (dir / "report.csv").string() << "\n";
    }
    if (format != "delimited") {
      report::emit_report(doc, dir / "report.json", report::ReportFormat::kStructured);
      out << "wrote " << (dir / "report.json").string() << "\n";
    }
    return kExitOk;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planning-oriented active data selection for driving clips", "activead"};
  app.require_subcommand(1);

  GenCommand gen;
  InitCommand init;
  ScoreCommand score;
  SelectCommand select;
  RunCommand run;
  ReportCommand report_cmd;
  auto* gen_app = app.add_subcommand("gen", "Generate a synthetic world");
  auto* init_app = app.add_subcommand("init", "Write the initial selection");
  auto* score_app = app.add_subcommand("score", "Score unlabeled clips from predictions");
  auto* select_app = app.add_subcommand("select", "Append the top-scored clips as a new round");
  auto* run_app = app.add_subcommand("run", "Run the full selection loop");
  auto* report_app = app.add_subcommand("report", "Build reports from manifests and selections");
  gen.attach(gen_app);
  init.attach(init_app);
  score.attach(score_app);
  select.attach(select_app);
  run.attach(run_app);
  report_cmd.attach(report_app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_app->parsed()) return gen.run(out);
    if (init_app->parsed()) return init.run(out);
    if (score_app->parsed()) return score.run(out);
    if (select_app->parsed()) return select.run(out);
    if (run_app->parsed()) return run.run(out);
    if (report_app->parsed()) return report_cmd.run(out);
  } catch (const ConfigError& e) {
    err << "activead: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "activead: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    err << "activead: io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "activead: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace activead::cli
