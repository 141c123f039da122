#include "activead/report.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "activead/error.h"
#include "activead/io.h"
#include "activead/loop.h"

namespace activead::report {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_k(int k) {
  if (k < 1 || k > 3) throw ConfigError("L2 horizon k must be 1, 2 or 3 seconds");
}

struct Accumulator {
  std::size_t count = 0;
  double de = 0.0;
  std::size_t collisions = 0;

  void add(const TaggedResult& r) {
    ++count;
    de += r.de;
    collisions += r.collided ? 1 : 0;
  }
};

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string scalar_text(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return io::format_double(v.get<double>());
  return v.dump();
}

ordered_json matrix_json(const OverlapMatrix& m) {
  return {{"labels", m.labels}, {"rates", m.rates}};
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw DataError(std::string("manifest is missing '") + key + "'");
  }
  return j.at(key);
}

StageEval parse_stage(const json& j) {
  StageEval s;
  s.stage = field(j, "stage").get<std::size_t>();
  s.labeled = field(j, "labeled").get<std::size_t>();
  s.heldout = field(j, "heldout").get<std::size_t>();
  s.avg_de = field(j, "avg_de").get<double>();
  s.collision_rate = field(j, "collision_rate_proxy").get<double>();
  if (j.contains("l2_uniad")) s.l2_uniad = j.at("l2_uniad").get<std::array<double, 3>>();
  if (j.contains("l2_vad")) s.l2_vad = j.at("l2_vad").get<std::array<double, 3>>();
  return s;
}

ordered_json stage_json(const StageEval& s) {
  ordered_json j;
  j["stage"] = s.stage;
  j["labeled"] = s.labeled;
  j["heldout"] = s.heldout;
  j["avg_de"] = s.avg_de;
  j["collision_rate_proxy"] = s.collision_rate;
  if (s.l2_uniad) j["l2_uniad"] = *s.l2_uniad;
  if (s.l2_vad) j["l2_vad"] = *s.l2_vad;
  return j;
}

// One entry per stage reached by every run: metric deltas of each later run
// against the first.
struct ComparisonRow {
  std::size_t stage;
  std::string run;
  double de_delta;
  double collision_delta;
};

std::vector<ComparisonRow> comparison_rows(const ReportDocument& doc) {
  std::vector<ComparisonRow> rows;
  if (doc.runs.size() < 2) return rows;
  const RunSummary& base = doc.runs.front();
  for (const auto& b : base.stages) {
    for (std::size_t r = 1; r < doc.runs.size(); ++r) {
      const auto& stages = doc.runs[r].stages;
      auto it = std::find_if(stages.begin(), stages.end(),
                             [&](const StageEval& s) { return s.stage == b.stage; });
      if (it == stages.end()) continue;
      rows.push_back({b.stage, doc.runs[r].name + "-vs-" + base.name, it->avg_de - b.avg_de,
                      it->collision_rate - b.collision_rate});
    }
  }
  return rows;
}

}  // namespace

StepErrors step_errors(std::span<const double> values) {
  if (values.size() != kStepCount) {
    throw DataError("expected " + std::to_string(kStepCount) + " step errors, got " +
                    std::to_string(values.size()));
  }
  StepErrors out{};
  for (std::size_t i = 0; i < kStepCount; ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      throw DataError("step errors must be finite and >= 0");
    }
    out[i] = values[i];
  }
  return out;
}

double l2_at_k_uniad(const StepErrors& errors, int k) {
  check_k(k);
  return errors[static_cast<std::size_t>(2 * k - 1)];
}

double l2_at_k_vad(const StepErrors& errors, int k) {
  check_k(k);
  double sum = 0.0;
  for (int t = 0; t < 2 * k; ++t) sum += errors[static_cast<std::size_t>(t)];
  return sum / (2.0 * k);
}

double overlap_rate(std::span<const std::string> a, std::span<const std::string> b) {
  const std::set<std::string_view> sa(a.begin(), a.end());
  if (sa.empty()) throw DataError("overlap rate needs a non-empty reference set");
  const std::set<std::string_view> sb(b.begin(), b.end());
  std::size_t shared = 0;
  for (auto id : sa) shared += sb.count(id);
  return static_cast<double>(shared) / static_cast<double>(sa.size());
}

OverlapMatrix overlap_matrix(std::span<const std::string> labels,
                             std::span<const std::vector<std::string>> sets) {
  if (labels.size() != sets.size()) throw ConfigError("one label per selection set is required");
  OverlapMatrix m;
  m.labels.assign(labels.begin(), labels.end());
  for (const auto& a : sets) {
    auto& row = m.rates.emplace_back();
    for (const auto& b : sets) row.push_back(overlap_rate(a, b));
  }
  return m;
}

std::vector<TaggedResult> tag_results(std::span<const synth::ClipEval> results, const Pool& pool,
                                      int command_threshold) {
  std::vector<TaggedResult> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    const ClipRecord& clip = pool.at(r.clip_id);
    out.push_back({r.clip_id, clip.weather, clip.lighting,
                   classify_command(clip, command_threshold), r.de, r.collided});
  }
  return out;
}

std::vector<StratumMetrics> stratified_metrics(std::span<const TaggedResult> results) {
  Accumulator day, night, sunny, rainy, all;
  std::array<Accumulator, 4> commands;
  for (const auto& r : results) {
    (r.lighting == Lighting::kDay ? day : night).add(r);
    (r.weather == Weather::kSunny ? sunny : rainy).add(r);
    commands[static_cast<std::size_t>(r.command)].add(r);
    all.add(r);
  }
  const auto& cmd = [&](ManeuverClass m) -> const Accumulator& {
    return commands[static_cast<std::size_t>(m)];
  };
  const std::pair<const char*, const Accumulator*> order[] = {
      {"Day", &day},
      {"Night", &night},
      {"Sunny", &sunny},
      {"Rainy", &rainy},
      {"S", &cmd(ManeuverClass::kStraight)},
      {"L", &cmd(ManeuverClass::kLeft)},
      {"R", &cmd(ManeuverClass::kRight)},
      {"O", &cmd(ManeuverClass::kOvertake)},
      {"All", &all},
  };
  std::vector<StratumMetrics> out;
  for (const auto& [key, acc] : order) {
    if (acc->count == 0) continue;
    const auto n = static_cast<double>(acc->count);
    out.push_back({key, acc->count, acc->de / n, 100.0 * static_cast<double>(acc->collisions) / n});
  }
  return out;
}

std::vector<StratumMetrics> stratified_metrics(std::span<const synth::ClipEval> results,
                                               const Pool& pool, int command_threshold) {
  const auto tagged = tag_results(results, pool, command_threshold);
  return stratified_metrics(tagged);
}

StageEval make_stage_eval(std::size_t stage, std::size_t labeled,
                          const synth::HeldoutResult& result) {
  StageEval s;
  s.stage = stage;
  s.labeled = labeled;
  s.heldout = result.clips.size();
  s.avg_de = result.avg_de;
  s.collision_rate = result.collision_rate;
  if (result.mean_step_errors.size() == kStepCount) {
    // Both conventions are linear, so applying them to the mean per-step
    // errors equals averaging them per clip.
    const StepErrors e = step_errors(result.mean_step_errors);
    s.l2_uniad = {l2_at_k_uniad(e, 1), l2_at_k_uniad(e, 2), l2_at_k_uniad(e, 3)};
    s.l2_vad = {l2_at_k_vad(e, 1), l2_at_k_vad(e, 2), l2_at_k_vad(e, 3)};
  }
  return s;
}

ordered_json evaluation_json(std::span<const StageEval> stages,
                             std::span<const TaggedResult> final_results) {
  ordered_json j;
  j["stages"] = ordered_json::array();
  for (const auto& s : stages) j["stages"].push_back(stage_json(s));
  j["clips"] = ordered_json::array();
  for (const auto& r : final_results) {
    j["clips"].push_back({{"clip_id", r.clip_id},
                          {"weather", to_string(r.weather)},
                          {"lighting", to_string(r.lighting)},
                          {"command", to_string(r.command)},
                          {"de", r.de},
                          {"collided", r.collided}});
  }
  return j;
}

RunSummary summary_from_manifest(const json& manifest, const std::string& name) {
  if (!manifest.is_object() || !manifest.contains("schema") ||
      manifest.at("schema") != std::string(kManifestSchema)) {
    throw DataError("unsupported manifest schema (expected " + std::string(kManifestSchema) + ")");
  }
  try {
    RunSummary s;
    s.name = name;
    if (s.name.empty()) s.name = manifest.value("run", std::string("run"));
    s.config = field(manifest, "config");
    s.pool_size = field(manifest, "pool_size").get<std::size_t>();
    const json& init = field(manifest, "init");
    s.init_mode = field(init, "mode").get<std::string>();
    s.init_count = field(init, "ids").size();
    for (const auto& a : field(init, "allocations")) {
      s.allocations.push_back({field(a, "bucket").get<std::string>(),
                               field(a, "command").get<std::string>(),
                               field(a, "available").get<std::size_t>(),
                               field(a, "share").get<double>(),
                               field(a, "allocated").get<std::size_t>()});
    }
    for (const auto& r : field(manifest, "rounds")) {
      RoundRow row;
      row.round = field(r, "round").get<std::size_t>();
      row.selected = field(r, "ids").size();
      row.scored = field(r, "scored").get<std::size_t>();
      row.de_mean = field(r, "de_mean").get<double>();
      row.sc_mean = field(r, "sc_mean").get<double>();
      row.au_mean = field(r, "au_mean").get<double>();
      row.overall_mean = field(r, "overall_mean").get<double>();
      row.overall_max = field(r, "overall_max").get<double>();
      const json& picks = field(r, "criterion_picks");
      std::vector<std::string> labels;
      std::vector<std::vector<std::string>> sets;
      for (auto c : kAllCriteria) {
        const std::string label(to_string(c));
        if (!picks.contains(label)) continue;
        auto ids = picks.at(label).get<std::vector<std::string>>();
        if (ids.empty()) continue;
        labels.push_back(label);
        sets.push_back(std::move(ids));
      }
      if (labels.size() == kAllCriteria.size()) row.criterion_overlap = overlap_matrix(labels, sets);
      s.rounds.push_back(std::move(row));
    }
    if (manifest.contains("evaluation")) {
      const json& eval = manifest.at("evaluation");
      for (const auto& st : field(eval, "stages")) s.stages.push_back(parse_stage(st));
      std::vector<TaggedResult> clips;
      for (const auto& c : field(eval, "clips")) {
        clips.push_back({field(c, "clip_id").get<std::string>(),
                         parse_weather(field(c, "weather").get<std::string>()),
                         parse_lighting(field(c, "lighting").get<std::string>()),
                         parse_maneuver(field(c, "command").get<std::string>()),
                         field(c, "de").get<double>(), field(c, "collided").get<bool>()});
      }
      s.strata = stratified_metrics(clips);
    }
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

RunSummary load_summary(const std::filesystem::path& path) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    return summary_from_manifest(manifest);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> incremental_ids(std::span<const SelectionRound> rounds) {
  std::vector<std::string> out;
  for (const auto& r : rounds) {
    if (r.round == 0 && rounds.size() > 1) continue;
    out.insert(out.end(), r.ids.begin(), r.ids.end());
  }
  return out;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "delimited") return ReportFormat::kDelimited;
  if (s == "structured") return ReportFormat::kStructured;
  throw ConfigError("unknown report format '" + std::string(s) + "'");
}

std::string render_delimited(const ReportDocument& doc) {
  std::string out = "section,run,row,col,value\n";
  auto emit = [&](std::string_view section, std::string_view run, std::string_view row,
                  std::string_view col, const std::string& value) {
    out += csv_field(section);
    out += ',';
    out += csv_field(run);
    out += ',';
    out += csv_field(row);
    out += ',';
    out += csv_field(col);
    out += ',';
    out += csv_field(value);
    out += '\n';
  };
  auto num = [](double v) { return io::format_double(v); };
  auto matrix = [&](std::string_view section, std::string_view run, const std::string& prefix,
                    const OverlapMatrix& m) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      for (std::size_t j = 0; j < m.labels.size(); ++j) {
        emit(section, run, prefix + m.labels[i], m.labels[j], num(m.rates[i][j]));
      }
    }
  };

  for (const auto& run : doc.runs) {
    for (const auto& [key, value] : run.config.items()) emit("config", run.name, key, "value", scalar_text(value));
    emit("init", run.name, "pool_size", "value", std::to_string(run.pool_size));
    emit("init", run.name, "mode", "value", run.init_mode);
    emit("init", run.name, "count", "value", std::to_string(run.init_count));
    for (const auto& a : run.allocations) {
      const std::string row = a.bucket + "/" + a.command;
      emit("allocation", run.name, row, "available", std::to_string(a.available));
      emit("allocation", run.name, row, "share", num(a.share));
      emit("allocation", run.name, row, "allocated", std::to_string(a.allocated));
    }
    for (const auto& r : run.rounds) {
      const std::string row = std::to_string(r.round);
      emit("round", run.name, row, "selected", std::to_string(r.selected));
      emit("round", run.name, row, "scored", std::to_string(r.scored));
      emit("round", run.name, row, "de_mean", num(r.de_mean));
      emit("round", run.name, row, "sc_mean", num(r.sc_mean));
      emit("round", run.name, row, "au_mean", num(r.au_mean));
      emit("round", run.name, row, "overall_mean", num(r.overall_mean));
      emit("round", run.name, row, "overall_max", num(r.overall_max));
      if (r.criterion_overlap) matrix("criterion_overlap", run.name, row + ":", *r.criterion_overlap);
    }
    for (const auto& s : run.stages) {
      const std::string row = std::to_string(s.stage);
      emit("stage", run.name, row, "labeled", std::to_string(s.labeled));
      emit("stage", run.name, row, "heldout", std::to_string(s.heldout));
      emit("stage", run.name, row, "avg_de", num(s.avg_de));
      emit("stage", run.name, row, "collision_rate_proxy", num(s.collision_rate));
      for (int k = 1; k <= 3; ++k) {
        if (s.l2_uniad) emit("stage", run.name, row, "l2_uniad_" + std::to_string(k) + "s", num((*s.l2_uniad)[k - 1]));
        if (s.l2_vad) emit("stage", run.name, row, "l2_vad_" + std::to_string(k) + "s", num((*s.l2_vad)[k - 1]));
      }
    }
    for (const auto& m : run.strata) {
      emit("stratified", run.name, m.key, "count", std::to_string(m.count));
      emit("stratified", run.name, m.key, "avg_de", num(m.avg_de));
      emit("stratified", run.name, m.key, "collision_rate_proxy", num(m.collision_rate));
    }
  }
  for (const auto& c : comparison_rows(doc)) {
    const std::string row = std::to_string(c.stage);
    emit("comparison", c.run, row, "avg_de_delta", num(c.de_delta));
    emit("comparison", c.run, row, "collision_rate_proxy_delta", num(c.collision_delta));
  }
  if (doc.selection_overlap) matrix("selection_overlap", "", "", *doc.selection_overlap);
  return out;
}

ordered_json render_structured(const ReportDocument& doc) {
  ordered_json out;
  out["runs"] = ordered_json::array();
  for (const auto& run : doc.runs) {
    ordered_json r;
    r["name"] = run.name;
    r["config"] = run.config;
    r["pool_size"] = run.pool_size;
    ordered_json init;
    init["mode"] = run.init_mode;
    init["count"] = run.init_count;
    init["allocations"] = ordered_json::array();
    for (const auto& a : run.allocations) {
      init["allocations"].push_back({{"bucket", a.bucket},
                                     {"command", a.command},
                                     {"available", a.available},
                                     {"share", a.share},
                                     {"allocated", a.allocated}});
    }
    r["init"] = std::move(init);
    r["rounds"] = ordered_json::array();
    for (const auto& round : run.rounds) {
      ordered_json j;
      j["round"] = round.round;
      j["selected"] = round.selected;
      j["scored"] = round.scored;
      j["de_mean"] = round.de_mean;
      j["sc_mean"] = round.sc_mean;
      j["au_mean"] = round.au_mean;
      j["overall_mean"] = round.overall_mean;
      j["overall_max"] = round.overall_max;
      if (round.criterion_overlap) j["criterion_overlap"] = matrix_json(*round.criterion_overlap);
      r["rounds"].push_back(std::move(j));
    }
    r["stages"] = ordered_json::array();
    for (const auto& s : run.stages) r["stages"].push_back(stage_json(s));
    r["stratified"] = ordered_json::array();
    for (const auto& m : run.strata) {
      r["stratified"].push_back({{"key", m.key},
                                 {"count", m.count},
                                 {"avg_de", m.avg_de},
                                 {"collision_rate_proxy", m.collision_rate}});
    }
    out["runs"].push_back(std::move(r));
  }
  const auto rows = comparison_rows(doc);
  if (!rows.empty()) {
    out["comparison"] = ordered_json::array();
    for (const auto& c : rows) {
      out["comparison"].push_back({{"stage", c.stage},
                                   {"run", c.run},
                                   {"avg_de_delta", c.de_delta},
                                   {"collision_rate_proxy_delta", c.collision_delta}});
    }
  }
  if (doc.selection_overlap) out["selection_overlap"] = matrix_json(*doc.selection_overlap);
  return out;
}

std::string render(const ReportDocument& doc, ReportFormat format) {
  if (format == ReportFormat::kDelimited) return render_delimited(doc);
  return render_structured(doc).dump(2) + "\n";
}

void emit_report(const ReportDocument& doc, const std::filesystem::path& path,
                 ReportFormat format) {
  io::write_file_atomic(path, render(doc, format));
}

}  // namespace activead::report
