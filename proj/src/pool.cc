#include "activead/pool.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "activead/error.h"
#include "activead/io.h"
#include "json.hpp"

namespace activead {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <class Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::string_view, N>& names,
                std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<Enum>(i);
  }
  throw DataError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<std::string_view, 2> kWeatherNames = {"Sunny", "Rainy"};
constexpr std::array<std::string_view, 2> kLightingNames = {"Day", "Night"};
constexpr std::array<std::string_view, 3> kCommandNames = {"Left", "Right", "Straight"};
constexpr std::array<std::string_view, 4> kBucketNames = {"DS", "DR", "NS", "NR"};
constexpr std::array<std::string_view, 4> kManeuverNames = {"L", "R", "O", "S"};

Point2 parse_point(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw DataError("waypoint must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

ClipRecord clip_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not an object");
  ClipRecord clip;
  clip.id = j.at("id").get<std::string>();
  clip.weather = parse_weather(j.at("weather").get<std::string>());
  clip.lighting = parse_lighting(j.at("lighting").get<std::string>());
  for (const auto& f : j.at("frames")) {
    FrameState frame;
    frame.speed = f.at("speed").get<double>();
    frame.command = parse_command(f.at("command").get<std::string>());
    clip.frames.push_back(frame);
  }
  for (const auto& p : j.at("gt_future")) clip.gt_future.push_back(parse_point(p));
  if (auto it = j.find("annotation"); it != j.end() && !it->is_null()) {
    clip.annotation = it->get<std::string>();
  }
  return clip;
}

}  // namespace

std::string_view to_string(Weather w) { return kWeatherNames[static_cast<std::size_t>(w)]; }
std::string_view to_string(Lighting l) { return kLightingNames[static_cast<std::size_t>(l)]; }
std::string_view to_string(Command c) { return kCommandNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Bucket b) { return kBucketNames[static_cast<std::size_t>(b)]; }
std::string_view to_string(ManeuverClass m) {
  return kManeuverNames[static_cast<std::size_t>(m)];
}

Weather parse_weather(std::string_view s) { return parse_enum<Weather>(s, kWeatherNames, "weather"); }
Lighting parse_lighting(std::string_view s) {
  return parse_enum<Lighting>(s, kLightingNames, "lighting");
}
Command parse_command(std::string_view s) { return parse_enum<Command>(s, kCommandNames, "command"); }
Bucket parse_bucket(std::string_view s) { return parse_enum<Bucket>(s, kBucketNames, "bucket"); }
ManeuverClass parse_maneuver(std::string_view s) {
  return parse_enum<ManeuverClass>(s, kManeuverNames, "maneuver class");
}

void validate_clip(const ClipRecord& clip, std::size_t horizon) {
  if (clip.id.empty()) throw DataError("clip id is empty");
  if (clip.frames.empty()) throw DataError("clip '" + clip.id + "' has no frames");
  for (const auto& f : clip.frames) {
    if (!std::isfinite(f.speed) || f.speed < 0.0) {
      throw DataError("clip '" + clip.id + "' has an invalid frame speed");
    }
  }
  if (clip.gt_future.size() != horizon) {
    throw DataError("clip '" + clip.id + "' gt_future has " +
                    std::to_string(clip.gt_future.size()) + " waypoints, expected " +
                    std::to_string(horizon));
  }
  for (const auto& p : clip.gt_future) {
    if (!is_finite(p)) throw DataError("clip '" + clip.id + "' has a non-finite waypoint");
  }
}

Bucket weather_lighting_bucket(Weather weather, Lighting lighting) {
  const bool night = lighting == Lighting::kNight;
  const bool rainy = weather == Weather::kRainy;
  if (!night) return rainy ? Bucket::kDR : Bucket::kDS;
  return rainy ? Bucket::kNR : Bucket::kNS;
}

Bucket weather_lighting_bucket(const ClipRecord& clip) {
  return weather_lighting_bucket(clip.weather, clip.lighting);
}

CommandCounts count_commands(const ClipRecord& clip) {
  CommandCounts counts;
  for (const auto& f : clip.frames) {
    if (f.command == Command::kLeft) ++counts.left;
    if (f.command == Command::kRight) ++counts.right;
  }
  return counts;
}

ManeuverClass classify_command(const CommandCounts& counts, int threshold) {
  if (threshold < 1) throw ConfigError("command threshold must be >= 1");
  const auto t = static_cast<std::size_t>(threshold);
  const bool left = counts.left >= t;
  const bool right = counts.right >= t;
  if (left && right) return ManeuverClass::kOvertake;
  if (left) return ManeuverClass::kLeft;
  if (right) return ManeuverClass::kRight;
  return ManeuverClass::kStraight;
}

ManeuverClass classify_command(const ClipRecord& clip, int threshold) {
  return classify_command(count_commands(clip), threshold);
}

double mean_speed(const ClipRecord& clip) {
  if (clip.frames.empty()) throw DataError("clip '" + clip.id + "' has no frames");
  double sum = 0.0;
  for (const auto& f : clip.frames) sum += f.speed;
  return sum / static_cast<double>(clip.frames.size());
}

Pool::Pool(std::vector<ClipRecord> clips, std::size_t horizon)
    : clips_(std::move(clips)), horizon_(horizon) {
  if (horizon_ == 0) throw ConfigError("horizon must be >= 1");
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    validate_clip(clips_[i], horizon_);
    if (!index_.emplace(clips_[i].id, i).second) {
      throw DataError("duplicate clip id '" + clips_[i].id + "'");
    }
  }
}

bool Pool::contains(std::string_view id) const { return index_.find(id) != index_.end(); }

const ClipRecord& Pool::at(std::string_view id) const { return clips_[index_of(id)]; }

std::size_t Pool::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown clip id '" + std::string(id) + "'");
  return it->second;
}

Pool parse_pool(std::string_view text, std::size_t horizon) {
  std::vector<ClipRecord> clips;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ClipRecord clip;
    try {
      clip = clip_from_json(json::parse(line));
      validate_clip(clip, horizon);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_number) + ": " + e.what());
    }
    if (auto [it, inserted] = seen.emplace(clip.id, line_number); !inserted) {
      throw DataError("line " + std::to_string(line_number) + ": duplicate clip id '" +
                      clip.id + "' (first seen on line " + std::to_string(it->second) + ")");
    }
    clips.push_back(std::move(clip));
  }
  if (clips.empty()) throw DataError("pool file contains no clips");
  return Pool(std::move(clips), horizon);
}

Pool load_pool(const std::filesystem::path& path, std::size_t horizon) {
  try {
    return parse_pool(io::read_file(path), horizon);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_clip(const ClipRecord& clip) {
  ordered_json j;
  j["id"] = clip.id;
  j["weather"] = to_string(clip.weather);
  j["lighting"] = to_string(clip.lighting);
  j["frames"] = ordered_json::array();
  for (const auto& f : clip.frames) {
    j["frames"].push_back({{"speed", f.speed}, {"command", to_string(f.command)}});
  }
  j["gt_future"] = ordered_json::array();
  for (const auto& p : clip.gt_future) j["gt_future"].push_back({p.x, p.y});
  if (clip.annotation) j["annotation"] = *clip.annotation;
  return j.dump();
}

void save_pool(std::span<const ClipRecord> clips, const std::filesystem::path& path) {
  std::string out;
  for (const auto& clip : clips) {
    out += serialize_clip(clip);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

SelectionState::SelectionState(const Pool& pool) {
  unlabeled_.reserve(pool.size());
  for (const auto& clip : pool.clips()) unlabeled_.push_back(clip.id);
}

void SelectionState::add_round(std::vector<std::string> ids) {
  std::map<std::string, std::size_t, std::less<>> incoming;
  for (const auto& id : ids) {
    if (labeled_set_.count(id) != 0) {
      throw DataError("clip '" + id + "' is already labeled");
    }
    if (!incoming.emplace(id, 0).second) {
      throw DataError("clip '" + id + "' appears twice in one round");
    }
  }
  std::size_t found = 0;
  for (const auto& id : unlabeled_) found += incoming.count(id);
  if (found != incoming.size()) {
    for (const auto& id : ids) {
      if (std::find(unlabeled_.begin(), unlabeled_.end(), id) == unlabeled_.end()) {
        throw DataError("clip '" + id + "' is not in the unlabeled pool");
      }
    }
  }
  std::erase_if(unlabeled_, [&](const std::string& id) { return incoming.count(id) != 0; });
  const std::size_t round = rounds_.size();
  for (const auto& id : ids) labeled_set_.emplace(id, round);
  rounds_.push_back({round, std::move(ids)});
}

std::vector<std::string> SelectionState::labeled() const {
  std::vector<std::string> out;
  out.reserve(labeled_set_.size());
  for (const auto& r : rounds_) out.insert(out.end(), r.ids.begin(), r.ids.end());
  return out;
}

bool SelectionState::is_labeled(std::string_view id) const {
  return labeled_set_.find(id) != labeled_set_.end();
}

std::string serialize_selection(const SelectionState& state) {
  ordered_json rounds = ordered_json::array();
  for (const auto& r : state.rounds()) {
    rounds.push_back({{"round", r.round}, {"ids", r.ids}});
  }
  ordered_json doc;
  doc["rounds"] = std::move(rounds);
  return doc.dump(2) + "\n";
}

void save_selection(const SelectionState& state, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_selection(state));
}

namespace {

std::vector<SelectionRound> rounds_from_text(std::string_view text) {
  std::vector<SelectionRound> rounds;
  try {
    const json doc = json::parse(text);
    for (const auto& r : doc.at("rounds")) {
      SelectionRound round;
      round.round = r.at("round").get<std::size_t>();
      round.ids = r.at("ids").get<std::vector<std::string>>();
      if (round.round != rounds.size()) {
        throw DataError("selection rounds must be numbered 0, 1, 2, ... in order");
      }
      rounds.push_back(std::move(round));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed selection file: ") + e.what());
  }
  return rounds;
}

}  // namespace

SelectionState parse_selection(std::string_view text, const Pool& pool) {
  SelectionState state(pool);
  for (auto& round : rounds_from_text(text)) state.add_round(std::move(round.ids));
  return state;
}

SelectionState load_selection(const std::filesystem::path& path, const Pool& pool) {
  return parse_selection(io::read_file(path), pool);
}

std::vector<SelectionRound> load_selection_rounds(const std::filesystem::path& path) {
  return rounds_from_text(io::read_file(path));
}

}  // namespace activead
