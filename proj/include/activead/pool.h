#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "activead/geometry.h"

namespace activead {

inline constexpr std::size_t kDefaultHorizon = 6;

enum class Weather { kSunny, kRainy };
enum class Lighting { kDay, kNight };
enum class Command { kLeft, kRight, kStraight };

// Weather-lighting bucket. Enumerator order is the fixed stratum order used
// for tie-breaking everywhere.
enum class Bucket { kDS, kDR, kNS, kNR };

// Clip-level driving class derived from per-frame commands.
enum class ManeuverClass { kLeft, kRight, kOvertake, kStraight };

inline constexpr std::array<Bucket, 4> kAllBuckets = {Bucket::kDS, Bucket::kDR, Bucket::kNS,
                                                      Bucket::kNR};
inline constexpr std::array<ManeuverClass, 4> kAllManeuvers = {
    ManeuverClass::kLeft, ManeuverClass::kRight, ManeuverClass::kOvertake,
    ManeuverClass::kStraight};

std::string_view to_string(Weather w);
std::string_view to_string(Lighting l);
std::string_view to_string(Command c);
std::string_view to_string(Bucket b);         // "DS", "DR", "NS", "NR"
std::string_view to_string(ManeuverClass m);  // "L", "R", "O", "S"

Weather parse_weather(std::string_view s);
Lighting parse_lighting(std::string_view s);
Command parse_command(std::string_view s);
Bucket parse_bucket(std::string_view s);
ManeuverClass parse_maneuver(std::string_view s);

struct FrameState {
  double speed = 0.0;  // m/s
  Command command = Command::kStraight;
};

struct ClipRecord {
  std::string id;
  Weather weather = Weather::kSunny;
  Lighting lighting = Lighting::kDay;
  std::vector<FrameState> frames;
  Trajectory gt_future;
  // Opaque labeling payload. The engine only ever looks at presence.
  std::optional<std::string> annotation;
};

// Throws DataError if the record violates its invariants.
void validate_clip(const ClipRecord& clip, std::size_t horizon);

Bucket weather_lighting_bucket(const ClipRecord& clip);
Bucket weather_lighting_bucket(Weather weather, Lighting lighting);

struct CommandCounts {
  std::size_t left = 0;
  std::size_t right = 0;
};
CommandCounts count_commands(const ClipRecord& clip);

ManeuverClass classify_command(const CommandCounts& counts, int threshold);
ManeuverClass classify_command(const ClipRecord& clip, int threshold);

double mean_speed(const ClipRecord& clip);

// Immutable, validated collection of clips in file order.
class Pool {
 public:
  Pool() = default;
  explicit Pool(std::vector<ClipRecord> clips, std::size_t horizon = kDefaultHorizon);

  std::span<const ClipRecord> clips() const { return clips_; }
  std::size_t size() const { return clips_.size(); }
  std::size_t horizon() const { return horizon_; }
  bool empty() const { return clips_.empty(); }

  bool contains(std::string_view id) const;
  const ClipRecord& at(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;

 private:
  std::vector<ClipRecord> clips_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t horizon_ = kDefaultHorizon;
};

Pool load_pool(const std::filesystem::path& path, std::size_t horizon = kDefaultHorizon);
Pool parse_pool(std::string_view text, std::size_t horizon = kDefaultHorizon);
std::string serialize_clip(const ClipRecord& clip);
void save_pool(std::span<const ClipRecord> clips, const std::filesystem::path& path);

struct SelectionRound {
  std::size_t round = 0;
  std::vector<std::string> ids;

  friend bool operator==(const SelectionRound&, const SelectionRound&) = default;
};

// Labeled/unlabeled partition of a pool plus the history of increments.
// Unlabeled ids stay in pool order; labeled ids are in selection order.
class SelectionState {
 public:
  SelectionState() = default;
  explicit SelectionState(const Pool& pool);

  // Appends a new round (numbered rounds().size()). Every id must currently
  // be unlabeled and appear once; otherwise throws DataError and leaves the
  // state untouched.
  void add_round(std::vector<std::string> ids);

  const std::vector<std::string>& unlabeled() const { return unlabeled_; }
  std::vector<std::string> labeled() const;
  std::size_t labeled_count() const { return labeled_set_.size(); }
  const std::vector<SelectionRound>& rounds() const { return rounds_; }
  bool is_labeled(std::string_view id) const;

  friend bool operator==(const SelectionState& a, const SelectionState& b) {
    return a.unlabeled_ == b.unlabeled_ && a.rounds_ == b.rounds_;
  }

 private:
  std::vector<std::string> unlabeled_;
  std::map<std::string, std::size_t, std::less<>> labeled_set_;
  std::vector<SelectionRound> rounds_;
};

std::string serialize_selection(const SelectionState& state);
void save_selection(const SelectionState& state, const std::filesystem::path& path);
SelectionState parse_selection(std::string_view text, const Pool& pool);
SelectionState load_selection(const std::filesystem::path& path, const Pool& pool);

// Rounds read without a pool, e.g. when only the increments are needed.
std::vector<SelectionRound> load_selection_rounds(const std::filesystem::path& path);

}  // namespace activead
