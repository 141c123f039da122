#include "activead/diversity.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "activead/error.h"

namespace activead {
namespace {

void check_gamma(double gamma) {
  if (!std::isfinite(gamma) || gamma <= 0.0 || gamma > 1.0) {
    throw ConfigError("gamma must lie in (0, 1]");
  }
}

double powered(std::size_t count, double gamma) {
  return count == 0 ? 0.0 : std::pow(static_cast<double>(count), gamma);
}

}  // namespace

PerBucket<double> first_level_shares(const PerBucket<std::size_t>& counts, double gamma) {
  check_gamma(gamma);
  PerBucket<double> shares{};
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    shares[i] = powered(counts[i], gamma);
    total += shares[i];
  }
  if (total == 0.0) throw DataError("all weather-lighting buckets are empty");
  for (auto& s : shares) s /= total;
  return shares;
}

PerManeuver<double> second_level_shares(double bucket_share,
                                        const PerManeuver<std::size_t>& counts, double gamma) {
  check_gamma(gamma);
  if (!(bucket_share >= 0.0 && bucket_share <= 1.0)) {
    throw ConfigError("bucket share must lie in [0, 1]");
  }
  PerManeuver<double> shares{};
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    shares[i] = powered(counts[i], gamma);
    total += shares[i];
  }
  if (total == 0.0) return PerManeuver<double>{};
  for (auto& s : shares) s = bucket_share * s / total;
  return shares;
}

std::vector<std::size_t> integerize(std::span<const double> shares, std::size_t budget,
                                    std::span<const std::size_t> capacities) {
  if (shares.size() != capacities.size()) {
    throw ConfigError("shares and capacities differ in length");
  }
  for (double s : shares) {
    if (!std::isfinite(s) || s < 0.0) throw ConfigError("shares must be finite and >= 0");
  }
  const std::size_t total_capacity =
      std::accumulate(capacities.begin(), capacities.end(), std::size_t{0});
  if (budget > total_capacity) {
    throw ConfigError("budget of " + std::to_string(budget) + " exceeds pool size " +
                      std::to_string(total_capacity));
  }

  const std::size_t n = shares.size();
  std::vector<std::size_t> allocated(n, 0);
  std::size_t remaining = budget;
  while (remaining > 0) {
    std::vector<std::size_t> open;
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (allocated[i] < capacities[i]) {
        open.push_back(i);
        weight_sum += shares[i];
      }
    }
    // Only strata with zero share have room left: spread evenly.
    const bool uniform = weight_sum <= 0.0;
    if (uniform) weight_sum = static_cast<double>(open.size());

    std::vector<std::size_t> seats(n, 0);
    std::vector<double> remainder(n, 0.0);
    std::size_t seated = 0;
    for (std::size_t i : open) {
      const double weight = uniform ? 1.0 : shares[i];
      const double quota = static_cast<double>(remaining) * weight / weight_sum;
      const double whole = std::floor(quota);
      seats[i] = static_cast<std::size_t>(whole);
      remainder[i] = quota - whole;
      seated += seats[i];
    }
    // Guard against rounding pushing the floors past the budget.
    for (auto it = open.rbegin(); seated > remaining && it != open.rend(); ++it) {
      while (seats[*it] > 0 && seated > remaining) {
        --seats[*it];
        --seated;
      }
    }
    std::vector<std::size_t> order = open;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; seated < remaining; k = (k + 1) % order.size()) {
      ++seats[order[k]];
      ++seated;
    }

    std::size_t overflow = 0;
    for (std::size_t i : open) {
      const std::size_t room = capacities[i] - allocated[i];
      const std::size_t take = std::min(seats[i], room);
      allocated[i] += take;
      overflow += seats[i] - take;
    }
    remaining = overflow;
  }
  return allocated;
}

std::vector<std::size_t> interval_indices(std::size_t m, std::size_t k) {
  if (k > m) {
    throw ConfigError("cannot pick " + std::to_string(k) + " of " + std::to_string(m) +
                      " clips");
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) out.push_back(((2 * j + 1) * m) / (2 * k));
  return out;
}

std::vector<std::string> select_by_speed(std::span<const std::string> sorted_ids,
                                         std::size_t k) {
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t idx : interval_indices(sorted_ids.size(), k)) out.push_back(sorted_ids[idx]);
  return out;
}

PerBucket<std::size_t> DiversitySelection::bucket_totals() const {
  PerBucket<std::size_t> totals{};
  for (const auto& s : strata) totals[static_cast<std::size_t>(s.bucket)] += s.allocated;
  return totals;
}

PerManeuver<std::size_t> DiversitySelection::maneuver_totals() const {
  PerManeuver<std::size_t> totals{};
  for (const auto& s : strata) totals[static_cast<std::size_t>(s.maneuver)] += s.allocated;
  return totals;
}

DiversitySelection ego_diversity_init(std::span<const ClipRecord> clips, std::size_t budget,
                                      double gamma, int command_threshold) {
  check_gamma(gamma);
  if (budget == 0) throw ConfigError("initial budget must be >= 1");
  if (clips.empty()) throw DataError("cannot initialize from an empty pool");
  budget = std::min(budget, clips.size());

  struct Member {
    double speed;
    const std::string* id;
  };
  std::array<PerManeuver<std::vector<Member>>, 4> members;
  for (const auto& clip : clips) {
    const auto b = static_cast<std::size_t>(weather_lighting_bucket(clip));
    const auto m = static_cast<std::size_t>(classify_command(clip, command_threshold));
    members[b][m].push_back({mean_speed(clip), &clip.id});
  }

  PerBucket<std::size_t> bucket_counts{};
  for (std::size_t b = 0; b < 4; ++b) {
    for (const auto& group : members[b]) bucket_counts[b] += group.size();
  }
  const auto bucket_shares = first_level_shares(bucket_counts, gamma);
  const auto bucket_budget = integerize(bucket_shares, budget, bucket_counts);

  DiversitySelection result;
  for (std::size_t b = 0; b < 4; ++b) {
    PerManeuver<std::size_t> counts{};
    for (std::size_t m = 0; m < 4; ++m) counts[m] = members[b][m].size();
    const auto shares = second_level_shares(bucket_shares[b], counts, gamma);
    std::vector<std::size_t> alloc(4, 0);
    if (bucket_budget[b] > 0) alloc = integerize(shares, bucket_budget[b], counts);

    for (std::size_t m = 0; m < 4; ++m) {
      auto& group = members[b][m];
      std::sort(group.begin(), group.end(), [](const Member& a, const Member& c) {
        if (a.speed != c.speed) return a.speed < c.speed;
        return *a.id < *c.id;
      });
      for (std::size_t idx : interval_indices(group.size(), alloc[m])) {
        result.ids.push_back(*group[idx].id);
      }
      result.strata.push_back({kAllBuckets[b], kAllManeuvers[m], counts[m], shares[m], alloc[m]});
    }
  }
  return result;
}

}  // namespace activead
