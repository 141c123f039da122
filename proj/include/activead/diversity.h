#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "activead/pool.h"

namespace activead {

template <class T>
using PerBucket = std::array<T, 4>;  // indexed by Bucket
template <class T>
using PerManeuver = std::array<T, 4>;  // indexed by ManeuverClass

// n_x^gamma / sum_z n_z^gamma, with 0^gamma taken as 0.
PerBucket<double> first_level_shares(const PerBucket<std::size_t>& counts, double gamma);

// bucket_share * n_xy^gamma / sum_z n_xz^gamma. When every count is zero the
// bucket cannot absorb budget and all-zero shares come back.
PerManeuver<double> second_level_shares(double bucket_share,
                                        const PerManeuver<std::size_t>& counts, double gamma);

// Largest-remainder apportionment of `budget` over strata proportional to
// `shares`, capped at `capacities`. Overflow from capped strata is handed out
// again by largest remainder over the strata that still have room. Ties on
// the remainder go to the lower stratum index.
std::vector<std::size_t> integerize(std::span<const double> shares, std::size_t budget,
                                    std::span<const std::size_t> capacities);

// Centered regular-interval picks floor((j + 0.5) * m / k), j = 0..k-1.
std::vector<std::size_t> interval_indices(std::size_t m, std::size_t k);

// `sorted_ids` must already be in ascending mean-speed order.
std::vector<std::string> select_by_speed(std::span<const std::string> sorted_ids,
                                         std::size_t k);

struct StratumAllocation {
  Bucket bucket = Bucket::kDS;
  ManeuverClass maneuver = ManeuverClass::kStraight;
  std::size_t available = 0;
  double share = 0.0;  // P_{x,y}
  std::size_t allocated = 0;
};

struct DiversitySelection {
  std::vector<std::string> ids;
  // 16 entries in (DS, DR, NS, NR) x (L, R, O, S) order.
  std::vector<StratumAllocation> strata;

  PerBucket<std::size_t> bucket_totals() const;
  PerManeuver<std::size_t> maneuver_totals() const;
};

// Two-level stratified initial selection over `clips`. Selects
// min(budget, clips.size()) clips.
DiversitySelection ego_diversity_init(std::span<const ClipRecord> clips, std::size_t budget,
                                      double gamma, int command_threshold);

}  // namespace activead
