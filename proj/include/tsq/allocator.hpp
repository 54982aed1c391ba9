#pragma once

#include <map>
#include <vector>

#include "tsq/adapters.hpp"

namespace tsq {

struct AllocatorConfig {
  int r_init = 4;
  int r_min = 1;
  int r_max = 0;  // 0 resolves to 4 * r_init
  double phi_lo = 0.5;
  double phi_hi = 1.5;
  double kappa = 1.0;  // slope of the quality scaling

  int resolved_r_max() const { return r_max > 0 ? r_max : 4 * r_init; }
  void validate() const;
};

struct RankPlanEntry {
  int layer = -1;
  double sensitivity = 0.0;  // normalized s~ used for the plan
  double target = 0.0;       // continuous rank from the budget formula
  int assigned = 0;
};

struct RankPlan {
  std::vector<RankPlanEntry> entries;  // ascending layer order
  int budget_r0 = 0;                   // L * r_init
  double phi = 1.0;
  int assigned_total = 0;
  bool bounds_bound = false;  // floors/caps prevented exact conservation
};

// phi = clamp(1 + kappa * (mean_quality - 0.5), phi_lo, phi_hi).
// mean_quality must lie in [0,1].
double phi_scaling(double mean_quality, const AllocatorConfig& cfg);

// Continuous targets (s_l / sum s) * phi * R0 with R0 = L * r_init;
// integerized by largest-remainder apportionment of round(phi * R0), then
// floors and caps enforced by redistributing toward the largest remaining
// fractional demand. Ties break on ascending layer index.
RankPlan allocate(const std::vector<int>& layers,
                  const std::vector<double>& sensitivity,
                  double phi, const AllocatorConfig& cfg);

// Same apportionment with the total budget given explicitly.
RankPlan allocate_with_budget(const std::vector<int>& layers,
                              const std::vector<double>& sensitivity,
                              double phi, const AllocatorConfig& cfg,
                              int budget_r0);

// One change per layer whose assigned rank differs from the current one.
std::vector<RankChange> plan_to_changes(const RankPlan& plan,
                                        const std::map<int, int>& current);

}  // namespace tsq
