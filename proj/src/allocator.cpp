#include "tsq/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsq/error.hpp"

namespace tsq {

void AllocatorConfig::validate() const {
  if (r_min < 0 || r_init < r_min || resolved_r_max() < r_init) {
    throw ConfigError("allocator: need 0 <= r_min <= r_init <= r_max");
  }
  if (phi_lo <= 0.0 || phi_hi < phi_lo) {
    throw ConfigError("allocator: need 0 < phi_lo <= phi_hi");
  }
  if (!std::isfinite(kappa)) {
    throw ConfigError("allocator: kappa must be finite");
  }
}

double phi_scaling(double mean_quality, const AllocatorConfig& cfg) {
  if (!(mean_quality >= 0.0 && mean_quality <= 1.0)) {
    throw ShapeError("phi: mean quality " + std::to_string(mean_quality) +
                     " outside [0,1]");
  }
  const double raw = 1.0 + cfg.kappa * (mean_quality - 0.5);
  return std::clamp(raw, cfg.phi_lo, cfg.phi_hi);
}

RankPlan allocate(const std::vector<int>& layers,
                  const std::vector<double>& sensitivity, double phi,
                  const AllocatorConfig& cfg) {
  return allocate_with_budget(layers, sensitivity, phi, cfg,
                              static_cast<int>(layers.size()) * cfg.r_init);
}

RankPlan allocate_with_budget(const std::vector<int>& layers,
                              const std::vector<double>& sensitivity,
                              double phi, const AllocatorConfig& cfg,
                              int budget) {
  cfg.validate();
  const std::size_t n = layers.size();
  if (n == 0 || sensitivity.size() != n) {
    throw ShapeError("allocate: layer/sensitivity size mismatch");
  }
  double total_s = 0.0;
  for (double s : sensitivity) {
    if (!(s > 0.0)) {
      throw ShapeError("allocate: sensitivities must be positive");
    }
    total_s += s;
  }
  const int r_max = cfg.resolved_r_max();
  long target_total = std::lround(phi * budget);
  // Conservation is only possible inside the feasible box.
  const long lo_box = static_cast<long>(n) * cfg.r_min;
  const long hi_box = static_cast<long>(n) * r_max;
  const long feasible_total = std::clamp(target_total, lo_box, hi_box);

  RankPlan plan;
  plan.budget_r0 = budget;
  plan.phi = phi;
  plan.bounds_bound = feasible_total != target_total;
  plan.entries.resize(n);

  std::vector<double> quota(n);
  for (std::size_t i = 0; i < n; ++i) {
    RankPlanEntry& e = plan.entries[i];
    e.layer = layers[i];
    e.sensitivity = sensitivity[i];
    e.target = sensitivity[i] / total_s * phi * budget;
    quota[i] = sensitivity[i] / total_s * static_cast<double>(feasible_total);
    e.assigned = static_cast<int>(std::floor(quota[i]));
  }

  // Largest-remainder distribution of the leftover units.
  long assigned_sum = 0;
  for (const RankPlanEntry& e : plan.entries) {
    assigned_sum += e.assigned;
  }
  std::vector<std::size_t> by_remainder(n);
  for (std::size_t i = 0; i < n; ++i) {
    by_remainder[i] = i;
  }
  std::sort(by_remainder.begin(), by_remainder.end(),
            [&](std::size_t a, std::size_t b) {
              const double ra = quota[a] - std::floor(quota[a]);
              const double rb = quota[b] - std::floor(quota[b]);
              if (ra != rb) return ra > rb;
              return plan.entries[a].layer < plan.entries[b].layer;
            });
  for (std::size_t k = 0; assigned_sum < feasible_total && k < n; ++k) {
    ++plan.entries[by_remainder[k]].assigned;
    ++assigned_sum;
  }

  // Clamp into [r_min, r_max] and redistribute the imbalance toward the
  // layers with the largest remaining fractional demand.
  for (RankPlanEntry& e : plan.entries) {
    e.assigned = std::clamp(e.assigned, cfg.r_min, r_max);
  }
  assigned_sum = 0;
  for (const RankPlanEntry& e : plan.entries) {
    assigned_sum += e.assigned;
  }
  while (assigned_sum != feasible_total) {
    const bool need_more = assigned_sum < feasible_total;
    std::size_t best = n;
    double best_demand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const RankPlanEntry& e = plan.entries[i];
      if (need_more ? e.assigned >= r_max : e.assigned <= cfg.r_min) {
        continue;
      }
      const double demand = quota[i] - static_cast<double>(e.assigned);
      const bool better =
          best == n || (need_more ? demand > best_demand : demand < best_demand);
      if (better) {
        best = i;
        best_demand = demand;
      }
    }
    if (best == n) {
      plan.bounds_bound = true;
      break;
    }
    plan.entries[best].assigned += need_more ? 1 : -1;
    assigned_sum += need_more ? 1 : -1;
  }

  plan.assigned_total = static_cast<int>(assigned_sum);
  return plan;
}

std::vector<RankChange> plan_to_changes(const RankPlan& plan,
                                        const std::map<int, int>& current) {
  std::vector<RankChange> changes;
  for (const RankPlanEntry& e : plan.entries) {
    const auto it = current.find(e.layer);
    if (it == current.end()) {
      throw ShapeError("plan_to_changes: no current rank for layer " +
                       std::to_string(e.layer));
    }
    if (it->second != e.assigned) {
      RankChange c;
      c.layer = e.layer;
      c.old_rank = it->second;
      c.new_rank = e.assigned;
      changes.push_back(std::move(c));
    }
  }
  return changes;
}

}  // namespace tsq
