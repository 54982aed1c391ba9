#include "tsq/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsq/error.hpp"
#include "tsq/rng.hpp"

namespace tsq {

double LoraAdapter::component_importance(int i) const {
  const std::size_t din = a.shape[1];
  const std::size_t dout = b.shape[0];
  const std::size_t rmax = rank_mask.size();
  double na = 0.0;
  for (std::size_t j = 0; j < din; ++j) {
    const double v = a.data[static_cast<std::size_t>(i) * din + j];
    na += v * v;
  }
  double nb = 0.0;
  for (std::size_t j = 0; j < dout; ++j) {
    const double v = b.data[j * rmax + static_cast<std::size_t>(i)];
    nb += v * v;
  }
  return std::sqrt(na) * std::sqrt(nb);
}

Tensor LoraAdapter::mask_diag() const {
  const std::size_t r = rank_mask.size();
  Tensor m({r, r}, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    if (rank_mask[i]) {
      m.data[i * r + i] = 1.0;
    }
  }
  return m;
}

LoraAdapter init_adapter(int d_in, int d_out, int r_init, int r_max,
                         std::uint64_t seed) {
  if (d_in <= 0 || d_out <= 0 || r_max <= 0) {
    throw ConfigError("adapter: dimensions and r_max must be positive");
  }
  if (r_init < 0 || r_init > r_max) {
    throw ConfigError("adapter: r_init " + std::to_string(r_init) +
                      " outside [0, r_max=" + std::to_string(r_max) + "]");
  }
  LoraAdapter ad;
  ad.a = Tensor({static_cast<std::size_t>(r_max), static_cast<std::size_t>(d_in)});
  ad.b = Tensor({static_cast<std::size_t>(d_out), static_cast<std::size_t>(r_max)});
  Rng rng(seed);
  for (double& v : ad.a.data) {
    v = 0.02 * rng.gaussian();
  }
  ad.rank_mask.assign(static_cast<std::size_t>(r_max), 0);
  for (int i = 0; i < r_init; ++i) {
    ad.rank_mask[static_cast<std::size_t>(i)] = 1;
  }
  ad.active_rank = r_init;
  return ad;
}

Tensor delta_weight(const LoraAdapter& adapter) {
  const std::size_t din = adapter.a.shape[1];
  const std::size_t dout = adapter.b.shape[0];
  const std::size_t rmax = adapter.rank_mask.size();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < rmax; ++i) {
    if (adapter.rank_mask[i]) {
      active.push_back(i);
    }
  }
  if (active.empty()) {
    return Tensor({dout, din}, 0.0);
  }
  // Compact the active components, then one product; the inner accumulation
  // runs over active indices in ascending order.
  Tensor a_act({active.size(), din});
  Tensor b_act({dout, active.size()});
  for (std::size_t k = 0; k < active.size(); ++k) {
    const std::size_t i = active[k];
    std::copy_n(&adapter.a.data[i * din], din, &a_act.data[k * din]);
    for (std::size_t j = 0; j < dout; ++j) {
      b_act.data[j * active.size() + k] = adapter.b.data[j * rmax + i];
    }
  }
  return matmul(b_act, a_act);
}

RankChange set_active_rank(LoraAdapter& adapter, int new_rank) {
  const int rmax = adapter.r_max();
  if (new_rank < 0 || new_rank > rmax) {
    throw ConfigError("set_active_rank: rank " + std::to_string(new_rank) +
                      " outside [0, r_max=" + std::to_string(rmax) + "]");
  }
  RankChange change;
  change.old_rank = adapter.active_rank;
  change.new_rank = new_rank;
  if (new_rank == adapter.active_rank) {
    return change;
  }

  struct Scored {
    double importance;
    int index;
  };
  if (new_rank < adapter.active_rank) {
    std::vector<Scored> active;
    for (int i = 0; i < rmax; ++i) {
      if (adapter.rank_mask[static_cast<std::size_t>(i)]) {
        active.push_back({adapter.component_importance(i), i});
      }
    }
    // Lowest importance first; equal importances drop the lower index first.
    std::sort(active.begin(), active.end(), [](const Scored& x, const Scored& y) {
      if (x.importance != y.importance) return x.importance < y.importance;
      return x.index < y.index;
    });
    const int n_drop = adapter.active_rank - new_rank;
    for (int k = 0; k < n_drop; ++k) {
      adapter.rank_mask[static_cast<std::size_t>(active[static_cast<std::size_t>(k)].index)] = 0;
      change.dropped.push_back(active[static_cast<std::size_t>(k)].index);
    }
    std::sort(change.dropped.begin(), change.dropped.end());
  } else {
    std::vector<Scored> masked;
    for (int i = 0; i < rmax; ++i) {
      if (!adapter.rank_mask[static_cast<std::size_t>(i)]) {
        masked.push_back({adapter.component_importance(i), i});
      }
    }
    // Highest stored importance first; ties revive the lower index first.
    std::sort(masked.begin(), masked.end(), [](const Scored& x, const Scored& y) {
      if (x.importance != y.importance) return x.importance > y.importance;
      return x.index < y.index;
    });
    const int n_revive = new_rank - adapter.active_rank;
    for (int k = 0; k < n_revive; ++k) {
      adapter.rank_mask[static_cast<std::size_t>(masked[static_cast<std::size_t>(k)].index)] = 1;
      change.revived.push_back(masked[static_cast<std::size_t>(k)].index);
    }
    std::sort(change.revived.begin(), change.revived.end());
  }
  adapter.active_rank = new_rank;
  return change;
}

}  // namespace tsq
