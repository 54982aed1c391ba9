#pragma once

#include <cstdint>
#include <vector>

#include "tsq/tensor.hpp"

namespace tsq {

// One rank change applied (or planned) for a layer's adapter.
struct RankChange {
  int layer = -1;
  int old_rank = 0;
  int new_rank = 0;
  std::vector<int> dropped;  // component indices deactivated
  std::vector<int> revived;  // component indices reactivated
  bool is_noop() const { return old_rank == new_rank; }
};

// Low-rank factor pair with capacity r_max and an adjustable active rank.
// Masked components keep their stored values so a later expansion revives
// them bit-exactly. The delta contribution is B[:,mask] * A[mask,:].
struct LoraAdapter {
  Tensor a;                        // r_max x d_in
  Tensor b;                        // d_out x r_max
  std::vector<std::uint8_t> rank_mask;  // one flag per component
  int active_rank = 0;

  int r_max() const { return static_cast<int>(rank_mask.size()); }
  int d_in() const { return static_cast<int>(a.shape[1]); }
  int d_out() const { return static_cast<int>(b.shape[0]); }

  // Trainable scalars in the active components: active_rank * (d_in + d_out).
  long active_params() const {
    return static_cast<long>(active_rank) * (d_in() + d_out());
  }

  // ||B[:,i]||_2 * ||A[i,:]||_2 -- magnitude of the i-th rank-1 component.
  double component_importance(int i) const;

  // Diagonal 0/1 matrix of the mask, used to route the adapter through the
  // tape so masked components get zero contribution and zero gradient.
  Tensor mask_diag() const;
};

// A ~ Gaussian(0, 0.02^2) with the given seed, B = 0, first r_init
// components active; the initial delta is therefore exactly zero.
LoraAdapter init_adapter(int d_in, int d_out, int r_init, int r_max,
                         std::uint64_t seed);

// B[:,mask] * A[mask,:], accumulated over active components in ascending
// index order (bit-stable for a given active set).
Tensor delta_weight(const LoraAdapter& adapter);

// Shrinking deactivates the lowest-importance active components (ties: lower
// index first); expanding revives the highest-importance masked components
// (ties: lower index first). Values are never modified.
RankChange set_active_rank(LoraAdapter& adapter, int new_rank);

}  // namespace tsq
