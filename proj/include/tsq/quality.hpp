#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tsq/data.hpp"
#include "tsq/model.hpp"
#include "tsq/rng.hpp"

namespace tsq {

struct QualityConfig {
  double alpha1 = 1.0 / 3.0;  // gradient-norm weight
  double alpha2 = 1.0 / 3.0;  // loss-reduction weight
  double alpha3 = 1.0 / 3.0;  // convergence-contribution weight
  double eta_probe = 0.1;     // probe step for the loss-reduction term
  double tau = 0.7;           // sampling temperature
  bool z_normalize = true;    // z-score terms across the pool before combining
  void validate() const;
};

// Per-sample raw measurements and the combined score. The three term fields
// always hold raw values; q is recombined from z-scored terms when the pool
// pipeline asks for it.
struct QualityRecord {
  std::int64_t sample_id = 0;
  double grad_norm = 0.0;
  double loss_reduction = 0.0;
  double convergence_contrib = 0.0;
  double q = 0.0;
};

struct DataSubset {
  std::vector<std::int64_t> sample_ids;
  std::vector<double> p;  // positive, sums to 1 within 1e-12
};

// EMA (decay 0.9) of recent minibatch gradient directions over the flattened
// trainable parameters; the reference direction for the convergence term.
struct EmaGradient {
  std::vector<double> v;
  bool empty() const { return v.empty(); }
  void update(const std::vector<double>& grad, double decay = 0.9);
};

// One-step probe: loss(theta) - loss(theta - eta * grad). The callable is
// evaluated twice; theta is not modified.
double probe_loss_reduction(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& theta, const std::vector<double>& grad,
    double eta);

// Scores one sample against the current parameters; non-destructive (the
// probe runs on a copy). Throws NumericError carrying the sample id when the
// loss is non-finite.
QualityRecord score_sample(const ModelState& state, const Batch& sample,
                           const QualityConfig& cfg, const EmaGradient& ema);

// Warm-up scoring sweep: one record per sample in ascending sample-id order.
// With cfg.z_normalize each term column is independently z-scored across the
// pool before combining (zero-variance columns map to 0). threads > 1 fans
// per-sample scoring over a read-only state snapshot; results are merged by
// sample index so output is bit-deterministic.
std::vector<QualityRecord> score_pool(const ModelState& state,
                                      const Dataset& pool,
                                      const QualityConfig& cfg,
                                      const EmaGradient& ema, int threads = 1);

// Temperature softmax over scores, max-subtraction stabilized.
DataSubset sampling_distribution(const std::vector<QualityRecord>& records,
                                 double tau);

// Weighted draw without replacement via sequential renormalization.
std::vector<std::int64_t> draw_minibatch(const DataSubset& subset,
                                         std::size_t batch_size, Rng& rng);

// Re-measures a seeded uniform fraction of samples against the current
// parameters, keeps the remaining measurements stale, recombines scores and
// recomputes the distribution.
void refresh_scores(const ModelState& state, const Dataset& pool,
                    std::vector<QualityRecord>& records, DataSubset& subset,
                    const QualityConfig& cfg, double fraction,
                    const EmaGradient& ema, Rng& rng, int threads = 1);

// Recombines q from the stored raw terms per cfg (z-scored or raw pipeline).
void combine_scores(std::vector<QualityRecord>& records,
                    const QualityConfig& cfg);

}  // namespace tsq
