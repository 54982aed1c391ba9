#pragma once

#include <vector>

#include "tsq/model.hpp"

namespace tsq {

enum class SensitivityEstimator { kGradWeight, kFisher };

// Per-adapted-layer sensitivity state, ascending layer order throughout.
struct SensitivityStats {
  std::vector<int> layers;
  std::vector<double> raw;         // latest grad-weight scores S_l
  std::vector<double> fisher;      // latest Fisher traces F_l
  std::vector<double> smoothed;    // EMA of the selected estimator stream
  std::vector<double> normalized;  // min-max into (0,1); set at events
  long sample_count = 0;
  bool initialized = false;
};

// Both per-layer estimates from one per-sample backward sweep:
// grad_weight[l] = mean over samples of mean|W_l .* dW_l|,
// fisher[l]      = mean over samples of ||dW_l||^2.
struct SensitivityMeasurement {
  std::vector<int> layers;
  std::vector<double> grad_weight;
  std::vector<double> fisher;
};

// Scalar reductions behind the two estimators.
double grad_weight_score(const Tensor& w, const Tensor& grad);  // mean|w .* g|
double fisher_score(const Tensor& grad);                        // ||g||^2

SensitivityMeasurement measure_sensitivity(const ModelState& state,
                                           const Batch& batch);

std::vector<double> grad_weight_sensitivity(const ModelState& state,
                                            const Batch& batch);
std::vector<double> fisher_sensitivity(const ModelState& state,
                                       const Batch& batch);

// Min-max normalization affinely mapped into [eps, 1-eps]; a degenerate
// (all-equal) spread maps every layer to 0.5. Preserves the raw ordering.
std::vector<double> normalize_sensitivities(const std::vector<double>& raw,
                                            double eps = 1e-3);

// smoothed <- beta * smoothed + (1-beta) * latest; the first update copies.
void ema_update(SensitivityStats& stats, const std::vector<double>& latest,
                double beta);

}  // namespace tsq
