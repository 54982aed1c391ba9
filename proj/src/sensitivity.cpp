#include "tsq/sensitivity.hpp"

#include <cmath>
#include <string>

#include "tsq/error.hpp"

namespace tsq {

double grad_weight_score(const Tensor& w, const Tensor& grad) {
  if (!w.same_shape(grad)) {
    throw ShapeError("sensitivity: weight and gradient shapes differ");
  }
  double abs_prod = 0.0;
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    abs_prod += std::abs(w.data[i] * grad.data[i]);
  }
  // Mean over matrix entries keeps layers of different sizes comparable.
  return abs_prod / static_cast<double>(w.data.size());
}

double fisher_score(const Tensor& grad) {
  double sq = 0.0;
  for (double v : grad.data) {
    sq += v * v;
  }
  return sq;
}

SensitivityMeasurement measure_sensitivity(const ModelState& state,
                                           const Batch& batch) {
  if (batch.size() == 0) {
    throw ShapeError("sensitivity: empty batch");
  }
  SensitivityMeasurement m;
  m.layers = state.spec.adapted_layers;
  m.grad_weight.assign(m.layers.size(), 0.0);
  m.fisher.assign(m.layers.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const GradResult grads =
        per_sample_gradient(state, batch.row(s), /*probe_base=*/true);
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      const int layer = m.layers[li];
      const Tensor& w = state.layers[static_cast<std::size_t>(layer)].w;
      const Tensor& g = grads.w_grad.at(layer);
      m.grad_weight[li] += grad_weight_score(w, g) * inv_n;
      m.fisher[li] += fisher_score(g) * inv_n;
    }
  }
  return m;
}

std::vector<double> grad_weight_sensitivity(const ModelState& state,
                                            const Batch& batch) {
  return measure_sensitivity(state, batch).grad_weight;
}

std::vector<double> fisher_sensitivity(const ModelState& state,
                                       const Batch& batch) {
  return measure_sensitivity(state, batch).fisher;
}

std::vector<double> normalize_sensitivities(const std::vector<double>& raw,
                                            double eps) {
  if (raw.empty()) {
    throw ShapeError("normalize: no layers");
  }
  double lo = raw[0], hi = raw[0];
  for (double v : raw) {
    if (!std::isfinite(v)) {
      throw NumericError("normalize: non-finite sensitivity");
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out(raw.size(), 0.5);
  if (hi > lo) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      out[i] = eps + (1.0 - 2.0 * eps) * (raw[i] - lo) / (hi - lo);
    }
  }
  return out;
}

void ema_update(SensitivityStats& stats, const std::vector<double>& latest,
                double beta) {
  if (beta < 0.0 || beta >= 1.0) {
    throw ConfigError("sensitivity: EMA decay outside [0,1)");
  }
  if (!stats.initialized) {
    stats.smoothed = latest;
    stats.initialized = true;
    return;
  }
  if (stats.smoothed.size() != latest.size()) {
    throw ShapeError("sensitivity: layer count changed between updates");
  }
  for (std::size_t i = 0; i < latest.size(); ++i) {
    stats.smoothed[i] = beta * stats.smoothed[i] + (1.0 - beta) * latest[i];
  }
}

}  // namespace tsq
