#pragma once

#include <cstdint>
#include <vector>

#include "tsq/allocator.hpp"
#include "tsq/data.hpp"
#include "tsq/model.hpp"
#include "tsq/quality.hpp"
#include "tsq/sensitivity.hpp"

namespace tsq {

struct TrainConfig {
  int iterations = 100;
  int epochs = 0;  // when > 0, iterations = epochs * ceil(pool / batch)
  std::vector<int> schedule;  // explicit adjustment steps (used when set)
  bool auto_schedule = true;  // default: every ceil(I/10) steps after burn-in
  int batch_size = 64;
  double lr = 0.1;
  std::uint64_t seed = 1;
  bool quality_sampling = true;
  bool sensitivity_aware = true;
  SensitivityEstimator estimator = SensitivityEstimator::kGradWeight;
  double refresh_fraction = 0.0;  // 0 disables the light re-scoring pass
  double sensitivity_beta = 0.9;
  QualityConfig quality;
  AllocatorConfig allocator;

  int resolved_iterations(std::size_t pool_size) const;
  std::vector<int> resolved_schedule(int iterations) const;
  void validate(std::size_t pool_size) const;
};

struct AdjustEvent {
  int step = 0;
  RankPlan plan;       // entries carry sensitivity/target/assigned per layer
  long active_params = 0;
};

struct TrainReport {
  std::vector<double> step_loss;  // one entry per executed step
  std::vector<AdjustEvent> events;
  std::vector<QualityRecord> warmup_scores;
  DataSubset warmup_subset;
  std::vector<QualityRecord> final_scores;
  DataSubset final_subset;
  SensitivityStats final_sensitivity;
  std::vector<std::pair<int, long>> param_trajectory;  // (step, count)
  double final_accuracy = 0.0;
  double wall_clock_s = 0.0;
  long train_samples_consumed = 0;
  long scored_samples = 0;
  double mean_q_noisy = 0.0;
  double mean_q_clean = 0.0;
  long n_noisy = 0;
  long n_clean = 0;
};

// Full training procedure: warm-up scoring, quality-weighted minibatch SGD,
// per-step sensitivity statistics, scheduled rank re-allocation, optional
// score refresh, final evaluation. `out_state` (optional) receives the
// fine-tuned model.
TrainReport run(const ModelSpec& spec, const Dataset& train,
                const Dataset& eval, const TrainConfig& cfg,
                ModelState* out_state = nullptr, int threads = 1);

// Fraction of argmax-correct predictions; logit ties resolve to the lowest
// class index.
double evaluate(const ModelState& state, const Dataset& eval);

struct AblationReport {
  struct Row {
    std::uint64_t seed = 0;
    double acc_full = 0.0;
    double acc_no_sensitivity = 0.0;
    double delta = 0.0;
  };
  std::vector<Row> rows;
  double mean_full = 0.0;
  double mean_no_sensitivity = 0.0;
  double mean_delta = 0.0;
};

// Paired runs per seed: the full variant vs. sensitivity-aware allocation
// disabled, identical data and sampling streams.
AblationReport ablate(const ModelSpec& spec, const Dataset& train,
                      const Dataset& eval, const TrainConfig& cfg,
                      int n_seeds, int threads = 1);

}  // namespace tsq
