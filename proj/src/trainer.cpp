#include "tsq/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "tsq/error.hpp"

namespace tsq {

namespace {

// p-weighted mean of min-max-normalized pool scores; the "average data
// quality of the selected set" driving the budget scaling.
double mean_selected_quality(const std::vector<QualityRecord>& records,
                             const DataSubset& subset) {
  double lo = records[0].q, hi = records[0].q;
  for (const QualityRecord& r : records) {
    lo = std::min(lo, r.q);
    hi = std::max(hi, r.q);
  }
  if (hi <= lo) {
    return 0.5;
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    mean += subset.p[i] * (records[i].q - lo) / (hi - lo);
  }
  return std::clamp(mean, 0.0, 1.0);
}

}  // namespace

int TrainConfig::resolved_iterations(std::size_t pool_size) const {
  if (epochs > 0) {
    const auto steps_per_epoch = static_cast<int>(
        (pool_size + static_cast<std::size_t>(batch_size) - 1) /
        static_cast<std::size_t>(batch_size));
    return epochs * steps_per_epoch;
  }
  return iterations;
}

std::vector<int> TrainConfig::resolved_schedule(int total) const {
  if (!auto_schedule) {
    std::vector<int> t = schedule;
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }
  // Every ceil(I/10) steps, first event after a 10% burn-in.
  const int stride = (total + 9) / 10;
  std::vector<int> t;
  for (int s = 2 * stride; s <= total; s += stride) {
    t.push_back(s);
  }
  return t;
}

void TrainConfig::validate(std::size_t pool_size) const {
  const int total = resolved_iterations(pool_size);
  if (total < 1) {
    throw ConfigError("train: need at least one iteration");
  }
  if (batch_size < 1 ||
      static_cast<std::size_t>(batch_size) > pool_size) {
    throw ConfigError("train: batch size " + std::to_string(batch_size) +
                      " exceeds pool size " + std::to_string(pool_size));
  }
  if (lr < 0.0) {
    throw ConfigError("train: learning rate must be non-negative");
  }
  if (refresh_fraction < 0.0 || refresh_fraction > 1.0) {
    throw ConfigError("train: refresh fraction outside [0,1]");
  }
  if (sensitivity_beta < 0.0 || sensitivity_beta >= 1.0) {
    throw ConfigError("train: sensitivity EMA decay outside [0,1)");
  }
  for (int s : resolved_schedule(total)) {
    if (s < 1 || s > total) {
      throw ConfigError("train: schedule step " + std::to_string(s) +
                        " outside [1," + std::to_string(total) + "]");
    }
  }
  quality.validate();
  allocator.validate();
}

TrainReport run(const ModelSpec& spec, const Dataset& train,
                const Dataset& eval, const TrainConfig& cfg,
                ModelState* out_state, int threads) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate(train.size());
  spec.validate();
  if (spec.adapted_layers.empty()) {
    throw ConfigError("train: model has no adapted layers, nothing to train");
  }
  const int total_steps = cfg.resolved_iterations(train.size());
  const std::vector<int> schedule = cfg.resolved_schedule(total_steps);

  ModelState state = init_model(spec, cfg.allocator.r_init,
                                cfg.allocator.resolved_r_max(), cfg.seed);

  TrainReport report;
  report.param_trajectory.emplace_back(0, active_param_count(state));

  // Warm-up data scoring at the initial parameters; the convergence term is
  // zero until minibatch gradients exist.
  EmaGradient ema_grad;
  report.warmup_scores = score_pool(state, train, cfg.quality, ema_grad, threads);
  report.warmup_subset = sampling_distribution(report.warmup_scores, cfg.quality.tau);
  report.scored_samples += static_cast<long>(train.size());

  std::vector<QualityRecord> records = report.warmup_scores;
  DataSubset subset = report.warmup_subset;
  DataSubset uniform_subset;
  uniform_subset.sample_ids = subset.sample_ids;
  uniform_subset.p.assign(subset.sample_ids.size(),
                          1.0 / static_cast<double>(subset.sample_ids.size()));

  std::unordered_map<std::int64_t, std::size_t> row_of;
  row_of.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    row_of.emplace(train.ids[i], i);
  }

  SensitivityStats stats;
  stats.layers = spec.adapted_layers;

  Rng rng_sampling(derive_seed(cfg.seed, "minibatch-sampling"));
  Rng rng_refresh(derive_seed(cfg.seed, "score-refresh"));

  auto next_event = schedule.begin();
  for (int step = 1; step <= total_steps; ++step) {
    const DataSubset& draw_from = cfg.quality_sampling ? subset : uniform_subset;
    const std::vector<std::int64_t> ids = draw_minibatch(
        draw_from, static_cast<std::size_t>(cfg.batch_size), rng_sampling);
    std::vector<std::size_t> rows;
    rows.reserve(ids.size());
    for (std::int64_t id : ids) {
      rows.push_back(row_of.at(id));
    }
    const Batch batch = train.batch_of(rows);

    const GradResult grads = batch_gradient(state, batch);
    sgd_step(state, grads, cfg.lr);
    report.step_loss.push_back(grads.loss);
    report.train_samples_consumed += static_cast<long>(batch.size());
    ema_grad.update(flatten_trainable_grads(state, grads));

    // Per-step moving statistics of layer sensitivity (Fisher kept alongside
    // the grad-weight estimate; the EMA follows the configured estimator).
    const SensitivityMeasurement meas = measure_sensitivity(state, batch);
    stats.raw = meas.grad_weight;
    stats.fisher = meas.fisher;
    stats.sample_count += static_cast<long>(batch.size());
    ema_update(stats,
               cfg.estimator == SensitivityEstimator::kGradWeight
                   ? meas.grad_weight
                   : meas.fisher,
               cfg.sensitivity_beta);

    if (next_event != schedule.end() && *next_event == step) {
      ++next_event;
      stats.normalized = normalize_sensitivities(stats.smoothed);
      AdjustEvent event;
      event.step = step;
      if (cfg.sensitivity_aware) {
        const double mean_q = mean_selected_quality(records, subset);
        const double phi = phi_scaling(mean_q, cfg.allocator);
        event.plan = allocate(spec.adapted_layers, stats.normalized, phi,
                              cfg.allocator);
        std::map<int, int> current;
        for (const auto& [idx, adapter] : state.adapters) {
          current[idx] = adapter.active_rank;
        }
        for (const RankChange& change : plan_to_changes(event.plan, current)) {
          set_active_rank(state.adapters.at(change.layer), change.new_rank);
        }
      } else {
        // Uniform-rank variant: record the sensitivities with ranks as-is.
        event.plan.budget_r0 =
            static_cast<int>(spec.adapted_layers.size()) * cfg.allocator.r_init;
        event.plan.phi = 1.0;
        for (std::size_t li = 0; li < spec.adapted_layers.size(); ++li) {
          RankPlanEntry e;
          e.layer = spec.adapted_layers[li];
          e.sensitivity = stats.normalized[li];
          e.assigned = state.adapters.at(e.layer).active_rank;
          e.target = static_cast<double>(e.assigned);
          event.plan.entries.push_back(e);
          event.plan.assigned_total += e.assigned;
        }
      }
      event.active_params = active_param_count(state);
      report.param_trajectory.emplace_back(step, event.active_params);
      report.events.push_back(std::move(event));

      if (cfg.refresh_fraction > 0.0) {
        refresh_scores(state, train, records, subset, cfg.quality,
                       cfg.refresh_fraction, ema_grad, rng_refresh, threads);
        report.scored_samples += static_cast<long>(std::llround(
            cfg.refresh_fraction * static_cast<double>(train.size())));
      }
    }
  }

  report.final_scores = records;
  report.final_subset = subset;
  report.final_sensitivity = stats;
  if (stats.initialized && stats.normalized.empty()) {
    report.final_sensitivity.normalized = normalize_sensitivities(stats.smoothed);
  }
  report.final_accuracy = evaluate(state, eval);

  double q_noisy = 0.0, q_clean = 0.0;
  long n_noisy = 0, n_clean = 0;
  std::unordered_map<std::int64_t, bool> noisy_of;
  noisy_of.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    noisy_of.emplace(train.ids[i], train.noisy[i] != 0);
  }
  for (const QualityRecord& r : records) {
    if (noisy_of.at(r.sample_id)) {
      q_noisy += r.q;
      ++n_noisy;
    } else {
      q_clean += r.q;
      ++n_clean;
    }
  }
  report.mean_q_noisy = n_noisy > 0 ? q_noisy / static_cast<double>(n_noisy) : 0.0;
  report.mean_q_clean = n_clean > 0 ? q_clean / static_cast<double>(n_clean) : 0.0;
  report.n_noisy = n_noisy;
  report.n_clean = n_clean;

  if (out_state != nullptr) {
    *out_state = std::move(state);
  }
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

double evaluate(const ModelState& state, const Dataset& eval) {
  if (eval.size() == 0) {
    throw DataError("evaluate: empty eval set");
  }
  const Tensor logits = forward(state, eval.full_batch());
  const std::size_t classes = logits.shape[1];
  long correct = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < classes; ++j) {
      if (logits.data[i * classes + j] > logits.data[i * classes + best]) {
        best = j;
      }
    }
    if (static_cast<int>(best) == eval.labels[i]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

AblationReport ablate(const ModelSpec& spec, const Dataset& train,
                      const Dataset& eval, const TrainConfig& cfg,
                      int n_seeds, int threads) {
  if (n_seeds < 1) {
    throw ConfigError("ablate: need at least one seed");
  }
  AblationReport report;
  for (int s = 0; s < n_seeds; ++s) {
    TrainConfig full = cfg;
    full.seed = cfg.seed + static_cast<std::uint64_t>(s);
    TrainConfig no_sens = full;
    no_sens.sensitivity_aware = false;

    const TrainReport rep_full = run(spec, train, eval, full, nullptr, threads);
    const TrainReport rep_off = run(spec, train, eval, no_sens, nullptr, threads);

    AblationReport::Row row;
    row.seed = full.seed;
    row.acc_full = rep_full.final_accuracy;
    row.acc_no_sensitivity = rep_off.final_accuracy;
    row.delta = row.acc_full - row.acc_no_sensitivity;
    report.rows.push_back(row);
    report.mean_full += row.acc_full;
    report.mean_no_sensitivity += row.acc_no_sensitivity;
    report.mean_delta += row.delta;
  }
  const double inv = 1.0 / static_cast<double>(n_seeds);
  report.mean_full *= inv;
  report.mean_no_sensitivity *= inv;
  report.mean_delta *= inv;
  return report;
}

}  // namespace tsq
