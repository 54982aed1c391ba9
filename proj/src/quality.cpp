#include "tsq/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "tsq/error.hpp"

namespace tsq {

namespace {

std::vector<double> z_scored(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) {
    var += (x - mean) * (x - mean);
  }
  var /= n;
  std::vector<double> out(xs.size(), 0.0);
  if (var > 0.0) {
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out[i] = (xs[i] - mean) / sd;
    }
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    return 0.0;
  }
  return dot(a, b) / (na * nb);
}

}  // namespace

void QualityConfig::validate() const {
  if (tau <= 0.0) {
    throw ConfigError("quality: temperature must be positive");
  }
  if (!std::isfinite(alpha1) || !std::isfinite(alpha2) || !std::isfinite(alpha3)) {
    throw ConfigError("quality: non-finite term weight");
  }
  if (eta_probe <= 0.0) {
    throw ConfigError("quality: eta_probe must be positive");
  }
}

void EmaGradient::update(const std::vector<double>& grad, double decay) {
  if (v.empty()) {
    v = grad;
    return;
  }
  if (v.size() != grad.size()) {
    throw ShapeError("ema gradient: size changed between updates");
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = decay * v[i] + (1.0 - decay) * grad[i];
  }
}

double probe_loss_reduction(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& theta, const std::vector<double>& grad,
    double eta) {
  if (theta.size() != grad.size()) {
    throw ShapeError("probe: theta and gradient sizes differ");
  }
  const double before = loss(theta);
  std::vector<double> stepped = theta;
  for (std::size_t i = 0; i < stepped.size(); ++i) {
    stepped[i] -= eta * grad[i];
  }
  return before - loss(stepped);
}

QualityRecord score_sample(const ModelState& state, const Batch& sample,
                           const QualityConfig& cfg, const EmaGradient& ema) {
  if (sample.size() != 1) {
    throw ShapeError("score_sample: expected a single sample");
  }
  QualityRecord rec;
  rec.sample_id = sample.ids[0];
  GradResult grads;
  try {
    grads = per_sample_gradient(state, sample);
  } catch (const NumericError& e) {
    throw NumericError("scoring sample " + std::to_string(rec.sample_id) +
                       ": " + e.what());
  }
  rec.grad_norm = std::sqrt(trainable_grad_sq_norm(grads));

  const std::vector<double> theta = flatten_trainable(state);
  const std::vector<double> grad_flat = flatten_trainable_grads(state, grads);
  // The probe runs on a scratch copy; the caller's state stays untouched.
  ModelState scratch = state;
  const auto sample_loss = [&](const std::vector<double>& params) {
    apply_trainable(scratch, params);
    return batch_loss(scratch, sample);
  };
  try {
    rec.loss_reduction =
        probe_loss_reduction(sample_loss, theta, grad_flat, cfg.eta_probe);
  } catch (const NumericError& e) {
    throw NumericError("scoring sample " + std::to_string(rec.sample_id) +
                       ": " + e.what());
  }
  rec.convergence_contrib = ema.empty() ? 0.0 : cosine(grad_flat, ema.v);
  rec.q = cfg.alpha1 * rec.grad_norm + cfg.alpha2 * rec.loss_reduction +
          cfg.alpha3 * rec.convergence_contrib;
  if (!std::isfinite(rec.q)) {
    throw NumericError("scoring sample " + std::to_string(rec.sample_id) +
                       ": non-finite score");
  }
  return rec;
}

void combine_scores(std::vector<QualityRecord>& records,
                    const QualityConfig& cfg) {
  if (records.empty()) {
    return;
  }
  if (!cfg.z_normalize) {
    for (QualityRecord& r : records) {
      r.q = cfg.alpha1 * r.grad_norm + cfg.alpha2 * r.loss_reduction +
            cfg.alpha3 * r.convergence_contrib;
    }
    return;
  }
  std::vector<double> g(records.size()), l(records.size()), c(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    g[i] = records[i].grad_norm;
    l[i] = records[i].loss_reduction;
    c[i] = records[i].convergence_contrib;
  }
  const std::vector<double> zg = z_scored(g), zl = z_scored(l), zc = z_scored(c);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].q =
        cfg.alpha1 * zg[i] + cfg.alpha2 * zl[i] + cfg.alpha3 * zc[i];
  }
}

std::vector<QualityRecord> score_pool(const ModelState& state,
                                      const Dataset& pool,
                                      const QualityConfig& cfg,
                                      const EmaGradient& ema, int threads) {
  if (pool.size() == 0) {
    throw DataError("score_pool: empty pool");
  }
  cfg.validate();

  // Ascending sample-id evaluation order.
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pool.ids[a] < pool.ids[b];
  });

  std::vector<QualityRecord> records(pool.size());
  const auto score_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      records[k] = score_sample(state, pool.batch_of({order[k]}), cfg, ema);
    }
  };
  const int n_threads =
      std::max(1, std::min<int>(threads, static_cast<int>(pool.size())));
  if (n_threads == 1) {
    score_range(0, pool.size());
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk =
        (pool.size() + static_cast<std::size_t>(n_threads) - 1) /
        static_cast<std::size_t>(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t lo = static_cast<std::size_t>(t) * chunk;
      const std::size_t hi = std::min(pool.size(), lo + chunk);
      if (lo >= hi) {
        break;
      }
      workers.emplace_back(score_range, lo, hi);
    }
    for (std::thread& w : workers) {
      w.join();
    }
  }
  combine_scores(records, cfg);
  return records;
}

DataSubset sampling_distribution(const std::vector<QualityRecord>& records,
                                 double tau) {
  if (tau <= 0.0) {
    throw ConfigError("sampling: temperature must be positive");
  }
  if (records.empty()) {
    throw DataError("sampling: no records");
  }
  DataSubset subset;
  subset.sample_ids.reserve(records.size());
  subset.p.resize(records.size());
  double mx = records[0].q;
  for (const QualityRecord& r : records) {
    mx = std::max(mx, r.q);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    subset.sample_ids.push_back(records[i].sample_id);
    const double e = std::exp((records[i].q - mx) / tau);
    subset.p[i] = e;
    total += e;
  }
  for (double& p : subset.p) {
    p /= total;
  }
  return subset;
}

std::vector<std::int64_t> draw_minibatch(const DataSubset& subset,
                                         std::size_t batch_size, Rng& rng) {
  const std::size_t n = subset.sample_ids.size();
  if (batch_size > n) {
    throw ShapeError("draw_minibatch: batch size " +
                     std::to_string(batch_size) + " exceeds pool size " +
                     std::to_string(n));
  }
  std::vector<std::size_t> alive(n);
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<double> weights;
  weights.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    weights.push_back(subset.p[i]);
  }
  std::vector<std::int64_t> out;
  out.reserve(batch_size);
  double remaining = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const double u = rng.uniform() * remaining;
    double acc = 0.0;
    std::size_t pick = alive.size() - 1;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      acc += weights[alive[i]];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    out.push_back(subset.sample_ids[alive[pick]]);
    remaining -= weights[alive[pick]];
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

void refresh_scores(const ModelState& state, const Dataset& pool,
                    std::vector<QualityRecord>& records, DataSubset& subset,
                    const QualityConfig& cfg, double fraction,
                    const EmaGradient& ema, Rng& rng, int threads) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw ConfigError("refresh: fraction outside (0,1]");
  }
  const std::size_t n = records.size();
  const auto n_refresh = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));

  // Records are kept in ascending sample-id order; map ids to pool rows once.
  std::vector<std::size_t> row_of(n);
  {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return pool.ids[a] < pool.ids[b];
    });
    row_of = order;
  }

  std::vector<std::size_t> chosen(n);
  std::iota(chosen.begin(), chosen.end(), 0);
  rng.shuffle(chosen);
  chosen.resize(n_refresh);
  std::sort(chosen.begin(), chosen.end());

  const auto rescore_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t rec_idx = chosen[k];
      QualityRecord fresh =
          score_sample(state, pool.batch_of({row_of[rec_idx]}), cfg, ema);
      fresh.q = records[rec_idx].q;  // recombined below
      records[rec_idx] = fresh;
    }
  };
  const int n_threads = std::max(
      1, std::min<int>(threads, static_cast<int>(std::max<std::size_t>(1, n_refresh))));
  if (n_threads == 1 || n_refresh < 2) {
    rescore_range(0, n_refresh);
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk =
        (n_refresh + static_cast<std::size_t>(n_threads) - 1) /
        static_cast<std::size_t>(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t lo = static_cast<std::size_t>(t) * chunk;
      const std::size_t hi = std::min(n_refresh, lo + chunk);
      if (lo >= hi) {
        break;
      }
      workers.emplace_back(rescore_range, lo, hi);
    }
    for (std::thread& w : workers) {
      w.join();
    }
  }
  combine_scores(records, cfg);
  subset = sampling_distribution(records, cfg.tau);
}

}  // namespace tsq
