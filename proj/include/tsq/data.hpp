#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsq/model.hpp"
#include "tsq/tensor.hpp"

namespace tsq {

// Immutable after construction; freely shareable.
struct Dataset {
  Tensor features;  // n x d
  std::vector<int> labels;
  std::vector<std::int64_t> ids;
  std::vector<std::uint8_t> noisy;  // ground-truth corruption tags
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  int dim() const {
    return features.is_matrix() ? static_cast<int>(features.shape[1]) : 0;
  }
  int max_label() const;

  Batch batch_of(const std::vector<std::size_t>& rows) const;
  Batch full_batch() const;
};

// Gaussian mixture classifier benchmark: class means on a radius-3 sphere,
// unit covariance, features z-scored per column after generation. Exactly
// floor(label_noise_frac * n) samples get a uniformly re-drawn wrong label
// and a noisy tag.
Dataset gen_gaussian_mixture(std::uint64_t seed, std::size_t n, int d,
                             int classes, double label_noise_frac);

// One JSON object per line: "features" (numeric array), "label" (integer),
// optional "id". Missing ids are assigned from the line number.
Dataset load_jsonl(const std::string& path);
void save_jsonl(const Dataset& ds, const std::string& path);

// Header row; label in the last column; ids assigned from the line number.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

// Seeded shuffle then partition; eval side gets floor(eval_frac * n) rows.
std::pair<Dataset, Dataset> split(const Dataset& ds, double eval_frac,
                                  std::uint64_t seed);

}  // namespace tsq
