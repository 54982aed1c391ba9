#include "tsq/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tsq/error.hpp"
#include "tsq/rng.hpp"

namespace tsq {

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  const std::size_t d = ds.features.shape[1];
  Dataset out;
  out.features = Tensor({rows.size(), d});
  out.provenance = ds.provenance;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    std::copy_n(&ds.features.data[r * d], d, &out.features.data[k * d]);
    out.labels.push_back(ds.labels[r]);
    out.ids.push_back(ds.ids[r]);
    out.noisy.push_back(ds.noisy[r]);
  }
  return out;
}

void check_dataset(const Dataset& ds, const std::string& origin) {
  if (ds.size() == 0) {
    throw DataError(origin + ": empty dataset");
  }
  check_finite(ds.features, "dataset features");
  std::vector<std::int64_t> sorted_ids = ds.ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  if (std::adjacent_find(sorted_ids.begin(), sorted_ids.end()) !=
      sorted_ids.end()) {
    throw DataError(origin + ": duplicate sample ids");
  }
  for (int y : ds.labels) {
    if (y < 0) {
      throw DataError(origin + ": negative label");
    }
  }
}

}  // namespace

int Dataset::max_label() const {
  int m = 0;
  for (int y : labels) {
    m = std::max(m, y);
  }
  return m;
}

Batch Dataset::batch_of(const std::vector<std::size_t>& rows) const {
  const std::size_t d = features.shape[1];
  Batch b;
  b.features = Tensor({rows.size(), d});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy_n(&features.data[rows[k] * d], d, &b.features.data[k * d]);
    b.labels.push_back(labels[rows[k]]);
    b.ids.push_back(ids[rows[k]]);
  }
  return b;
}

Batch Dataset::full_batch() const {
  std::vector<std::size_t> rows(size());
  std::iota(rows.begin(), rows.end(), 0);
  return batch_of(rows);
}

Dataset gen_gaussian_mixture(std::uint64_t seed, std::size_t n, int d,
                             int classes, double label_noise_frac) {
  if (classes < 2) {
    throw ConfigError("gaussian mixture: need at least 2 classes");
  }
  if (d <= 0 || n == 0) {
    throw ConfigError("gaussian mixture: n and d must be positive");
  }
  if (label_noise_frac < 0.0 || label_noise_frac >= 1.0) {
    throw ConfigError("gaussian mixture: label_noise_frac outside [0,1)");
  }
  Rng rng(derive_seed(seed, "gaussian-mixture"));
  const auto dim = static_cast<std::size_t>(d);

  // Class means on a sphere of radius 3.
  std::vector<std::vector<double>> means(static_cast<std::size_t>(classes));
  for (auto& mean : means) {
    mean.resize(dim);
    double norm_sq = 0.0;
    for (double& v : mean) {
      v = rng.gaussian();
      norm_sq += v * v;
    }
    const double r = std::sqrt(norm_sq);
    for (double& v : mean) {
      v = 3.0 * v / r;
    }
  }

  Dataset ds;
  ds.features = Tensor({n, dim});
  ds.labels.resize(n);
  ds.ids.resize(n);
  ds.noisy.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes)));
    ds.labels[i] = y;
    ds.ids[i] = static_cast<std::int64_t>(i);
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features.data[i * dim + j] =
          means[static_cast<std::size_t>(y)][j] + rng.gaussian();
    }
  }

  // Column z-score over the generated pool.
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += ds.features.data[i * dim + j];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = ds.features.data[i * dim + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      ds.features.data[i * dim + j] = (ds.features.data[i * dim + j] - mean) / sd;
    }
  }

  const auto n_noisy =
      static_cast<std::size_t>(std::floor(label_noise_frac * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t k = 0; k < n_noisy; ++k) {
    const std::size_t i = order[k];
    const int wrong_offset =
        1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes - 1)));
    ds.labels[i] = (ds.labels[i] + wrong_offset) % classes;
    ds.noisy[i] = 1;
  }

  std::ostringstream prov;
  prov << "gaussian_mixture(seed=" << seed << ",n=" << n << ",d=" << d
       << ",classes=" << classes << ",noise=" << label_noise_frac << ")";
  ds.provenance = prov.str();
  return ds;
}

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("jsonl: cannot open " + path);
  }
  Dataset ds;
  ds.provenance = "jsonl:" + path;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool any_explicit_id = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("jsonl: parse error at line " + std::to_string(line_no) +
                      ": " + e.what());
    }
    if (!obj.contains("features") || !obj["features"].is_array() ||
        !obj.contains("label")) {
      throw DataError("jsonl: line " + std::to_string(line_no) +
                      " missing features/label");
    }
    std::vector<double> feat;
    for (const auto& v : obj["features"]) {
      if (!v.is_number()) {
        throw DataError("jsonl: non-numeric feature at line " +
                        std::to_string(line_no));
      }
      feat.push_back(v.get<double>());
    }
    if (rows.empty()) {
      width = feat.size();
    } else if (feat.size() != width) {
      throw DataError("jsonl: line " + std::to_string(line_no) + " has " +
                      std::to_string(feat.size()) + " features, expected " +
                      std::to_string(width));
    }
    rows.push_back(std::move(feat));
    ds.labels.push_back(obj["label"].get<int>());
    if (obj.contains("id")) {
      any_explicit_id = true;
      ds.ids.push_back(obj["id"].get<std::int64_t>());
    } else {
      ds.ids.push_back(static_cast<std::int64_t>(line_no - 1));
    }
    ds.noisy.push_back(obj.value("noisy", false) ? 1 : 0);
  }
  if (rows.empty()) {
    throw DataError("jsonl: " + path + " contains no samples");
  }
  (void)any_explicit_id;
  ds.features = Tensor({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), &ds.features.data[i * width]);
  }
  check_dataset(ds, "jsonl " + path);
  return ds;
}

void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("jsonl: cannot write " + path);
  }
  const std::size_t d = ds.features.shape[1];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    nlohmann::json obj;
    obj["id"] = ds.ids[i];
    obj["label"] = ds.labels[i];
    obj["features"] = std::vector<double>(
        ds.features.data.begin() + static_cast<std::ptrdiff_t>(i * d),
        ds.features.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    if (ds.noisy[i]) {
      obj["noisy"] = true;
    }
    out << obj.dump() << '\n';
  }
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("csv: cannot open " + path);
  }
  Dataset ds;
  ds.provenance = "csv:" + path;
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("csv: " + path + " is empty");
  }
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) {
          throw std::invalid_argument(cell);
        }
        cells.push_back(v);
      } catch (const std::exception&) {
        throw DataError("csv: parse error at line " + std::to_string(line_no) +
                        ": '" + cell + "'");
      }
    }
    if (cells.size() < 2) {
      throw DataError("csv: line " + std::to_string(line_no) +
                      " needs features plus a trailing label");
    }
    if (rows.empty()) {
      width = cells.size() - 1;
    } else if (cells.size() - 1 != width) {
      throw DataError("csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size() - 1) +
                      " features, expected " + std::to_string(width));
    }
    const double label = cells.back();
    cells.pop_back();
    if (label < 0 || label != std::floor(label)) {
      throw DataError("csv: line " + std::to_string(line_no) +
                      " label must be a non-negative integer");
    }
    ds.labels.push_back(static_cast<int>(label));
    ds.ids.push_back(static_cast<std::int64_t>(rows.size()));
    ds.noisy.push_back(0);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) {
    throw DataError("csv: " + path + " contains no samples");
  }
  ds.features = Tensor({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), &ds.features.data[i * width]);
  }
  check_dataset(ds, "csv " + path);
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("csv: cannot write " + path);
  }
  const std::size_t d = ds.features.shape[1];
  for (std::size_t j = 0; j < d; ++j) {
    out << 'f' << j << ',';
  }
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out << ds.features.data[i * d + j] << ',';
    }
    out << ds.labels[i] << '\n';
  }
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double eval_frac,
                                  std::uint64_t seed) {
  if (eval_frac <= 0.0 || eval_frac >= 1.0) {
    throw ConfigError("split: eval_frac outside (0,1)");
  }
  const std::size_t n = ds.size();
  const auto n_eval =
      static_cast<std::size_t>(std::floor(eval_frac * static_cast<double>(n)));
  if (n_eval == 0 || n_eval == n) {
    throw ConfigError("split: fraction leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);
  const std::vector<std::size_t> eval_rows(order.begin(),
                                           order.begin() + static_cast<std::ptrdiff_t>(n_eval));
  const std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_eval),
                                            order.end());
  return {take_rows(ds, train_rows), take_rows(ds, eval_rows)};
}

}  // namespace tsq
