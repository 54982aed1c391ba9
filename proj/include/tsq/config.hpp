#pragma once

#include <string>
#include <vector>

#include "tsq/model.hpp"
#include "tsq/trainer.hpp"

namespace tsq {

struct DataConfig {
  std::string kind = "gaussian";  // gaussian | jsonl | csv
  std::string path;               // input file for jsonl/csv
  std::size_t n = 2000;
  int dim = 32;
  int classes = 10;
  double label_noise = 0.2;
  double eval_frac = 0.2;
  bool normalize = false;  // z-score loaded features (loaders never do)
};

struct ModelConfig {
  std::vector<int> hidden = {32, 32};
  std::vector<int> adapted;  // empty means every dense layer
  std::string activation = "relu";
  bool attention_gate = false;
};

// Every key has a default, so a three-line config file runs. The file format
// is flat `key = value` pairs under [data], [model], [train], [quality] and
// [allocator] sections; see the README for the full grammar.
struct ResolvedConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;

  ModelSpec model_spec(int input_dim, int classes) const;

  // Canonical text with every key materialized; hashing it (plus nothing
  // else -- the seed is a [train] key) gives the run id.
  std::string serialize() const;
  std::string run_id() const;
};

ResolvedConfig parse_config_text(const std::string& text,
                                 const std::string& origin);
ResolvedConfig load_config_file(const std::string& path);

// Builds the dataset the config describes and splits off the eval side.
std::pair<Dataset, Dataset> materialize_dataset(const ResolvedConfig& cfg);

}  // namespace tsq
