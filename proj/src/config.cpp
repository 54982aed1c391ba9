#include "tsq/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tsq/error.hpp"
#include "tsq/rng.hpp"

namespace tsq {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument(value);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) {
      throw std::invalid_argument(value);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" +
                      value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "off" || value == "no") {
    return false;
  }
  throw ConfigError("config: key '" + key + "' expects true/false, got '" +
                    value + "'");
}

std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      continue;
    }
    out.push_back(static_cast<int>(parse_long(key, item)));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_int_list(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

ModelSpec ResolvedConfig::model_spec(int input_dim, int classes) const {
  ModelSpec spec;
  spec.widths.push_back(input_dim);
  for (int h : model.hidden) {
    spec.widths.push_back(h);
  }
  spec.widths.push_back(classes);
  spec.classes = classes;
  if (model.activation == "relu") {
    spec.activation = Activation::kRelu;
  } else if (model.activation == "identity") {
    spec.activation = Activation::kIdentity;
  } else {
    throw ConfigError("config: unknown activation '" + model.activation + "'");
  }
  if (model.adapted.empty()) {
    for (int l = 0; l < spec.dense_layer_count(); ++l) {
      spec.adapted_layers.push_back(l);
    }
  } else {
    spec.adapted_layers = model.adapted;
  }
  spec.attention_gate = model.attention_gate;
  spec.validate();
  return spec;
}

std::string ResolvedConfig::serialize() const {
  std::ostringstream os;
  os << "[data]\n";
  os << "kind = " << data.kind << "\n";
  os << "path = " << data.path << "\n";
  os << "n = " << data.n << "\n";
  os << "dim = " << data.dim << "\n";
  os << "classes = " << data.classes << "\n";
  os << "label_noise = " << fmt_double(data.label_noise) << "\n";
  os << "eval_frac = " << fmt_double(data.eval_frac) << "\n";
  os << "normalize = " << (data.normalize ? "true" : "false") << "\n";
  os << "[model]\n";
  os << "hidden = " << fmt_int_list(model.hidden) << "\n";
  os << "adapted = " << (model.adapted.empty() ? "all" : fmt_int_list(model.adapted))
     << "\n";
  os << "activation = " << model.activation << "\n";
  os << "attention_gate = " << (model.attention_gate ? "true" : "false") << "\n";
  os << "[train]\n";
  os << "iterations = " << train.iterations << "\n";
  os << "epochs = " << train.epochs << "\n";
  os << "schedule = "
     << (train.auto_schedule ? std::string("auto")
                             : (train.schedule.empty() ? std::string("none")
                                                       : fmt_int_list(train.schedule)))
     << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "lr = " << fmt_double(train.lr) << "\n";
  os << "seed = " << train.seed << "\n";
  os << "quality_sampling = " << (train.quality_sampling ? "true" : "false")
     << "\n";
  os << "sensitivity_aware = " << (train.sensitivity_aware ? "true" : "false")
     << "\n";
  os << "estimator = "
     << (train.estimator == SensitivityEstimator::kGradWeight ? "grad_weight"
                                                              : "fisher")
     << "\n";
  os << "refresh_fraction = " << fmt_double(train.refresh_fraction) << "\n";
  os << "sensitivity_beta = " << fmt_double(train.sensitivity_beta) << "\n";
  os << "[quality]\n";
  os << "alpha1 = " << fmt_double(train.quality.alpha1) << "\n";
  os << "alpha2 = " << fmt_double(train.quality.alpha2) << "\n";
  os << "alpha3 = " << fmt_double(train.quality.alpha3) << "\n";
  os << "eta_probe = " << fmt_double(train.quality.eta_probe) << "\n";
  os << "tau = " << fmt_double(train.quality.tau) << "\n";
  os << "z_normalize = " << (train.quality.z_normalize ? "true" : "false")
     << "\n";
  os << "[allocator]\n";
  os << "r_init = " << train.allocator.r_init << "\n";
  os << "r_min = " << train.allocator.r_min << "\n";
  os << "r_max = " << train.allocator.r_max << "\n";
  os << "phi_lo = " << fmt_double(train.allocator.phi_lo) << "\n";
  os << "phi_hi = " << fmt_double(train.allocator.phi_hi) << "\n";
  os << "kappa = " << fmt_double(train.allocator.kappa) << "\n";
  return os.str();
}

std::string ResolvedConfig::run_id() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize())));
  return buf;
}

ResolvedConfig parse_config_text(const std::string& text,
                                 const std::string& origin) {
  ResolvedConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) {
      line = line.substr(0, comment);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "model" && section != "train" &&
          section != "quality" && section != "allocator") {
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key '" +
                        key + "' outside any section");
    }

    const auto fail_key = [&]() {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": unknown key '" + key + "' in [" + section + "]");
    };
    if (section == "data") {
      if (key == "kind") {
        if (value != "gaussian" && value != "jsonl" && value != "csv") {
          throw ConfigError("config: data.kind must be gaussian, jsonl or csv");
        }
        cfg.data.kind = value;
      } else if (key == "path") {
        cfg.data.path = value;
      } else if (key == "n") {
        cfg.data.n = static_cast<std::size_t>(parse_long(key, value));
      } else if (key == "dim") {
        cfg.data.dim = static_cast<int>(parse_long(key, value));
      } else if (key == "classes") {
        cfg.data.classes = static_cast<int>(parse_long(key, value));
      } else if (key == "label_noise") {
        cfg.data.label_noise = parse_double(key, value);
      } else if (key == "eval_frac") {
        cfg.data.eval_frac = parse_double(key, value);
      } else if (key == "normalize") {
        cfg.data.normalize = parse_bool(key, value);
      } else {
        fail_key();
      }
    } else if (section == "model") {
      if (key == "hidden") {
        cfg.model.hidden = parse_int_list(key, value);
      } else if (key == "adapted") {
        if (value == "all") {
          cfg.model.adapted.clear();
        } else {
          cfg.model.adapted = parse_int_list(key, value);
        }
      } else if (key == "activation") {
        cfg.model.activation = value;
      } else if (key == "attention_gate") {
        cfg.model.attention_gate = parse_bool(key, value);
      } else {
        fail_key();
      }
    } else if (section == "train") {
      if (key == "iterations") {
        cfg.train.iterations = static_cast<int>(parse_long(key, value));
      } else if (key == "epochs") {
        cfg.train.epochs = static_cast<int>(parse_long(key, value));
      } else if (key == "schedule") {
        if (value == "auto") {
          cfg.train.auto_schedule = true;
          cfg.train.schedule.clear();
        } else if (value == "none") {
          cfg.train.auto_schedule = false;
          cfg.train.schedule.clear();
        } else {
          cfg.train.auto_schedule = false;
          cfg.train.schedule = parse_int_list(key, value);
        }
      } else if (key == "batch_size") {
        cfg.train.batch_size = static_cast<int>(parse_long(key, value));
      } else if (key == "lr") {
        cfg.train.lr = parse_double(key, value);
      } else if (key == "seed") {
        cfg.train.seed = static_cast<std::uint64_t>(parse_long(key, value));
      } else if (key == "quality_sampling") {
        cfg.train.quality_sampling = parse_bool(key, value);
      } else if (key == "sensitivity_aware") {
        cfg.train.sensitivity_aware = parse_bool(key, value);
      } else if (key == "estimator") {
        if (value == "grad_weight") {
          cfg.train.estimator = SensitivityEstimator::kGradWeight;
        } else if (value == "fisher") {
          cfg.train.estimator = SensitivityEstimator::kFisher;
        } else {
          throw ConfigError("config: estimator must be grad_weight or fisher");
        }
      } else if (key == "refresh_fraction") {
        cfg.train.refresh_fraction = parse_double(key, value);
      } else if (key == "sensitivity_beta") {
        cfg.train.sensitivity_beta = parse_double(key, value);
      } else {
        fail_key();
      }
    } else if (section == "quality") {
      if (key == "alpha1") {
        cfg.train.quality.alpha1 = parse_double(key, value);
      } else if (key == "alpha2") {
        cfg.train.quality.alpha2 = parse_double(key, value);
      } else if (key == "alpha3") {
        cfg.train.quality.alpha3 = parse_double(key, value);
      } else if (key == "eta_probe") {
        cfg.train.quality.eta_probe = parse_double(key, value);
      } else if (key == "tau") {
        cfg.train.quality.tau = parse_double(key, value);
      } else if (key == "z_normalize") {
        cfg.train.quality.z_normalize = parse_bool(key, value);
      } else {
        fail_key();
      }
    } else if (section == "allocator") {
      if (key == "r_init") {
        cfg.train.allocator.r_init = static_cast<int>(parse_long(key, value));
      } else if (key == "r_min") {
        cfg.train.allocator.r_min = static_cast<int>(parse_long(key, value));
      } else if (key == "r_max") {
        cfg.train.allocator.r_max = static_cast<int>(parse_long(key, value));
      } else if (key == "phi_lo") {
        cfg.train.allocator.phi_lo = parse_double(key, value);
      } else if (key == "phi_hi") {
        cfg.train.allocator.phi_hi = parse_double(key, value);
      } else if (key == "kappa") {
        cfg.train.allocator.kappa = parse_double(key, value);
      } else {
        fail_key();
      }
    }
  }
  return cfg;
}

ResolvedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::pair<Dataset, Dataset> materialize_dataset(const ResolvedConfig& cfg) {
  Dataset full;
  if (cfg.data.kind == "gaussian") {
    full = gen_gaussian_mixture(derive_seed(cfg.train.seed, "dataset"),
                                cfg.data.n, cfg.data.dim, cfg.data.classes,
                                cfg.data.label_noise);
  } else if (cfg.data.kind == "jsonl") {
    full = load_jsonl(cfg.data.path);
  } else {
    full = load_csv(cfg.data.path);
  }
  if (cfg.data.normalize && cfg.data.kind != "gaussian") {
    const std::size_t n = full.size();
    const std::size_t d = full.features.shape[1];
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mean += full.features.at(i, j);
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = full.features.at(i, j) - mean;
        var += c * c;
      }
      var /= static_cast<double>(n);
      const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        full.features.at(i, j) = (full.features.at(i, j) - mean) / sd;
      }
    }
  }
  return split(full, cfg.data.eval_frac, derive_seed(cfg.train.seed, "split"));
}

}  // namespace tsq
