#include "tsq/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsq/error.hpp"

namespace tsq {

namespace {

using nlohmann::json;

int log_level() {
  // TSQ_LOG: silent by default, "info" or "debug" raise verbosity.
  const char* env = std::getenv("TSQ_LOG");
  if (env == nullptr) {
    return 0;
  }
  const std::string v = env;
  if (v == "debug") {
    return 2;
  }
  if (v == "info" || v == "1") {
    return 1;
  }
  return 0;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) {
    std::cerr << "[tsqlora] " << msg << "\n";
  }
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "tsq_out";
  std::optional<long> seed_override;
  int threads = 1;
};

ResolvedConfig load_and_resolve(const CommonArgs& args) {
  ResolvedConfig cfg = load_config_file(args.config_path);
  if (args.seed_override) {
    cfg.train.seed = static_cast<std::uint64_t>(*args.seed_override);
  }
  return cfg;
}

int resolve_class_count(const ResolvedConfig& cfg, const Dataset& train_set,
                        const Dataset& eval_set) {
  if (cfg.data.kind == "gaussian") {
    return cfg.data.classes;
  }
  return 1 + std::max(train_set.max_label(), eval_set.max_label());
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory " + dir + ": " +
                      ec.message());
  }
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path);
  }
  out << content;
}

RunManifest write_manifest(const ResolvedConfig& cfg, const CommonArgs& args) {
  RunManifest manifest;
  manifest.config_path = args.config_path;
  manifest.resolved_config = cfg.serialize();
  manifest.out_dir = args.out_dir;
  manifest.run_id = cfg.run_id();
  json j;
  j["config_path"] = manifest.config_path;
  j["out_dir"] = manifest.out_dir;
  j["resolved_config"] = manifest.resolved_config;
  j["run_id"] = manifest.run_id;
  write_text(args.out_dir + "/manifest.json", j.dump(2) + "\n");
  return manifest;
}

json record_json(const QualityRecord& r, double p) {
  json j;
  j["convergence"] = r.convergence_contrib;
  j["grad_norm"] = r.grad_norm;
  j["id"] = r.sample_id;
  j["loss_reduction"] = r.loss_reduction;
  j["p"] = p;
  j["q"] = r.q;
  return j;
}

json scores_event(const char* name, const std::vector<QualityRecord>& recs,
                  const DataSubset& subset, int step) {
  json j;
  j["event"] = name;
  j["step"] = step;
  json arr = json::array();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    arr.push_back(record_json(recs[i], subset.p[i]));
  }
  j["scores"] = std::move(arr);
  return j;
}

std::string metrics_stream(const TrainReport& report, int total_steps) {
  std::ostringstream os;
  os << scores_event("warmup", report.warmup_scores, report.warmup_subset, 0)
            .dump()
     << "\n";
  std::size_t event_idx = 0;
  long params = report.param_trajectory.front().second;
  for (std::size_t i = 0; i < report.step_loss.size(); ++i) {
    const int step = static_cast<int>(i) + 1;
    json j;
    j["active_params"] = params;
    j["loss"] = report.step_loss[i];
    j["step"] = step;
    os << j.dump() << "\n";
    while (event_idx < report.events.size() &&
           report.events[event_idx].step == step) {
      const AdjustEvent& ev = report.events[event_idx];
      json e;
      e["event"] = "adjust";
      e["step"] = ev.step;
      e["params"] = ev.active_params;
      e["phi"] = ev.plan.phi;
      json layers = json::array();
      for (const RankPlanEntry& entry : ev.plan.entries) {
        json l;
        l["layer"] = entry.layer;
        l["rank"] = entry.assigned;
        l["sensitivity"] = entry.sensitivity;
        l["target"] = entry.target;
        layers.push_back(std::move(l));
      }
      e["layers"] = std::move(layers);
      os << e.dump() << "\n";
      params = ev.active_params;
      ++event_idx;
    }
  }
  os << scores_event("scores", report.final_scores, report.final_subset,
                     total_steps)
            .dump()
     << "\n";
  json s;
  s["event"] = "summary";
  s["accuracy"] = report.final_accuracy;
  s["mean_q_clean"] = report.mean_q_clean;
  s["mean_q_noisy"] = report.mean_q_noisy;
  s["n_clean"] = report.n_clean;
  s["n_noisy"] = report.n_noisy;
  s["params"] = report.param_trajectory.back().second;
  s["steps"] = total_steps;
  os << s.dump() << "\n";
  return os.str();
}

std::string render_ranks_csv(const json& lines) {
  std::ostringstream os;
  os << "step,layer,sensitivity,rank\n";
  for (const json& j : lines) {
    if (!j.contains("event") || j["event"] != "adjust") {
      continue;
    }
    for (const json& l : j["layers"]) {
      os << j["step"].get<int>() << ',' << l["layer"].get<int>() << ','
         << fmt_double(l["sensitivity"].get<double>()) << ','
         << l["rank"].get<int>() << "\n";
    }
  }
  return os.str();
}

std::string render_quality_hist_csv(const json& lines) {
  // Score histogram over the latest scores event, 30 bins.
  std::vector<double> qs;
  for (const json& j : lines) {
    if (j.contains("event") && (j["event"] == "scores" || j["event"] == "warmup")) {
      std::vector<double> cur;
      for (const json& r : j["scores"]) {
        cur.push_back(r["q"].get<double>());
      }
      if (j["event"] == "scores" || qs.empty()) {
        qs = std::move(cur);
      }
    }
  }
  std::ostringstream os;
  os << "bin_lo,bin_hi,count\n";
  if (qs.empty()) {
    return os.str();
  }
  double lo = qs[0], hi = qs[0];
  for (double q : qs) {
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const int bins = 30;
  std::vector<long> counts(bins, 0);
  for (double q : qs) {
    int b = static_cast<int>(std::floor((q - lo) / (hi - lo) * bins));
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  for (int b = 0; b < bins; ++b) {
    const double w = (hi - lo) / bins;
    os << fmt_double(lo + b * w) << ',' << fmt_double(lo + (b + 1) * w) << ','
       << counts[static_cast<std::size_t>(b)] << "\n";
  }
  return os.str();
}

std::string render_summary_csv(const json& lines, double wall_clock_s) {
  std::ostringstream os;
  os << "final_accuracy,wall_clock_s,trainable_params,mean_q_clean,"
        "mean_q_noisy,n_clean,n_noisy\n";
  for (const json& j : lines) {
    if (j.contains("event") && j["event"] == "summary") {
      os << fmt_double(j["accuracy"].get<double>()) << ',';
      if (wall_clock_s >= 0.0) {
        os << fmt_double(wall_clock_s);
      }
      os << ',' << j["params"].get<long>() << ','
         << fmt_double(j["mean_q_clean"].get<double>()) << ','
         << fmt_double(j["mean_q_noisy"].get<double>()) << ','
         << j["n_clean"].get<long>() << ',' << j["n_noisy"].get<long>() << "\n";
    }
  }
  return os.str();
}

json parse_metrics_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path);
  }
  json lines = json::array();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    try {
      lines.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": bad metrics line: " + e.what());
    }
  }
  return lines;
}

void write_run_outputs(const std::string& out_dir, const TrainReport& report,
                       int total_steps) {
  const std::string metrics = metrics_stream(report, total_steps);
  write_text(out_dir + "/metrics.jsonl", metrics);
  const json lines = parse_metrics_lines(out_dir + "/metrics.jsonl");
  write_text(out_dir + "/ranks.csv", render_ranks_csv(lines));
  write_text(out_dir + "/quality_hist.csv", render_quality_hist_csv(lines));
  write_text(out_dir + "/summary.csv",
             render_summary_csv(lines, report.wall_clock_s));
}

int cmd_train(const CommonArgs& args) {
  const ResolvedConfig cfg = load_and_resolve(args);
  const auto [train_set, eval_set] = materialize_dataset(cfg);
  const ModelSpec spec =
      cfg.model_spec(train_set.dim(), resolve_class_count(cfg, train_set, eval_set));
  ensure_out_dir(args.out_dir);
  write_manifest(cfg, args);
  log_info("run " + cfg.run_id() + ": training on " +
           std::to_string(train_set.size()) + " samples");
  const TrainReport report =
      run(spec, train_set, eval_set, cfg.train, nullptr, args.threads);
  write_run_outputs(args.out_dir, report,
                    cfg.train.resolved_iterations(train_set.size()));
  log_info("final accuracy " + fmt_double(report.final_accuracy));
  return 0;
}

int cmd_score(const CommonArgs& args) {
  const ResolvedConfig cfg = load_and_resolve(args);
  const auto [train_set, eval_set] = materialize_dataset(cfg);
  const ModelSpec spec =
      cfg.model_spec(train_set.dim(), resolve_class_count(cfg, train_set, eval_set));
  ensure_out_dir(args.out_dir);
  write_manifest(cfg, args);
  const ModelState state =
      init_model(spec, cfg.train.allocator.r_init,
                 cfg.train.allocator.resolved_r_max(), cfg.train.seed);
  const std::vector<QualityRecord> recs = score_pool(
      state, train_set, cfg.train.quality, EmaGradient{}, args.threads);
  const DataSubset subset = sampling_distribution(recs, cfg.train.quality.tau);

  std::ostringstream os;
  os << "sample_id,grad_norm,loss_reduction,convergence_contrib,q,p\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    os << recs[i].sample_id << ',' << fmt_double(recs[i].grad_norm) << ','
       << fmt_double(recs[i].loss_reduction) << ','
       << fmt_double(recs[i].convergence_contrib) << ','
       << fmt_double(recs[i].q) << ',' << fmt_double(subset.p[i]) << "\n";
  }
  write_text(args.out_dir + "/scores.csv", os.str());
  return 0;
}

int cmd_ablate(const CommonArgs& args, int n_seeds) {
  const ResolvedConfig cfg = load_and_resolve(args);
  const auto [train_set, eval_set] = materialize_dataset(cfg);
  const ModelSpec spec =
      cfg.model_spec(train_set.dim(), resolve_class_count(cfg, train_set, eval_set));
  ensure_out_dir(args.out_dir);
  write_manifest(cfg, args);
  const AblationReport rep =
      ablate(spec, train_set, eval_set, cfg.train, n_seeds, args.threads);
  std::ostringstream os;
  os << "seed,acc_full,acc_no_sensitivity,delta\n";
  for (const auto& row : rep.rows) {
    os << row.seed << ',' << fmt_double(row.acc_full) << ','
       << fmt_double(row.acc_no_sensitivity) << ',' << fmt_double(row.delta)
       << "\n";
  }
  os << "mean," << fmt_double(rep.mean_full) << ','
     << fmt_double(rep.mean_no_sensitivity) << ',' << fmt_double(rep.mean_delta)
     << "\n";
  write_text(args.out_dir + "/ablation.csv", os.str());
  log_info("ablation mean delta " + fmt_double(rep.mean_delta));
  return 0;
}

int cmd_compare(const CommonArgs& args) {
  const ResolvedConfig cfg = load_and_resolve(args);
  const auto [train_set, eval_set] = materialize_dataset(cfg);
  const ModelSpec spec =
      cfg.model_spec(train_set.dim(), resolve_class_count(cfg, train_set, eval_set));
  ensure_out_dir(args.out_dir);
  write_manifest(cfg, args);

  TrainConfig baseline = cfg.train;
  baseline.quality_sampling = false;
  baseline.sensitivity_aware = false;
  baseline.refresh_fraction = 0.0;

  struct Arm {
    const char* name;
    const TrainConfig* cfg;
  };
  const Arm arms[] = {{"tsqlora", &cfg.train}, {"fixed_rank", &baseline}};
  std::ostringstream os;
  os << "arm,accuracy,samples_consumed,samples_per_sec,max_params\n";
  for (const Arm& arm : arms) {
    const TrainReport rep =
        run(spec, train_set, eval_set, *arm.cfg, nullptr, args.threads);
    long max_params = 0;
    for (const auto& [step, params] : rep.param_trajectory) {
      max_params = std::max(max_params, params);
    }
    const double sps =
        rep.wall_clock_s > 0.0
            ? static_cast<double>(rep.train_samples_consumed) / rep.wall_clock_s
            : 0.0;
    os << arm.name << ',' << fmt_double(rep.final_accuracy) << ','
       << rep.train_samples_consumed << ',' << fmt_double(sps) << ','
       << max_params << "\n";
  }
  write_text(args.out_dir + "/compare.csv", os.str());
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const json lines = parse_metrics_lines(run_dir + "/metrics.jsonl");
  write_text(run_dir + "/ranks.csv", render_ranks_csv(lines));
  write_text(run_dir + "/quality_hist.csv", render_quality_hist_csv(lines));
  // Wall clock is not recorded in the metrics stream; the re-rendered
  // summary leaves the field empty.
  write_text(run_dir + "/summary.csv", render_summary_csv(lines, -1.0));
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"TsqLoRA experiment runner"};
  app.require_subcommand(1);

  CommonArgs args;
  int n_seeds = 5;
  std::string run_dir;

  const auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) {
      cmd->add_option("--config", args.config_path, "config file path")
          ->required();
    }
    cmd->add_option("--seed", args.seed_override, "override [train] seed");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--threads", args.threads, "scoring parallelism")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* train_cmd = app.add_subcommand("train", "run the full procedure");
  add_common(train_cmd, true);
  CLI::App* score_cmd =
      app.add_subcommand("score", "warm-up data scoring without training");
  add_common(score_cmd, true);
  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "paired runs with rank re-allocation on and off");
  add_common(ablate_cmd, true);
  ablate_cmd->add_option("--seeds", n_seeds, "number of paired seeds")
      ->check(CLI::PositiveNumber);
  CLI::App* compare_cmd = app.add_subcommand(
      "compare", "TsqLoRA vs a fixed-rank baseline at equal budget");
  add_common(compare_cmd, true);
  CLI::App* report_cmd = app.add_subcommand(
      "report", "re-render the CSV outputs from an existing metrics.jsonl");
  report_cmd->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      return cmd_train(args);
    }
    if (score_cmd->parsed()) {
      return cmd_score(args);
    }
    if (ablate_cmd->parsed()) {
      return cmd_ablate(args, n_seeds);
    }
    if (compare_cmd->parsed()) {
      return cmd_compare(args);
    }
    if (report_cmd->parsed()) {
      return cmd_report(run_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace tsq
