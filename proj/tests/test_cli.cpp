#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "tsq/cli.hpp"
#include "tsq/config.hpp"
#include "tsq/rng.hpp"

using namespace tsq;
namespace fs = std::filesystem;

namespace {

struct CliDir {
  fs::path root;
  CliDir() {
    root = fs::temp_directory_path() /
           ("tsq_cli_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(root);
  }
  ~CliDir() { fs::remove_all(root); }
  std::string file(const std::string& name) const {
    return (root / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"tsqlora"};
  for (const std::string& a : args) {
    argv.push_back(a.c_str());
  }
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

const char* kTinyConfig =
    "[data]\n"
    "n = 120\n"
    "dim = 6\n"
    "classes = 3\n"
    "label_noise = 0.1\n"
    "eval_frac = 0.25\n"
    "[model]\n"
    "hidden = 8\n"
    "[train]\n"
    "iterations = 10\n"
    "batch_size = 16\n"
    "lr = 0.2\n"
    "schedule = 4,8\n"
    "refresh_fraction = 0.5\n"
    "[allocator]\n"
    "r_init = 2\n"
    "r_max = 6\n";

std::vector<std::string> csv_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      lines.push_back(line);
    }
  }
  return lines;
}

}  // namespace

TEST_CASE("missing config exits 2 without writing outputs") {
  CliDir tmp;
  const std::string out = tmp.file("out");
  CHECK(run_cli({"train", "--config", tmp.file("absent.ini"), "--out", out}) ==
        2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("a minimal run writes all four outputs and they parse") {
  CliDir tmp;
  write_file(tmp.file("cfg.ini"), kTinyConfig);
  const std::string out = tmp.file("out");
  REQUIRE(run_cli({"train", "--config", tmp.file("cfg.ini"), "--out", out}) ==
          0);

  for (const char* name :
       {"manifest.json", "metrics.jsonl", "summary.csv", "ranks.csv",
        "quality_hist.csv"}) {
    CHECK(fs::exists(out + "/" + name));
  }
  // Every metrics line is valid JSON.
  std::ifstream metrics(out + "/metrics.jsonl");
  std::string line;
  long steps = 0;
  while (std::getline(metrics, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    if (!j.contains("event")) {
      ++steps;
    }
  }
  CHECK(steps == 10);
  // The manifest parses and pins the run id.
  const nlohmann::json manifest =
      nlohmann::json::parse(slurp(out + "/manifest.json"));
  CHECK(manifest["run_id"].get<std::string>().size() == 16);
  // summary.csv has a header plus one data row.
  CHECK(csv_lines(out + "/summary.csv").size() == 2);
  // ranks.csv covers both events times the two adapted layers.
  CHECK(csv_lines(out + "/ranks.csv").size() == 1 + 2 * 2);
  // quality_hist.csv has 30 bins.
  CHECK(csv_lines(out + "/quality_hist.csv").size() == 31);
}

TEST_CASE("identical seeds give byte-identical metrics") {
  CliDir tmp;
  write_file(tmp.file("cfg.ini"), kTinyConfig);
  REQUIRE(run_cli({"train", "--config", tmp.file("cfg.ini"), "--out",
                   tmp.file("a")}) == 0);
  REQUIRE(run_cli({"train", "--config", tmp.file("cfg.ini"), "--out",
                   tmp.file("b")}) == 0);
  CHECK(slurp(tmp.file("a") + "/metrics.jsonl") ==
        slurp(tmp.file("b") + "/metrics.jsonl"));
  // Golden stream recorded from the first verified build.
  const std::string metrics = slurp(tmp.file("a") + "/metrics.jsonl");
  CHECK(metrics.size() == 29142);
  CHECK(fnv1a64(metrics) == 0x7b99d1c284e24502ull);
  // A different seed changes the run id.
  REQUIRE(run_cli({"train", "--config", tmp.file("cfg.ini"), "--seed", "77",
                   "--out", tmp.file("c")}) == 0);
  const auto id_of = [&](const std::string& dir) {
    return nlohmann::json::parse(slurp(dir + "/manifest.json"))["run_id"]
        .get<std::string>();
  };
  CHECK(id_of(tmp.file("a")) == id_of(tmp.file("b")));
  CHECK(id_of(tmp.file("a")) != id_of(tmp.file("c")));
}

TEST_CASE("score output covers the pool and zero weights zero the scores") {
  CliDir tmp;
  write_file(tmp.file("cfg.ini"), std::string(kTinyConfig) +
                                      "[quality]\n"
                                      "alpha1 = 0\n"
                                      "alpha2 = 0\n"
                                      "alpha3 = 0\n");
  const std::string out = tmp.file("scores");
  REQUIRE(run_cli({"score", "--config", tmp.file("cfg.ini"), "--out", out}) ==
          0);
  const auto lines = csv_lines(out + "/scores.csv");
  REQUIRE(lines.size() == 1 + 90);  // header + train split of 120 at 0.25 eval
  for (std::size_t i = 1; i < lines.size(); ++i) {
    double q, p;
    long id;
    double gn, lrn, cc;
    REQUIRE(std::sscanf(lines[i].c_str(), "%ld,%lf,%lf,%lf,%lf,%lf", &id, &gn,
                        &lrn, &cc, &q, &p) == 6);
    CHECK(q == 0.0);
  }
}

TEST_CASE("score matches the warm-up snapshot of a training run") {
  CliDir tmp;
  write_file(tmp.file("cfg.ini"), kTinyConfig);
  REQUIRE(run_cli({"score", "--config", tmp.file("cfg.ini"), "--out",
                   tmp.file("s")}) == 0);
  REQUIRE(run_cli({"train", "--config", tmp.file("cfg.ini"), "--out",
                   tmp.file("t")}) == 0);

  // Warm-up event from the training metrics.
  std::ifstream metrics(tmp.file("t") + "/metrics.jsonl");
  std::string line;
  nlohmann::json warmup;
  while (std::getline(metrics, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("event") && j["event"] == "warmup") {
      warmup = j;
      break;
    }
  }
  REQUIRE(!warmup.is_null());

  const auto lines = csv_lines(tmp.file("s") + "/scores.csv");
  REQUIRE(lines.size() == warmup["scores"].size() + 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const nlohmann::json& rec = warmup["scores"][i - 1];
    double q, p, gn, lrn, cc;
    long id;
    REQUIRE(std::sscanf(lines[i].c_str(), "%ld,%lf,%lf,%lf,%lf,%lf", &id, &gn,
                        &lrn, &cc, &q, &p) == 6);
    CHECK(id == rec["id"].get<long>());
    CHECK(q == rec["q"].get<double>());
    CHECK(p == rec["p"].get<double>());
  }
}

TEST_CASE("ablation csv has one row per seed plus the mean row") {
  CliDir tmp;
  write_file(tmp.file("cfg.ini"), kTinyConfig);
  const std::string out = tmp.file("abl");
  REQUIRE(run_cli({"ablate", "--config", tmp.file("cfg.ini"), "--seeds", "2",
                   "--out", out}) == 0);
  const auto lines = csv_lines(out + "/ablation.csv");
  REQUIRE(lines.size() == 1 + 2 + 1);
  CHECK(lines.back().rfind("mean,", 0) == 0);
}

TEST_CASE("ablation with both mechanisms off reports exactly zero delta") {
  CliDir tmp;
  write_file(tmp.file("cfg.ini"), std::string(kTinyConfig) +
                                      "[train]\n"
                                      "quality_sampling = false\n"
                                      "sensitivity_aware = false\n");
  const std::string out = tmp.file("abl0");
  REQUIRE(run_cli({"ablate", "--config", tmp.file("cfg.ini"), "--seeds", "1",
                   "--out", out}) == 0);
  const auto lines = csv_lines(out + "/ablation.csv");
  REQUIRE(lines.size() == 3);
  double full, off, delta;
  std::uint64_t seed;
  REQUIRE(std::sscanf(lines[1].c_str(), "%lu,%lf,%lf,%lf", &seed, &full, &off,
                      &delta) == 4);
  CHECK(full == off);
  CHECK(delta == 0.0);
}

TEST_CASE("compare reports equal max parameter budgets on equal-cost layers") {
  CliDir tmp;
  // Two adapted layers of identical cost and a pinned budget scaling.
  write_file(tmp.file("cfg.ini"),
             "[data]\n"
             "n = 160\ndim = 8\nclasses = 4\nlabel_noise = 0.1\n"
             "[model]\n"
             "hidden = 12,12,12\nadapted = 1,2\n"
             "[train]\n"
             "iterations = 12\nbatch_size = 16\nlr = 0.2\nschedule = 6\n"
             "[allocator]\n"
             "r_init = 2\nr_min = 1\nr_max = 6\nphi_lo = 1\nphi_hi = 1\n");
  const std::string out = tmp.file("cmp");
  REQUIRE(run_cli({"compare", "--config", tmp.file("cfg.ini"), "--out", out}) ==
          0);
  auto lines = csv_lines(out + "/compare.csv");
  REQUIRE(lines.size() == 3);
  char arm_a[32], arm_b[32];
  double acc_a, acc_b, sps;
  long consumed_a, consumed_b, params_a, params_b;
  REQUIRE(std::sscanf(lines[1].c_str(), "%31[^,],%lf,%ld,%lf,%ld", arm_a,
                      &acc_a, &consumed_a, &sps, &params_a) == 5);
  REQUIRE(std::sscanf(lines[2].c_str(), "%31[^,],%lf,%ld,%lf,%ld", arm_b,
                      &acc_b, &consumed_b, &sps, &params_b) == 5);
  CHECK(std::string(arm_a) == "tsqlora");
  CHECK(std::string(arm_b) == "fixed_rank");
  CHECK(params_a == params_b);
  CHECK(consumed_a == consumed_b);

  // Deterministic per seed: accuracies repeat exactly on a re-run.
  const std::string out2 = tmp.file("cmp2");
  REQUIRE(run_cli({"compare", "--config", tmp.file("cfg.ini"), "--out",
                   out2}) == 0);
  auto lines2 = csv_lines(out2 + "/compare.csv");
  double acc_a2, acc_b2;
  REQUIRE(std::sscanf(lines2[1].c_str(), "%31[^,],%lf", arm_a, &acc_a2) == 2);
  REQUIRE(std::sscanf(lines2[2].c_str(), "%31[^,],%lf", arm_b, &acc_b2) == 2);
  CHECK(acc_a == acc_a2);
  CHECK(acc_b == acc_b2);
}

TEST_CASE("report re-renders the csv outputs from the metrics stream") {
  CliDir tmp;
  write_file(tmp.file("cfg.ini"), kTinyConfig);
  const std::string out = tmp.file("run");
  REQUIRE(run_cli({"train", "--config", tmp.file("cfg.ini"), "--out", out}) ==
          0);
  const std::string ranks_before = slurp(out + "/ranks.csv");
  const std::string hist_before = slurp(out + "/quality_hist.csv");
  fs::remove(out + "/ranks.csv");
  fs::remove(out + "/quality_hist.csv");
  REQUIRE(run_cli({"report", "--run", out}) == 0);
  CHECK(slurp(out + "/ranks.csv") == ranks_before);
  CHECK(slurp(out + "/quality_hist.csv") == hist_before);
  // The re-rendered summary keeps all fields except the wall clock.
  const auto summary = csv_lines(out + "/summary.csv");
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].find("wall_clock_s") != std::string::npos);
}

TEST_CASE("data errors exit 3 and numeric blowups exit 4") {
  CliDir tmp;
  write_file(tmp.file("missing_data.ini"),
             "[data]\nkind = jsonl\npath = /nonexistent/file.jsonl\n");
  CHECK(run_cli({"train", "--config", tmp.file("missing_data.ini"), "--out",
                 tmp.file("o1")}) == 3);

  write_file(tmp.file("blowup.ini"), std::string(kTinyConfig) +
                                         "[train]\n"
                                         "lr = 1e200\n");
  CHECK(run_cli({"train", "--config", tmp.file("blowup.ini"), "--out",
                 tmp.file("o2")}) == 4);
}

TEST_CASE("unknown config keys are rejected with exit 2") {
  CliDir tmp;
  write_file(tmp.file("bad.ini"), "[train]\nlearning_rate = 0.1\n");
  CHECK(run_cli({"train", "--config", tmp.file("bad.ini"), "--out",
                 tmp.file("o")}) == 2);
}

TEST_CASE("the canonical config form re-parses to itself") {
  ResolvedConfig cfg = parse_config_text(kTinyConfig, "inline");
  const std::string canonical = cfg.serialize();
  const ResolvedConfig back = parse_config_text(canonical, "canonical");
  CHECK(back.serialize() == canonical);
  CHECK(back.run_id() == cfg.run_id());
}
