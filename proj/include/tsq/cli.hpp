#pragma once

#include <string>

#include "tsq/config.hpp"
#include "tsq/trainer.hpp"

namespace tsq {

// Resolved run identity, written to manifest.json before training starts.
struct RunManifest {
  std::string config_path;
  std::string resolved_config;  // canonical serialized form
  std::string out_dir;
  std::string run_id;  // hash of the resolved config (seed included)
};

// Entry point shared by the tsqlora binary and the test suite.
// Subcommands: train, score, ablate, compare, report.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
int cli_main(int argc, const char* const* argv);

}  // namespace tsq
