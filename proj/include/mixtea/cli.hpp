#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixtea/encoder.hpp"
#include "mixtea/train.hpp"

namespace mixtea {

struct RunConfig {
  std::filesystem::path dataset_dir;
  int fold = 1;
  std::filesystem::path output_dir = "run";
  EncoderConfig encoder;
  TrainConfig train;
  bool dump_pseudo = false;
};

// Full effective configuration as `key = value` lines, readable back through
// `train --config`.
std::string format_manifest(const RunConfig& config);

// metrics.csv contents for a training history.
std::string format_metrics_csv(const std::vector<EpochRecord>& history);

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

// Entry point shared by the executable and the tests. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mixtea
