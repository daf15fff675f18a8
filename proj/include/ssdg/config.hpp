#pragma once

#include <string>
#include <vector>

#include "ssdg/apl.hpp"
#include "ssdg/benchmark.hpp"
#include "ssdg/dcg.hpp"
#include "ssdg/eid.hpp"

namespace ssdg {

enum class RunMode { full, dcg_only, erm_baseline };

RunMode run_mode_from_string(const std::string& s);
std::string run_mode_to_string(RunMode m);

// Everything one experiment needs; every field has a default and a config
// file key (see config_to_json for the schema).
struct ExperimentConfig {
  BenchmarkConfig benchmark;

  // Task selection; both empty means "all tasks" (suite).
  std::string task_labeled;
  std::string task_target;

  int cycles = 3;            // T
  double clean_rate = 0.4;   // R
  MixMode mixing = MixMode::mixup;
  RunMode mode = RunMode::full;

  // dcg_only: directory of per-domain pseudo-label files (<domain>.pl).
  std::string initial_labels_dir;
  // dcg_only variant that re-enters the full cycle at T = 2.
  bool web_label_init = false;

  AplConfig apl;
  DcgConfig dcg;
  ArchConfig arch;

  uint64_t seed = 7;
  std::vector<uint64_t> suite_seeds;  // empty -> {seed}

  std::string output_dir;
  int threads = 1;          // OpenMP threads inside kernels
  int suite_workers = 1;    // parallel tasks in the suite runner
  bool record_wall_time = true;
};

ExperimentConfig default_config();
ExperimentConfig load_config_file(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);
ExperimentConfig config_from_json_text(const std::string& text);

// Throws ConfigError on any invariant violation.
void validate_config(const ExperimentConfig& cfg);

}  // namespace ssdg
