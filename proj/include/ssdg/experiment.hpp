#pragma once

#include <string>
#include <vector>

#include "ssdg/config.hpp"

namespace ssdg {

// One metrics CSV row. Fields that do not apply to a module stay zero.
struct MetricsRow {
  int cycle = 0;
  std::string module;  // apl-<domain> | dcg | eid | erm
  int epoch = 0;
  float ce_x1 = 0, ce_x2 = 0, ce_u1 = 0, ce_u2 = 0, div1 = 0, div2 = 0;
  double keep_rate = 0;
  double pseudo_acc = 0;
  double clean_precision = 0;
  int clean_size = 0;
  double target_acc = 0;
  double wall_ms = 0;
};

std::string metrics_csv_header();
std::string metrics_row_csv(const MetricsRow& row);

struct CycleMetrics {
  int cycle = 0;
  std::vector<double> pseudo_acc_per_domain;
  double pseudo_acc_mean = 0;
  double clean_precision = 0;
  int clean_size = 0;
};

struct ExperimentReport {
  std::string labeled_domain;
  std::string target_domain;
  RunMode mode = RunMode::full;
  uint64_t seed = 0;
  std::vector<CycleMetrics> cycles;
  // Mean target accuracy of the last five epochs of the final training run.
  double final_target_accuracy = 0;
  std::vector<MetricsRow> rows;
};

// lr schedule across cycles: lr_initial / T^2, T = 1-based cycle index.
double lr_for_cycle(double lr_initial, int cycle);

// Runs one task in the configured mode. Writes <output_dir>/metrics_<task>_
// seed<seed>.csv when output_dir is set.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct SuiteReport {
  std::string mode;
  std::vector<std::string> task_names;          // "<labeled>-><target>"
  std::vector<uint64_t> seeds;
  std::vector<std::vector<double>> per_seed;    // [task][seed] accuracy
  std::vector<double> task_accuracy;            // mean over seeds
  double average = 0;                           // mean over tasks
};

// All leave-one-domain-out tasks, optionally over several seeds, optionally
// on a bounded worker pool. Aggregation order is fixed regardless of
// scheduling.
SuiteReport run_suite(const ExperimentConfig& cfg);

void save_suite_report(const std::string& path, const SuiteReport& report);
SuiteReport load_suite_report(const std::string& path);

// The ablation grid: cycle counts {1,3,5}, clean rates {0.2,0.4,0.6} and the
// three mixing modes, each varied against the base config.
std::vector<std::pair<std::string, ExperimentConfig>> ablation_grid(const ExperimentConfig& base);
void emit_ablation_grid(const ExperimentConfig& base, const std::string& dir);

}  // namespace ssdg
