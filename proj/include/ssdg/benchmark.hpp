#pragma once

#include <string>
#include <vector>

#include "ssdg/dataset.hpp"

namespace ssdg {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// One leave-one-domain-out assignment: train on labeled + unlabeled sources,
// evaluate on the held-out target. All four roles are distinct domains.
struct SsdgTask {
  std::string labeled_domain;
  std::vector<std::string> unlabeled_domains;
  std::string target_domain;
  uint64_t split_seed = 0;
  double val_fraction = 0.1;
};

struct BenchmarkConfig {
  int classes = kGlyphClasses;
  int image_size = 16;
  int n_per_class = 200;
  float gap_scale = 1.0f;
  double val_fraction = 0.1;  // 9:1 train/val
  uint64_t seed = 1;
  std::vector<DomainSpec> domains;  // empty -> default presets
};

// Effective domain list (presets when unset), gap_scale applied.
std::vector<DomainSpec> benchmark_domains(const BenchmarkConfig& cfg);

// All (labeled, target) ordered pairs over the configured domains, the rest
// unlabeled; 12 tasks for 4 domains. Order is lexicographic by labeled
// domain id then target domain id.
std::vector<SsdgTask> make_benchmark(const BenchmarkConfig& cfg);

DomainDataset generate_benchmark_domain(const BenchmarkConfig& cfg, const DomainSpec& spec);

// One-layer softmax classifier on raw pixels; returns accuracy on eval_set.
// Used by the benchmark sanity properties (learnability and domain gap).
double linear_probe_accuracy(const DomainDataset& train_set, const DomainDataset& eval_set,
                             int epochs, double learning_rate, uint64_t seed);

}  // namespace ssdg
