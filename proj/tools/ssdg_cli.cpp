#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ssdg/config.hpp"
#include "ssdg/experiment.hpp"
#include "ssdg/report.hpp"
#include "ssdg/verify.hpp"

namespace {

ssdg::ExperimentConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) return ssdg::default_config();
  return ssdg::load_config_file(config_path);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  ssdg::ExperimentConfig cfg = load_or_default(config_path);
  std::filesystem::create_directories(out_dir);
  for (const auto& spec : ssdg::benchmark_domains(cfg.benchmark)) {
    const ssdg::DomainDataset full = ssdg::generate_benchmark_domain(cfg.benchmark, spec);
    auto [train, val] = ssdg::split_dataset(
        full, cfg.benchmark.val_fraction,
        ssdg::derive_seed(cfg.benchmark.seed, "split-" + spec.domain_id));
    ssdg::export_dataset(full, out_dir + "/" + spec.domain_id + ".ds");
    ssdg::export_dataset(train, out_dir + "/" + spec.domain_id + ".train.ds");
    ssdg::export_dataset(val, out_dir + "/" + spec.domain_id + ".val.ds");
    std::printf("%-10s %zu samples (%zu train / %zu val)\n", spec.domain_id.c_str(), full.size(),
                train.size(), val.size());
  }
  const auto tasks = ssdg::make_benchmark(cfg.benchmark);
  std::printf("%zu leave-one-domain-out tasks\n", tasks.size());
  return 0;
}

int cmd_run(ssdg::ExperimentConfig cfg) {
  const ssdg::ExperimentReport report = ssdg::run_experiment(cfg);
  std::printf("task %s->%s mode %s seed %llu\n", report.labeled_domain.c_str(),
              report.target_domain.c_str(), ssdg::run_mode_to_string(report.mode).c_str(),
              static_cast<unsigned long long>(report.seed));
  for (const auto& c : report.cycles)
    std::printf("  cycle %d: pseudo_acc %.4f clean_precision %.4f clean_size %d\n", c.cycle,
                c.pseudo_acc_mean, c.clean_precision, c.clean_size);
  std::printf("final target accuracy %.4f\n", report.final_target_accuracy);
  return 0;
}

int cmd_suite(const ssdg::ExperimentConfig& cfg, const std::string& emit_grid_dir) {
  if (!emit_grid_dir.empty()) {
    ssdg::emit_ablation_grid(cfg, emit_grid_dir);
    std::printf("wrote ablation grid configs to %s\n", emit_grid_dir.c_str());
    return 0;
  }
  const ssdg::SuiteReport report = ssdg::run_suite(cfg);
  std::fputs(ssdg::report_render(report, "markdown-table").c_str(), stdout);
  if (!cfg.output_dir.empty()) {
    std::ofstream os(cfg.output_dir + "/suite_report.csv");
    os << ssdg::report_render(report, "csv");
    std::printf("reports written to %s\n", cfg.output_dir.c_str());
  }
  return 0;
}

int cmd_gradcheck(int instances, uint64_t seed, double tolerance) {
  const auto results = ssdg::gradient_suite(instances, seed);
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_rel_err <= tolerance;
    ok = ok && pass;
    std::printf("%-28s %3d instances  max rel err %.3e  %s\n", r.name.c_str(), r.instances,
                r.max_rel_err, pass ? "ok" : "FAIL");
  }
  if (!ok) {
    std::fprintf(stderr, "gradient suite failed at tolerance %.1e\n", tolerance);
    return 3;
  }
  return 0;
}

int cmd_report(const std::string& input, const std::string& format) {
  const ssdg::SuiteReport report = ssdg::load_suite_report(input);
  std::fputs(ssdg::report_render(report, format).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised domain generalization cycle framework"};
  app.require_subcommand(1);

  std::string config_path, out_dir, labeled, target, mode, mixing, emit_grid_dir;
  std::string report_input, report_format = "markdown-table";
  int cycles = -1, threads = -1, instances = 20;
  double clean_rate = -1, tolerance = 1e-4;
  uint64_t seed = 0;
  bool seed_set = false;

  auto* gen = app.add_subcommand("gen-data", "generate and export the benchmark datasets");
  gen->add_option("--config", config_path, "config file (json)");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (json)");
    cmd->add_option("--labeled", labeled, "labeled source domain");
    cmd->add_option("--target", target, "held-out target domain");
    cmd->add_option("--mode", mode, "full|dcg_only|erm_baseline");
    cmd->add_option("--cycles", cycles, "cycle count T");
    cmd->add_option("--clean-rate", clean_rate, "clean rate R");
    cmd->add_option("--mixing", mixing, "cutmix|mixup|xu");
    cmd->add_option("--threads", threads, "kernel threads");
    cmd->add_option("--out", out_dir, "output directory for metrics/reports");
    cmd->add_option("--seed", seed, "experiment seed")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  auto* run = app.add_subcommand("run", "run one task");
  add_common(run);

  auto* suite = app.add_subcommand("suite", "run all leave-one-domain-out tasks");
  add_common(suite);
  suite->add_option("--emit-grid", emit_grid_dir,
                    "write the ablation grid configs to this directory and exit");

  auto* gc = app.add_subcommand("gradcheck", "verify recorded gradients in 64-bit mode");
  gc->add_option("--instances", instances, "random instances per operation");
  gc->add_option("--seed", seed, "suite seed")->each([&](const std::string&) { seed_set = true; });
  gc->add_option("--tolerance", tolerance, "max relative error");

  auto* rep = app.add_subcommand("report", "render a stored suite report");
  rep->add_option("--input", report_input, "suite_report.json path")->required();
  rep->add_option("--format", report_format, "csv|markdown-table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (rep->parsed()) return cmd_report(report_input, report_format);
    if (gc->parsed()) return cmd_gradcheck(instances, seed_set ? seed : 1, tolerance);

    ssdg::ExperimentConfig cfg = load_or_default(config_path);
    if (!labeled.empty()) cfg.task_labeled = labeled;
    if (!target.empty()) cfg.task_target = target;
    if (!mode.empty()) cfg.mode = ssdg::run_mode_from_string(mode);
    if (!mixing.empty()) cfg.mixing = ssdg::mix_mode_from_string(mixing);
    if (cycles > 0) cfg.cycles = cycles;
    if (clean_rate > 0) cfg.clean_rate = clean_rate;
    if (threads > 0) cfg.threads = threads;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed_set) cfg.seed = seed;

    if (run->parsed()) return cmd_run(cfg);
    if (suite->parsed()) return cmd_suite(cfg, emit_grid_dir);
  } catch (const ssdg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
