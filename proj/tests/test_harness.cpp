#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssdg/config.hpp"
#include "ssdg/experiment.hpp"
#include "ssdg/report.hpp"

using namespace ssdg;

namespace {

std::string tmp_dir(const char* name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

// Small fast configuration for end-to-end plumbing tests.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.benchmark.n_per_class = 8;
  cfg.benchmark.seed = 3;
  cfg.cycles = 2;
  cfg.apl.epochs = 1;
  cfg.apl.batch_size = 16;
  cfg.apl.n_inner = 1;
  cfg.dcg.epochs = 2;
  cfg.dcg.batch_each = 8;
  cfg.arch.widths = {4, 6, 6};
  cfg.seed = 11;
  cfg.record_wall_time = false;
  return cfg;
}

}  // namespace

TEST_CASE("lr_for_cycle follows lr/T^2") {
  CHECK(lr_for_cycle(1e-3, 1) == doctest::Approx(1e-3));
  CHECK(lr_for_cycle(1e-3, 2) == doctest::Approx(1e-3 / 4));
  CHECK(lr_for_cycle(1e-3, 3) == doctest::Approx(1e-3 / 9));
  CHECK_THROWS_AS(lr_for_cycle(1e-3, 0), std::invalid_argument);
  // strictly decreasing across cycles
  double prev = 1e9;
  for (int t = 1; t <= 10; ++t) {
    const double lr = lr_for_cycle(1e-3, t);
    CHECK(lr < prev);
    prev = lr;
  }
}

TEST_CASE("defaults match the published training setup") {
  const ExperimentConfig cfg = default_config();
  CHECK(cfg.apl.epochs == 30);
  CHECK(cfg.dcg.epochs == 15);
  CHECK(cfg.apl.batch_size == 128);
  CHECK(cfg.dcg.batch_each * 2 == 128);
  CHECK(cfg.apl.lr == doctest::Approx(1e-3));
  CHECK(cfg.dcg.lr == doctest::Approx(1e-3));
  CHECK(cfg.apl.weight_decay == doctest::Approx(5e-4));
  CHECK(cfg.apl.momentum == doctest::Approx(0.9));
  CHECK(cfg.cycles == 3);
  CHECK(cfg.clean_rate == doctest::Approx(0.4));
  CHECK(cfg.mixing == MixMode::mixup);
  CHECK(cfg.dcg.keep_rate_start == doctest::Approx(1.0));
  CHECK(cfg.dcg.keep_rate_end == doctest::Approx(0.5));
  CHECK(cfg.benchmark.val_fraction == doctest::Approx(0.1));
  CHECK(cfg.benchmark.classes == 5);
  CHECK(cfg.benchmark.image_size == 16);
}

TEST_CASE("config json round trip") {
  ExperimentConfig cfg = tiny_config();
  cfg.task_labeled = "flat";
  cfg.task_target = "noisy";
  cfg.mixing = MixMode::cutmix;
  cfg.mode = RunMode::erm_baseline;
  cfg.suite_seeds = {1, 2, 3};
  const ExperimentConfig back = config_from_json_text(config_to_json_text(cfg));
  CHECK(back.benchmark.n_per_class == cfg.benchmark.n_per_class);
  CHECK(back.task_labeled == cfg.task_labeled);
  CHECK(back.task_target == cfg.task_target);
  CHECK(back.cycles == cfg.cycles);
  CHECK(back.mixing == cfg.mixing);
  CHECK(back.mode == cfg.mode);
  CHECK(back.apl.epochs == cfg.apl.epochs);
  CHECK(back.dcg.batch_each == cfg.dcg.batch_each);
  CHECK(back.arch.widths == cfg.arch.widths);
  CHECK(back.suite_seeds == cfg.suite_seeds);
  CHECK(back.record_wall_time == cfg.record_wall_time);
}

TEST_CASE("config validation rejects bad values") {
  auto expect_reject = [](auto mutate) {
    ExperimentConfig cfg = tiny_config();
    mutate(cfg);
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  };
  expect_reject([](ExperimentConfig& c) { c.cycles = 0; });
  expect_reject([](ExperimentConfig& c) { c.clean_rate = 0.0; });
  expect_reject([](ExperimentConfig& c) { c.clean_rate = 1.5; });
  expect_reject([](ExperimentConfig& c) { c.apl.epochs = 0; });
  expect_reject([](ExperimentConfig& c) { c.apl.n_inner = 0; });
  expect_reject([](ExperimentConfig& c) { c.dcg.keep_rate_end = 0.2; });
  expect_reject([](ExperimentConfig& c) { c.arch.widths = {}; });
  expect_reject([](ExperimentConfig& c) { c.mode = RunMode::dcg_only; });  // no labels dir
  expect_reject([](ExperimentConfig& c) {
    c.task_labeled = "flat";
    c.task_target = "flat";
  });
  expect_reject([](ExperimentConfig& c) {
    c.task_labeled = "flat";
    c.task_target = "mars";
  });
  expect_reject([](ExperimentConfig& c) { c.task_labeled = "flat"; });  // missing target
  expect_reject([](ExperimentConfig& c) { c.benchmark.val_fraction = 1.0; });
  expect_reject([](ExperimentConfig& c) { c.web_label_init = true; });  // only with dcg_only
  CHECK_THROWS_AS(config_from_json_text("{ not json"), ConfigError);
  CHECK_THROWS_AS(run_mode_from_string("both"), ConfigError);
}

TEST_CASE("metrics csv schema") {
  CHECK(metrics_csv_header() ==
        "cycle,module,epoch,ce_x1,ce_x2,ce_u1,ce_u2,div1,div2,keep_rate,pseudo_acc,"
        "clean_precision,clean_size,target_acc,wall_ms");
  MetricsRow row;
  row.cycle = 2;
  row.module = "dcg";
  row.epoch = 3;
  row.keep_rate = 0.75;
  row.target_acc = 0.5;
  const std::string line = metrics_row_csv(row);
  CHECK(line.substr(0, 8) == "2,dcg,3,");
  // 15 comma-separated fields
  CHECK(std::count(line.begin(), line.end(), ',') == 14);
}

TEST_CASE("report rendering") {
  SuiteReport report;
  report.mode = "full";
  report.seeds = {1, 2};
  for (int i = 0; i < 12; ++i) report.task_names.push_back("t" + std::to_string(i));
  report.per_seed.assign(12, {0.5, 0.7});
  report.task_accuracy.assign(12, 0.6);
  report.average = 0.6;

  SUBCASE("markdown table has method + 12 task columns + Avg") {
    const std::string md = report_render(report, "markdown-table");
    std::istringstream is(md);
    std::string header;
    std::getline(is, header);
    CHECK(std::count(header.begin(), header.end(), '|') == 15);  // 14 columns
  }
  SUBCASE("csv round trips") {
    const std::string csv = report_render(report, "csv");
    const SuiteReport back = parse_suite_csv(csv);
    CHECK(report_render(back, "csv") == csv);
    CHECK(back.task_names == report.task_names);
    CHECK(back.seeds == report.seeds);
    CHECK(back.average == doctest::Approx(report.average));
  }
  SUBCASE("empty report renders header only") {
    const SuiteReport empty;
    const std::string csv = report_render(empty, "csv");
    CHECK(csv == "method,seed,avg\n");
    const SuiteReport back = parse_suite_csv(csv);
    CHECK(back.task_names.empty());
  }
  SUBCASE("unknown format is an error") {
    CHECK_THROWS_AS(report_render(report, "xml"), ConfigError);
  }
}

TEST_CASE("ablation grid reproduces the cycle/rate/mixing axes") {
  const auto grid = ablation_grid(tiny_config());
  REQUIRE(grid.size() == 9);
  std::vector<int> cycles;
  std::vector<double> rates;
  std::vector<MixMode> modes;
  for (const auto& [name, cfg] : grid) {
    validate_config(cfg);
    cycles.push_back(cfg.cycles);
    rates.push_back(cfg.clean_rate);
    modes.push_back(cfg.mixing);
  }
  CHECK(cycles[0] == 1);
  CHECK(cycles[1] == 3);
  CHECK(cycles[2] == 5);
  CHECK(rates[3] == doctest::Approx(0.2));
  CHECK(rates[4] == doctest::Approx(0.4));
  CHECK(rates[5] == doctest::Approx(0.6));
  CHECK(modes[6] == MixMode::cutmix);
  CHECK(modes[7] == MixMode::mixup);
  CHECK(modes[8] == MixMode::xu);

  const std::string dir = tmp_dir("ssdg_grid");
  emit_ablation_grid(tiny_config(), dir);
  size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const ExperimentConfig cfg = load_config_file(e.path().string());
    validate_config(cfg);
    ++files;
  }
  CHECK(files == 9);
  std::filesystem::remove_all(dir);
}

TEST_CASE("erm baseline experiment produces a report and csv") {
  ExperimentConfig cfg = tiny_config();
  cfg.task_labeled = "flat";
  cfg.task_target = "inverted";
  cfg.mode = RunMode::erm_baseline;
  cfg.output_dir = tmp_dir("ssdg_erm_out");
  const ExperimentReport report = run_experiment(cfg);
  CHECK(report.rows.size() == static_cast<size_t>(cfg.dcg.epochs));
  CHECK(report.final_target_accuracy >= 0.0);
  CHECK(report.final_target_accuracy <= 1.0);
  const std::string csv =
      slurp(cfg.output_dir + "/metrics_erm_baseline_flat-to-inverted_seed11.csv");
  CHECK(csv.find(metrics_csv_header()) == 0);
  std::filesystem::remove_all(cfg.output_dir);
}

TEST_CASE("full experiment is deterministic and cycle one consumes the labeled domain") {
  ExperimentConfig cfg = tiny_config();
  cfg.task_labeled = "flat";
  cfg.task_target = "textured";
  cfg.output_dir = tmp_dir("ssdg_full_out");
  const ExperimentReport a = run_experiment(cfg);
  const std::string csv_a =
      slurp(cfg.output_dir + "/metrics_full_flat-to-textured_seed11.csv");
  const ExperimentReport b = run_experiment(cfg);
  const std::string csv_b =
      slurp(cfg.output_dir + "/metrics_full_flat-to-textured_seed11.csv");
  CHECK(csv_a == csv_b);
  CHECK(a.final_target_accuracy == b.final_target_accuracy);
  REQUIRE(a.cycles.size() == 2);
  CHECK(a.cycles[0].pseudo_acc_per_domain.size() == 2);
  std::filesystem::remove_all(cfg.output_dir);
}

TEST_CASE("dcg_only mode consumes stored pseudo labels and web_label_init re-enters the cycle") {
  ExperimentConfig cfg = tiny_config();
  cfg.task_labeled = "flat";
  cfg.task_target = "noisy";
  const std::string labels_dir = tmp_dir("ssdg_init_labels");

  // Build noisy initial labels aligned with the unlabeled train splits.
  const auto specs = benchmark_domains(cfg.benchmark);
  for (const auto& id : {std::string("inverted"), std::string("textured")}) {
    const DomainSpec* spec = nullptr;
    for (const auto& s : specs)
      if (s.domain_id == id) spec = &s;
    REQUIRE(spec != nullptr);
    const DomainDataset full = generate_benchmark_domain(cfg.benchmark, *spec);
    auto [train, val] = split_dataset(full, cfg.benchmark.val_fraction,
                                      derive_seed(cfg.benchmark.seed, "split-" + id));
    PseudoLabelSet q;
    q.domain_id = id;
    q.cycle = 0;
    Rng rng(derive_seed(99, id));
    for (size_t i = 0; i < train.size(); ++i) {
      // 75% correct, 25% random: low-noise labels
      const int truth = train.eval_label(i);
      const int label = rng.uniform() < 0.75
                            ? truth
                            : static_cast<int>(rng.uniform_index(train.num_classes));
      q.labels.push_back(label);
      q.confidence.push_back(1.0f);
    }
    save_pseudo_labels(labels_dir + "/" + id + ".pl", q);
  }

  cfg.mode = RunMode::dcg_only;
  cfg.initial_labels_dir = labels_dir;
  const ExperimentReport report = run_experiment(cfg);
  CHECK(report.cycles.size() == 1);  // one DCG pass, no APL

  bool saw_apl_row = false;
  for (const auto& row : report.rows) saw_apl_row |= row.module.rfind("apl", 0) == 0;
  CHECK_FALSE(saw_apl_row);

  cfg.web_label_init = true;
  const ExperimentReport re = run_experiment(cfg);
  CHECK(re.cycles.size() == static_cast<size_t>(cfg.cycles));
  bool apl_cycle2 = false;
  for (const auto& row : re.rows)
    apl_cycle2 |= row.cycle == 2 && row.module.rfind("apl", 0) == 0;
  CHECK(apl_cycle2);

  std::filesystem::remove_all(labels_dir);
}

TEST_CASE("suite runs all 12 tasks deterministically on a worker pool") {
  ExperimentConfig cfg = tiny_config();
  cfg.mode = RunMode::erm_baseline;  // cheapest mode exercises the pool
  cfg.dcg.epochs = 1;
  cfg.suite_workers = 2;
  const SuiteReport a = run_suite(cfg);
  const SuiteReport b = run_suite(cfg);
  REQUIRE(a.task_names.size() == 12);
  CHECK(a.task_names == b.task_names);
  CHECK(report_render(a, "csv") == report_render(b, "csv"));
  // avg equals the arithmetic mean of the 12 task accuracies
  double mean = 0;
  for (const double v : a.task_accuracy) mean += v;
  mean /= 12.0;
  CHECK(a.average == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("run_experiment requires a task") {
  ExperimentConfig cfg = tiny_config();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("cli exit codes") {
  // The CLI binary sits next to the test binary under the build tree.
  const std::filesystem::path cli = std::filesystem::path("ssdg_cli");
  if (!std::filesystem::exists(cli)) return;  // running outside the build dir
  const int bad_config = std::system("./ssdg_cli run --config /nonexistent.json >/dev/null 2>&1");
  CHECK(WEXITSTATUS(bad_config) == 2);
  const int bad_task = std::system(
      "./ssdg_cli run --labeled flat --target flat >/dev/null 2>&1");
  CHECK(WEXITSTATUS(bad_task) == 2);
  const int bad_report = std::system("./ssdg_cli report --input /nonexistent.json >/dev/null 2>&1");
  CHECK(WEXITSTATUS(bad_report) == 3);
}
