#include "ssdg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ssdg/batching.hpp"
#include "ssdg/kernels.hpp"

namespace ssdg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string metrics_csv_header() {
  return "cycle,module,epoch,ce_x1,ce_x2,ce_u1,ce_u2,div1,div2,keep_rate,pseudo_acc,"
         "clean_precision,clean_size,target_acc,wall_ms";
}

std::string metrics_row_csv(const MetricsRow& r) {
  std::string out;
  out += std::to_string(r.cycle) + "," + r.module + "," + std::to_string(r.epoch);
  out += "," + fmt(r.ce_x1) + "," + fmt(r.ce_x2) + "," + fmt(r.ce_u1) + "," + fmt(r.ce_u2);
  out += "," + fmt(r.div1) + "," + fmt(r.div2) + "," + fmt(r.keep_rate);
  out += "," + fmt(r.pseudo_acc) + "," + fmt(r.clean_precision) + "," +
         std::to_string(r.clean_size);
  out += "," + fmt(r.target_acc) + "," + fmt(r.wall_ms);
  return out;
}

double lr_for_cycle(double lr_initial, int cycle) {
  if (cycle < 1) throw std::invalid_argument("lr_for_cycle: cycle index is 1-based");
  return lr_initial / (static_cast<double>(cycle) * static_cast<double>(cycle));
}

namespace {

struct TaskData {
  DomainDataset labeled_train, labeled_val;
  std::vector<DomainDataset> unlabeled_train;  // ground truth retained, metrics only
  std::vector<std::string> unlabeled_ids;
  DomainDataset target;  // full domain, evaluation only
};

const DomainSpec& spec_by_id(const std::vector<DomainSpec>& specs, const std::string& id) {
  for (const auto& s : specs)
    if (s.domain_id == id) return s;
  throw ConfigError("unknown domain '" + id + "'");
}

TaskData build_task_data(const ExperimentConfig& cfg, bool need_unlabeled) {
  const auto specs = benchmark_domains(cfg.benchmark);
  std::vector<std::string> ids;
  for (const auto& s : specs) ids.push_back(s.domain_id);
  std::sort(ids.begin(), ids.end());

  TaskData data;
  auto split_of = [&](const std::string& id) {
    const DomainDataset full = generate_benchmark_domain(cfg.benchmark, spec_by_id(specs, id));
    return split_dataset(full, cfg.benchmark.val_fraction,
                         derive_seed(cfg.benchmark.seed, "split-" + id));
  };

  auto [ltrain, lval] = split_of(cfg.task_labeled);
  data.labeled_train = std::move(ltrain);
  data.labeled_val = std::move(lval);
  data.labeled_train.labeled = true;
  data.labeled_val.labeled = true;

  data.target = generate_benchmark_domain(cfg.benchmark, spec_by_id(specs, cfg.task_target));

  if (need_unlabeled) {
    for (const auto& id : ids) {
      if (id == cfg.task_labeled || id == cfg.task_target) continue;
      auto [utrain, uval] = split_of(id);
      utrain.labeled = false;
      data.unlabeled_train.push_back(std::move(utrain));
      data.unlabeled_ids.push_back(id);
    }
  }
  return data;
}

// Mean of the last five entries (or all, if fewer).
double last_five_mean(const std::vector<double>& accs) {
  if (accs.empty()) return 0.0;
  const size_t take = std::min<size_t>(5, accs.size());
  double sum = 0;
  for (size_t i = accs.size() - take; i < accs.size(); ++i) sum += accs[i];
  return sum / static_cast<double>(take);
}

void write_metrics_csv(const ExperimentConfig& cfg, const ExperimentReport& report) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::create_directories(cfg.output_dir);
  const std::string path = cfg.output_dir + "/metrics_" + run_mode_to_string(cfg.mode) + "_" +
                           cfg.task_labeled + "-to-" + cfg.task_target + "_seed" +
                           std::to_string(cfg.seed) + ".csv";
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << metrics_csv_header() << "\n";
  for (const auto& row : report.rows) os << metrics_row_csv(row) << "\n";
}

ExperimentReport run_erm(const ExperimentConfig& cfg, const TaskData& data) {
  ExperimentReport report;
  report.labeled_domain = cfg.task_labeled;
  report.target_domain = cfg.task_target;
  report.mode = cfg.mode;
  report.seed = cfg.seed;

  StyleConfusorConfig no_confusor;
  no_confusor.active = false;
  Subnetwork net(cfg.arch, no_confusor, derive_seed(cfg.seed, "erm-init"));
  SgdOptimizer opt(net.params(), cfg.dcg.lr, cfg.dcg.momentum, cfg.dcg.weight_decay);

  const int batch = 2 * cfg.dcg.batch_each;  // same per-step sample budget as DCG
  const auto& train = data.labeled_train;
  const int iters =
      static_cast<int>((train.size() + static_cast<size_t>(batch) - 1) / static_cast<size_t>(batch));
  BatchCursor cursor(train.size(), derive_seed(cfg.seed, "erm-batches"));

  std::vector<double> target_accs;
  for (int epoch = 0; epoch < cfg.dcg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    float ce_sum = 0;
    for (int it = 0; it < iters; ++it) {
      const std::vector<int> idx = cursor.next(batch);
      std::vector<int> labels(idx.size());
      for (size_t i = 0; i < idx.size(); ++i)
        labels[i] = train.training_label(static_cast<size_t>(idx[i]));
      Tensor logits = net.logits(make_image_batch(train, idx), true, nullptr);
      Tensor loss = ops::softmax_cross_entropy(logits, labels);
      opt.zero_grad();
      loss.backward();
      opt.step();
      ce_sum += loss.item();
    }
    autograd::NoGradGuard no_grad;
    size_t hits = 0;
    const int k = data.target.num_classes;
    for (size_t start = 0; start < data.target.size(); start += 256) {
      const size_t count = std::min<size_t>(256, data.target.size() - start);
      std::vector<int> idx(count);
      for (size_t i = 0; i < count; ++i) idx[i] = static_cast<int>(start + i);
      const Tensor probs = net.predict(make_image_batch(data.target, idx));
      for (size_t i = 0; i < count; ++i)
        if (ops::argmax_row(probs.data().data() + i * static_cast<size_t>(k), k) ==
            data.target.eval_label(start + i))
          ++hits;
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(data.target.size());
    target_accs.push_back(acc);

    MetricsRow row;
    row.cycle = 1;
    row.module = "erm";
    row.epoch = epoch;
    row.ce_x1 = ce_sum / static_cast<float>(iters);
    row.target_acc = acc;
    row.wall_ms = cfg.record_wall_time ? ms_since(t0) : 0.0;
    report.rows.push_back(row);
  }
  report.final_target_accuracy = last_five_mean(target_accs);
  return report;
}

struct CycleRunner {
  const ExperimentConfig& cfg;
  const TaskData& data;
  ExperimentReport& report;
  DcgTrainer dcg;
  DomainDataset intermediate;  // D-hat, consumed only by APL
  std::vector<const DomainDataset*> unlabeled_ptrs;

  CycleRunner(const ExperimentConfig& c, const TaskData& d, ExperimentReport& r)
      : cfg(c), data(d), report(r), dcg(c.arch, c.dcg, derive_seed(c.seed, "dcg-init")) {
    intermediate = data.labeled_train;  // cycle 1: D-hat = D_X
    for (const auto& ds : data.unlabeled_train) unlabeled_ptrs.push_back(&ds);
  }

  std::vector<PseudoLabelSet> run_apl(int cycle) {
    std::vector<PseudoLabelSet> qsets;
    const double lr = lr_for_cycle(cfg.apl.lr, cycle);
    for (size_t d = 0; d < data.unlabeled_train.size(); ++d) {
      const auto t0 = Clock::now();
      AplConfig acfg = cfg.apl;
      acfg.lr = lr;
      // Fresh model per unlabeled domain per cycle.
      McdModel model(cfg.arch, derive_seed(cfg.seed, "apl-init", static_cast<uint64_t>(cycle), d));
      const auto epochs = apl_train(model, intermediate, data.unlabeled_train[d], acfg,
                                    derive_seed(cfg.seed, "apl-train",
                                                static_cast<uint64_t>(cycle), d));
      for (size_t e = 0; e < epochs.size(); ++e) {
        MetricsRow row;
        row.cycle = cycle;
        row.module = "apl-" + data.unlabeled_ids[d];
        row.epoch = static_cast<int>(e);
        row.ce_x1 = epochs[e].ce1;
        row.ce_x2 = epochs[e].ce2;
        row.ce_u1 = epochs[e].discrepancy_b;
        row.ce_u2 = epochs[e].discrepancy_c;
        report.rows.push_back(row);
      }
      PseudoLabelSet q = generate_pseudo_labels(model, data.unlabeled_train[d], cycle);
      MetricsRow row;
      row.cycle = cycle;
      row.module = "apl-" + data.unlabeled_ids[d];
      row.epoch = acfg.epochs;
      row.pseudo_acc = pseudo_label_accuracy(q, data.unlabeled_train[d]);
      row.wall_ms = cfg.record_wall_time ? ms_since(t0) : 0.0;
      report.rows.push_back(row);
      qsets.push_back(std::move(q));
    }
    return qsets;
  }

  // Returns per-epoch target accuracies.
  std::vector<double> run_dcg(int cycle, const std::vector<PseudoLabelSet>& qsets) {
    dcg.set_learning_rate(lr_for_cycle(cfg.dcg.lr, cycle));
    std::vector<const PseudoLabelSet*> qptrs;
    for (const auto& q : qsets) qptrs.push_back(&q);
    const PseudoPool pool(unlabeled_ptrs, qptrs);
    std::vector<double> accs;
    for (int epoch = 0; epoch < cfg.dcg.epochs; ++epoch) {
      const auto t0 = Clock::now();
      const DcgEpochLog log =
          dcg.run_epoch(data.labeled_train, pool, epoch, cfg.dcg.epochs,
                        derive_seed(cfg.seed, "dcg-epoch", static_cast<uint64_t>(cycle),
                                    static_cast<uint64_t>(epoch)));
      const double acc = dcg.evaluate_accuracy(data.target);
      accs.push_back(acc);
      MetricsRow row;
      row.cycle = cycle;
      row.module = "dcg";
      row.epoch = epoch;
      row.ce_x1 = log.mean.ce_x1;
      row.ce_x2 = log.mean.ce_x2;
      row.ce_u1 = log.mean.ce_u1;
      row.ce_u2 = log.mean.ce_u2;
      row.div1 = log.mean.div1;
      row.div2 = log.mean.div2;
      row.keep_rate = log.keep_rate;
      row.target_acc = acc;
      row.wall_ms = cfg.record_wall_time ? ms_since(t0) : 0.0;
      report.rows.push_back(row);
    }
    return accs;
  }

  CycleMetrics run_eid(int cycle, const std::vector<PseudoLabelSet>& qsets) {
    CycleMetrics cm;
    cm.cycle = cycle;
    for (size_t d = 0; d < qsets.size(); ++d)
      cm.pseudo_acc_per_domain.push_back(
          pseudo_label_accuracy(qsets[d], data.unlabeled_train[d]));
    cm.pseudo_acc_mean = 0;
    for (const double a : cm.pseudo_acc_per_domain) cm.pseudo_acc_mean += a;
    if (!cm.pseudo_acc_per_domain.empty())
      cm.pseudo_acc_mean /= static_cast<double>(cm.pseudo_acc_per_domain.size());

    std::vector<CleanCandidate> candidates;
    for (size_t d = 0; d < qsets.size(); ++d) {
      auto part = agreement_filter(dcg, data.unlabeled_train[d], qsets[d], static_cast<int>(d));
      candidates.insert(candidates.end(), part.begin(), part.end());
    }
    const CleanSet clean = clean_select(std::move(candidates), cfg.clean_rate, cycle);
    cm.clean_size = static_cast<int>(clean.entries.size());
    cm.clean_precision =
        clean_set_precision(clean, std::span<const DomainDataset* const>(unlabeled_ptrs));

    if (clean.degenerate) {
      // Degenerate cycle: keep the previous intermediate domain.
      std::cerr << "warning: empty clean set in cycle " << cycle
                << "; reusing previous intermediate domain\n";
    } else {
      Rng eid_rng(derive_seed(cfg.seed, "eid", static_cast<uint64_t>(cycle)));
      intermediate =
          synthesize_intermediate(data.labeled_train, clean,
                                  std::span<const DomainDataset* const>(unlabeled_ptrs),
                                  cfg.mixing, eid_rng);
    }

    MetricsRow row;
    row.cycle = cycle;
    row.module = "eid";
    row.pseudo_acc = cm.pseudo_acc_mean;
    row.clean_precision = cm.clean_precision;
    row.clean_size = cm.clean_size;
    report.rows.push_back(row);
    return cm;
  }
};

ExperimentReport run_cycles(const ExperimentConfig& cfg, const TaskData& data) {
  ExperimentReport report;
  report.labeled_domain = cfg.task_labeled;
  report.target_domain = cfg.task_target;
  report.mode = cfg.mode;
  report.seed = cfg.seed;

  CycleRunner runner(cfg, data, report);
  std::vector<double> final_cycle_accs;

  if (cfg.mode == RunMode::dcg_only) {
    std::vector<PseudoLabelSet> qsets;
    for (size_t d = 0; d < data.unlabeled_train.size(); ++d) {
      PseudoLabelSet q =
          load_pseudo_labels(cfg.initial_labels_dir + "/" + data.unlabeled_ids[d] + ".pl");
      if (q.size() != data.unlabeled_train[d].size())
        throw ConfigError("initial labels for '" + data.unlabeled_ids[d] +
                          "' do not match the unlabeled train split size");
      qsets.push_back(std::move(q));
    }
    final_cycle_accs = runner.run_dcg(1, qsets);
    report.cycles.push_back(runner.run_eid(1, qsets));
    if (cfg.web_label_init) {
      for (int cycle = 2; cycle <= cfg.cycles; ++cycle) {
        const auto qs = runner.run_apl(cycle);
        final_cycle_accs = runner.run_dcg(cycle, qs);
        report.cycles.push_back(runner.run_eid(cycle, qs));
      }
    }
  } else {
    for (int cycle = 1; cycle <= cfg.cycles; ++cycle) {
      const auto qs = runner.run_apl(cycle);
      final_cycle_accs = runner.run_dcg(cycle, qs);
      report.cycles.push_back(runner.run_eid(cycle, qs));
    }
  }

  report.final_target_accuracy = last_five_mean(final_cycle_accs);
  return report;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (cfg.task_labeled.empty())
    throw ConfigError("run_experiment needs a task; use the suite for all tasks");
  kernels::set_threads(cfg.threads);

  const TaskData data = build_task_data(cfg, cfg.mode != RunMode::erm_baseline);
  ExperimentReport report =
      cfg.mode == RunMode::erm_baseline ? run_erm(cfg, data) : run_cycles(cfg, data);
  write_metrics_csv(cfg, report);
  return report;
}

SuiteReport run_suite(const ExperimentConfig& cfg) {
  ExperimentConfig base = cfg;
  base.task_labeled.clear();
  base.task_target.clear();
  validate_config(base);
  const std::vector<SsdgTask> tasks = make_benchmark(cfg.benchmark);
  const std::vector<uint64_t> seeds =
      cfg.suite_seeds.empty() ? std::vector<uint64_t>{cfg.seed} : cfg.suite_seeds;

  SuiteReport report;
  report.mode = run_mode_to_string(cfg.mode);
  report.seeds = seeds;
  for (const auto& t : tasks)
    report.task_names.push_back(t.labeled_domain + "->" + t.target_domain);
  report.per_seed.assign(tasks.size(), std::vector<double>(seeds.size(), 0.0));

  struct Job {
    size_t task_idx, seed_idx;
  };
  std::vector<Job> jobs;
  for (size_t t = 0; t < tasks.size(); ++t)
    for (size_t s = 0; s < seeds.size(); ++s) jobs.push_back({t, s});

  const int workers = std::max(1, cfg.suite_workers);
  std::atomic<size_t> next{0};
  std::vector<std::string> errors;
  std::mutex err_mutex;

  auto work = [&] {
    for (;;) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      ExperimentConfig run_cfg = cfg;
      run_cfg.task_labeled = tasks[job.task_idx].labeled_domain;
      run_cfg.task_target = tasks[job.task_idx].target_domain;
      run_cfg.seed = seeds[job.seed_idx];
      run_cfg.suite_seeds.clear();
      if (workers > 1) run_cfg.threads = 1;  // one core per job
      try {
        const ExperimentReport rep = run_experiment(run_cfg);
        report.per_seed[job.task_idx][job.seed_idx] = rep.final_target_accuracy;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        errors.push_back(report.task_names[job.task_idx] + " seed " +
                         std::to_string(seeds[job.seed_idx]) + ": " + e.what());
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (!errors.empty()) {
    std::string what = "suite: " + std::to_string(errors.size()) + " task(s) failed:";
    for (const auto& e : errors) what += "\n  " + e;
    throw std::runtime_error(what);
  }

  report.task_accuracy.resize(tasks.size());
  double total = 0;
  for (size_t t = 0; t < tasks.size(); ++t) {
    double m = 0;
    for (const double a : report.per_seed[t]) m += a;
    m /= static_cast<double>(seeds.size());
    report.task_accuracy[t] = m;
    total += m;
  }
  report.average = total / static_cast<double>(tasks.size());

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    save_suite_report(cfg.output_dir + "/suite_report.json", report);
  }
  return report;
}

void save_suite_report(const std::string& path, const SuiteReport& report) {
  nlohmann::json j;
  j["mode"] = report.mode;
  j["task_names"] = report.task_names;
  j["seeds"] = report.seeds;
  j["per_seed"] = report.per_seed;
  j["task_accuracy"] = report.task_accuracy;
  j["average"] = report.average;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
}

SuiteReport load_suite_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  is >> j;
  SuiteReport report;
  report.mode = j.at("mode").get<std::string>();
  report.task_names = j.at("task_names").get<std::vector<std::string>>();
  report.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  report.per_seed = j.at("per_seed").get<std::vector<std::vector<double>>>();
  report.task_accuracy = j.at("task_accuracy").get<std::vector<double>>();
  report.average = j.at("average").get<double>();
  return report;
}

std::vector<std::pair<std::string, ExperimentConfig>> ablation_grid(
    const ExperimentConfig& base) {
  std::vector<std::pair<std::string, ExperimentConfig>> grid;
  for (const int t : {1, 3, 5}) {
    ExperimentConfig c = base;
    c.cycles = t;
    c.clean_rate = 0.4;
    c.mixing = MixMode::mixup;
    grid.emplace_back("ablation_cycles_" + std::to_string(t), c);
  }
  for (const double r : {0.2, 0.4, 0.6}) {
    ExperimentConfig c = base;
    c.cycles = 3;
    c.clean_rate = r;
    c.mixing = MixMode::mixup;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", r);
    std::string tag(buf);
    tag[tag.find('.')] = 'p';
    grid.emplace_back("ablation_cleanrate_" + tag, c);
  }
  for (const MixMode m : {MixMode::cutmix, MixMode::mixup, MixMode::xu}) {
    ExperimentConfig c = base;
    c.cycles = 3;
    c.clean_rate = 0.4;
    c.mixing = m;
    grid.emplace_back("ablation_mixing_" + mix_mode_to_string(m), c);
  }
  return grid;
}

void emit_ablation_grid(const ExperimentConfig& base, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, cfg] : ablation_grid(base)) {
    validate_config(cfg);
    std::ofstream os(dir + "/" + name + ".json");
    if (!os) throw std::runtime_error("cannot write ablation config " + name);
    os << config_to_json_text(cfg);
  }
}

}  // namespace ssdg
