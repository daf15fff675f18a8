#include "ssdg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ssdg {

using nlohmann::json;

RunMode run_mode_from_string(const std::string& s) {
  if (s == "full") return RunMode::full;
  if (s == "dcg_only") return RunMode::dcg_only;
  if (s == "erm_baseline") return RunMode::erm_baseline;
  throw ConfigError("unknown mode '" + s + "' (expected full|dcg_only|erm_baseline)");
}

std::string run_mode_to_string(RunMode m) {
  switch (m) {
    case RunMode::full: return "full";
    case RunMode::dcg_only: return "dcg_only";
    case RunMode::erm_baseline: return "erm_baseline";
  }
  throw std::logic_error("run_mode_to_string: bad enum");
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

json domain_to_json(const DomainSpec& s) {
  return json{{"domain_id", s.domain_id},
              {"foreground_color", {s.foreground_color[0], s.foreground_color[1], s.foreground_color[2]}},
              {"background_color", {s.background_color[0], s.background_color[1], s.background_color[2]}},
              {"noise_sigma", s.noise_sigma},
              {"brightness", s.brightness},
              {"contrast", s.contrast},
              {"rotation_range", s.rotation_range},
              {"texture_frequency", s.texture_frequency}};
}

DomainSpec domain_from_json(const json& j) {
  DomainSpec s;
  s.domain_id = j.at("domain_id").get<std::string>();
  auto color = [&](const char* key, std::array<float, 3>& dst) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    for (int i = 0; i < 3; ++i) dst[static_cast<size_t>(i)] = a.at(i).get<float>();
  };
  color("foreground_color", s.foreground_color);
  color("background_color", s.background_color);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.brightness = j.value("brightness", s.brightness);
  s.contrast = j.value("contrast", s.contrast);
  s.rotation_range = j.value("rotation_range", s.rotation_range);
  s.texture_frequency = j.value("texture_frequency", s.texture_frequency);
  return s;
}

}  // namespace

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j;
  j["benchmark"] = {{"classes", cfg.benchmark.classes},
                    {"image_size", cfg.benchmark.image_size},
                    {"n_per_class", cfg.benchmark.n_per_class},
                    {"gap_scale", cfg.benchmark.gap_scale},
                    {"val_fraction", cfg.benchmark.val_fraction},
                    {"seed", cfg.benchmark.seed}};
  if (!cfg.benchmark.domains.empty()) {
    json domains = json::array();
    for (const auto& d : cfg.benchmark.domains) domains.push_back(domain_to_json(d));
    j["benchmark"]["domains"] = domains;
  }
  j["task"] = {{"labeled", cfg.task_labeled}, {"target", cfg.task_target}};
  j["cycles"] = cfg.cycles;
  j["clean_rate"] = cfg.clean_rate;
  j["mixing"] = mix_mode_to_string(cfg.mixing);
  j["mode"] = run_mode_to_string(cfg.mode);
  j["initial_labels_dir"] = cfg.initial_labels_dir;
  j["web_label_init"] = cfg.web_label_init;
  j["apl"] = {{"epochs", cfg.apl.epochs},
              {"batch_size", cfg.apl.batch_size},
              {"n_inner", cfg.apl.n_inner},
              {"lr", cfg.apl.lr},
              {"momentum", cfg.apl.momentum},
              {"weight_decay", cfg.apl.weight_decay}};
  j["dcg"] = {{"epochs", cfg.dcg.epochs},
              {"batch_each", cfg.dcg.batch_each},
              {"lr", cfg.dcg.lr},
              {"momentum", cfg.dcg.momentum},
              {"weight_decay", cfg.dcg.weight_decay},
              {"keep_rate_start", cfg.dcg.keep_rate_start},
              {"keep_rate_end", cfg.dcg.keep_rate_end},
              {"beta_concentration", cfg.dcg.confusor.beta_concentration},
              {"confusor_epsilon", cfg.dcg.confusor.epsilon},
              {"confusor_active", cfg.dcg.confusor.active}};
  j["arch"] = {{"in_channels", cfg.arch.in_channels},
               {"widths", cfg.arch.widths},
               {"classes", cfg.arch.classes}};
  j["seed"] = cfg.seed;
  if (!cfg.suite_seeds.empty()) j["suite_seeds"] = cfg.suite_seeds;
  j["output_dir"] = cfg.output_dir;
  j["threads"] = cfg.threads;
  j["suite_workers"] = cfg.suite_workers;
  j["record_wall_time"] = cfg.record_wall_time;
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("benchmark")) {
      const auto& b = j["benchmark"];
      cfg.benchmark.classes = b.value("classes", cfg.benchmark.classes);
      cfg.benchmark.image_size = b.value("image_size", cfg.benchmark.image_size);
      cfg.benchmark.n_per_class = b.value("n_per_class", cfg.benchmark.n_per_class);
      cfg.benchmark.gap_scale = b.value("gap_scale", cfg.benchmark.gap_scale);
      cfg.benchmark.val_fraction = b.value("val_fraction", cfg.benchmark.val_fraction);
      cfg.benchmark.seed = b.value("seed", cfg.benchmark.seed);
      if (b.contains("domains"))
        for (const auto& d : b["domains"]) cfg.benchmark.domains.push_back(domain_from_json(d));
    }
    if (j.contains("task")) {
      cfg.task_labeled = j["task"].value("labeled", std::string());
      cfg.task_target = j["task"].value("target", std::string());
    }
    cfg.cycles = j.value("cycles", cfg.cycles);
    cfg.clean_rate = j.value("clean_rate", cfg.clean_rate);
    if (j.contains("mixing")) cfg.mixing = mix_mode_from_string(j["mixing"].get<std::string>());
    if (j.contains("mode")) cfg.mode = run_mode_from_string(j["mode"].get<std::string>());
    cfg.initial_labels_dir = j.value("initial_labels_dir", cfg.initial_labels_dir);
    cfg.web_label_init = j.value("web_label_init", cfg.web_label_init);
    if (j.contains("apl")) {
      const auto& a = j["apl"];
      cfg.apl.epochs = a.value("epochs", cfg.apl.epochs);
      cfg.apl.batch_size = a.value("batch_size", cfg.apl.batch_size);
      cfg.apl.n_inner = a.value("n_inner", cfg.apl.n_inner);
      cfg.apl.lr = a.value("lr", cfg.apl.lr);
      cfg.apl.momentum = a.value("momentum", cfg.apl.momentum);
      cfg.apl.weight_decay = a.value("weight_decay", cfg.apl.weight_decay);
    }
    if (j.contains("dcg")) {
      const auto& d = j["dcg"];
      cfg.dcg.epochs = d.value("epochs", cfg.dcg.epochs);
      cfg.dcg.batch_each = d.value("batch_each", cfg.dcg.batch_each);
      cfg.dcg.lr = d.value("lr", cfg.dcg.lr);
      cfg.dcg.momentum = d.value("momentum", cfg.dcg.momentum);
      cfg.dcg.weight_decay = d.value("weight_decay", cfg.dcg.weight_decay);
      cfg.dcg.keep_rate_start = d.value("keep_rate_start", cfg.dcg.keep_rate_start);
      cfg.dcg.keep_rate_end = d.value("keep_rate_end", cfg.dcg.keep_rate_end);
      cfg.dcg.confusor.beta_concentration =
          d.value("beta_concentration", cfg.dcg.confusor.beta_concentration);
      cfg.dcg.confusor.epsilon = d.value("confusor_epsilon", cfg.dcg.confusor.epsilon);
      cfg.dcg.confusor.active = d.value("confusor_active", cfg.dcg.confusor.active);
    }
    if (j.contains("arch")) {
      const auto& a = j["arch"];
      cfg.arch.in_channels = a.value("in_channels", cfg.arch.in_channels);
      if (a.contains("widths")) cfg.arch.widths = a["widths"].get<std::vector<int>>();
      cfg.arch.classes = a.value("classes", cfg.arch.classes);
    }
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("suite_seeds")) cfg.suite_seeds = j["suite_seeds"].get<std::vector<uint64_t>>();
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.suite_workers = j.value("suite_workers", cfg.suite_workers);
    cfg.record_wall_time = j.value("record_wall_time", cfg.record_wall_time);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // Keep the classifier head and the generator in agreement.
  cfg.arch.classes = cfg.benchmark.classes;
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return config_from_json_text(buf.str());
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.cycles < 1) throw ConfigError("cycles must be >= 1");
  if (cfg.clean_rate <= 0.0 || cfg.clean_rate > 1.0)
    throw ConfigError("clean_rate must be in (0,1]");
  if (cfg.benchmark.classes < 2 || cfg.benchmark.classes > kGlyphClasses)
    throw ConfigError("benchmark.classes must be in [2," + std::to_string(kGlyphClasses) + "]");
  if (cfg.benchmark.image_size < 8) throw ConfigError("benchmark.image_size must be >= 8");
  if (cfg.benchmark.n_per_class < 1) throw ConfigError("benchmark.n_per_class must be >= 1");
  if (cfg.benchmark.val_fraction < 0.0 || cfg.benchmark.val_fraction >= 1.0)
    throw ConfigError("benchmark.val_fraction must be in [0,1)");
  if (cfg.apl.epochs < 1 || cfg.apl.n_inner < 1 || cfg.apl.batch_size < 1)
    throw ConfigError("apl: epochs, n_inner and batch_size must be >= 1");
  if (cfg.apl.lr <= 0 || cfg.dcg.lr <= 0) throw ConfigError("learning rates must be positive");
  if (cfg.dcg.epochs < 1 || cfg.dcg.batch_each < 1)
    throw ConfigError("dcg: epochs and batch_each must be >= 1");
  if (cfg.dcg.keep_rate_start > 1.0 || cfg.dcg.keep_rate_end < 0.5 ||
      cfg.dcg.keep_rate_end > cfg.dcg.keep_rate_start)
    throw ConfigError("dcg: keep rate schedule must decay within [0.5, 1]");
  if (cfg.dcg.confusor.beta_concentration <= 0)
    throw ConfigError("dcg: beta_concentration must be positive");
  if (cfg.arch.widths.empty()) throw ConfigError("arch: widths must be non-empty");
  for (const int w : cfg.arch.widths)
    if (w < 1) throw ConfigError("arch: widths must be positive");
  if (cfg.threads < 1 || cfg.suite_workers < 1)
    throw ConfigError("threads and suite_workers must be >= 1");
  if (cfg.mode == RunMode::dcg_only && cfg.initial_labels_dir.empty())
    throw ConfigError("dcg_only mode requires initial_labels_dir");
  if (cfg.web_label_init && cfg.mode != RunMode::dcg_only)
    throw ConfigError("web_label_init applies only to dcg_only mode");

  const auto specs = benchmark_domains(cfg.benchmark);
  std::set<std::string> ids;
  for (const auto& s : specs)
    if (!ids.insert(s.domain_id).second)
      throw ConfigError("duplicate domain id '" + s.domain_id + "'");
  const bool has_task = !cfg.task_labeled.empty() || !cfg.task_target.empty();
  if (has_task) {
    if (cfg.task_labeled.empty() || cfg.task_target.empty())
      throw ConfigError("task needs both labeled and target domains");
    if (cfg.task_labeled == cfg.task_target)
      throw ConfigError("task labeled and target domains must differ");
    if (!ids.count(cfg.task_labeled))
      throw ConfigError("unknown labeled domain '" + cfg.task_labeled + "'");
    if (!ids.count(cfg.task_target))
      throw ConfigError("unknown target domain '" + cfg.task_target + "'");
  }
  if (specs.size() < 4) throw ConfigError("benchmark needs at least 4 domains");
}

}  // namespace ssdg
