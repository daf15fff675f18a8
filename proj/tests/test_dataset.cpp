#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ssdg/benchmark.hpp"
#include "ssdg/dataset.hpp"

using namespace ssdg;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("render_sample is deterministic") {
  const auto specs = default_domain_specs(1.0f);
  for (int cls = 0; cls < kGlyphClasses; ++cls) {
    const auto a = render_sample(specs[3], cls, 12345 + cls);
    const auto b = render_sample(specs[3], cls, 12345 + cls);
    CHECK(a == b);
  }
}

TEST_CASE("render_sample rejects unknown class ids") {
  CHECK_THROWS_AS(render_sample(canonical_spec(), -1, 1), std::invalid_argument);
  CHECK_THROWS_AS(render_sample(canonical_spec(), kGlyphClasses, 1), std::invalid_argument);
}

TEST_CASE("gap_scale zero collapses every domain onto the canonical one") {
  auto specs = default_domain_specs(0.0f);
  const auto base = render_sample(specs[0], 2, 999);
  for (size_t d = 1; d < specs.size(); ++d) {
    const auto img = render_sample(specs[d], 2, 999);
    CHECK(img == base);
  }
}

TEST_CASE("zero noise flat background pixels equal the background color exactly") {
  DomainSpec spec = canonical_spec();  // noise 0, texture 0, contrast 1, brightness 0
  const auto img = render_sample(spec, 0, 42);  // disk glyph, centered-ish
  const size_t plane = 16 * 16;
  // Corner pixels are far from any glyph placement.
  for (const size_t p : {size_t(0), size_t(15), plane - 16, plane - 1})
    for (int c = 0; c < 3; ++c)
      CHECK(img[c * plane + p] == spec.background_color[static_cast<size_t>(c)]);
}

TEST_CASE("generate_domain") {
  const auto specs = default_domain_specs(1.0f);
  SUBCASE("one sample per class") {
    const DomainDataset ds = generate_domain(specs[0], 1, 7);
    REQUIRE(ds.size() == kGlyphClasses);
    for (int cls = 0; cls < kGlyphClasses; ++cls)
      CHECK(ds.samples[static_cast<size_t>(cls)].class_id == cls);
  }
  SUBCASE("class histogram is exactly uniform") {
    const DomainDataset ds = generate_domain(specs[1], 17, 9);
    std::vector<int> hist(kGlyphClasses, 0);
    for (const auto& s : ds.samples) ++hist[static_cast<size_t>(s.class_id)];
    for (const int h : hist) CHECK(h == 17);
  }
  SUBCASE("equal seeds give identical datasets") {
    const DomainDataset a = generate_domain(specs[2], 4, 11);
    const DomainDataset b = generate_domain(specs[2], 4, 11);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a.samples[i].class_id == b.samples[i].class_id);
      CHECK(a.samples[i].image == b.samples[i].image);
    }
  }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(generate_domain(specs[0], 0, 1), std::invalid_argument);
  }
}

TEST_CASE("training label access is fenced by the labeled flag") {
  DomainDataset ds = generate_domain(default_domain_specs(1.0f)[0], 1, 3);
  ds.labeled = false;
  CHECK_THROWS_AS(ds.training_label(0), std::logic_error);
  CHECK(ds.eval_label(0) == 0);  // metrics path stays open
  ds.labeled = true;
  CHECK(ds.training_label(0) == 0);
}

TEST_CASE("make_benchmark enumerates 12 ordered tasks over 4 domains") {
  BenchmarkConfig cfg;
  const auto tasks = make_benchmark(cfg);
  REQUIRE(tasks.size() == 12);
  for (const auto& t : tasks) {
    CHECK(t.labeled_domain != t.target_domain);
    REQUIRE(t.unlabeled_domains.size() == 2);
    for (const auto& u : t.unlabeled_domains) {
      CHECK(u != t.labeled_domain);
      CHECK(u != t.target_domain);
    }
  }
  // lexicographic by labeled then target
  CHECK(tasks[0].labeled_domain == "flat");
  CHECK(tasks[0].target_domain == "inverted");
  CHECK(tasks[1].target_domain == "noisy");
  CHECK(tasks[2].target_domain == "textured");
  CHECK(tasks[11].labeled_domain == "textured");
  CHECK(tasks[11].target_domain == "noisy");

  const auto again = make_benchmark(cfg);
  for (size_t i = 0; i < tasks.size(); ++i) {
    CHECK(tasks[i].labeled_domain == again[i].labeled_domain);
    CHECK(tasks[i].target_domain == again[i].target_domain);
  }
}

TEST_CASE("make_benchmark requires four domains") {
  BenchmarkConfig cfg;
  cfg.domains = default_domain_specs(1.0f);
  cfg.domains.pop_back();
  CHECK_THROWS_AS(make_benchmark(cfg), ConfigError);
}

TEST_CASE("split_dataset is stratified and deterministic") {
  const DomainDataset ds = generate_domain(default_domain_specs(1.0f)[0], 20, 5);
  auto [train, val] = split_dataset(ds, 0.1, 77);
  CHECK(train.size() == 90);
  CHECK(val.size() == 10);
  std::vector<int> hist(kGlyphClasses, 0);
  for (const auto& s : val.samples) ++hist[static_cast<size_t>(s.class_id)];
  for (const int h : hist) CHECK(h == 2);

  auto [train2, val2] = split_dataset(ds, 0.1, 77);
  for (size_t i = 0; i < train.size(); ++i)
    CHECK(train.samples[i].instance_id == train2.samples[i].instance_id);
}

TEST_CASE("dataset export/import round trip") {
  DomainDataset ds = generate_domain(default_domain_specs(1.0f)[3], 3, 21);
  ds.labeled = true;
  const std::string path = tmp_path("ssdg_ds_roundtrip.ds");
  export_dataset(ds, path);
  const DomainDataset back = import_dataset(path);
  CHECK(back.domain_id == ds.domain_id);
  CHECK(back.num_classes == ds.num_classes);
  CHECK(back.labeled == ds.labeled);
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].class_id == ds.samples[i].class_id);
    CHECK(back.samples[i].instance_id == ds.samples[i].instance_id);
    CHECK(back.samples[i].image == ds.samples[i].image);
  }
  std::filesystem::remove(path);
}

TEST_CASE("soft-label dataset round trip") {
  DomainDataset ds = generate_domain(default_domain_specs(1.0f)[0], 2, 8);
  ds.labeled = true;
  ds.lineage = DataLineage::intermediate;
  for (size_t i = 0; i < ds.size(); ++i) {
    std::vector<float> soft(kGlyphClasses, 0.1f);
    soft[static_cast<size_t>(ds.samples[i].class_id)] = 0.6f;
    ds.soft_labels.push_back(soft);
  }
  const std::string path = tmp_path("ssdg_ds_soft.ds");
  export_dataset(ds, path);
  const DomainDataset back = import_dataset(path);
  REQUIRE(back.has_soft_labels());
  REQUIRE(back.soft_labels.size() == ds.soft_labels.size());
  for (size_t i = 0; i < ds.size(); ++i) CHECK(back.soft_labels[i] == ds.soft_labels[i]);
  std::filesystem::remove(path);
}

TEST_CASE("import rejects truncated payloads with a byte offset") {
  DomainDataset ds = generate_domain(default_domain_specs(1.0f)[0], 2, 31);
  const std::string path = tmp_path("ssdg_ds_trunc.ds");
  export_dataset(ds, path);
  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size - 100);
  CHECK_THROWS_AS(import_dataset(path), ParseError);
  try {
    import_dataset(path);
  } catch (const ParseError& e) {
    CHECK(e.offset > 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("import rejects class ids beyond the header class count") {
  DomainDataset ds = generate_domain(default_domain_specs(1.0f)[0], 1, 13);
  const std::string path = tmp_path("ssdg_ds_badclass.ds");
  export_dataset(ds, path);
  // Patch the first sample's class id (first 4 payload bytes after DATA).
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const size_t data_pos = content.find("DATA\n") + 5;
  f.seekp(static_cast<std::streamoff>(data_pos));
  const uint32_t bad = 200;
  f.write(reinterpret_cast<const char*>(&bad), 4);
  f.close();
  CHECK_THROWS_AS(import_dataset(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("import rejects malformed headers") {
  const std::string path = tmp_path("ssdg_ds_badmagic.ds");
  std::ofstream(path) << "NOTADATASET 9\n";
  CHECK_THROWS_AS(import_dataset(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("linear probe separates a single domain") {
  BenchmarkConfig cfg;
  cfg.n_per_class = 30;
  const auto specs = benchmark_domains(cfg);
  DomainDataset full = generate_benchmark_domain(cfg, specs[0]);
  full.labeled = true;
  auto [train, val] = split_dataset(full, 0.1, 3);
  train.labeled = true;
  const double acc = linear_probe_accuracy(train, val, 20, 0.1, 1);
  CHECK(acc >= 0.9);
}
