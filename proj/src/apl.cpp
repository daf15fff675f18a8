#include "ssdg/apl.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ssdg/batching.hpp"

namespace ssdg {

BatchLabels gather_labels(const DomainDataset& ds, std::span<const int> indices) {
  BatchLabels out;
  if (ds.has_soft_labels()) {
    out.soft.reserve(indices.size() * static_cast<size_t>(ds.num_classes));
    for (const int i : indices) {
      const auto sl = ds.training_soft_label(static_cast<size_t>(i));
      out.soft.insert(out.soft.end(), sl.begin(), sl.end());
    }
  } else {
    out.hard.reserve(indices.size());
    for (const int i : indices) out.hard.push_back(ds.training_label(static_cast<size_t>(i)));
  }
  return out;
}

Tensor label_cross_entropy(const Tensor& logits, const BatchLabels& labels) {
  if (labels.is_soft()) return ops::softmax_cross_entropy_soft(logits, labels.soft);
  return ops::softmax_cross_entropy(logits, labels.hard);
}

AplTrainer::AplTrainer(McdModel& model, const AplConfig& cfg)
    : model_(model),
      cfg_(cfg),
      opt_([&] {
        auto params = model.extractor_params();
        for (auto& p : model.head_params()) params.push_back(p);
        return params;
      }(),
           cfg.lr, cfg.momentum, cfg.weight_decay),
      n_extractor_(model.extractor_params().size()) {}

AplTrainer::SupervisedLog AplTrainer::step_supervised(const Tensor& x_images,
                                                      const BatchLabels& labels) {
  Tensor feats = model_.features(x_images);
  Tensor ce1 = label_cross_entropy(model_.head_logits(0, feats), labels);
  Tensor ce2 = label_cross_entropy(model_.head_logits(1, feats), labels);
  Tensor loss = ops::add(ce1, ce2);
  opt_.zero_grad();
  loss.backward();
  opt_.step();
  return {ce1.item(), ce2.item()};
}

Tensor AplTrainer::discrepancy_on(const Tensor& u_images) {
  Tensor feats = model_.features(u_images);
  Tensor p1 = ops::softmax_rows(model_.head_logits(0, feats));
  Tensor p2 = ops::softmax_rows(model_.head_logits(1, feats));
  return classifier_discrepancy(p1, p2);
}

float AplTrainer::step_maximize_discrepancy(const Tensor& x_images, const BatchLabels& labels,
                                            const Tensor& u_images) {
  Tensor feats = model_.features(x_images);
  Tensor ce1 = label_cross_entropy(model_.head_logits(0, feats), labels);
  Tensor ce2 = label_cross_entropy(model_.head_logits(1, feats), labels);
  Tensor disc = discrepancy_on(u_images);
  Tensor loss = ops::sub(ops::add(ce1, ce2), disc);
  opt_.zero_grad();
  loss.backward();
  opt_.step_range(n_extractor_, opt_.params().size());  // heads only
  return disc.item();
}

float AplTrainer::step_minimize_discrepancy(const Tensor& u_images) {
  Tensor disc = discrepancy_on(u_images);
  opt_.zero_grad();
  disc.backward();
  opt_.step_range(0, n_extractor_);  // extractor only
  return disc.item();
}

std::vector<AplEpochLog> apl_train(McdModel& model, const DomainDataset& labeled,
                                   const DomainDataset& unlabeled, const AplConfig& cfg,
                                   uint64_t seed) {
  if (labeled.size() == 0 || unlabeled.size() == 0)
    throw std::invalid_argument("apl_train: empty dataset");
  if (cfg.epochs < 1 || cfg.n_inner < 1)
    throw ConfigError("apl_train: epochs and n_inner must be >= 1");

  AplTrainer trainer(model, cfg);
  BatchCursor lab_cursor(labeled.size(), derive_seed(seed, "apl-labeled"));
  BatchCursor unl_cursor(unlabeled.size(), derive_seed(seed, "apl-unlabeled"));
  const int batch = cfg.batch_size;
  const size_t largest = std::max(labeled.size(), unlabeled.size());
  const int iters = static_cast<int>((largest + batch - 1) / static_cast<size_t>(batch));

  std::vector<AplEpochLog> log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    AplEpochLog e;
    for (int it = 0; it < iters; ++it) {
      const std::vector<int> xi = lab_cursor.next(batch);
      const std::vector<int> ui = unl_cursor.next(batch);
      const Tensor x_images = make_image_batch(labeled, xi);
      const Tensor u_images = make_image_batch(unlabeled, ui);
      const BatchLabels labels = gather_labels(labeled, xi);

      const auto a = trainer.step_supervised(x_images, labels);
      const float disc_b = trainer.step_maximize_discrepancy(x_images, labels, u_images);
      float disc_c = 0;
      for (int j = 0; j < cfg.n_inner; ++j) disc_c = trainer.step_minimize_discrepancy(u_images);

      e.ce1 += a.ce1;
      e.ce2 += a.ce2;
      e.discrepancy_b += disc_b;
      e.discrepancy_c += disc_c;
    }
    const float inv = 1.0f / static_cast<float>(iters);
    e.ce1 *= inv;
    e.ce2 *= inv;
    e.discrepancy_b *= inv;
    e.discrepancy_c *= inv;
    log.push_back(e);
  }
  return log;
}

PseudoLabelSet generate_pseudo_labels(const McdModel& model, const DomainDataset& unlabeled,
                                      int cycle, int batch) {
  autograd::NoGradGuard no_grad;
  PseudoLabelSet out;
  out.domain_id = unlabeled.domain_id;
  out.cycle = cycle;
  const int n = static_cast<int>(unlabeled.size());
  const int k = unlabeled.num_classes;
  out.labels.reserve(static_cast<size_t>(n));
  out.confidence.reserve(static_cast<size_t>(n));
  for (int start = 0; start < n; start += batch) {
    const int count = std::min(batch, n - start);
    std::vector<int> idx(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = start + i;
    const Tensor probs = model.predict(make_image_batch(unlabeled, idx));
    for (int i = 0; i < count; ++i) {
      const float* row = probs.data().data() + static_cast<size_t>(i) * k;
      const int label = ops::argmax_row(row, k);
      out.labels.push_back(label);
      out.confidence.push_back(row[label]);
    }
  }
  return out;
}

double pseudo_label_accuracy(const PseudoLabelSet& q, const DomainDataset& truth) {
  if (q.size() != truth.size())
    throw std::invalid_argument("pseudo_label_accuracy: " + std::to_string(q.size()) +
                                " labels for " + std::to_string(truth.size()) + " samples");
  if (q.size() == 0) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < q.size(); ++i)
    if (q.labels[i] == truth.eval_label(i)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(q.size());
}

void save_pseudo_labels(const std::string& path, const PseudoLabelSet& q) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("pseudo labels: cannot open " + path + " for writing");
  os << "SSDGPL 1\n";
  os << "domain_id " << q.domain_id << "\n";
  os << "cycle " << q.cycle << "\n";
  os << "count " << q.labels.size() << "\n";
  char buf[64];
  for (size_t i = 0; i < q.labels.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu %d %.6f\n", i, q.labels[i],
                  static_cast<double>(q.confidence[i]));
    os << buf;
  }
  if (!os) throw std::runtime_error("pseudo labels: write failed for " + path);
}

PseudoLabelSet load_pseudo_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("pseudo labels: cannot open " + path);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "SSDGPL" || version != 1)
    throw std::runtime_error("pseudo labels: bad magic in " + path);
  PseudoLabelSet q;
  std::string key;
  size_t count = 0;
  is >> key >> q.domain_id;
  if (key != "domain_id") throw std::runtime_error("pseudo labels: missing domain_id in " + path);
  is >> key >> q.cycle;
  if (key != "cycle") throw std::runtime_error("pseudo labels: missing cycle in " + path);
  is >> key >> count;
  if (key != "count") throw std::runtime_error("pseudo labels: missing count in " + path);
  q.labels.resize(count);
  q.confidence.resize(count);
  for (size_t i = 0; i < count; ++i) {
    size_t idx = 0;
    is >> idx >> q.labels[i] >> q.confidence[i];
    if (!is || idx != i)
      throw std::runtime_error("pseudo labels: malformed row " + std::to_string(i) + " in " +
                               path);
  }
  return q;
}

}  // namespace ssdg
