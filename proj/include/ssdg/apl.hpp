#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssdg/dataset.hpp"
#include "ssdg/models.hpp"
#include "ssdg/ops.hpp"
#include "ssdg/sgd.hpp"

namespace ssdg {

struct AplConfig {
  int epochs = 30;
  int batch_size = 128;
  int n_inner = 4;  // extractor alignment steps per iteration
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// Pseudo labels for one unlabeled domain, index-aligned with its dataset.
struct PseudoLabelSet {
  std::string domain_id;
  int cycle = 0;
  std::vector<int> labels;
  std::vector<float> confidence;  // max softmax per sample

  size_t size() const { return labels.size(); }
};

// Mean over samples and classes of |p1 - p2|; bounded by [0, 2].
template <typename T>
TensorT<T> classifier_discrepancy(const TensorT<T>& p1, const TensorT<T>& p2) {
  return ops::mean_all(ops::abs(ops::sub(p1, p2)));
}

// Labels for one batch: hard class ids, or row distributions when the
// labeled stream is a synthesized intermediate domain.
struct BatchLabels {
  std::vector<int> hard;
  std::vector<float> soft;  // flattened n*K; non-empty wins
  bool is_soft() const { return !soft.empty(); }
};

BatchLabels gather_labels(const DomainDataset& ds, std::span<const int> indices);

// Cross entropy dispatching on hard vs soft labels.
Tensor label_cross_entropy(const Tensor& logits, const BatchLabels& labels);

// The three-step adversarial schedule. Exposed step-by-step so the update
// masks (heads-only, extractor-only) can be exercised directly.
class AplTrainer {
 public:
  AplTrainer(McdModel& model, const AplConfig& cfg);

  struct SupervisedLog {
    float ce1, ce2;
  };

  // (A) minimize CE of both heads on the labeled batch; updates everything.
  SupervisedLog step_supervised(const Tensor& x_images, const BatchLabels& labels);

  // (B) minimize CE minus discrepancy; updates the heads only. Returns the
  // discrepancy on the unlabeled batch.
  float step_maximize_discrepancy(const Tensor& x_images, const BatchLabels& labels,
                                  const Tensor& u_images);

  // (C) minimize discrepancy; updates the extractor only.
  float step_minimize_discrepancy(const Tensor& u_images);

  void set_learning_rate(double lr) { opt_.set_learning_rate(lr); }
  McdModel& model() { return model_; }

 private:
  Tensor discrepancy_on(const Tensor& u_images);

  McdModel& model_;
  AplConfig cfg_;
  SgdOptimizer opt_;
  size_t n_extractor_;
};

struct AplEpochLog {
  float ce1 = 0, ce2 = 0;
  float discrepancy_b = 0;  // after step B
  float discrepancy_c = 0;  // after the inner extractor steps
};

// Full training run of one APL model on (labeled, unlabeled). The unlabeled
// dataset's ground truth is never read.
std::vector<AplEpochLog> apl_train(McdModel& model, const DomainDataset& labeled,
                                   const DomainDataset& unlabeled, const AplConfig& cfg,
                                   uint64_t seed);

// Argmax of the averaged two-head softmax; ties toward the lower class id.
PseudoLabelSet generate_pseudo_labels(const McdModel& model, const DomainDataset& unlabeled,
                                      int cycle = 0, int batch = 256);

// Metrics-only comparison against retained ground truth.
double pseudo_label_accuracy(const PseudoLabelSet& q, const DomainDataset& truth);

void save_pseudo_labels(const std::string& path, const PseudoLabelSet& q);
PseudoLabelSet load_pseudo_labels(const std::string& path);

}  // namespace ssdg
