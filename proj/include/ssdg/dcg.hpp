#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssdg/apl.hpp"
#include "ssdg/dataset.hpp"
#include "ssdg/models.hpp"
#include "ssdg/ops.hpp"
#include "ssdg/sgd.hpp"

namespace ssdg {

struct DcgConfig {
  int epochs = 15;
  int batch_each = 64;  // N labeled + N pseudo-labeled per step
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double keep_rate_start = 1.0;
  double keep_rate_end = 0.5;
  StyleConfusorConfig confusor;
};

// Linear decay from start at epoch 0 to end at the final epoch.
double keep_rate(int epoch, int total_epochs, double start = 1.0, double end = 0.5);

// Indices of the ceil(r*n) smallest losses, ties toward the lower index,
// returned in ascending index order.
std::vector<int> small_loss_select(std::span<const float> losses, double r);

// Instance entropy minus batch entropy:
//   sum_k pbar_k log pbar_k - mean_i sum_k p_ik log p_ik
// Always in [-log K, 0]; zero when all rows are equal.
template <typename T>
TensorT<T> diversity_loss(const TensorT<T>& probs) {
  if (probs.shape().size() != 2)
    throw std::invalid_argument("diversity_loss: expected 2-d probabilities, got " +
                                shape_str(probs.shape()));
  TensorT<T> global = ops::sum_all(ops::xlogx(ops::mean_rows(probs)));
  TensorT<T> instance =
      ops::scale(ops::sum_all(ops::xlogx(probs)), T(1) / static_cast<T>(probs.dim(0)));
  return ops::sub(global, instance);
}

// Merged pseudo-labeled samples from the unlabeled domains. Batches are
// drawn balanced round-robin across domains.
class PseudoPool {
 public:
  PseudoPool() = default;
  PseudoPool(std::vector<const DomainDataset*> domains,
             std::vector<const PseudoLabelSet*> labels);

  size_t size() const { return images_.size(); }
  int num_domains() const { return static_cast<int>(domain_sizes_.size()); }
  size_t domain_size(int d) const { return domain_sizes_[static_cast<size_t>(d)]; }

  // Pool indices are domain-major: offset(domain) + sample index.
  int pool_index(int domain, int sample) const {
    return domain_offsets_[static_cast<size_t>(domain)] + sample;
  }
  int pseudo_label(int pool_idx) const { return pseudo_labels_[static_cast<size_t>(pool_idx)]; }
  int ground_truth(int pool_idx) const { return truth_labels_[static_cast<size_t>(pool_idx)]; }

  Tensor make_batch(std::span<const int> pool_indices) const;
  std::vector<int> labels_for(std::span<const int> pool_indices) const;

  int height = 0, width = 0, num_classes = 0;

 private:
  std::vector<const float*> images_;
  std::vector<int> pseudo_labels_;
  std::vector<int> truth_labels_;  // metrics only
  std::vector<int> domain_offsets_;
  std::vector<size_t> domain_sizes_;
};

struct DcgStepLog {
  float ce_x1 = 0, ce_x2 = 0;   // labeled part, per subnetwork
  float ce_u1 = 0, ce_u2 = 0;   // swapped clean-set part
  float div1 = 0, div2 = 0;     // diversity regularization
};

struct DcgEpochLog {
  DcgStepLog mean;
  double keep_rate = 1.0;
};

// Co-teaching twins with style confusion. The trainer owns the two
// subnetworks, their optimizers and the confusor streams; it persists
// across cycles with the learning rate decayed by the harness.
class DcgTrainer {
 public:
  DcgTrainer(const ArchConfig& arch, const DcgConfig& cfg, uint64_t seed);

  void set_learning_rate(double lr);

  // One co-teaching update on an X batch and a U batch of equal size.
  // unlabeled_terms=false drops every U-side term, reducing the step to two
  // independent supervised steps on X.
  DcgStepLog step(const Tensor& x_images, const std::vector<int>& x_labels,
                  const Tensor& u_images, const std::vector<int>& u_labels, double r,
                  bool unlabeled_terms = true);

  DcgEpochLog run_epoch(const DomainDataset& labeled, const PseudoPool& pool, int epoch,
                        int total_epochs, uint64_t epoch_seed);

  // Mean of the two subnetworks' softmax outputs, inference mode.
  Tensor ensemble_predict(const Tensor& images) const;
  double evaluate_accuracy(const DomainDataset& ds, int batch = 256) const;

  const Subnetwork& net1() const { return net1_; }
  const Subnetwork& net2() const { return net2_; }
  const DcgConfig& config() const { return cfg_; }

  // Update bookkeeping for the swapped-clean-set invariant: pool/batch
  // indices each subnetwork was last updated on.
  const std::vector<int>& last_update_set1() const { return last_updidx1_; }
  const std::vector<int>& last_update_set2() const { return last_updidx2_; }

 private:
  DcgConfig cfg_;
  Subnetwork net1_, net2_;
  SgdOptimizer opt1_, opt2_;
  Rng confusor_rng1_, confusor_rng2_;
  std::vector<int> last_updidx1_, last_updidx2_;
};

}  // namespace ssdg
