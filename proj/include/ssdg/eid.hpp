#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssdg/apl.hpp"
#include "ssdg/dataset.hpp"
#include "ssdg/dcg.hpp"

namespace ssdg {

enum class MixMode { cutmix, mixup, xu };

MixMode mix_mode_from_string(const std::string& s);
std::string mix_mode_to_string(MixMode mode);

// One agreement-passing pseudo-labeled sample with its combined loss
// L_ce(theta1) + L_ce(theta2) against the pseudo label.
struct CleanCandidate {
  int domain_index = 0;
  int sample_index = 0;
  int pseudo_label = 0;
  float combined_loss = 0;
};

struct CleanSet {
  std::vector<CleanCandidate> entries;
  int cycle = 0;
  double clean_rate = 0;
  bool degenerate = false;  // no candidates survived agreement
};

// Keeps sample i iff the two subnetworks' argmax predictions agree
// (inference mode, ties toward the lower class id).
std::vector<CleanCandidate> agreement_filter(const Subnetwork& net1, const Subnetwork& net2,
                                             const DomainDataset& unlabeled,
                                             const PseudoLabelSet& q, int domain_index = 0,
                                             int batch = 256);
std::vector<CleanCandidate> agreement_filter(const DcgTrainer& dcg,
                                             const DomainDataset& unlabeled,
                                             const PseudoLabelSet& q, int domain_index = 0,
                                             int batch = 256);

// The ceil(R * |candidates|) smallest combined losses, ties toward the lower
// candidate index. An empty candidate list yields a flagged empty set.
CleanSet clean_select(std::vector<CleanCandidate> candidates, double clean_rate, int cycle = 0);

struct AlphaMap {
  std::vector<float> map;  // H*W weighting in [0,1]
  double mean = 0;         // E(alpha), always the exact arithmetic mean
};

AlphaMap alpha_map(MixMode mode, int height, int width, Rng& rng);

// One fused pair: x = alpha*x + (1-alpha)*u per channel,
// y = E(alpha)*onehot(y) + (1-E(alpha))*onehot(q).
std::pair<std::vector<float>, std::vector<float>> mix_pair(const std::vector<float>& x, int y,
                                                           const std::vector<float>& u, int q,
                                                           const AlphaMap& am, int classes,
                                                           int height, int width);

// Fuses the labeled domain with the clean set into the intermediate domain:
// x = alpha*x + (1-alpha)*u per channel, y = E(alpha)*onehot(y) +
// (1-E(alpha))*onehot(q). XU concatenates the two sets unchanged instead.
DomainDataset synthesize_intermediate(const DomainDataset& labeled, const CleanSet& clean,
                                      std::span<const DomainDataset* const> unlabeled_domains,
                                      MixMode mode, Rng& rng);

// Metrics only: fraction of clean-set members whose pseudo label matches the
// generator's ground truth.
double clean_set_precision(const CleanSet& clean,
                           std::span<const DomainDataset* const> unlabeled_domains);

}  // namespace ssdg
