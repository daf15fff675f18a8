#include "ssdg/eid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssdg {

MixMode mix_mode_from_string(const std::string& s) {
  if (s == "cutmix") return MixMode::cutmix;
  if (s == "mixup") return MixMode::mixup;
  if (s == "xu" || s == "x+u") return MixMode::xu;
  throw ConfigError("unknown mixing mode '" + s + "' (expected cutmix|mixup|xu)");
}

std::string mix_mode_to_string(MixMode mode) {
  switch (mode) {
    case MixMode::cutmix: return "cutmix";
    case MixMode::mixup: return "mixup";
    case MixMode::xu: return "xu";
  }
  throw std::logic_error("mix_mode_to_string: bad enum");
}

std::vector<CleanCandidate> agreement_filter(const Subnetwork& net1, const Subnetwork& net2,
                                             const DomainDataset& unlabeled,
                                             const PseudoLabelSet& q, int domain_index,
                                             int batch) {
  if (q.size() != unlabeled.size())
    throw std::invalid_argument("agreement_filter: pseudo labels not aligned with dataset");
  autograd::NoGradGuard no_grad;
  const int n = static_cast<int>(unlabeled.size());
  const int k = unlabeled.num_classes;
  std::vector<CleanCandidate> out;
  for (int start = 0; start < n; start += batch) {
    const int count = std::min(batch, n - start);
    std::vector<int> idx(static_cast<size_t>(count));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor images = make_image_batch(unlabeled, idx);
    const Tensor logits1 = net1.logits(images, false, nullptr);
    const Tensor logits2 = net2.logits(images, false, nullptr);
    std::vector<int> labels(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) labels[static_cast<size_t>(i)] = q.labels[static_cast<size_t>(start + i)];
    const std::vector<float> ce1 = ops::per_sample_cross_entropy(logits1, labels);
    const std::vector<float> ce2 = ops::per_sample_cross_entropy(logits2, labels);
    const Tensor p1 = ops::softmax_rows(logits1);
    const Tensor p2 = ops::softmax_rows(logits2);
    for (int i = 0; i < count; ++i) {
      const int a1 = ops::argmax_row(p1.data().data() + static_cast<size_t>(i) * k, k);
      const int a2 = ops::argmax_row(p2.data().data() + static_cast<size_t>(i) * k, k);
      if (a1 != a2) continue;
      CleanCandidate c;
      c.domain_index = domain_index;
      c.sample_index = start + i;
      c.pseudo_label = labels[static_cast<size_t>(i)];
      c.combined_loss = ce1[static_cast<size_t>(i)] + ce2[static_cast<size_t>(i)];
      out.push_back(c);
    }
  }
  return out;
}

std::vector<CleanCandidate> agreement_filter(const DcgTrainer& dcg,
                                             const DomainDataset& unlabeled,
                                             const PseudoLabelSet& q, int domain_index,
                                             int batch) {
  return agreement_filter(dcg.net1(), dcg.net2(), unlabeled, q, domain_index, batch);
}

CleanSet clean_select(std::vector<CleanCandidate> candidates, double clean_rate, int cycle) {
  if (clean_rate <= 0.0 || clean_rate > 1.0)
    throw std::invalid_argument("clean_select: rate " + std::to_string(clean_rate) +
                                " outside (0,1]");
  CleanSet out;
  out.cycle = cycle;
  out.clean_rate = clean_rate;
  if (candidates.empty()) {
    out.degenerate = true;
    return out;
  }
  const size_t keep =
      static_cast<size_t>(std::ceil(clean_rate * static_cast<double>(candidates.size())));
  std::vector<int> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return candidates[static_cast<size_t>(a)].combined_loss <
           candidates[static_cast<size_t>(b)].combined_loss;
  });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  out.entries.reserve(keep);
  for (const int i : idx) out.entries.push_back(candidates[static_cast<size_t>(i)]);
  return out;
}

AlphaMap alpha_map(MixMode mode, int height, int width, Rng& rng) {
  if (height < 1 || width < 1) throw std::invalid_argument("alpha_map: empty spatial extent");
  AlphaMap out;
  const size_t hw = static_cast<size_t>(height) * width;
  switch (mode) {
    case MixMode::cutmix: {
      // All ones pasted with one zero rectangle; area ratio uniform in
      // [0.1, 0.5], box fully inside so E(alpha) is exact.
      out.map.assign(hw, 1.0f);
      const double ratio = rng.uniform(0.1, 0.5);
      const double side = std::sqrt(ratio);
      const int rh = std::clamp(static_cast<int>(std::lround(side * height)), 1, height);
      const int rw = std::clamp(static_cast<int>(std::lround(side * width)), 1, width);
      const int y0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(height - rh + 1)));
      const int x0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(width - rw + 1)));
      for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) out.map[static_cast<size_t>(y) * width + x] = 0.0f;
      out.mean = 1.0 - static_cast<double>(rh) * rw / static_cast<double>(hw);
      return out;
    }
    case MixMode::mixup: {
      const float v = static_cast<float>(rng.beta(1.0));  // Beta(1,1) = uniform
      out.map.assign(hw, v);
      out.mean = v;
      return out;
    }
    case MixMode::xu: {
      const float v = rng.next_u64() & 1 ? 1.0f : 0.0f;
      out.map.assign(hw, v);
      out.mean = v;
      return out;
    }
  }
  throw std::invalid_argument("alpha_map: bad mode");
}

namespace {

std::vector<float> one_hot(int label, int k) {
  std::vector<float> v(static_cast<size_t>(k), 0.0f);
  v[static_cast<size_t>(label)] = 1.0f;
  return v;
}

}  // namespace

std::pair<std::vector<float>, std::vector<float>> mix_pair(const std::vector<float>& x, int y,
                                                           const std::vector<float>& u, int q,
                                                           const AlphaMap& am, int classes,
                                                           int height, int width) {
  const size_t plane = static_cast<size_t>(height) * width;
  if (x.size() != 3 * plane || u.size() != 3 * plane || am.map.size() != plane)
    throw std::invalid_argument("mix_pair: geometry mismatch");
  std::vector<float> image(x.size());
  for (int ch = 0; ch < 3; ++ch)
    for (size_t p = 0; p < plane; ++p) {
      const size_t idx = static_cast<size_t>(ch) * plane + p;
      const float a = am.map[p];
      image[idx] = a * x[idx] + (1.0f - a) * u[idx];
    }
  const float e = static_cast<float>(am.mean);
  std::vector<float> label(static_cast<size_t>(classes), 0.0f);
  label[static_cast<size_t>(y)] += e;
  label[static_cast<size_t>(q)] += 1.0f - e;
  return {std::move(image), std::move(label)};
}

DomainDataset synthesize_intermediate(const DomainDataset& labeled, const CleanSet& clean,
                                      std::span<const DomainDataset* const> unlabeled_domains,
                                      MixMode mode, Rng& rng) {
  if (labeled.size() == 0) throw std::invalid_argument("synthesize_intermediate: empty labeled set");
  const int k = labeled.num_classes;
  const int h = labeled.height, w = labeled.width;

  DomainDataset out;
  out.domain_id = "intermediate";
  out.num_classes = k;
  out.height = h;
  out.width = w;
  out.labeled = true;
  out.lineage = DataLineage::intermediate;

  auto clean_image = [&](const CleanCandidate& c) -> const std::vector<float>& {
    return unlabeled_domains[static_cast<size_t>(c.domain_index)]
        ->samples[static_cast<size_t>(c.sample_index)]
        .image;
  };

  if (mode == MixMode::xu) {
    // Direct combination: labeled set then clean set, one-hot labels.
    for (size_t i = 0; i < labeled.size(); ++i) {
      out.samples.push_back(labeled.samples[i]);
      out.soft_labels.push_back(one_hot(labeled.training_label(i), k));
    }
    for (const auto& c : clean.entries) {
      Sample s;
      s.image = clean_image(c);
      s.class_id = c.pseudo_label;
      s.instance_id = static_cast<uint32_t>(out.samples.size());
      out.samples.push_back(std::move(s));
      out.soft_labels.push_back(one_hot(c.pseudo_label, k));
    }
    return out;
  }

  if (clean.entries.empty())
    throw std::invalid_argument("synthesize_intermediate: empty clean set for mode " +
                                mix_mode_to_string(mode));

  for (size_t i = 0; i < labeled.size(); ++i) {
    const auto& c =
        clean.entries[static_cast<size_t>(rng.uniform_index(clean.entries.size()))];
    const AlphaMap am = alpha_map(mode, h, w, rng);
    auto [image, label] = mix_pair(labeled.samples[i].image, labeled.training_label(i),
                                   clean_image(c), c.pseudo_label, am, k, h, w);
    Sample s;
    s.class_id = labeled.training_label(i);
    s.instance_id = static_cast<uint32_t>(i);
    s.image = std::move(image);
    out.samples.push_back(std::move(s));
    out.soft_labels.push_back(std::move(label));
  }
  return out;
}

double clean_set_precision(const CleanSet& clean,
                           std::span<const DomainDataset* const> unlabeled_domains) {
  if (clean.entries.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& c : clean.entries) {
    const auto& ds = *unlabeled_domains[static_cast<size_t>(c.domain_index)];
    if (ds.eval_label(static_cast<size_t>(c.sample_index)) == c.pseudo_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(clean.entries.size());
}

}  // namespace ssdg
