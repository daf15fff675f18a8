#include "ssdg/dcg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssdg/batching.hpp"

namespace ssdg {

double keep_rate(int epoch, int total_epochs, double start, double end) {
  if (epoch < 0 || epoch >= total_epochs)
    throw std::invalid_argument("keep_rate: epoch " + std::to_string(epoch) +
                                " outside [0," + std::to_string(total_epochs) + ")");
  if (total_epochs == 1) return start;
  return start + (end - start) * static_cast<double>(epoch) /
                     static_cast<double>(total_epochs - 1);
}

std::vector<int> small_loss_select(std::span<const float> losses, double r) {
  if (losses.empty()) throw std::invalid_argument("small_loss_select: empty losses");
  if (r <= 0.0 || r > 1.0)
    throw std::invalid_argument("small_loss_select: rate " + std::to_string(r) +
                                " outside (0,1]");
  const size_t n = losses.size();
  const size_t keep = static_cast<size_t>(std::ceil(r * static_cast<double>(n)));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return losses[static_cast<size_t>(a)] <
                                              losses[static_cast<size_t>(b)]; });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PseudoPool::PseudoPool(std::vector<const DomainDataset*> domains,
                       std::vector<const PseudoLabelSet*> labels) {
  if (domains.size() != labels.size())
    throw std::invalid_argument("pseudo pool: domain/label list size mismatch");
  for (size_t d = 0; d < domains.size(); ++d) {
    const DomainDataset& ds = *domains[d];
    const PseudoLabelSet& q = *labels[d];
    if (q.size() != ds.size())
      throw std::invalid_argument("pseudo pool: label set for '" + ds.domain_id +
                                  "' has wrong length");
    if (height == 0) {
      height = ds.height;
      width = ds.width;
      num_classes = ds.num_classes;
    } else if (height != ds.height || width != ds.width || num_classes != ds.num_classes) {
      throw std::invalid_argument("pseudo pool: incompatible dataset geometry");
    }
    domain_offsets_.push_back(static_cast<int>(images_.size()));
    domain_sizes_.push_back(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
      images_.push_back(ds.samples[i].image.data());
      pseudo_labels_.push_back(q.labels[i]);
      truth_labels_.push_back(ds.eval_label(i));
    }
  }
}

Tensor PseudoPool::make_batch(std::span<const int> pool_indices) const {
  const size_t pixels = static_cast<size_t>(3) * height * width;
  std::vector<float> data(pool_indices.size() * pixels);
  for (size_t i = 0; i < pool_indices.size(); ++i)
    std::copy_n(images_[static_cast<size_t>(pool_indices[i])], pixels, data.data() + i * pixels);
  return Tensor::from_data({static_cast<int>(pool_indices.size()), 3, height, width},
                           std::move(data));
}

std::vector<int> PseudoPool::labels_for(std::span<const int> pool_indices) const {
  std::vector<int> out;
  out.reserve(pool_indices.size());
  for (const int i : pool_indices) out.push_back(pseudo_labels_[static_cast<size_t>(i)]);
  return out;
}

DcgTrainer::DcgTrainer(const ArchConfig& arch, const DcgConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      net1_(arch, cfg.confusor, derive_seed(seed, "subnet", 1)),
      net2_(arch, cfg.confusor, derive_seed(seed, "subnet", 2)),
      opt1_(net1_.params(), cfg.lr, cfg.momentum, cfg.weight_decay),
      opt2_(net2_.params(), cfg.lr, cfg.momentum, cfg.weight_decay),
      confusor_rng1_(derive_seed(seed, "confusor", 1)),
      confusor_rng2_(derive_seed(seed, "confusor", 2)) {
  if (cfg.epochs < 1 || cfg.batch_each < 1) throw ConfigError("dcg: epochs and batch must be >= 1");
  if (cfg.keep_rate_end < 0.5 || cfg.keep_rate_start > 1.0 ||
      cfg.keep_rate_end > cfg.keep_rate_start)
    throw ConfigError("dcg: keep rate schedule must stay within [0.5, 1]");
}

void DcgTrainer::set_learning_rate(double lr) {
  opt1_.set_learning_rate(lr);
  opt2_.set_learning_rate(lr);
}

DcgStepLog DcgTrainer::step(const Tensor& x_images, const std::vector<int>& x_labels,
                            const Tensor& u_images, const std::vector<int>& u_labels, double r,
                            bool unlabeled_terms) {
  const int n = x_images.dim(0);
  if (u_images.dim(0) != n)
    throw std::invalid_argument("dcg step: labeled batch " + std::to_string(n) +
                                " != pseudo batch " + std::to_string(u_images.dim(0)));
  const int k = net1_.arch().classes;

  // Both subnetworks see the same concatenated 2N batch; the confusor mixes
  // labeled and pseudo-labeled styles inside each forward.
  Tensor batch = ops::concat0(x_images, u_images);
  Tensor logits1 = net1_.logits(batch, true, &confusor_rng1_);
  Tensor logits2 = net2_.logits(batch, true, &confusor_rng2_);

  std::vector<int> x_rows(static_cast<size_t>(n));
  std::iota(x_rows.begin(), x_rows.end(), 0);
  Tensor ce_x1 = ops::softmax_cross_entropy(ops::index_select0(logits1, x_rows), x_labels);
  Tensor ce_x2 = ops::softmax_cross_entropy(ops::index_select0(logits2, x_rows), x_labels);

  DcgStepLog log;
  log.ce_x1 = ce_x1.item();
  log.ce_x2 = ce_x2.item();

  Tensor loss1 = ce_x1;
  Tensor loss2 = ce_x2;

  if (unlabeled_terms) {
    // Per-sample losses on the U half, from the same styled forward.
    auto part_losses = [&](const Tensor& logits) {
      std::vector<float> psl(static_cast<size_t>(n));
      const float* base = logits.data().data() + static_cast<size_t>(n) * k;
      for (int i = 0; i < n; ++i) {
        const float* row = base + static_cast<size_t>(i) * k;
        float mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        float sum = 0;
        for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        psl[static_cast<size_t>(i)] =
            -(row[u_labels[static_cast<size_t>(i)]] - mx - std::log(sum));
      }
      return psl;
    };
    const std::vector<float> psl1 = part_losses(logits1);
    const std::vector<float> psl2 = part_losses(logits2);
    const std::vector<int> sel1 = small_loss_select(psl1, r);
    const std::vector<int> sel2 = small_loss_select(psl2, r);

    // Swapped: each subnetwork learns from its peer's clean picks.
    auto clean_ce = [&](const Tensor& logits, const std::vector<int>& sel) {
      std::vector<int> rows;
      std::vector<int> labels;
      rows.reserve(sel.size());
      labels.reserve(sel.size());
      for (const int i : sel) {
        rows.push_back(n + i);
        labels.push_back(u_labels[static_cast<size_t>(i)]);
      }
      return ops::softmax_cross_entropy(ops::index_select0(logits, rows), labels);
    };
    Tensor ce_u1 = clean_ce(logits1, sel2);
    Tensor ce_u2 = clean_ce(logits2, sel1);
    last_updidx1_ = sel2;
    last_updidx2_ = sel1;

    std::vector<int> u_rows(static_cast<size_t>(n));
    std::iota(u_rows.begin(), u_rows.end(), n);
    Tensor div1 = diversity_loss(ops::softmax_rows(ops::index_select0(logits1, u_rows)));
    Tensor div2 = diversity_loss(ops::softmax_rows(ops::index_select0(logits2, u_rows)));

    log.ce_u1 = ce_u1.item();
    log.ce_u2 = ce_u2.item();
    log.div1 = div1.item();
    log.div2 = div2.item();

    loss1 = ops::add(ops::add(ce_x1, ce_u1), div1);
    loss2 = ops::add(ops::add(ce_x2, ce_u2), div2);
  }

  opt1_.zero_grad();
  loss1.backward();
  opt1_.step();
  opt2_.zero_grad();
  loss2.backward();
  opt2_.step();
  return log;
}

DcgEpochLog DcgTrainer::run_epoch(const DomainDataset& labeled, const PseudoPool& pool,
                                  int epoch, int total_epochs, uint64_t epoch_seed) {
  if (labeled.lineage != DataLineage::original)
    throw std::logic_error("dcg: labeled stream must be the original labeled domain");
  if (pool.size() == 0) throw std::invalid_argument("dcg: empty pseudo pool");

  const int n = cfg_.batch_each;
  const double r = keep_rate(epoch, total_epochs, cfg_.keep_rate_start, cfg_.keep_rate_end);

  BatchCursor lab_cursor(labeled.size(), derive_seed(epoch_seed, "dcg-labeled"));
  // Balanced round-robin across the unlabeled domains.
  std::vector<BatchCursor> pool_cursors;
  for (int d = 0; d < pool.num_domains(); ++d)
    pool_cursors.emplace_back(pool.domain_size(d),
                              derive_seed(epoch_seed, "dcg-pool", static_cast<uint64_t>(d)));

  // One epoch sweeps the labeled set; the pool cursors reshuffle per epoch,
  // so a larger pool is covered across epochs.
  const int iters = static_cast<int>((labeled.size() + n - 1) / static_cast<size_t>(n));

  DcgEpochLog out;
  out.keep_rate = r;
  int turn = 0;
  for (int it = 0; it < iters; ++it) {
    const std::vector<int> xi = lab_cursor.next(n);
    std::vector<int> ui(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int d = turn;
      turn = (turn + 1) % pool.num_domains();
      ui[static_cast<size_t>(i)] = pool.pool_index(d, pool_cursors[static_cast<size_t>(d)].next(1)[0]);
    }
    std::vector<int> x_labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      x_labels[static_cast<size_t>(i)] = labeled.training_label(static_cast<size_t>(xi[static_cast<size_t>(i)]));
    const DcgStepLog s = step(make_image_batch(labeled, xi), x_labels, pool.make_batch(ui),
                              pool.labels_for(ui), r);
    out.mean.ce_x1 += s.ce_x1;
    out.mean.ce_x2 += s.ce_x2;
    out.mean.ce_u1 += s.ce_u1;
    out.mean.ce_u2 += s.ce_u2;
    out.mean.div1 += s.div1;
    out.mean.div2 += s.div2;
  }
  const float inv = 1.0f / static_cast<float>(iters);
  out.mean.ce_x1 *= inv;
  out.mean.ce_x2 *= inv;
  out.mean.ce_u1 *= inv;
  out.mean.ce_u2 *= inv;
  out.mean.div1 *= inv;
  out.mean.div2 *= inv;
  return out;
}

Tensor DcgTrainer::ensemble_predict(const Tensor& images) const {
  autograd::NoGradGuard no_grad;
  Tensor p1 = net1_.predict(images);
  Tensor p2 = net2_.predict(images);
  return ops::scale(ops::add(p1, p2), 0.5f);
}

double DcgTrainer::evaluate_accuracy(const DomainDataset& ds, int batch) const {
  autograd::NoGradGuard no_grad;
  const int n = static_cast<int>(ds.size());
  const int k = ds.num_classes;
  size_t hits = 0;
  for (int start = 0; start < n; start += batch) {
    const int count = std::min(batch, n - start);
    std::vector<int> idx(static_cast<size_t>(count));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = ensemble_predict(make_image_batch(ds, idx));
    for (int i = 0; i < count; ++i) {
      const int pred = ops::argmax_row(probs.data().data() + static_cast<size_t>(i) * k, k);
      if (pred == ds.eval_label(static_cast<size_t>(start + i))) ++hits;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace ssdg
