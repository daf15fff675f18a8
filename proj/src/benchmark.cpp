#include "ssdg/benchmark.hpp"

#include <algorithm>

#include "ssdg/ops.hpp"
#include "ssdg/sgd.hpp"

namespace ssdg {

std::vector<DomainSpec> benchmark_domains(const BenchmarkConfig& cfg) {
  std::vector<DomainSpec> specs =
      cfg.domains.empty() ? default_domain_specs(cfg.gap_scale) : cfg.domains;
  if (!cfg.domains.empty())
    for (auto& s : specs) s.gap_scale = cfg.gap_scale;
  return specs;
}

std::vector<SsdgTask> make_benchmark(const BenchmarkConfig& cfg) {
  std::vector<DomainSpec> specs = benchmark_domains(cfg);
  if (specs.size() < 4)
    throw ConfigError("make_benchmark: need at least 4 domains, have " +
                      std::to_string(specs.size()));
  std::vector<std::string> ids;
  for (const auto& s : specs) ids.push_back(s.domain_id);
  std::sort(ids.begin(), ids.end());

  std::vector<SsdgTask> tasks;
  for (const auto& labeled : ids) {
    for (const auto& target : ids) {
      if (labeled == target) continue;
      SsdgTask t;
      t.labeled_domain = labeled;
      t.target_domain = target;
      for (const auto& id : ids)
        if (id != labeled && id != target) t.unlabeled_domains.push_back(id);
      t.split_seed = derive_seed(cfg.seed, "split", tasks.size());
      t.val_fraction = cfg.val_fraction;
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

DomainDataset generate_benchmark_domain(const BenchmarkConfig& cfg, const DomainSpec& spec) {
  return generate_domain(spec, cfg.n_per_class, derive_seed(cfg.seed, spec.domain_id),
                         cfg.classes, cfg.image_size, cfg.image_size);
}

double linear_probe_accuracy(const DomainDataset& train_set, const DomainDataset& eval_set,
                             int epochs, double learning_rate, uint64_t seed) {
  const int d = 3 * train_set.height * train_set.width;
  const int k = train_set.num_classes;
  Rng init(derive_seed(seed, "probe-init"));
  std::vector<float> w0(static_cast<size_t>(d) * k);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& v : w0) v = static_cast<float>(init.uniform(-bound, bound));
  Tensor w = Tensor::from_data({d, k}, std::move(w0), true);
  Tensor b = Tensor::zeros({k}, true);
  SgdOptimizer opt({w, b}, learning_rate, 0.9, 0.0);

  const int n = static_cast<int>(train_set.size());
  const int batch = std::min(128, n);
  std::vector<int> order(static_cast<size_t>(n));
  auto flatten = [&](std::span<const int> idx) {
    std::vector<float> data(idx.size() * static_cast<size_t>(d));
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(train_set.samples[static_cast<size_t>(idx[i])].image.data(), d,
                  data.data() + i * static_cast<size_t>(d));
    return Tensor::from_data({static_cast<int>(idx.size()), d}, std::move(data));
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle(derive_seed(seed, "probe-epoch", static_cast<uint64_t>(epoch)));
    shuffle.permutation(order.data(), order.size());
    for (int start = 0; start + batch <= n; start += batch) {
      std::span<const int> idx(order.data() + start, static_cast<size_t>(batch));
      std::vector<int> labels(batch);
      for (int i = 0; i < batch; ++i)
        labels[static_cast<size_t>(i)] =
            train_set.training_label(static_cast<size_t>(idx[static_cast<size_t>(i)]));
      Tensor logits = ops::add_rowvec(ops::matmul(flatten(idx), w), b);
      Tensor loss = ops::softmax_cross_entropy(logits, labels);
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }

  autograd::NoGradGuard no_grad;
  size_t correct = 0;
  const int ne = static_cast<int>(eval_set.size());
  std::vector<int> all(static_cast<size_t>(ne));
  for (int i = 0; i < ne; ++i) all[static_cast<size_t>(i)] = i;
  std::vector<float> data(static_cast<size_t>(ne) * d);
  for (int i = 0; i < ne; ++i)
    std::copy_n(eval_set.samples[static_cast<size_t>(i)].image.data(), d,
                data.data() + static_cast<size_t>(i) * d);
  Tensor logits =
      ops::add_rowvec(ops::matmul(Tensor::from_data({ne, d}, std::move(data)), w), b);
  for (int i = 0; i < ne; ++i) {
    const int pred = ops::argmax_row(logits.data().data() + static_cast<size_t>(i) * k, k);
    if (pred == eval_set.eval_label(static_cast<size_t>(i))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ne);
}

}  // namespace ssdg
