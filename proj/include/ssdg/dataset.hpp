#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssdg/rng.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

// Rendering style of one source domain. gap_scale multiplies every deviation
// from the canonical style, so gap_scale = 0 renders identically to the
// canonical domain regardless of the other fields.
struct DomainSpec {
  std::string domain_id;
  std::array<float, 3> foreground_color{0.85f, 0.85f, 0.85f};
  std::array<float, 3> background_color{0.15f, 0.15f, 0.15f};
  float noise_sigma = 0.0f;
  float brightness = 0.0f;
  float contrast = 1.0f;
  float rotation_range = 10.0f;  // degrees
  float texture_frequency = 0.0f;
  float gap_scale = 1.0f;
};

// The canonical style every domain collapses to at gap_scale = 0. Identical
// to the "flat" preset.
DomainSpec canonical_spec();

// Presets: flat, inverted, textured, noisy.
std::vector<DomainSpec> default_domain_specs(float gap_scale);

constexpr int kGlyphClasses = 5;  // disk, cross, square, triangle, ring

// Where a dataset came from; the harness asserts DCG never sees synthesized
// data on its labeled stream.
enum class DataLineage { original, intermediate };

struct Sample {
  std::vector<float> image;  // [3,H,W] row-major
  int class_id = 0;
  uint32_t instance_id = 0;
};

class DomainDataset {
 public:
  std::string domain_id;
  int num_classes = kGlyphClasses;
  int height = 16;
  int width = 16;
  bool labeled = false;
  DataLineage lineage = DataLineage::original;
  std::vector<Sample> samples;
  // Per-sample K-way distributions; non-empty only for synthesized domains.
  std::vector<std::vector<float>> soft_labels;

  size_t size() const { return samples.size(); }
  bool has_soft_labels() const { return !soft_labels.empty(); }

  // Label for a loss computation; refuses to leak ground truth of unlabeled
  // domains into any training path.
  int training_label(size_t i) const;
  std::span<const float> training_soft_label(size_t i) const;

  // Ground truth, for metrics only.
  int eval_label(size_t i) const { return samples[i].class_id; }
};

// Deterministic glyph render; pure function of (spec, class_id, instance_seed).
std::vector<float> render_sample(const DomainSpec& spec, int class_id, uint64_t instance_seed,
                                 int height = 16, int width = 16);

// Class-balanced dataset of n_per_class samples per class.
DomainDataset generate_domain(const DomainSpec& spec, int n_per_class, uint64_t seed,
                              int num_classes = kGlyphClasses, int height = 16, int width = 16);

// Stratified split; val takes round(val_fraction * n) per class.
std::pair<DomainDataset, DomainDataset> split_dataset(const DomainDataset& ds,
                                                      double val_fraction, uint64_t seed);

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, size_t byte_offset)
      : std::runtime_error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  size_t offset;
};

void export_dataset(const DomainDataset& ds, const std::string& path);
DomainDataset import_dataset(const std::string& path);

// Batch of images stacked into one [n,3,H,W] tensor.
Tensor make_image_batch(const DomainDataset& ds, std::span<const int> indices);

}  // namespace ssdg
