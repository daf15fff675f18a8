#include "ssdg/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace ssdg {

DomainSpec canonical_spec() {
  DomainSpec s;
  s.domain_id = "canonical";
  return s;  // field defaults are the canonical style
}

std::vector<DomainSpec> default_domain_specs(float gap_scale) {
  std::vector<DomainSpec> specs(4);

  specs[0].domain_id = "flat";

  specs[1].domain_id = "inverted";
  specs[1].foreground_color = {0.12f, 0.12f, 0.18f};
  specs[1].background_color = {0.92f, 0.88f, 0.84f};

  specs[2].domain_id = "textured";
  specs[2].foreground_color = {0.90f, 0.40f, 0.30f};
  specs[2].background_color = {0.25f, 0.50f, 0.55f};
  specs[2].texture_frequency = 3.0f;
  specs[2].rotation_range = 14.0f;

  specs[3].domain_id = "noisy";
  specs[3].foreground_color = {0.40f, 0.85f, 0.50f};
  specs[3].background_color = {0.35f, 0.22f, 0.45f};
  specs[3].noise_sigma = 0.22f;
  specs[3].brightness = 0.06f;
  specs[3].contrast = 0.92f;

  for (auto& s : specs) s.gap_scale = gap_scale;
  return specs;
}

int DomainDataset::training_label(size_t i) const {
  if (!labeled)
    throw std::logic_error("training_label: dataset '" + domain_id +
                           "' is unlabeled; ground truth is metrics-only");
  return samples[i].class_id;
}

std::span<const float> DomainDataset::training_soft_label(size_t i) const {
  if (!labeled || soft_labels.empty())
    throw std::logic_error("training_soft_label: dataset '" + domain_id +
                           "' carries no soft labels");
  return {soft_labels[i].data(), soft_labels[i].size()};
}

namespace {

constexpr double kPi = 3.14159265358979323846;

float lerp_to_canon(float canon, float value, float gap) { return canon + gap * (value - canon); }

struct EffectiveStyle {
  std::array<float, 3> fg, bg;
  float noise_sigma, brightness, contrast, rotation_range, texture_frequency;
};

EffectiveStyle effective_style(const DomainSpec& spec) {
  const DomainSpec canon = canonical_spec();
  EffectiveStyle e;
  for (int c = 0; c < 3; ++c) {
    e.fg[c] = lerp_to_canon(canon.foreground_color[c], spec.foreground_color[c], spec.gap_scale);
    e.bg[c] = lerp_to_canon(canon.background_color[c], spec.background_color[c], spec.gap_scale);
  }
  e.noise_sigma = lerp_to_canon(canon.noise_sigma, spec.noise_sigma, spec.gap_scale);
  e.brightness = lerp_to_canon(canon.brightness, spec.brightness, spec.gap_scale);
  e.contrast = lerp_to_canon(canon.contrast, spec.contrast, spec.gap_scale);
  e.rotation_range = lerp_to_canon(canon.rotation_range, spec.rotation_range, spec.gap_scale);
  e.texture_frequency =
      lerp_to_canon(canon.texture_frequency, spec.texture_frequency, spec.gap_scale);
  return e;
}

bool glyph_inside(int class_id, double x, double y, double r) {
  switch (class_id) {
    case 0:  // disk
      return x * x + y * y <= r * r;
    case 1: {  // cross
      const double ax = std::fabs(x), ay = std::fabs(y);
      return (ax <= 0.38 * r && ay <= 1.05 * r) || (ay <= 0.38 * r && ax <= 1.05 * r);
    }
    case 2:  // square
      return std::max(std::fabs(x), std::fabs(y)) <= 0.82 * r;
    case 3: {  // triangle with apex up
      const double x1 = 0.0, y1 = -1.15 * r;
      const double x2 = -1.05 * r, y2 = 0.85 * r;
      const double x3 = 1.05 * r, y3 = 0.85 * r;
      const double d1 = (x - x2) * (y1 - y2) - (x1 - x2) * (y - y2);
      const double d2 = (x - x3) * (y2 - y3) - (x2 - x3) * (y - y3);
      const double d3 = (x - x1) * (y3 - y1) - (x3 - x1) * (y - y1);
      const bool neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
      const bool pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
      return !(neg && pos);
    }
    case 4: {  // ring
      const double d2 = x * x + y * y;
      return d2 >= 0.55 * r * 0.55 * r && d2 <= 1.05 * r * 1.05 * r;
    }
    default:
      throw std::invalid_argument("render_sample: unknown class id " + std::to_string(class_id));
  }
}

}  // namespace

std::vector<float> render_sample(const DomainSpec& spec, int class_id, uint64_t instance_seed,
                                 int height, int width) {
  if (class_id < 0 || class_id >= kGlyphClasses)
    throw std::invalid_argument("render_sample: class id " + std::to_string(class_id) +
                                " outside [0," + std::to_string(kGlyphClasses) + ")");
  const EffectiveStyle e = effective_style(spec);
  Rng rng(instance_seed);

  // Fixed draw order and count, so equal-style specs render identically.
  const double jx = rng.uniform(-1.5, 1.5);
  const double jy = rng.uniform(-1.5, 1.5);
  const double size_scale = rng.uniform(0.8, 1.15);
  const double rot_deg = rng.uniform(-e.rotation_range, e.rotation_range);
  const double tex_angle = rng.uniform(0.0, kPi);
  const double tex_phase = rng.uniform(0.0, 2.0 * kPi);

  const double cx = width * 0.5 + jx;
  const double cy = height * 0.5 + jy;
  const double radius = 0.30 * std::min(width, height) * size_scale;
  const double theta = rot_deg * kPi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double tex_cx = std::cos(tex_angle), tex_cy = std::sin(tex_angle);
  const float tex_amp = 0.3f * std::min(e.texture_frequency, 1.0f);

  std::vector<float> img(static_cast<size_t>(3) * height * width);
  const size_t plane = static_cast<size_t>(height) * width;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // 2x2 subsample coverage for soft glyph edges
      int inside = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx - cx;
          const double py = y + 0.25 + 0.5 * sy - cy;
          const double rx = ct * px + st * py;
          const double ry = -st * px + ct * py;
          if (glyph_inside(class_id, rx, ry, radius)) ++inside;
        }
      const float cov = static_cast<float>(inside) * 0.25f;

      float tex = 0.0f;
      if (tex_amp != 0.0f) {
        const double u = (x + 0.5) / width, v = (y + 0.5) / height;
        tex = tex_amp * static_cast<float>(std::sin(
                            2.0 * kPi * e.texture_frequency * (u * tex_cx + v * tex_cy) +
                            tex_phase));
      }

      for (int c = 0; c < 3; ++c) {
        float bg = e.bg[c];
        if (tex != 0.0f) bg = bg * (1.0f + tex);
        img[c * plane + static_cast<size_t>(y) * width + x] =
            bg * (1.0f - cov) + e.fg[c] * cov;
      }
    }
  }

  // Photometric stages are skipped when they are exact no-ops so that the
  // flat domain keeps bit-exact background pixels.
  if (e.contrast != 1.0f)
    for (auto& v : img) v = (v - 0.5f) * e.contrast + 0.5f;
  if (e.brightness != 0.0f)
    for (auto& v : img) v += e.brightness;
  if (e.noise_sigma != 0.0f)
    for (auto& v : img) v += e.noise_sigma * static_cast<float>(rng.gaussian());
  for (auto& v : img) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

DomainDataset generate_domain(const DomainSpec& spec, int n_per_class, uint64_t seed,
                              int num_classes, int height, int width) {
  if (n_per_class < 1) throw std::invalid_argument("generate_domain: n_per_class must be >= 1");
  if (num_classes < 1 || num_classes > kGlyphClasses)
    throw std::invalid_argument("generate_domain: class count must be in [1," +
                                std::to_string(kGlyphClasses) + "]");
  DomainDataset ds;
  ds.domain_id = spec.domain_id;
  ds.num_classes = num_classes;
  ds.height = height;
  ds.width = width;
  ds.samples.reserve(static_cast<size_t>(num_classes) * n_per_class);
  for (int cls = 0; cls < num_classes; ++cls) {
    for (int i = 0; i < n_per_class; ++i) {
      Sample s;
      s.class_id = cls;
      s.instance_id = static_cast<uint32_t>(cls * n_per_class + i);
      s.image = render_sample(spec, cls,
                              derive_seed(seed, "sample", static_cast<uint64_t>(cls),
                                          static_cast<uint64_t>(i)),
                              height, width);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::pair<DomainDataset, DomainDataset> split_dataset(const DomainDataset& ds,
                                                      double val_fraction, uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("split_dataset: val fraction must be in [0,1)");
  DomainDataset train = ds, val = ds;
  train.samples.clear();
  val.samples.clear();
  train.soft_labels.clear();
  val.soft_labels.clear();
  // Stratified: shuffle each class's indices and peel off the val share.
  for (int cls = 0; cls < ds.num_classes; ++cls) {
    std::vector<int> idx;
    for (size_t i = 0; i < ds.samples.size(); ++i)
      if (ds.samples[i].class_id == cls) idx.push_back(static_cast<int>(i));
    std::vector<int> perm(idx.size());
    Rng rng(derive_seed(seed, "split", static_cast<uint64_t>(cls)));
    rng.permutation(perm.data(), perm.size());
    const size_t n_val = static_cast<size_t>(std::llround(val_fraction * idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) {
      const auto& s = ds.samples[static_cast<size_t>(idx[static_cast<size_t>(perm[i])])];
      (i < n_val ? val : train).samples.push_back(s);
    }
  }
  return {std::move(train), std::move(val)};
}

namespace {

void write_u32_le(std::ostream& os, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void write_f32_le(std::ostream& os, float v) { write_u32_le(os, std::bit_cast<uint32_t>(v)); }

size_t stream_offset(std::istream& is) {
  is.clear();
  const auto pos = static_cast<std::streamoff>(is.tellg());
  return pos < 0 ? 0 : static_cast<size_t>(pos);
}

uint32_t read_u32_le(std::istream& is, const char* what) {
  const size_t at = stream_offset(is);
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError(std::string("dataset: truncated payload reading ") + what, at);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float read_f32_le(std::istream& is, const char* what) {
  return std::bit_cast<float>(read_u32_le(is, what));
}

}  // namespace

void export_dataset(const DomainDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  const bool soft = ds.has_soft_labels();
  os << "SSDGSET 1\n";
  os << "domain_id " << ds.domain_id << "\n";
  os << "classes " << ds.num_classes << "\n";
  os << "height " << ds.height << "\n";
  os << "width " << ds.width << "\n";
  os << "count " << ds.samples.size() << "\n";
  os << "labeled " << (ds.labeled ? 1 : 0) << "\n";
  os << "soft " << (soft ? 1 : 0) << "\n";
  os << "DATA\n";
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (soft) {
      for (int k = 0; k < ds.num_classes; ++k) write_f32_le(os, ds.soft_labels[i][k]);
    } else {
      write_u32_le(os, static_cast<uint32_t>(s.class_id));
    }
    write_u32_le(os, s.instance_id);
    for (const float v : s.image) write_f32_le(os, v);
  }
  if (!os) throw std::runtime_error("dataset: write failed for " + path);
}

DomainDataset import_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open " + path);

  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("dataset: " + msg + " in " + path, stream_offset(is));
  };

  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (!is || magic != "SSDGSET" || version != 1) throw fail("bad magic/version");

  DomainDataset ds;
  size_t count = 0;
  int labeled = 0, soft = 0;
  std::string key;
  for (int line = 0; line < 7; ++line) {
    is >> key;
    if (!is) throw fail("truncated header");
    if (key == "domain_id")
      is >> ds.domain_id;
    else if (key == "classes")
      is >> ds.num_classes;
    else if (key == "height")
      is >> ds.height;
    else if (key == "width")
      is >> ds.width;
    else if (key == "count")
      is >> count;
    else if (key == "labeled")
      is >> labeled;
    else if (key == "soft")
      is >> soft;
    else
      throw fail("unknown header key '" + key + "'");
    if (!is) throw fail("malformed header value for '" + key + "'");
  }
  is >> key;
  if (!is || key != "DATA") throw fail("missing DATA marker");
  is.get();
  if (ds.num_classes < 1 || ds.height < 1 || ds.width < 1) throw fail("invalid header geometry");

  ds.labeled = labeled != 0;
  const size_t pixels = static_cast<size_t>(3) * ds.height * ds.width;
  ds.samples.resize(count);
  if (soft) ds.soft_labels.resize(count);
  for (size_t i = 0; i < count; ++i) {
    auto& s = ds.samples[i];
    if (soft) {
      auto& sl = ds.soft_labels[i];
      sl.resize(static_cast<size_t>(ds.num_classes));
      for (auto& v : sl) v = read_f32_le(is, "soft label");
      s.class_id = static_cast<int>(std::max_element(sl.begin(), sl.end()) - sl.begin());
    } else {
      const uint32_t cls = read_u32_le(is, "class id");
      if (cls >= static_cast<uint32_t>(ds.num_classes))
        throw fail("class id " + std::to_string(cls) + " exceeds header class count");
      s.class_id = static_cast<int>(cls);
    }
    s.instance_id = read_u32_le(is, "instance id");
    s.image.resize(pixels);
    for (auto& v : s.image) v = read_f32_le(is, "pixel");
  }
  return ds;
}

Tensor make_image_batch(const DomainDataset& ds, std::span<const int> indices) {
  const size_t pixels = static_cast<size_t>(3) * ds.height * ds.width;
  std::vector<float> data(indices.size() * pixels);
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy_n(ds.samples[static_cast<size_t>(indices[i])].image.data(), pixels,
                data.data() + i * pixels);
  return Tensor::from_data({static_cast<int>(indices.size()), 3, ds.height, ds.width},
                           std::move(data));
}

}  // namespace ssdg
