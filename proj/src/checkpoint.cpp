#include "ssdg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace ssdg {

namespace {

void write_f32_le(std::ostream& os, float v) {
  const uint32_t bits = std::bit_cast<uint32_t>(v);
  const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff),
                     static_cast<char>((bits >> 24) & 0xff)};
  os.write(b, 4);
}

float read_f32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  const uint32_t bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os << "SSDGCKPT 1\n";
  os << "arch " << (ckpt.arch.empty() ? "-" : ckpt.arch) << "\n";
  os << "params " << ckpt.entries.size() << "\n";
  for (const auto& e : ckpt.entries) {
    os << e.name << " " << e.shape.size();
    size_t numel = 1;
    for (const int d : e.shape) {
      os << " " << d;
      numel *= static_cast<size_t>(d);
    }
    os << "\n";
    if (numel != e.values.size())
      throw std::invalid_argument("checkpoint: entry " + e.name + " has " +
                                  std::to_string(e.values.size()) + " values for shape " +
                                  shape_str(e.shape));
  }
  os << "DATA\n";
  for (const auto& e : ckpt.entries)
    for (const float v : e.values) write_f32_le(os, v);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "SSDGCKPT" || version != 1)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  std::string kw;
  is >> kw >> ckpt.arch;
  if (kw != "arch") throw std::runtime_error("checkpoint: missing arch line in " + path);
  if (ckpt.arch == "-") ckpt.arch.clear();
  size_t count = 0;
  is >> kw >> count;
  if (kw != "params") throw std::runtime_error("checkpoint: missing params line in " + path);
  ckpt.entries.resize(count);
  for (auto& e : ckpt.entries) {
    size_t ndim = 0;
    is >> e.name >> ndim;
    e.shape.resize(ndim);
    size_t numel = 1;
    for (auto& d : e.shape) {
      is >> d;
      numel *= static_cast<size_t>(d);
    }
    e.values.resize(numel);
  }
  is >> kw;
  if (kw != "DATA") throw std::runtime_error("checkpoint: missing DATA marker in " + path);
  is.get();  // newline after marker
  for (auto& e : ckpt.entries)
    for (auto& v : e.values) v = read_f32_le(is);
  if (!is) throw std::runtime_error("checkpoint: truncated payload in " + path);
  return ckpt;
}

}  // namespace ssdg
