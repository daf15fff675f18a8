#include "ssdg/models.hpp"

#include <sstream>

#include "ssdg/checkpoint.hpp"

namespace ssdg {

std::string arch_to_string(const ArchConfig& arch) {
  std::ostringstream os;
  os << "in=" << arch.in_channels << ";widths=";
  for (size_t i = 0; i < arch.widths.size(); ++i) {
    if (i) os << ",";
    os << arch.widths[i];
  }
  os << ";classes=" << arch.classes;
  return os.str();
}

ArchConfig arch_from_string(const std::string& s) {
  ArchConfig arch;
  arch.widths.clear();
  std::istringstream is(s);
  std::string field;
  while (std::getline(is, field, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ConfigError("arch string: missing '=' in '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "in")
      arch.in_channels = std::stoi(val);
    else if (key == "classes")
      arch.classes = std::stoi(val);
    else if (key == "widths") {
      std::istringstream ws(val);
      std::string tok;
      while (std::getline(ws, tok, ',')) arch.widths.push_back(std::stoi(tok));
    } else
      throw ConfigError("arch string: unknown key '" + key + "'");
  }
  if (arch.widths.empty()) throw ConfigError("arch string: no widths in '" + s + "'");
  return arch;
}

void save_subnetwork(const std::string& path, const Subnetwork& net) {
  Checkpoint ckpt;
  ckpt.arch = arch_to_string(net.arch());
  for (const auto& [name, tensor] : net.named_params()) {
    CheckpointEntry e;
    e.name = name;
    e.shape = tensor.shape();
    const auto d = tensor.data();
    e.values.assign(d.begin(), d.end());
    ckpt.entries.push_back(std::move(e));
  }
  save_checkpoint(path, ckpt);
}

Subnetwork load_subnetwork(const std::string& path, const StyleConfusorConfig& confusor) {
  const Checkpoint ckpt = load_checkpoint(path);
  Subnetwork net(arch_from_string(ckpt.arch), confusor, 0);
  auto named = net.named_params();
  if (named.size() != ckpt.entries.size())
    throw std::runtime_error("load_subnetwork: parameter count mismatch in " + path);
  for (size_t i = 0; i < named.size(); ++i) {
    const auto& e = ckpt.entries[i];
    auto& [name, tensor] = named[i];
    if (e.name != name || e.shape != tensor.shape())
      throw std::runtime_error("load_subnetwork: parameter '" + e.name +
                               "' does not match architecture entry '" + name + "'");
    auto d = tensor.data();
    std::copy(e.values.begin(), e.values.end(), d.begin());
  }
  return net;
}

}  // namespace ssdg
