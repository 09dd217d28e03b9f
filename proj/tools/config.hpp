#pragma once

// INI experiment configuration: schema with defaults, strict key checking,
// typed access and an echo of the effective values.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "teu/core.hpp"

namespace teu::cli {

namespace pt = boost::property_tree;

struct Field {
  std::string key;
  std::string fallback;
  std::string doc;
};

using Schema = std::vector<std::pair<std::string, std::vector<Field>>>;

inline const Schema& schema() {
  static const Schema s = {
      {"data",
       {{"size", "32", "image height and width"},
        {"coils", "4", "number of receive coils"},
        {"sigma", "0.01", "k-space noise std per real/imag part"},
        {"ellipses", "6", "ellipses per phantom"},
        {"seed", "0", "seed for phantoms, coil maps and noise"},
        {"dir", "", "directory written by `teu phantom`; empty = simulate"},
        {"image", "", "recon only: KTN image file; empty = phantom from seed"},
        {"sens", "", "recon only: KTN sensitivity file; empty = simulated"}}},
      {"mask",
       {{"type", "equispaced", "equispaced | random"},
        {"R", "4", "acceleration"},
        {"acs", "4", "fully sampled central columns"},
        {"seed", "0", "seed for random masks"},
        {"file", "", "KTN mask file; overrides type/R/acs"}}},
      {"model",
       {{"prox", "tikhonov", "identity | soft_threshold | tikhonov | resnet | unet"},
        {"prox_param", "0.1", "threshold (soft_threshold) or weight (tikhonov)"},
        {"scale", "toy", "toy | full network size"},
        {"checkpoint", "", "checkpoint directory for learned priors"},
        {"seed", "0", "network initialisation seed"}}},
      {"unroll",
       {{"algorithm", "alg1", "alg1 | vsqp | admm | vsqp_te | admm_te | vamp"},
        {"sharing", "auto", "auto | shared | unshared | time_embedded"},
        {"T", "10", "unrolls"},
        {"cg_iters", "15", "inner CG iterations"},
        {"mu", "auto", "data-consistency weight; auto = algorithm default"},
        {"rho", "0.1", "Onsager weight (alg1)"},
        {"lambda", "0.1", "dual step (admm)"},
        {"vamp_iters", "20", "VAMP iterations"},
        {"damping", "0.9", "VAMP damping in (0, 1]"}}},
      {"train",
       {{"count", "20", "simulated training samples when data.dir is empty"},
        {"epochs", "10", "epochs"},
        {"batch_size", "1", "samples per Adam step"},
        {"lr", "5e-4", "Adam learning rate"},
        {"seed", "0", "shuffle seed"}}},
      {"eval",
       {{"dir", "", "held-out directory written by `teu phantom`; empty = simulate"},
        {"count", "10", "simulated test samples when eval.dir is empty"},
        {"seed", "1", "data seed for simulated test samples"},
        {"source", "model", "model | zero_filled | reference"},
        {"crop", "0", "centre crop size for metrics; 0 = full image"}}},
  };
  return s;
}

inline bool is_path_key(const std::string& section, const std::string& key) {
  return (section == "data" && (key == "dir" || key == "image" || key == "sens")) ||
         (section == "mask" && key == "file") || (section == "eval" && key == "dir") ||
         (section == "model" && key == "checkpoint");
}

class Config {
 public:
  Config() {
    for (const auto& [section, fields] : schema())
      for (const auto& f : fields) values_[section + "." + f.key] = f.fallback;
  }

  /// Reads an INI file, rejecting unknown sections and keys. Relative paths
  /// are resolved against the file's directory.
  static Config load(const std::filesystem::path& file) {
    Config c;
    pt::ptree tree;
    try {
      pt::read_ini(file.string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError("config", e.message() + " (" + file.string() + ")");
    }
    const auto base = std::filesystem::absolute(file).parent_path();
    for (const auto& [section, node] : tree) {
      if (node.empty() && !node.data().empty()) throw ConfigError(section, "keys must live inside a [section]");
      for (const auto& [key, leaf] : node) {
        const std::string path = section + "." + key;
        if (!c.values_.contains(path)) throw ConfigError(path, "unknown key");
        std::string v = leaf.data();
        if (is_path_key(section, key) && !v.empty() && std::filesystem::path(v).is_relative())
          v = (base / v).lexically_normal().string();
        c.values_[path] = v;
      }
    }
    return c;
  }

  void set(const std::string& path, const std::string& v) {
    if (!values_.contains(path)) throw ConfigError(path, "unknown key");
    values_[path] = v;
  }

  const std::string& str(const std::string& path) const {
    auto it = values_.find(path);
    if (it == values_.end()) throw ConfigError(path, "unknown key");
    return it->second;
  }

  double real(const std::string& path) const {
    const auto& s = str(path);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(path, "expected a number, got '" + s + "'");
    }
  }

  long integer(const std::string& path, long lo = std::numeric_limits<long>::min()) const {
    const auto& s = str(path);
    long v = 0;
    try {
      std::size_t used = 0;
      v = std::stol(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(path, "expected an integer, got '" + s + "'");
    }
    if (v < lo) throw ConfigError(path, "must be >= " + std::to_string(lo));
    return v;
  }

  std::uint64_t seed(const std::string& path) const { return static_cast<std::uint64_t>(integer(path, 0)); }

  /// Effective configuration with every default filled in.
  void write(std::ostream& os) const {
    for (const auto& [section, fields] : schema()) {
      os << "[" << section << "]\n";
      for (const auto& f : fields) os << f.key << " = " << values_.at(section + "." + f.key) << "\n";
      os << "\n";
    }
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace teu::cli
