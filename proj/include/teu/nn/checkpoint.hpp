#pragma once

// Checkpoint directory: manifest.txt plus one KTN1 f64 file per parameter.
//
//   # teu-checkpoint 1
//   <name> <shape, comma separated> f64 <file>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "teu/ktn.hpp"
#include "teu/nn/tensor.hpp"

namespace teu::nn {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void save_checkpoint(const ParameterStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw CheckpointError("cannot write " + (dir / "manifest.txt").string());
  manifest << "# teu-checkpoint 1\n";
  for (std::size_t i = 0; i < store.size(); ++i) {
    char file[32];
    std::snprintf(file, sizeof file, "p%04zu.ktn", i);
    const Tensor& v = store.value(i);
    ktn::Tensor t{ktn::DType::f64, {v.shape.begin(), v.shape.end()}, v.data};
    ktn::write(dir / file, t);
    manifest << store.name(i) << ' ' << shape_string(v.shape) << " f64 " << file << '\n';
  }
  if (!manifest) throw CheckpointError("failed writing checkpoint manifest");
}

/// Loads into an already-built store; every name and shape must match.
inline void load_checkpoint(ParameterStore& store, const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw CheckpointError("missing manifest in " + dir.string());
  std::string line;
  std::vector<bool> loaded(store.size(), false);
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, shape, dtype, file;
    if (!(ls >> name >> shape >> dtype >> file)) throw CheckpointError("malformed manifest line: " + line);
    if (dtype != "f64") throw CheckpointError("unsupported dtype " + dtype + " for " + name);
    if (!store.contains(name)) throw CheckpointError("checkpoint parameter not in model: " + name);
    const std::size_t idx = store.index_of(name);
    Tensor& dst = store.value(idx);
    if (shape != shape_string(dst.shape))
      throw CheckpointError("shape mismatch for " + name + ": checkpoint [" + shape + "], model [" +
                            shape_string(dst.shape) + "]");
    const auto t = ktn::read(dir / file);
    if (t.dtype != ktn::DType::f64 || t.values.size() != dst.size())
      throw CheckpointError("tensor file does not match manifest for " + name);
    dst.data = t.values;
    loaded[idx] = true;
  }
  for (std::size_t i = 0; i < store.size(); ++i)
    if (!loaded[i]) throw CheckpointError("checkpoint lacks parameter " + store.name(i));
}

}  // namespace teu::nn
