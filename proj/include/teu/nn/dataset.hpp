#pragma once

// Simulated multi-coil training data: random phantoms, smooth coil maps,
// equispaced undersampling and k-space noise.

#include <cstdint>
#include <memory>
#include <vector>

#include "teu/nn/unrolled.hpp"

namespace teu::nn {

struct SimulationSpec {
  std::size_t size = 32;
  std::size_t coils = 4;
  int R = 4;
  std::size_t acs = 4;
  double sigma = 0.01;
  int ellipses = 6;
};

inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return seed * 1000003ULL + 7919ULL * static_cast<std::uint64_t>(index);
}

inline TrainingSample simulate_sample(const SimulationSpec& spec, const SamplingMask& mask, std::uint64_t seed) {
  TrainingSample s;
  s.reference = make_phantom(spec.size, spec.size, spec.ellipses, seed);
  s.E = std::make_shared<const EncodingOperator>(mask, make_smooth_sensitivities(spec.size, spec.size, spec.coils, seed + 1));
  s.y = add_noise(s.E->forward(s.reference), mask, spec.sigma, seed + 2).data;
  return s;
}

inline std::vector<TrainingSample> simulate_dataset(const SimulationSpec& spec, std::size_t count, std::uint64_t seed) {
  const auto mask = make_equispaced_mask(spec.size, spec.size, spec.R, spec.acs);
  std::vector<TrainingSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(simulate_sample(spec, mask, sample_seed(seed, i)));
  return out;
}

/// Zero-filled E^H y as an image.
inline ComplexImage zero_filled(const TrainingSample& s) {
  return ComplexImage(s.reference.height, s.reference.width, s.E->adjoint(s.y));
}

}  // namespace teu::nn
