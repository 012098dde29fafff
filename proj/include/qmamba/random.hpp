#pragma once

#include <cstdint>
#include <random>

#include "qmamba/tensor.hpp"

namespace qmamba {

/// Portable seeded generator: std::mt19937_64 (whose output sequence is fixed
/// by the C++ standard) with hand-written conversions to uniform and normal
/// variates, since std::*_distribution output differs between standard
/// libraries. Uniforms take the top 53 bits; normals use the polar-free
/// Box-Muller transform and consume two uniforms per pair.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Tensor uniform_tensor(Shape shape, double lo, double hi);
  Tensor normal_tensor(Shape shape, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer over (seed, stream): independent per-item seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace qmamba
