#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace iterflow {

// Identifier written into run manifests. Changing any sampling algorithm below must bump it.
inline constexpr std::string_view kPrngIdentifier = "mt19937_64/u53/box-muller/splitmix64-streams/v1";

struct RandomSeed {
  std::uint64_t value = 0;
  friend bool operator==(RandomSeed, RandomSeed) = default;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Child seed for a numbered sub-stream. Every stochastic stage of a run derives its seed
// from the master seed through a fixed chain of these calls.
RandomSeed derive_seed(RandomSeed parent, std::uint64_t stream) noexcept;

// Only the raw mt19937_64 output (fully specified by the C++ standard) is used; all
// distributions are implemented here so results do not depend on the standard library.
class Rng {
 public:
  explicit Rng(RandomSeed seed) : engine_(seed.value) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform01();
  // Uniform integer in [0, n), unbiased (rejection sampling). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace iterflow
