#pragma once

#include <cstdint>
#include <random>

namespace kfac2l {

/** Streams derived from the single root seed. Every random draw in a run
 *  comes from exactly one of these. */
enum class Stream : std::uint64_t {
  Init = 1,           // weight initialization
  TargetSampling = 2,  // model-predictive targets, one counter per step
  Shuffle = 3,        // mini-batch order, one counter per epoch
  Data = 4,           // synthetic dataset generation
  Test = 5,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/** Counter-based seed derivation: (root, stream, counter) -> 64-bit seed.
 *  Distinct triples give statistically independent engines. */
std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t counter = 0);

inline std::mt19937_64 make_engine(std::uint64_t root, Stream stream, std::uint64_t counter = 0) {
  return std::mt19937_64(derive_seed(root, stream, counter));
}

}  // namespace kfac2l
