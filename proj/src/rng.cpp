#include "kfac2l/rng.hpp"

namespace kfac2l {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t counter) {
  std::uint64_t h = mix64(root);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  return mix64(h ^ mix64(counter));
}

}  // namespace kfac2l
