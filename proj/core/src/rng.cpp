// SPDX-License-Identifier: Apache-2.0
#include "gfr/rng.hpp"

namespace gfr {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

Tensor Rng::normal_matrix(std::size_t rows, std::size_t cols) {
  Tensor out({rows, cols});
  for (double& v : out.data()) v = normal();
  return out;
}

Rng Rng::derive(std::string_view label) const { return Rng(mix_seed(seed_, fnv1a(label))); }

Rng Rng::derive(std::uint64_t label) const { return Rng(mix_seed(seed_, label)); }

}  // namespace gfr
