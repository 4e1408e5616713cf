#include "scex/rng.hpp"

#include <cmath>

#include "scex/specfun.hpp"

namespace scex {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  double u = uniform();
  while (u == 0.0) u = uniform();
  return u;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  // Rejection from the top to avoid modulo bias; bit-stable across platforms.
  const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

double Rng::exponential() { return -std::log(uniform_open()); }

double Rng::normal() { return norm_quantile(uniform_open()); }

double Rng::laplace() { return laplace_quantile(uniform_open()); }

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t index) {
  // FNV-1a over the stream name, then splitmix64 mixing with root and index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : stream) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = root ^ h;
  std::uint64_t mixed = splitmix64(state);
  state = mixed ^ (index + 0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(state);
}

}  // namespace scex
