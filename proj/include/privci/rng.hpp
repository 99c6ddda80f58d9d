#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace privci {

namespace detail {

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// A labeled random stream. Identical (seed, label) pairs produce identical
// draw sequences, and streams with different labels are independent, so
// components can be tested in any order. A single stream is not thread-safe.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label)
      : seed_(seed),
        label_(std::move(label)),
        engine_(detail::splitmix64(seed_ ^ detail::splitmix64(detail::fnv1a64(label_)))) {}

  // Derives an independent stream "<label>/<sub>" from the same root seed.
  RngStream child(std::string_view sub) const {
    std::string l = label_;
    l += '/';
    l += sub;
    return RngStream(seed_, std::move(l));
  }

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }
  std::mt19937_64& engine() { return engine_; }

  // Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace privci
