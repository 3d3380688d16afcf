#pragma once

#include <cstdint>
#include <random>

#include "modify/tensor.hpp"

namespace modify::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent seed for (root seed, stream, index). Every source of
// randomness in a training run is keyed this way, so the randomness consumed
// at iteration k never depends on how iterations 0..k-1 were executed; that
// is what makes checkpoint resume and online/offline equivalence bitwise.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

namespace stream {
inline constexpr std::uint64_t kInit = 0x11;
inline constexpr std::uint64_t kData = 0x22;
inline constexpr std::uint64_t kDataPrime = 0x33;
inline constexpr std::uint64_t kNoise = 0x44;
inline constexpr std::uint64_t kGpEps = 0x55;
inline constexpr std::uint64_t kEval = 0x66;
inline constexpr std::uint64_t kSynth = 0x77;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(eng_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng_);
  }
  std::uint64_t integer(std::uint64_t bound) {
    std::uniform_int_distribution<std::uint64_t> d(0, bound - 1);
    return d(eng_);
  }

  template <class T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    T* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(d(eng_));
  }
  template <class T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    T* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(d(eng_));
  }

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, eng_);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace modify::rng
