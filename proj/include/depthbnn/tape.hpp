#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace depthbnn {

/// Explicit seeded source for every random draw (noise, init, shuffles).
/// Copying a tape forks an identical stream, which is how gradient checks
/// replay common random numbers.
class RandomTape {
 public:
  explicit RandomTape(std::uint64_t seed = 0) : engine_(seed) {}
  RandomTape(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool coin() { return uniform() < 0.5; }
  std::uint64_t next_seed() { return engine_(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates with our own index draws; std::shuffle's draw pattern is
    // library specific.
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform() * static_cast<double>(i));
      std::swap(v[i - 1], v[std::min(j, i - 1)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace depthbnn
