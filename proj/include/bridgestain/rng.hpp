#pragma once

#include <cstdint>
#include <random>

namespace bridgestain {

/// SplitMix64 finaliser; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Key for the stream identified by (seed, a, b). Streams with distinct keys
/// are treated as independent; the same key always replays the same draws.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a,
                                   std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(seed) ^ a) ^ (b + 0x632BE59BD9B4E019ull));
}

// Stream tags so different consumers of one root seed never collide.
namespace stream_tag {
inline constexpr std::uint64_t reverse_step = 0x5245565354455031ull;
inline constexpr std::uint64_t training_step = 0x545241494E535450ull;
inline constexpr std::uint64_t init = 0x494E495450415241ull;
inline constexpr std::uint64_t oracle_noise = 0x4F5241434C454E5Aull;
inline constexpr std::uint64_t synth = 0x53594E5448444154ull;
}  // namespace stream_tag

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : engine_(key) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace bridgestain
