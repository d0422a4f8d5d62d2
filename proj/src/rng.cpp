#include "datamarket/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace datamarket {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      engine_(splitmix64(seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

SeededRng SeededRng::substream(std::uint64_t tag) const {
  return SeededRng(seed_, splitmix64(stream_id_ ^ splitmix64(tag ^ 0xd1b54a32d192ed03ULL)));
}

double SeededRng::uniform01() {
  // 53 random mantissa bits, result in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal(double mean, double stddev) {
  // Box-Muller; one pair of uniforms per draw keeps consumption fixed.
  double u1 = uniform01();
  double u2 = uniform01();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  double radius = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * radius * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t SeededRng::uniform_int(std::int64_t lo, std::int64_t hi) {
  auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  // Rejection sampling for an unbiased draw.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return lo + static_cast<std::int64_t>(draw % span);
}

std::array<std::uint8_t, 16> SeededRng::nonce128() {
  std::array<std::uint8_t, 16> out{};
  for (int half = 0; half < 2; ++half) {
    std::uint64_t word = engine_();
    for (int b = 0; b < 8; ++b) {
      out[half * 8 + b] = static_cast<std::uint8_t>(word >> (8 * b));
    }
  }
  return out;
}

SeededRng derive_trial_rng(const SeededRng& base, std::uint64_t trial) {
  return SeededRng(base.seed(), trial);
}

}  // namespace datamarket
