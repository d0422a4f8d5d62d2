#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace datamarket {

// Deterministic random stream identified by (seed, stream_id). Two streams
// with the same identity produce bit-identical draws; distinct stream ids are
// decorrelated through a SplitMix64 finalizer before seeding the engine.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Independent child stream; same tag always yields the same child.
  SeededRng substream(std::uint64_t tag) const;

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  double normal(double mean, double stddev);
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  std::array<std::uint8_t, 16> nonce128();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    // Fisher-Yates with our own index draws so the permutation does not
    // depend on the standard library's shuffle implementation.
    for (std::size_t i = items.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(
          uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stream for one Monte-Carlo trial: stream_id = trial index.
SeededRng derive_trial_rng(const SeededRng& base, std::uint64_t trial);

}  // namespace datamarket
