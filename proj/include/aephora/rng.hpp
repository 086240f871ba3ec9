#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace aephora {

using Rng = std::mt19937_64;

// Tags separating the independent random streams of one run.
enum class Stream : std::uint64_t {
  arrivals = 1,
  shadowing = 2,
  fading = 3,
  prediction = 4,
  traces = 5,
};

/// Seeds a generator from an arbitrary tuple of integers. Distinct tuples give
/// statistically independent streams; identical tuples give identical streams.
inline Rng make_rng(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * key.size() + 1);
  words.push_back(0x6165'7068u);
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Per-vehicle streams. Keyed on the vehicle id so that the draws a vehicle
/// sees do not depend on which other vehicles are present or how it is served.
struct VehicleStreams {
  Rng arrivals;
  Rng shadowing;
  Rng fading;

  VehicleStreams(std::uint64_t run_key, int vehicle_id)
      : arrivals(make_rng({run_key, static_cast<std::uint64_t>(vehicle_id),
                           static_cast<std::uint64_t>(Stream::arrivals)})),
        shadowing(make_rng({run_key, static_cast<std::uint64_t>(vehicle_id),
                            static_cast<std::uint64_t>(Stream::shadowing)})),
        fading(make_rng({run_key, static_cast<std::uint64_t>(vehicle_id),
                         static_cast<std::uint64_t>(Stream::fading)})) {}
};

}  // namespace aephora
