#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

#include "rng.hpp"

namespace aephora {

/// Poisson bit arrivals with mean lambda * dt per slot.
class ArrivalSampler {
 public:
  ArrivalSampler(double lambda_bps, double slot_s)
      : mean_(lambda_bps * slot_s), dist_(mean_ > 0.0 ? mean_ : 1.0) {}

  double mean() const { return mean_; }

  double operator()(Rng& rng) {
    if (!(mean_ > 0.0)) return 0.0;
    return static_cast<double>(dist_(rng));
  }

 private:
  double mean_;
  std::poisson_distribution<std::int64_t> dist_;
};

inline double sample_arrival(double lambda_bps, double slot_s, Rng& rng) {
  return ArrivalSampler(lambda_bps, slot_s)(rng);
}

/// q(n+1) = max(q(n) - r(n), 0) + a(n)
inline double step_queue(double backlog_bits, double served_bits, double arrived_bits) {
  return std::max(backlog_bits - served_bits, 0.0) + arrived_bits;
}

/// Strict: a backlog exactly at the threshold is not a violation.
inline bool violates(double backlog_bits, double threshold_bits) { return backlog_bits > threshold_bits; }

/// Per-vehicle backlog plus the shared QoS threshold lambda * tau_th.
struct QueueState {
  double backlog_bits{0.0};
};

/// Accumulates the per-slot violation fractions. Slots with no vehicles are
/// counted separately and excluded from the average.
class ViolationMeter {
 public:
  void record_slot(std::int64_t violating, std::int64_t present) {
    if (present == 0) {
      ++empty_slots_;
      return;
    }
    sum_fraction_ += static_cast<double>(violating) / static_cast<double>(present);
    ++counted_slots_;
  }

  double probability() const { return counted_slots_ == 0 ? 0.0 : sum_fraction_ / counted_slots_; }
  std::int64_t counted_slots() const { return counted_slots_; }
  std::int64_t empty_slots() const { return empty_slots_; }

 private:
  double sum_fraction_{0.0};
  std::int64_t counted_slots_{0};
  std::int64_t empty_slots_{0};
};

}  // namespace aephora
